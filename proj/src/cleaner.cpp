#include "ilpc/cleaner.hpp"

#include "ilpc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace ilpc {

namespace {

// Row-wise softmax of logits, in place.
void softmax_rows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
}

Matrix logits_of(const LinearClassifier& model, const Matrix& x) {
  Matrix logits = x * model.weights.transpose();
  logits.rowwise() += model.bias.transpose();
  return logits;
}

// -log softmax(logits)_y computed stably, one value per row.
Vector nll(const Matrix& logits, const Labels& y) {
  Vector out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out(i) = lse - logits(i, y[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace

Matrix LinearClassifier::forward(const Matrix& x) const {
  Matrix p = logits_of(*this, x);
  softmax_rows(p);
  return p;
}

LinearClassifier LinearClassifier::imprint(const Matrix& x, const Labels& y, int n_way) {
  LinearClassifier model{Matrix::Zero(n_way, x.cols()), Vector::Zero(n_way)};
  std::vector<int> counts(static_cast<std::size_t>(n_way), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    model.weights.row(y[i]) += x.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(y[i])];
  }
  for (int c = 0; c < n_way; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) model.weights.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return model;
}

double weighted_cross_entropy(const LinearClassifier& model, const Matrix& x, const Labels& y,
                              const Vector& w, double weight_decay, LinearClassifier* grad) {
  const Eigen::Index n = x.rows();
  if (n == 0) throw InvalidArgument("weighted cross-entropy over an empty set");
  const Matrix logits = logits_of(model, x);
  const Vector losses = nll(logits, y);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = inv_n * w.dot(losses) +
                0.5 * weight_decay * (model.weights.squaredNorm() + model.bias.squaredNorm());
  if (grad) {
    Matrix g = logits;
    softmax_rows(g);
    for (Eigen::Index i = 0; i < n; ++i) {
      g(i, y[static_cast<std::size_t>(i)]) -= 1.0;
      g.row(i) *= w(i) * inv_n;
    }
    grad->weights = g.transpose() * x + weight_decay * model.weights;
    grad->bias = g.colwise().sum().transpose() + weight_decay * model.bias;
  }
  return loss;
}

double LrSchedule::at(int iteration, double base_lr) const {
  if (kind == Kind::Constant) return base_lr;
  // s runs 1/c, 2/c, ..., 1 within each cycle of length c.
  const double s = static_cast<double>(1 + iteration % period) / static_cast<double>(period);
  return (1.0 - s) * lr_max + s * lr_min;
}

void CleanerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (iterations < 1) throw InvalidArgument("cleaner iterations must be >= 1");
  if (selects_per_class < 1) throw InvalidArgument("selects_per_class must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidArgument("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw InvalidArgument("weight decay must be >= 0");
  if (schedule.kind == LrSchedule::Kind::Cyclic &&
      !(schedule.lr_max >= schedule.lr_min && schedule.lr_min > 0.0 && schedule.period >= 1)) {
    throw InvalidArgument("cyclic schedule needs 0 < lr_min <= lr_max and period >= 1");
  }
}

TrainOutcome train_linear(const Matrix& support_x, const Labels& support_y,
                          const WeightedSet& tracked, int n_way, const CleanerConfig& cfg) {
  cfg.validate();
  const Eigen::Index l = support_x.rows();
  const Eigen::Index m = tracked.x.rows();
  if (static_cast<std::size_t>(l) != support_y.size() ||
      static_cast<std::size_t>(m) != tracked.y.size() || tracked.weight.size() != m) {
    throw InvalidArgument("cleaner input sizes are inconsistent");
  }
  if (l > 0 && m > 0 && support_x.cols() != tracked.x.cols()) {
    throw InvalidArgument("support and pseudo features differ in dimension");
  }
  if (l + m == 0) throw InvalidArgument("cleaner has nothing to train on");
  for (int y : support_y) {
    if (y < 0 || y >= n_way) throw InvalidArgument("support label out of range in cleaner");
  }
  for (int y : tracked.y) {
    if (y < 0 || y >= n_way) throw InvalidArgument("pseudo label out of range in cleaner");
  }

  const Eigen::Index d = l > 0 ? support_x.cols() : tracked.x.cols();
  const Eigen::Index n = l + m;
  Matrix x(n, d);
  if (l > 0) x.topRows(l) = support_x;
  if (m > 0) x.bottomRows(m) = tracked.x;
  Labels y = support_y;
  y.insert(y.end(), tracked.y.begin(), tracked.y.end());
  Vector w(n);
  w.head(l).setOnes();
  w.tail(m) = tracked.weight;

  // Imprint from support; classes absent from it fall back to tracked means.
  LinearClassifier model = LinearClassifier::imprint(support_x, support_y, n_way);
  if (m > 0) {
    const LinearClassifier fallback = LinearClassifier::imprint(tracked.x, tracked.y, n_way);
    std::vector<bool> has_support(static_cast<std::size_t>(n_way), false);
    for (int c : support_y) has_support[static_cast<std::size_t>(c)] = true;
    for (int c = 0; c < n_way; ++c) {
      if (!has_support[static_cast<std::size_t>(c)]) model.weights.row(c) = fallback.weights.row(c);
    }
  }

  LinearClassifier velocity{Matrix::Zero(n_way, d), Vector::Zero(n_way)};
  LinearClassifier grad;
  Vector loss_sum = Vector::Zero(m);
  Eigen::VectorXi loss_count = Eigen::VectorXi::Zero(m);
  std::vector<Vector> epochs;

  // Per-example losses of the tracked rows. In mini-batch mode one epoch
  // is one pass, so every example contributes once per epoch either way.
  Vector epoch = Vector::Zero(m);
  auto record = [&](const Vector& per_example_nll, const IndexList* rows) {
    // per_example_nll is indexed like `rows` (or all n rows when null).
    auto take = [&](std::size_t k, std::size_t row) {
      if (row < static_cast<std::size_t>(l)) return;
      const auto t = static_cast<Eigen::Index>(row) - l;
      const double v = tracked.weight(t) * per_example_nll(static_cast<Eigen::Index>(k));
      loss_sum(t) += v;
      loss_count(t) += 1;
      epoch(t) = v;
    };
    if (rows) {
      for (std::size_t k = 0; k < rows->size(); ++k) take(k, (*rows)[k]);
    } else {
      for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) take(k, k);
    }
  };
  auto close_epoch = [&]() {
    if (cfg.record_per_epoch) epochs.push_back(epoch);
  };

  auto step = [&](const Matrix& bx, const Labels& by, const Vector& bw, int it) {
    const double loss = weighted_cross_entropy(model, bx, by, bw, cfg.weight_decay, &grad);
    const double lr = cfg.schedule.at(it, cfg.learning_rate);
    if (!std::isfinite(loss) || !grad.weights.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite cleaner loss at iteration " << it << " (learning rate " << lr << ")";
      throw Error(msg.str());
    }
    velocity.weights = cfg.momentum * velocity.weights + grad.weights;
    velocity.bias = cfg.momentum * velocity.bias + grad.bias;
    model.weights -= lr * velocity.weights;
    model.bias -= lr * velocity.bias;
  };

  if (cfg.batch.full()) {
    for (int it = 0; it < cfg.iterations; ++it) {
      if (it > 0) {
        record(nll(logits_of(model, x), y), nullptr);
        close_epoch();
      }
      step(x, y, w, it);
    }
    record(nll(logits_of(model, x), y), nullptr);
    close_epoch();
  } else {
    std::mt19937_64 rng(cfg.seed);
    IndexList order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bsize = static_cast<std::size_t>(cfg.batch.size);
    std::size_t cursor = order.size();
    bool recorded_in_pass = false;
    for (int it = 0; it < cfg.iterations; ++it) {
      if (cursor >= order.size()) {
        if (recorded_in_pass) close_epoch();
        recorded_in_pass = false;
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t take = std::min(bsize, order.size() - cursor);
      IndexList rows(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                     order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
      cursor += take;
      Matrix bx(static_cast<Eigen::Index>(take), d);
      Labels by(take);
      Vector bw(static_cast<Eigen::Index>(take));
      for (std::size_t k = 0; k < take; ++k) {
        bx.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
        by[k] = y[rows[k]];
        bw(static_cast<Eigen::Index>(k)) = w(static_cast<Eigen::Index>(rows[k]));
      }
      if (it > 0) {
        record(nll(logits_of(model, bx), by), &rows);
        recorded_in_pass = true;
      }
      step(bx, by, bw, it);
    }
    if (recorded_in_pass) close_epoch();
    // Post-training state closes the record, as in full-batch mode.
    record(nll(logits_of(model, x), y), nullptr);
    close_epoch();
  }

  TrainOutcome out{std::move(model), Vector::Zero(m), std::nullopt};
  for (Eigen::Index t = 0; t < m; ++t) {
    out.avg_loss(t) = loss_count(t) > 0 ? loss_sum(t) / loss_count(t) : 0.0;
  }
  if (cfg.record_per_epoch) {
    Matrix per(static_cast<Eigen::Index>(epochs.size()), m);
    for (std::size_t e = 0; e < epochs.size(); ++e) {
      per.row(static_cast<Eigen::Index>(e)) = epochs[e].transpose();
    }
    out.per_epoch_loss = std::move(per);
  }
  return out;
}

CleaningReport train_and_score(const Matrix& support_x, const Labels& support_y,
                               const WeightedSet& pseudo, int n_way, const CleanerConfig& cfg) {
  if (pseudo.x.rows() == 0) throw InvalidArgument("cleaner called with an empty pseudo-labeled set");
  TrainOutcome trained = train_linear(support_x, support_y, pseudo, n_way, cfg);
  CleaningReport report;
  report.selected = select_cleanest(trained.avg_loss, pseudo.y, cfg.selects_per_class);
  report.avg_loss = std::move(trained.avg_loss);
  report.per_epoch_loss = std::move(trained.per_epoch_loss);
  return report;
}

IndexList select_cleanest(const Vector& losses, const Labels& pseudo_labels, int per_class) {
  if (per_class < 1) throw InvalidArgument("per_class must be >= 1");
  if (static_cast<std::size_t>(losses.size()) != pseudo_labels.size()) {
    throw InvalidArgument("loss and label counts differ");
  }
  std::unordered_map<int, IndexList> by_class;
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i) by_class[pseudo_labels[i]].push_back(i);
  IndexList selected;
  for (auto& [label, members] : by_class) {
    const std::size_t take = std::min(members.size(), static_cast<std::size_t>(per_class));
    std::partial_sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take),
                      members.end(), [&](std::size_t a, std::size_t b) {
                        const double la = losses(static_cast<Eigen::Index>(a));
                        const double lb = losses(static_cast<Eigen::Index>(b));
                        return la < lb || (la == lb && a < b);
                      });
    selected.insert(selected.end(), members.begin(),
                    members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::pair<LabeledIds, IndexList> augment(const LabeledIds& support, const IndexList& query,
                                         const IndexList& selected, const Labels& pseudo_labels) {
  if (pseudo_labels.size() != query.size()) {
    throw InvalidArgument("pseudo labels must align with the query set");
  }
  std::unordered_map<std::size_t, std::size_t> position;
  for (std::size_t i = 0; i < query.size(); ++i) position.emplace(query[i], i);
  std::vector<bool> moved(query.size(), false);
  LabeledIds next_support = support;
  for (std::size_t id : selected) {
    const auto it = position.find(id);
    if (it == position.end() || moved[it->second]) {
      std::ostringstream msg;
      msg << "selected example " << id << " is not in the query set";
      throw InvalidArgument(msg.str());
    }
    moved[it->second] = true;
    next_support.ids.push_back(id);
    next_support.labels.push_back(pseudo_labels[it->second]);
  }
  IndexList next_query;
  next_query.reserve(query.size() - selected.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (!moved[i]) next_query.push_back(query[i]);
  }
  return {std::move(next_support), std::move(next_query)};
}

}  // namespace ilpc
