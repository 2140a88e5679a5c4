#include "ilpc/balance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ilpc {

namespace {

constexpr double kZeroRowFloor = 1e-300;

}  // namespace

void BalanceConfig::validate(int n_way) const {
  if (!(tau >= 1.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be >= 1");
  if (sinkhorn_max_iter < 1) throw InvalidArgument("sinkhorn_max_iter must be >= 1");
  if (!(sinkhorn_tol > 0.0)) throw InvalidArgument("sinkhorn_tol must be > 0");
  if (class_prior.kind == ClassPrior::Kind::Given) {
    const Vector& u = class_prior.u;
    if (u.size() != n_way) throw InvalidArgument("class prior length must equal n_way");
    if ((u.array() < 0.0).any() || !u.allFinite()) {
      throw InvalidArgument("class prior must be nonnegative");
    }
    if (std::abs(u.sum() - 1.0) > 1e-9) throw InvalidArgument("class prior must sum to 1");
  }
}

ScoreMatrix extract_unlabeled_block(const Matrix& z, std::size_t support_count) {
  if (support_count >= static_cast<std::size_t>(z.rows())) {
    throw InvalidArgument("no unlabeled rows to extract");
  }
  const auto l = static_cast<Eigen::Index>(support_count);
  return ScoreMatrix{z.bottomRows(z.rows() - l).cwiseMax(0.0)};
}

ScoreMatrix power_transform(const ScoreMatrix& p, double tau) {
  if (tau == 1.0) return p;
  return ScoreMatrix{p.p.array().pow(tau).matrix()};
}

Vector confidence_weights(const Matrix& z, std::size_t support_count, WeightPolicy policy) {
  const auto l = static_cast<Eigen::Index>(support_count);
  const Eigen::Index m = z.rows() - l;
  if (m < 0) throw InvalidArgument("support count exceeds rows");
  if (policy == WeightPolicy::Uniform) return Vector::Ones(m);

  const Eigen::Index n = z.cols();
  if (n < 2) throw InvalidArgument("entropy weights need at least two classes");
  const double max_entropy = std::log(static_cast<double>(n));
  Vector w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto row = z.row(l + i).cwiseMax(0.0);
    const double total = row.sum();
    if (!(total > 0.0)) {
      w(i) = 0.0;
      continue;
    }
    double h = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double q = row(j) / total;
      if (q > 0.0) h -= q * std::log(q);
    }
    w(i) = std::clamp(1.0 - h / max_entropy, 0.0, 1.0);
  }
  return w;
}

SinkhornResult sinkhorn(const ScoreMatrix& p, const Vector& row_sums, const Vector& col_sums,
                        const BalanceConfig& cfg) {
  const Eigen::Index m = p.rows();
  const Eigen::Index n = p.cols();
  if (row_sums.size() != m || col_sums.size() != n) {
    throw InvalidArgument("Sinkhorn marginal sizes do not match the matrix");
  }
  if ((p.p.array() < 0.0).any() || !p.p.allFinite()) {
    throw InvalidArgument("Sinkhorn input must be nonnegative and finite");
  }
  if ((row_sums.array() < 0.0).any() || (col_sums.array() < 0.0).any()) {
    throw InvalidArgument("Sinkhorn targets must be nonnegative");
  }
  const double total = row_sums.sum();
  if (std::abs(total - col_sums.sum()) > 1e-9 * std::max(1.0, total)) {
    throw InvalidArgument("Sinkhorn row and column targets have different totals");
  }

  SinkhornResult out;
  Matrix x = p.p;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (row_sums(i) > 0.0 && x.row(i).sum() == 0.0) {
      x.row(i).setConstant(kZeroRowFloor);
      out.floored_zero_rows = true;
    }
  }
  const Vector initial_col = x.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (col_sums(j) > 0.0 && initial_col(j) == 0.0) {
      std::ostringstream msg;
      msg << "Sinkhorn infeasible: column " << j << " is zero but its target is " << col_sums(j);
      throw SinkhornError(msg.str(), col_sums(j));
    }
  }

  Vector a = Vector::Ones(m);
  Vector b = Vector::Ones(n);
  auto violation = [&]() {
    const double rows = (x.rowwise().sum() - row_sums).cwiseAbs().maxCoeff();
    const double cols = (x.colwise().sum().transpose() - col_sums).cwiseAbs().maxCoeff();
    return std::max(rows, cols);
  };

  double v = violation();
  int it = 0;
  while (v > cfg.sinkhorn_tol && it < cfg.sinkhorn_max_iter) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double s = x.row(i).sum();
      const double f = s > 0.0 ? row_sums(i) / s : 0.0;
      x.row(i) *= f;
      a(i) *= f;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s = x.col(j).sum();
      const double f = s > 0.0 ? col_sums(j) / s : 0.0;
      x.col(j) *= f;
      b(j) *= f;
    }
    ++it;
    v = violation();
  }
  if (!x.allFinite()) throw SinkhornError("Sinkhorn produced non-finite values", v);
  out.x = ScoreMatrix{std::move(x)};
  out.row_scale = std::move(a);
  out.col_scale = std::move(b);
  out.iterations = it;
  out.max_violation = v;
  out.converged = v <= cfg.sinkhorn_tol;
  return out;
}

PseudoLabels predict_pseudo_labels(const ScoreMatrix& p) {
  const Eigen::Index m = p.rows();
  PseudoLabels out;
  out.labels.resize(static_cast<std::size_t>(m));
  out.confidence = Vector::Zero(m);
  out.zero_row.assign(static_cast<std::size_t>(m), false);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j) {
      if (p.p(i, j) > p.p(i, best)) best = j;
    }
    const double row_sum = p.p.row(i).sum();
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    if (row_sum > 0.0) {
      out.confidence(i) = p.p(i, best) / std::max(row_sum, 1e-300);
    } else {
      out.zero_row[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

Vector column_targets(const Vector& row_sums, int n_way, const ClassPrior& prior) {
  const double total = row_sums.sum();
  if (prior.kind == ClassPrior::Kind::Given) return total * prior.u;
  return Vector::Constant(n_way, total / n_way);
}

BalancedPrediction balance_scores(const ScoreMatrix& p, const Vector& row_weights,
                                  const BalanceConfig& cfg,
                                  const std::optional<Vector>& col_targets) {
  const int n_way = static_cast<int>(p.cols());
  cfg.validate(n_way);
  BalancedPrediction out;
  out.row_weights = row_weights;
  ScoreMatrix powered = power_transform(p, cfg.tau);
  if (cfg.enabled) {
    Vector q = col_targets ? *col_targets : column_targets(row_weights, n_way, cfg.class_prior);
    // Callers build q from the same weights; absorb rounding in the total.
    const double qs = q.sum();
    if (qs > 0.0) q *= row_weights.sum() / qs;
    SinkhornResult s = sinkhorn(powered, row_weights, q, cfg);
    out.max_violation = s.max_violation;
    out.sinkhorn_iterations = s.iterations;
    out.converged = s.converged;
    powered = std::move(s.x);
  }
  PseudoLabels pl = predict_pseudo_labels(powered);
  out.scores = std::move(powered);
  out.labels = std::move(pl.labels);
  out.confidence = std::move(pl.confidence);
  return out;
}

BalancedPrediction balance_and_predict(const Matrix& z, std::size_t support_count,
                                       const BalanceConfig& cfg,
                                       const std::optional<Vector>& col_targets) {
  const ScoreMatrix p = extract_unlabeled_block(z, support_count);
  const Vector weights = confidence_weights(z, support_count, cfg.weight_policy);
  return balance_scores(p, weights, cfg, col_targets);
}

BalancedPrediction balance_and_predict(const Matrix& z, std::size_t support_count,
                                       const BalanceConfig& cfg) {
  return balance_and_predict(z, support_count, cfg, std::nullopt);
}

}  // namespace ilpc
