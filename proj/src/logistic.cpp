#include "ilpc/logistic.hpp"

#include "ilpc/error.hpp"

#include <cmath>
#include <deque>
#include <set>

namespace ilpc {

namespace {

Vector flatten(const LinearClassifier& m) {
  Vector v(m.weights.size() + m.bias.size());
  v.head(m.weights.size()) = Eigen::Map<const Vector>(m.weights.data(), m.weights.size());
  v.tail(m.bias.size()) = m.bias;
  return v;
}

LinearClassifier unflatten(const Vector& v, Eigen::Index n_way, Eigen::Index dim) {
  LinearClassifier m;
  m.weights = Eigen::Map<const Matrix>(v.data(), n_way, dim);
  m.bias = v.tail(n_way);
  return m;
}

}  // namespace

void LogisticConfig::validate() const {
  if (!(c > 0.0)) throw InvalidArgument("logistic regression C must be > 0");
  if (max_iter < 1) throw InvalidArgument("logistic regression max_iter must be >= 1");
  if (history < 1) throw InvalidArgument("L-BFGS history must be >= 1");
}

double logistic_objective(const LinearClassifier& model, const Matrix& x, const Labels& y,
                          double c, LinearClassifier* grad) {
  Matrix logits = x * model.weights.transpose();
  logits.rowwise() += model.bias.transpose();
  double f = 0.5 / c * model.weights.squaredNorm();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    f += mx + std::log(z) - logits(i, y[static_cast<std::size_t>(i)]);
    if (grad) {
      logits.row(i) = (e / z).matrix();
      logits(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    }
  }
  if (grad) {
    grad->weights = logits.transpose() * x + model.weights / c;
    grad->bias = logits.colwise().sum().transpose();
  }
  return f;
}

LogisticFit fit_logistic(const Matrix& x, const Labels& y, int n_way, const LogisticConfig& cfg) {
  cfg.validate();
  if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != y.size()) {
    throw InvalidArgument("logistic regression needs matching, nonempty examples and labels");
  }
  std::set<int> present;
  for (int label : y) {
    if (label < 0 || label >= n_way) throw InvalidArgument("label out of range in logistic fit");
    present.insert(label);
  }
  if (present.size() < 2) {
    throw InvalidArgument("degenerate support: logistic regression needs at least two classes");
  }

  const Eigen::Index dim = x.cols();
  auto eval = [&](const Vector& theta, Vector& g) {
    LinearClassifier grad;
    const double f = logistic_objective(unflatten(theta, n_way, dim), x, y, cfg.c, &grad);
    g = flatten(grad);
    return f;
  };

  Vector theta = Vector::Zero(n_way * dim + n_way);
  Vector g;
  double f = eval(theta, g);
  std::deque<std::pair<Vector, Vector>> mem;  // (s, y) pairs
  LogisticFit fit;
  int it = 0;
  for (; it < cfg.max_iter && g.lpNorm<Eigen::Infinity>() > cfg.grad_tol; ++it) {
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alphas(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      const auto& [s, yk] = mem[k];
      alphas[k] = s.dot(q) / yk.dot(s);
      q -= alphas[k] * yk;
    }
    if (!mem.empty()) {
      const auto& [s, yk] = mem.back();
      q *= s.dot(yk) / yk.squaredNorm();
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const auto& [s, yk] = mem[k];
      const double beta = yk.dot(q) / yk.dot(s);
      q += (alphas[k] - beta) * s;
    }
    Vector dir = -q;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      dir = -g;
      slope = -g.squaredNorm();
      mem.clear();
    }
    double step = mem.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;
    Vector next;
    Vector g_next;
    double f_next = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      next = theta + step * dir;
      f_next = eval(next, g_next);
      if (std::isfinite(f_next) && f_next <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Vector s = next - theta;
    Vector yk = g_next - g;
    if (s.dot(yk) > 1e-12 * s.norm() * yk.norm()) {
      mem.emplace_back(std::move(s), std::move(yk));
      if (static_cast<int>(mem.size()) > cfg.history) mem.pop_front();
    }
    theta = std::move(next);
    g = std::move(g_next);
    f = f_next;
  }
  fit.model = unflatten(theta, n_way, dim);
  fit.iterations = it;
  fit.objective = f;
  fit.grad_norm = g.lpNorm<Eigen::Infinity>();
  return fit;
}

Labels predict_labels(const LinearClassifier& model, const Matrix& x) {
  Matrix scores = x * model.weights.transpose();
  scores.rowwise() += model.bias.transpose();
  Labels out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace ilpc
