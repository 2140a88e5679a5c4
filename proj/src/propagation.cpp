#include "ilpc/propagation.hpp"

#include <cmath>
#include <sstream>

namespace ilpc {

void PropagationConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
  if (!(solver_tol > 0.0)) throw InvalidArgument("solver_tol must be > 0");
  if (solver_max_iter < 0) throw InvalidArgument("solver_max_iter must be >= 0");
}

LabelMatrix make_label_matrix(const Labels& support_y, int n_way, std::size_t total) {
  if (n_way < 1) throw InvalidArgument("n_way must be >= 1");
  if (support_y.size() > total) throw InvalidArgument("more labeled rows than nodes");
  LabelMatrix out{Matrix::Zero(static_cast<Eigen::Index>(total), n_way)};
  for (std::size_t i = 0; i < support_y.size(); ++i) {
    const int y = support_y[i];
    if (y < 0 || y >= n_way) {
      std::ostringstream msg;
      msg << "support label out of range at row " << i << ": " << y;
      throw InvalidArgument(msg.str());
    }
    out.y(static_cast<Eigen::Index>(i), y) = 1.0;
  }
  return out;
}

namespace {

// Unpreconditioned CG on A = I - alpha W; A is SPD since the spectrum of W
// lies in [-1, 1] and alpha < 1.
struct CgOutcome {
  double rel_residual;
  int iterations;
  bool converged;
};

CgOutcome conjugate_gradient(const SparseMatrix& w, double alpha, const Vector& b, Vector& x,
                             double tol, int max_iter) {
  const double b_norm = b.norm();
  x.setZero(b.size());
  if (b_norm == 0.0) return {0.0, 0, true};
  auto apply = [&](const Vector& v) -> Vector { return v - alpha * (w * v); };

  const double threshold = tol * b_norm;
  int it = 0;
  double true_res = 1.0;
  // Restart from the true residual when the recurrence has drifted below it.
  while (true) {
    Vector r = b - apply(x);
    Vector p = r;
    double rr = r.squaredNorm();
    while (std::sqrt(rr) > threshold && it < max_iter) {
      const Vector ap = apply(p);
      const double step = rr / p.dot(ap);
      x += step * p;
      r -= step * ap;
      const double rr_next = r.squaredNorm();
      p = r + (rr_next / rr) * p;
      rr = rr_next;
      ++it;
    }
    true_res = (b - apply(x)).norm() / b_norm;
    if (true_res <= tol || it >= max_iter) break;
  }
  return {true_res, it, true_res <= tol};
}

}  // namespace

PropagationResult propagate_with_stats(const AffinityGraph& g, const LabelMatrix& y,
                                       const PropagationConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(y.y.rows()) != g.node_count) {
    throw InvalidArgument("label matrix rows do not match graph size");
  }
  const int t = static_cast<int>(g.node_count);
  const int max_iter = cfg.solver_max_iter > 0 ? cfg.solver_max_iter : 20 * t;

  PropagationResult out;
  out.z.resize(y.y.rows(), y.y.cols());
  Vector x;
  for (Eigen::Index j = 0; j < y.y.cols(); ++j) {
    const Vector b = y.y.col(j);
    const CgOutcome res = conjugate_gradient(g.adjacency, cfg.alpha, b, x, cfg.solver_tol, max_iter);
    if (!res.converged) {
      std::ostringstream msg;
      msg << "label propagation did not converge for class " << j << " within " << max_iter
          << " iterations: relative residual " << res.rel_residual;
      throw SolverError(msg.str(), res.rel_residual);
    }
    out.z.col(j) = x;
    out.max_rel_residual = std::max(out.max_rel_residual, res.rel_residual);
    out.max_iterations = std::max(out.max_iterations, res.iterations);
  }
  if (!out.z.allFinite()) throw Error("label propagation produced non-finite scores");
  return out;
}

Matrix propagate(const AffinityGraph& g, const LabelMatrix& y, const PropagationConfig& cfg) {
  return propagate_with_stats(g, y, cfg).z;
}

}  // namespace ilpc
