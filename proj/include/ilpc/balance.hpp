#pragma once

#include "ilpc/error.hpp"
#include "ilpc/types.hpp"

#include <optional>

namespace ilpc {

/// M x N nonnegative class scores of the unlabeled rows.
struct ScoreMatrix {
  Matrix p;

  Eigen::Index rows() const { return p.rows(); }
  Eigen::Index cols() const { return p.cols(); }
};

enum class WeightPolicy { Uniform, Entropy };

/// Column-target policy. `Given` carries a class distribution u.
struct ClassPrior {
  enum class Kind { Uniform, Given } kind = Kind::Uniform;
  Vector u;

  static ClassPrior uniform() { return {}; }
  static ClassPrior given(Vector u) { return {Kind::Given, std::move(u)}; }
};

struct BalanceConfig {
  double tau = 3.0;
  WeightPolicy weight_policy = WeightPolicy::Uniform;
  ClassPrior class_prior;
  int sinkhorn_max_iter = 1000;
  double sinkhorn_tol = 1e-6;
  bool enabled = true;

  void validate(int n_way) const;
};

/// Raised when Sinkhorn cannot reach its targets.
class SinkhornError : public Error {
 public:
  SinkhornError(const std::string& what, double violation) : Error(what), violation_(violation) {}
  double max_violation() const { return violation_; }

 private:
  double violation_;
};

/// Rows L..T-1 of z, clamped at zero.
ScoreMatrix extract_unlabeled_block(const Matrix& z, std::size_t support_count);

ScoreMatrix power_transform(const ScoreMatrix& p, double tau);

/// Per-row confidence of the unlabeled block of z: 1 for Uniform,
/// 1 - H(row / |row|_1) / log N for Entropy (0 for all-zero rows).
Vector confidence_weights(const Matrix& z, std::size_t support_count, WeightPolicy policy);

struct SinkhornResult {
  ScoreMatrix x;
  Vector row_scale;  // x = diag(row_scale) * P * diag(col_scale)
  Vector col_scale;
  int iterations = 0;
  double max_violation = 0.0;
  bool floored_zero_rows = false;
  bool converged = false;  // max_violation <= sinkhorn_tol
};

/// Alternating row and column rescaling of p towards the given marginals.
/// Stops when the largest marginal violation is <= cfg.sinkhorn_tol or after
/// cfg.sinkhorn_max_iter sweeps; the final state is returned either way with
/// its violation. Throws SinkhornError on structurally infeasible targets
/// (a zero column with a positive target).
SinkhornResult sinkhorn(const ScoreMatrix& p, const Vector& row_sums, const Vector& col_sums,
                        const BalanceConfig& cfg);

struct PseudoLabels {
  Labels labels;
  Vector confidence;
  std::vector<bool> zero_row;  // flagged all-zero rows (label 0, confidence 0)
};

/// Row-wise argmax, ties to the lowest class index.
PseudoLabels predict_pseudo_labels(const ScoreMatrix& p);

/// Column targets from the prior: uniform -> (sum p / N) 1, given u -> (sum p) u.
Vector column_targets(const Vector& row_sums, int n_way, const ClassPrior& prior);

struct BalancedPrediction {
  ScoreMatrix scores;
  Labels labels;
  Vector confidence;
  Vector row_weights;  // the row targets p
  double max_violation = 0.0;
  int sinkhorn_iterations = 0;
  bool converged = true;
};

/// Power transform, optional Sinkhorn balancing, argmax.
BalancedPrediction balance_and_predict(const Matrix& z, std::size_t support_count,
                                       const BalanceConfig& cfg);

/// Same with explicit column targets in place of the prior-derived ones.
BalancedPrediction balance_and_predict(const Matrix& z, std::size_t support_count,
                                       const BalanceConfig& cfg,
                                       const std::optional<Vector>& col_targets);

/// Balancing on an already extracted score matrix (rows = unlabeled
/// examples), with row weights supplied by the caller.
BalancedPrediction balance_scores(const ScoreMatrix& p, const Vector& row_weights,
                                  const BalanceConfig& cfg,
                                  const std::optional<Vector>& col_targets);

}  // namespace ilpc
