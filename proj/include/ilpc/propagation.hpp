#pragma once

#include "ilpc/error.hpp"
#include "ilpc/graph.hpp"
#include "ilpc/types.hpp"

namespace ilpc {

/// T x N one-hot label matrix: row i < L is the indicator of support_y[i],
/// the remaining rows are zero.
struct LabelMatrix {
  Matrix y;
};

struct PropagationConfig {
  double alpha = 0.8;
  double solver_tol = 1e-6;  // relative residual per column
  int solver_max_iter = 0;   // 0: 20 * T

  void validate() const;
};

/// Raised when conjugate gradient stalls before reaching tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double achieved) : Error(what), achieved_(achieved) {}
  double achieved_residual() const { return achieved_; }

 private:
  double achieved_;
};

LabelMatrix make_label_matrix(const Labels& support_y, int n_way, std::size_t total);

struct PropagationResult {
  Matrix z;                   // T x N
  double max_rel_residual = 0.0;
  int max_iterations = 0;     // over columns
};

/// Solves (I - alpha W) Z = Y column by column with conjugate gradient.
PropagationResult propagate_with_stats(const AffinityGraph& g, const LabelMatrix& y,
                                       const PropagationConfig& cfg);

Matrix propagate(const AffinityGraph& g, const LabelMatrix& y, const PropagationConfig& cfg);

}  // namespace ilpc
