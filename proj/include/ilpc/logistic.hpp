#pragma once

#include "ilpc/cleaner.hpp"
#include "ilpc/types.hpp"

namespace ilpc {

/// Multinomial logistic regression with an L2 penalty on the weights,
/// minimizing sum_i CE_i + |W|^2 / (2 C) with L-BFGS.
struct LogisticConfig {
  double c = 1.0;
  int max_iter = 200;
  double grad_tol = 1e-6;  // on the max-norm of the gradient
  int history = 10;

  void validate() const;
};

struct LogisticFit {
  LinearClassifier model;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

/// Objective and gradient at `model` (exposed for gradient checks).
double logistic_objective(const LinearClassifier& model, const Matrix& x, const Labels& y,
                          double c, LinearClassifier* grad = nullptr);

/// Fits on (x, y). Throws InvalidArgument when fewer than two classes are
/// present among y.
LogisticFit fit_logistic(const Matrix& x, const Labels& y, int n_way, const LogisticConfig& cfg);

/// Argmax of the linear scores, ties to the lowest class.
Labels predict_labels(const LinearClassifier& model, const Matrix& x);

}  // namespace ilpc
