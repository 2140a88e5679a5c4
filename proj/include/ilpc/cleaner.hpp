#pragma once

#include "ilpc/types.hpp"

#include <cstdint>
#include <optional>
#include <utility>

namespace ilpc {

/// Softmax-linear classifier g(x) = softmax(W x + b).
struct LinearClassifier {
  Matrix weights;  // N x d
  Vector bias;     // N

  int n_way() const { return static_cast<int>(weights.rows()); }

  /// Row-wise class probabilities for the rows of x.
  Matrix forward(const Matrix& x) const;

  /// Weights set to the per-class mean of the given examples, zero bias.
  /// Classes without examples get a zero weight row.
  static LinearClassifier imprint(const Matrix& x, const Labels& y, int n_way);
};

/// Mean weighted cross-entropy (1/n) sum_i w_i * -log g(x_i)_{y_i} plus
/// (weight_decay / 2) * (|W|^2 + |b|^2). When `grad` is given it receives the
/// gradient with respect to (W, b).
double weighted_cross_entropy(const LinearClassifier& model, const Matrix& x, const Labels& y,
                              const Vector& w, double weight_decay,
                              LinearClassifier* grad = nullptr);

struct LrSchedule {
  enum class Kind { Constant, Cyclic } kind = Kind::Constant;
  // Cyclic: within each period of c steps the rate falls linearly from
  // near lr_max to lr_min, lr = (1 - s) lr_max + s lr_min, s = (1 + t mod c) / c.
  int period = 10;
  double lr_min = 0.001;
  double lr_max = 0.1;

  double at(int iteration, double base_lr) const;
};

struct BatchMode {
  int size = 0;  // 0: full batch
  bool full() const { return size <= 0; }
};

struct CleanerConfig {
  double learning_rate = 0.1;
  int iterations = 1000;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int selects_per_class = 3;
  LrSchedule schedule;
  BatchMode batch;
  std::uint64_t seed = 0;
  bool record_per_epoch = false;

  void validate() const;
};

struct CleaningReport {
  Vector avg_loss;  // per pseudo-labeled example
  IndexList selected;  // positions into the pseudo-labeled list
  std::optional<Matrix> per_epoch_loss;  // epochs x M when requested
};

/// Examples with (possibly noisy) labels and per-example loss weights.
struct WeightedSet {
  Matrix x;
  Labels y;
  Vector weight;
};

struct TrainOutcome {
  LinearClassifier model;
  Vector avg_loss;  // over the `tracked` examples
  std::optional<Matrix> per_epoch_loss;
};

/// Imprints on the support (falling back to tracked examples for classes
/// with no support) and runs momentum SGD on the weighted loss over
/// support and tracked examples. Per-example losses of the tracked set are
/// averaged over every recorded epoch, starting after the first update.
TrainOutcome train_linear(const Matrix& support_x, const Labels& support_y,
                          const WeightedSet& tracked, int n_way, const CleanerConfig& cfg);

/// train_linear on (support, pseudo) followed by select_cleanest.
CleaningReport train_and_score(const Matrix& support_x, const Labels& support_y,
                               const WeightedSet& pseudo, int n_way, const CleanerConfig& cfg);

/// For each class among pseudo_labels, the min(per_class, count) positions
/// with the smallest loss (ties to the lower index). Sorted ascending.
IndexList select_cleanest(const Vector& losses, const Labels& pseudo_labels, int per_class);

/// Support examples as (node id, label) pairs.
struct LabeledIds {
  IndexList ids;
  Labels labels;
};

/// Moves `selected` ids from query to support with their pseudo-labels
/// (aligned with `query`).
std::pair<LabeledIds, IndexList> augment(const LabeledIds& support, const IndexList& query,
                                         const IndexList& selected, const Labels& pseudo_labels);

}  // namespace ilpc
