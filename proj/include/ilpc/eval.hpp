#pragma once

#include "ilpc/engine.hpp"
#include "ilpc/episodes.hpp"
#include "ilpc/features.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ilpc {

enum class InferenceMode { Transductive, Inductive, SemiSupervised };

/// How class-balance targets are chosen per task. True reads each episode's
/// actual query class frequencies (an oracle setting for unbalanced tasks).
enum class PriorMode { None, Uniform, True };

PriorMode parse_prior_mode(const std::string& text);  // none|uniform|true
std::string to_string(PriorMode p);

struct BenchmarkSpec {
  EpisodeSpec episode_spec;
  PipelineConfig pipeline;
  InferenceMode mode = InferenceMode::Transductive;
  PriorMode prior = PriorMode::Uniform;
  int n_tasks = 1000;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct BenchmarkResult {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_task_accuracy;
  double wall_time_per_task = 0.0;  // seconds, mean over tasks
};

/// 1.96 * sample stddev / sqrt(n); zero for a single value.
double ci95_half_width(const std::vector<double>& values);

/// Seed of task `index` derived from the benchmark seed.
std::uint64_t task_seed(std::uint64_t seed, std::size_t index);

/// Runs one task (sample, infer, score). Exposed for tests and the CLI.
struct TaskOutcome {
  double accuracy = 0.0;
  double seconds = 0.0;
  InferenceResult inference;  // transductive mode only
};
TaskOutcome run_task(const FeatureSet& fs, const BenchmarkSpec& spec, std::size_t index);

/// Runs spec.n_tasks tasks on up to spec.threads workers. Results are
/// reduced in task order. A failing task aborts the benchmark with an
/// error naming the lowest failing task index.
BenchmarkResult run_benchmark(const FeatureSet& fs, const BenchmarkSpec& spec);

struct GridVariant {
  std::string name;
  std::function<void(BenchmarkSpec&)> apply;
};

struct GridRow {
  std::string name;
  int n_tasks = 0;
  std::optional<BenchmarkResult> result;
  std::string error;  // set when the cell failed
};

struct AblationTable {
  std::vector<GridRow> rows;
};

/// One benchmark per variant; a failing cell is recorded and the grid
/// continues.
AblationTable ablation_grid(const FeatureSet& fs, const BenchmarkSpec& base,
                            const std::vector<GridVariant>& variants);

/// Component ablation: inductive, LP, LP+balance, LP+cleaning, full,
/// LP+balance+iProb, classifier+balance+cleaning.
std::vector<GridVariant> table1_grid();
/// Balancing targets on (typically unbalanced) tasks: none, uniform, true.
std::vector<GridVariant> table7_grid();
/// Row weight policies: uniform, entropy.
std::vector<GridVariant> table9_grid();
/// "table1", "table7" or "table9".
std::vector<GridVariant> grid_by_name(const std::string& name);

void render_text(const AblationTable& table, std::ostream& out);
/// Header: variant,n_tasks,mean,ci95,seconds_per_task. Failed cells leave
/// the numeric fields empty.
void render_csv(const AblationTable& table, std::ostream& out);

struct LossHistogram {
  std::vector<double> clean_losses;
  std::vector<double> noisy_losses;
  /// Pooled losses and flags in example order.
  std::vector<double> losses;
  std::vector<bool> is_clean;
};

/// Draws n_examples labeled rows, flips round(noise_fraction * n) labels
/// (at least one) to a different class uniformly at random, trains the
/// cleaner on them with no support set and splits the average losses.
LossHistogram loss_histogram_experiment(const FeatureSet& fs, double noise_fraction,
                                        int n_examples, const CleanerConfig& cfg,
                                        std::uint64_t seed = 0);

/// Two-column CSV: loss,is_clean.
void write_histogram_csv(const LossHistogram& h, std::ostream& out);

}  // namespace ilpc
