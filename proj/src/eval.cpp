#include "ilpc/eval.hpp"

#include "ilpc/error.hpp"
#include "ilpc/hidden_access.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace ilpc {

PriorMode parse_prior_mode(const std::string& text) {
  if (text == "none") return PriorMode::None;
  if (text == "uniform") return PriorMode::Uniform;
  if (text == "true") return PriorMode::True;
  throw InvalidArgument("unknown prior '" + text + "'");
}

std::string to_string(PriorMode p) {
  switch (p) {
    case PriorMode::None: return "none";
    case PriorMode::Uniform: return "uniform";
    case PriorMode::True: return "true";
  }
  return "?";
}

void BenchmarkSpec::validate() const {
  if (n_tasks < 1) throw InvalidArgument("n_tasks must be >= 1");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  episode_spec.validate();
  if (mode != InferenceMode::Inductive && episode_spec.queries.hi < 1) {
    throw InvalidArgument("transductive tasks need at least one query per class");
  }
  PipelineConfig p = pipeline;
  if (prior == PriorMode::True) p.balance.class_prior = ClassPrior::uniform();
  p.validate(episode_spec.n_way);
}

double ci95_half_width(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

std::uint64_t task_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TaskOutcome run_task(const FeatureSet& fs, const BenchmarkSpec& spec, std::size_t index) {
  const auto start = std::chrono::steady_clock::now();
  EpisodeSpec es = spec.episode_spec;
  es.seed = task_seed(spec.seed, index);
  const Episode ep = sample_episode(fs, es);

  PipelineConfig pc = spec.pipeline;
  pc.cleaner.seed = es.seed;
  switch (spec.prior) {
    case PriorMode::None: pc.balance.enabled = false; break;
    case PriorMode::Uniform: pc.balance.class_prior = ClassPrior::uniform(); break;
    case PriorMode::True: pc.balance.class_prior = ClassPrior::given(true_prior(ep)); break;
  }

  TaskOutcome out;
  Labels predicted;
  switch (spec.mode) {
    case InferenceMode::Transductive:
      out.inference = transduce(ep, pc);
      predicted = out.inference.predicted;
      break;
    case InferenceMode::Inductive:
      predicted = inductive_baseline(ep, pc.preprocess, pc.logistic);
      break;
    case InferenceMode::SemiSupervised:
      predicted = semi_supervised(ep, pc);
      break;
  }
  const Labels& truth = HiddenLabelAccess::reveal(ep.query_y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
  out.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

namespace {

[[noreturn]] void rethrow_for_task(std::exception_ptr err, std::size_t index) {
  const std::string prefix = "task " + std::to_string(index) + ": ";
  try {
    std::rethrow_exception(err);
  } catch (const SolverError& e) {
    throw SolverError(prefix + e.what(), e.achieved_residual());
  } catch (const SinkhornError& e) {
    throw SinkhornError(prefix + e.what(), e.max_violation());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

BenchmarkResult run_benchmark(const FeatureSet& fs, const BenchmarkSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.n_tasks);
  std::vector<double> accuracy(n, 0.0);
  std::vector<double> seconds(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};

  auto worker = [&]() {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        const TaskOutcome t = run_task(fs, spec, i);
        accuracy[i] = t.accuracy;
        seconds[i] = t.seconds;
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(spec.threads), n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  // Tasks are dispatched in index order, so every task below a failing one
  // has run and the lowest failing index is scheduling-independent.
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_for_task(errors[i], i);
  }

  BenchmarkResult r;
  r.per_task_accuracy = std::move(accuracy);
  r.mean_accuracy = std::accumulate(r.per_task_accuracy.begin(), r.per_task_accuracy.end(), 0.0) /
                    static_cast<double>(n);
  r.ci95 = ci95_half_width(r.per_task_accuracy);
  r.wall_time_per_task = std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(n);
  return r;
}

AblationTable ablation_grid(const FeatureSet& fs, const BenchmarkSpec& base,
                            const std::vector<GridVariant>& variants) {
  AblationTable table;
  for (const GridVariant& v : variants) {
    GridRow row;
    row.name = v.name;
    BenchmarkSpec spec = base;
    row.n_tasks = spec.n_tasks;
    try {
      if (v.apply) v.apply(spec);
      row.n_tasks = spec.n_tasks;
      row.result = run_benchmark(fs, spec);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

GridVariant transductive(std::string name, Variant variant) {
  return {std::move(name), [variant](BenchmarkSpec& s) {
            s.mode = InferenceMode::Transductive;
            s.pipeline.variant = variant;
          }};
}

}  // namespace

std::vector<GridVariant> table1_grid() {
  return {
      {"inductive", [](BenchmarkSpec& s) { s.mode = InferenceMode::Inductive; }},
      transductive("lp", Variant::LPOnly),
      transductive("lp+balance", Variant::LPBalance),
      transductive("lp+ilc", Variant::LPClean),
      transductive("lp+balance+ilc", Variant::Full),
      transductive("lp+balance+iprob", Variant::IProb),
      transductive("class+balance+ilc", Variant::ClassifierBalance),
  };
}

std::vector<GridVariant> table7_grid() {
  auto prior = [](std::string name, PriorMode p) {
    return GridVariant{std::move(name), [p](BenchmarkSpec& s) { s.prior = p; }};
  };
  return {prior("none", PriorMode::None), prior("uniform", PriorMode::Uniform),
          prior("true", PriorMode::True)};
}

std::vector<GridVariant> table9_grid() {
  auto policy = [](std::string name, WeightPolicy w) {
    return GridVariant{std::move(name),
                       [w](BenchmarkSpec& s) { s.pipeline.balance.weight_policy = w; }};
  };
  return {policy("uniform", WeightPolicy::Uniform), policy("entropy", WeightPolicy::Entropy)};
}

std::vector<GridVariant> grid_by_name(const std::string& name) {
  if (name == "table1") return table1_grid();
  if (name == "table7") return table7_grid();
  if (name == "table9") return table9_grid();
  throw InvalidArgument("unknown grid '" + name + "' (expected table1, table7 or table9)");
}

void render_text(const AblationTable& table, std::ostream& out) {
  std::size_t width = 7;
  for (const GridRow& r : table.rows) width = std::max(width, r.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "variant" << "  " << std::right
      << std::setw(7) << "tasks" << "  " << std::setw(16) << "accuracy (%)" << "  "
      << std::setw(10) << "s/task" << '\n';
  for (const GridRow& r : table.rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::right
        << std::setw(7) << r.n_tasks << "  ";
    if (r.result) {
      std::ostringstream acc;
      acc << std::fixed << std::setprecision(2) << 100.0 * r.result->mean_accuracy << " +- "
          << 100.0 * r.result->ci95;
      out << std::setw(16) << acc.str() << "  " << std::setw(10) << std::fixed
          << std::setprecision(4) << r.result->wall_time_per_task << '\n';
    } else {
      out << "failed: " << r.error << '\n';
    }
  }
}

void render_csv(const AblationTable& table, std::ostream& out) {
  out << "variant,n_tasks,mean,ci95,seconds_per_task\n";
  const auto old_precision = out.precision(10);
  for (const GridRow& r : table.rows) {
    out << r.name << ',' << r.n_tasks << ',';
    if (r.result) {
      out << r.result->mean_accuracy << ',' << r.result->ci95 << ',' << r.result->wall_time_per_task;
    } else {
      out << ",,";
    }
    out << '\n';
  }
  out.precision(old_precision);
}

LossHistogram loss_histogram_experiment(const FeatureSet& fs, double noise_fraction,
                                        int n_examples, const CleanerConfig& cfg,
                                        std::uint64_t seed) {
  if (!(noise_fraction > 0.0 && noise_fraction < 1.0)) {
    throw InvalidArgument("noise_fraction must lie in (0, 1)");
  }
  if (!fs.labeled()) throw InvalidArgument("loss histogram needs a labeled feature set");
  if (n_examples < 2 || static_cast<std::size_t>(n_examples) > fs.rows()) {
    throw InvalidArgument("n_examples must be in [2, rows]");
  }
  const int n_way = fs.class_count();
  if (n_way < 2) throw InvalidArgument("loss histogram needs at least two classes");

  std::mt19937_64 rng(seed);
  IndexList rows(fs.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(n_examples));

  const Labels& all_labels = *fs.labels();
  WeightedSet set;
  set.x.resize(n_examples, fs.data().cols());
  set.y.resize(static_cast<std::size_t>(n_examples));
  set.weight = Vector::Ones(n_examples);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    set.x.row(static_cast<Eigen::Index>(i)) = fs.data().row(static_cast<Eigen::Index>(rows[i]));
    set.y[i] = all_labels[rows[i]];
  }

  const auto flips = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(noise_fraction * n_examples)));
  IndexList order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> clean(rows.size(), true);
  std::uniform_int_distribution<int> other(1, n_way - 1);
  for (std::size_t k = 0; k < flips && k < order.size(); ++k) {
    const std::size_t i = order[k];
    set.y[i] = (set.y[i] + other(rng)) % n_way;
    clean[i] = false;
  }

  CleanerConfig cc = cfg;
  cc.seed = seed;
  const TrainOutcome trained = train_linear(Matrix(0, set.x.cols()), {}, set, n_way, cc);

  LossHistogram h;
  h.is_clean = clean;
  h.losses.assign(trained.avg_loss.data(), trained.avg_loss.data() + trained.avg_loss.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    (clean[i] ? h.clean_losses : h.noisy_losses).push_back(h.losses[i]);
  }
  return h;
}

void write_histogram_csv(const LossHistogram& h, std::ostream& out) {
  out << "loss,is_clean\n";
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < h.losses.size(); ++i) {
    out << h.losses[i] << ',' << (h.is_clean[i] ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace ilpc
