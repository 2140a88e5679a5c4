#include "ilpc/cli.hpp"

#include "ilpc/error.hpp"
#include "ilpc/eval.hpp"
#include "ilpc/hidden_access.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace ilpc {

namespace {

// Usage errors detected after CLI parsing (bad combinations, config file).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  // input
  std::string features;
  std::string format;
  int csv_dim = 0;
  std::string preprocess;
  // episodes
  int n_way = 5;
  int k_shot = 1;
  std::string queries = "15";
  int unlabeled = 0;
  int tasks = 1000;
  std::string mode = "transductive";
  // pipeline
  std::string variant = "full";
  std::string prior = "uniform";
  std::string prior_budget = "decrement";
  std::string weights = "uniform";
  int k_neighbors = 15;
  double alpha = 0.8;
  double gamma = 3.0;
  double tau = 3.0;
  double eta = 0.1;
  int selects_per_class = 3;
  int cleaner_iterations = 1000;
  // run
  std::uint64_t seed = 0;
  int threads = 1;
  std::string csv;
  bool trace = false;
  // ablate
  std::string grid;
  // episode
  std::string save_episode;
  // losshist
  double noise = 0.2;
  int examples = 500;
  // gen-blobs
  std::string out;
  int classes = 5;
  int dim = 16;
  double mean_scale = 1.0;
  double sigma = 1.0;
  int per_class = 100;
};

const CLI::Range kAtLeastOne(1, std::numeric_limits<int>::max());

const CLI::Validator kQueryCount(
    [](std::string& s) {
      try {
        parse_query_count(s);
      } catch (const Error& e) {
        return std::string(e.what());
      }
      return std::string();
    },
    "INT|LO:HI", "query count");

const CLI::Validator kPreprocessList(
    [](std::string& s) {
      try {
        parse_preprocess_list(s);
      } catch (const Error& e) {
        return std::string(e.what());
      }
      return std::string();
    },
    "LIST", "pre-processing list");

const CLI::Validator kFormatName(
    [](std::string& s) {
      return parse_file_format(s) ? std::string() : "unknown format '" + s + "' (csv, npy, raw)";
    },
    "csv|npy|raw", "file format");

void add_input(CLI::App* app, Options& o, bool required = true) {
  auto* f = app->add_option("--features", o.features, "feature file");
  if (required) f->required();
  app->add_option("--format", o.format, "csv, npy or raw (default: from extension)")
      ->check(kFormatName);
  app->add_option("--csv-dim", o.csv_dim, "feature width of header-less CSV")
      ->check(kAtLeastOne);
  app->add_option("--preprocess", o.preprocess, "comma list: l2,l1,pt[=beta],center,pca=<m>")
      ->check(kPreprocessList);
}

void add_episode(CLI::App* app, Options& o) {
  app->add_option("--n-way", o.n_way, "classes per task")->check(CLI::Range(2, 1 << 20));
  app->add_option("--k-shot", o.k_shot, "support examples per class")->check(kAtLeastOne);
  app->add_option("--queries", o.queries, "queries per class, N or LO:HI")->check(kQueryCount);
  app->add_option("--unlabeled", o.unlabeled, "unlabeled examples per class")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--mode", o.mode, "inference setting")
      ->check(CLI::IsMember({"transductive", "inductive", "semi"}));
}

void add_pipeline(CLI::App* app, Options& o) {
  app->add_option("--variant", o.variant, "pipeline variant")
      ->check(CLI::IsMember({"full", "lp", "lp-balance", "lp-clean", "iprob", "class-balance"}));
  app->add_option("--prior", o.prior, "balancing targets")
      ->check(CLI::IsMember({"none", "uniform", "true"}));
  app->add_option("--prior-budget", o.prior_budget,
                  "with --prior true: shrink class targets as examples are labeled")
      ->check(CLI::IsMember({"decrement", "fixed"}));
  app->add_option("--weights", o.weights, "row weight policy")
      ->check(CLI::IsMember({"uniform", "entropy"}));
  app->add_option("--k-neighbors", o.k_neighbors, "graph neighbours")->check(kAtLeastOne);
  app->add_option("--alpha", o.alpha, "propagation alpha in (0, 1)")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--gamma", o.gamma, "affinity exponent (>= 1)")->check(CLI::Range(1.0, 1e6));
  app->add_option("--tau", o.tau, "power transform exponent (>= 1)")->check(CLI::Range(1.0, 1e6));
  app->add_option("--eta", o.eta, "cleaner learning rate")->check(CLI::PositiveNumber);
  app->add_option("--selects-per-class", o.selects_per_class, "examples labeled per class per step")
      ->check(kAtLeastOne);
  app->add_option("--cleaner-iterations", o.cleaner_iterations, "cleaner SGD steps")
      ->check(kAtLeastOne);
}

void add_run(CLI::App* app, Options& o, bool tasks) {
  if (tasks) app->add_option("--tasks", o.tasks, "number of tasks")->check(kAtLeastOne);
  app->add_option("--seed", o.seed, "base seed");
  app->add_option("--threads", o.threads, "worker threads (default: $ILPC_THREADS or 1)")
      ->check(kAtLeastOne);
  app->add_option("--csv", o.csv, "also write CSV here");
  app->add_flag("--trace", o.trace, "print per-iteration diagnostics");
}

FeatureSet load(const Options& o) {
  FileFormat fmt = format_from_extension(o.features);
  if (!o.format.empty()) fmt = *parse_file_format(o.format);
  LoadOptions lo;
  if (o.csv_dim > 0) lo.csv_dim = o.csv_dim;
  return load_features(o.features, fmt, lo);
}

BenchmarkSpec make_spec(const Options& o) {
  BenchmarkSpec s;
  s.episode_spec.n_way = o.n_way;
  s.episode_spec.k_shot = o.k_shot;
  s.episode_spec.queries = parse_query_count(o.queries);
  s.episode_spec.unlabeled_per_class = o.unlabeled;
  s.n_tasks = o.tasks;
  s.seed = o.seed;
  s.threads = o.threads;
  s.prior = parse_prior_mode(o.prior);
  if (o.mode == "inductive") s.mode = InferenceMode::Inductive;
  if (o.mode == "semi") s.mode = InferenceMode::SemiSupervised;

  PipelineConfig& p = s.pipeline;
  p.variant = parse_variant(o.variant);
  if (!o.preprocess.empty()) p.preprocess = parse_preprocess_list(o.preprocess);
  p.graph.k = o.k_neighbors;
  p.graph.gamma = o.gamma;
  p.propagation.alpha = o.alpha;
  p.balance.tau = o.tau;
  p.balance.weight_policy = o.weights == "entropy" ? WeightPolicy::Entropy : WeightPolicy::Uniform;
  p.cleaner.learning_rate = o.eta;
  p.cleaner.selects_per_class = o.selects_per_class;
  p.cleaner.iterations = o.cleaner_iterations;
  p.decrement_prior_budget = o.prior_budget == "decrement";
  if (s.mode == InferenceMode::SemiSupervised && o.unlabeled < 1) {
    throw UsageError("--mode semi needs --unlabeled >= 1");
  }
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return s;
}

void write_csv_file(const std::string& path, const AblationTable& table) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  render_csv(table, f);
  if (!f) throw IoError("failed writing '" + path + "'");
}

void print_trace(const InferenceResult& r, std::ostream& out) {
  for (const IterationTrace& t : r.per_iteration_trace) {
    out << "iteration " << t.iteration << ": support " << t.support_size << ", queries "
        << t.query_size << ", selected " << t.selected.size() << ", solver residual "
        << std::scientific << std::setprecision(2) << t.max_solver_residual
        << ", marginal violation " << t.max_violation << std::defaultfloat
        << " (" << t.sinkhorn_iterations << " sweeps"
        << (t.sinkhorn_converged ? "" : ", budget exhausted") << ")\n";
  }
}

int cmd_bench(const Options& o, std::ostream& out) {
  BenchmarkSpec spec = make_spec(o);
  const FeatureSet fs = load(o);
  AblationTable table;
  GridRow row;
  row.name = spec.mode == InferenceMode::Transductive ? o.variant : o.mode;
  row.n_tasks = spec.n_tasks;
  row.result = run_benchmark(fs, spec);
  table.rows.push_back(row);
  render_text(table, out);
  if (!o.csv.empty()) write_csv_file(o.csv, table);
  if (o.trace && spec.mode == InferenceMode::Transductive) {
    spec.pipeline.trace = true;
    out << "trace of task 0:\n";
    print_trace(run_task(fs, spec, 0).inference, out);
  }
  return 0;
}

int cmd_ablate(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<GridVariant> grid;
  try {
    grid = grid_by_name(o.grid);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
  const BenchmarkSpec spec = make_spec(o);
  const FeatureSet fs = load(o);
  const AblationTable table = ablation_grid(fs, spec, grid);
  render_text(table, out);
  if (!o.csv.empty()) write_csv_file(o.csv, table);
  const bool any_failed =
      std::any_of(table.rows.begin(), table.rows.end(), [](const GridRow& r) { return !r.result; });
  if (any_failed) err << "ilpc: some grid cells failed\n";
  return any_failed ? 1 : 0;
}

int cmd_episode(Options o, std::ostream& out) {
  o.tasks = 1;
  BenchmarkSpec spec = make_spec(o);
  spec.pipeline.trace = o.trace;
  const FeatureSet fs = load(o);
  if (!o.save_episode.empty()) {
    EpisodeSpec es = spec.episode_spec;
    es.seed = task_seed(spec.seed, 0);
    save_episode(sample_episode(fs, es), o.save_episode);
  }
  const TaskOutcome t = run_task(fs, spec, 0);
  out << "accuracy " << std::fixed << std::setprecision(2) << 100.0 * t.accuracy << "% in "
      << std::setprecision(3) << t.seconds << " s";
  if (spec.mode == InferenceMode::Transductive) {
    out << ", " << t.inference.iterations_run << " iteration(s)";
  }
  out << std::defaultfloat << '\n';
  if (o.trace) print_trace(t.inference, out);
  if (!o.csv.empty() && spec.mode == InferenceMode::Transductive) {
    std::ofstream f(o.csv);
    if (!f) throw IoError("cannot open '" + o.csv + "' for writing");
    f << "query,predicted\n";
    for (std::size_t i = 0; i < t.inference.predicted.size(); ++i) {
      f << i << ',' << t.inference.predicted[i] << '\n';
    }
  }
  return 0;
}

int cmd_losshist(const Options& o, std::ostream& out) {
  if (!(o.noise > 0.0 && o.noise < 1.0)) throw UsageError("--noise must lie in (0, 1)");
  const FeatureSet fs = load(o);
  FeatureSet data = o.preprocess.empty() ? fs : preprocess(fs, parse_preprocess_list(o.preprocess));
  CleanerConfig cfg;
  cfg.learning_rate = o.eta;
  cfg.iterations = o.cleaner_iterations;
  const LossHistogram h = loss_histogram_experiment(data, o.noise, o.examples, cfg, o.seed);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const auto min_it = std::min_element(h.losses.begin(), h.losses.end());
  const bool min_clean = h.is_clean[static_cast<std::size_t>(min_it - h.losses.begin())];
  out << "clean examples " << h.clean_losses.size() << ", mean loss " << mean(h.clean_losses)
      << '\n'
      << "noisy examples " << h.noisy_losses.size() << ", mean loss " << mean(h.noisy_losses)
      << '\n'
      << "minimum-loss example is " << (min_clean ? "clean" : "noisy") << '\n';
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    if (!f) throw IoError("cannot open '" + o.csv + "' for writing");
    write_histogram_csv(h, f);
  }
  return 0;
}

int cmd_gen_blobs(const Options& o, std::ostream& out) {
  BlobSpec spec;
  spec.class_count = o.classes;
  spec.dim = o.dim;
  spec.per_class_mean_scale = o.mean_scale;
  spec.noise_sigma = o.sigma;
  spec.examples_per_class = o.per_class;
  spec.seed = o.seed;
  FileFormat fmt = format_from_extension(o.out);
  if (!o.format.empty()) fmt = *parse_file_format(o.format);
  const FeatureSet fs = generate_blobs(spec);
  save_features(fs, o.out, fmt);
  out << "wrote " << fs.rows() << " x " << fs.dim() << " to " << o.out << '\n';
  return 0;
}

// key=value lines, '#' comments; keys are flag names with or without "--".
std::vector<std::string> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(f, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw UsageError(path + ":" + std::to_string(number) + ": empty key");
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Iterative label propagation and cleaning for few-shot classification", "ilpc"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "key=value file; explicit flags override its values");

  auto* bench = app.add_subcommand("bench", "mean accuracy over many tasks");
  add_input(bench, o);
  add_episode(bench, o);
  add_pipeline(bench, o);
  add_run(bench, o, true);

  auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
  add_input(ablate, o);
  add_episode(ablate, o);
  add_pipeline(ablate, o);
  add_run(ablate, o, true);
  ablate->add_option("--grid", o.grid, "table1, table7 or table9")->required();

  auto* episode = app.add_subcommand("episode", "run a single task");
  add_input(episode, o);
  add_episode(episode, o);
  add_pipeline(episode, o);
  add_run(episode, o, false);
  episode->add_option("--save-episode", o.save_episode, "write the sampled task under this stem");

  auto* losshist = app.add_subcommand("losshist", "cleaner losses under injected label noise");
  add_input(losshist, o);
  losshist->add_option("--noise", o.noise, "fraction of flipped labels in (0, 1)");
  losshist->add_option("--examples", o.examples, "examples drawn")->check(CLI::Range(2, 1 << 30));
  losshist->add_option("--eta", o.eta, "cleaner learning rate")->check(CLI::PositiveNumber);
  losshist->add_option("--cleaner-iterations", o.cleaner_iterations, "cleaner SGD steps")
      ->check(kAtLeastOne);
  losshist->add_option("--seed", o.seed, "seed");
  losshist->add_option("--csv", o.csv, "write loss,is_clean rows here");

  auto* gen = app.add_subcommand("gen-blobs", "write a synthetic Gaussian-blob feature file");
  gen->add_option("--out", o.out, "output path")->required();
  gen->add_option("--format", o.format, "csv, npy or raw (default: from extension)")
      ->check(kFormatName);
  gen->add_option("--classes", o.classes, "number of classes")->check(CLI::Range(2, 1 << 20));
  gen->add_option("--dim", o.dim, "feature dimension")->check(kAtLeastOne);
  gen->add_option("--mean-scale", o.mean_scale, "norm of the class means")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--sigma", o.sigma, "noise standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--per-class", o.per_class, "examples per class")->check(kAtLeastOne);
  gen->add_option("--seed", o.seed, "seed");

  int code = 0;
  try {
    std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
    // The config file is spliced in right after the subcommand name so that
    // explicit flags, which come later, win under TakeLast.
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" || args[i].rfind("--config=", 0) == 0) {
        std::string path;
        if (args[i] == "--config") {
          if (i + 1 >= args.size()) throw UsageError("--config needs a path");
          path = args[i + 1];
          args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                     args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        } else {
          path = args[i].substr(9);
          args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        }
        const std::vector<std::string> extra = read_config(path);
        const auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
          for (const CLI::App* c : app.get_subcommands({})) {
            if (c->get_name() == a) return true;
          }
          return false;
        });
        args.insert(sub == args.end() ? args.end() : sub + 1, extra.begin(), extra.end());
        break;
      }
    }
    // ILPC_THREADS goes in the same place, before any config values.
    if (const char* env = std::getenv("ILPC_THREADS"); env != nullptr && *env != '\0') {
      const auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        for (const CLI::App* c : app.get_subcommands({})) {
          if (c->get_name() == a) return c->get_option_no_throw("--threads") != nullptr;
        }
        return false;
      });
      if (sub != args.end()) args.insert(sub + 1, std::string("--threads=") + env);
    }
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ilpc: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "ilpc: " << e.what() << '\n';
    return 2;
  }

  try {
    if (bench->parsed()) code = cmd_bench(o, out);
    else if (ablate->parsed()) code = cmd_ablate(o, out, err);
    else if (episode->parsed()) code = cmd_episode(o, out);
    else if (losshist->parsed()) code = cmd_losshist(o, out);
    else if (gen->parsed()) code = cmd_gen_blobs(o, out);
  } catch (const UsageError& e) {
    err << "ilpc: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "ilpc: " << e.what() << '\n';
    return 1;
  }
  return code;
}

}  // namespace ilpc
