// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "ilpc/engine.hpp"
#include "ilpc/eval.hpp"
#include "ilpc/hidden_access.hpp"

#include "../unit/helpers.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace ilpc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

FeatureSet overlapping_blobs(std::uint64_t seed) {
  BlobSpec b;
  b.class_count = 10;
  b.dim = 32;
  b.noise_sigma = 0.36;
  b.examples_per_class = 80;
  b.seed = seed;
  return generate_blobs(b);
}

std::string pct(const BenchmarkResult& r) {
  return fmt("%.2f+-%.2f", 100 * r.mean_accuracy, 100 * r.ci95);
}

bool beats(const BenchmarkResult& a, const BenchmarkResult& b) {
  return a.mean_accuracy - b.mean_accuracy > a.ci95 + b.ci95;
}

Verdict graph_propagation_oracle() {
  std::mt19937_64 rng(1);
  double worst = 0;
  const auto t0 = Clock::now();
  for (int e = 0; e < 50; ++e) {
    const int t = 6 + static_cast<int>(rng() % 45);
    const int n_way = 2 + static_cast<int>(rng() % 4);
    const int l = n_way + static_cast<int>(rng() % 3);
    const Matrix v = ilpc::testing::row_normalized(
        ilpc::testing::random_matrix(t, 4 + static_cast<int>(rng() % 12), 100 + e).cwiseAbs());
    GraphConfig gc;
    gc.k = 1 + static_cast<int>(rng() % static_cast<unsigned>(t - 1));
    gc.gamma = 1.0 + static_cast<double>(rng() % 3);
    Labels sy(static_cast<std::size_t>(l));
    for (int i = 0; i < l; ++i) sy[static_cast<std::size_t>(i)] = i % n_way;
    PropagationConfig pc;
    pc.alpha = 0.8;
    pc.solver_tol = 1e-12;
    const LabelMatrix y = make_label_matrix(sy, n_way, static_cast<std::size_t>(t));
    const Matrix z = propagate(build_graph(v, gc), y, pc);

    const Matrix w = ilpc::testing::dense_normalized_adjacency(v, gc.k, gc.gamma);
    Matrix yd = Matrix::Zero(t, n_way);
    for (int i = 0; i < l; ++i) yd(i, sy[static_cast<std::size_t>(i)]) = 1.0;
    const Matrix oracle = (Matrix::Identity(t, t) - pc.alpha * w).fullPivLu().solve(yd);
    worst = std::max(worst, (z - oracle).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 10.0, fmt("max abs diff %.2e over 50 episodes in %.2f s", worst, secs)};
}

Verdict sinkhorn_contract() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_violation = 0, worst_scale = 0;
  bool zero_pattern = true;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 100);
    const int n = 1 + static_cast<int>(rng() % 10);
    Matrix p(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) p(i, j) = unit(rng) < 0.15 ? 0.0 : unit(rng);
    // Keep at least one positive entry per row and column.
    for (int i = 0; i < m; ++i) p(i, i % n) = std::max(p(i, i % n), 0.05);
    for (int j = 0; j < n; ++j) p(j % m, j) = std::max(p(j % m, j), 0.05);
    // Feasible targets: marginals of a positive diagonal scaling of p.
    Vector a(m), b(n);
    for (int i = 0; i < m; ++i) a(i) = 0.2 + unit(rng);
    for (int j = 0; j < n; ++j) b(j) = 0.2 + unit(rng);
    const Matrix witness = a.asDiagonal() * p * b.asDiagonal();
    const Vector r = witness.rowwise().sum();
    const Vector c = witness.colwise().sum().transpose();

    const BalanceConfig cfg;
    const SinkhornResult s = sinkhorn(ScoreMatrix{p}, r, c, cfg);
    const double viol = std::max((s.x.p.rowwise().sum() - r).cwiseAbs().maxCoeff(),
                                 (s.x.p.colwise().sum().transpose() - c).cwiseAbs().maxCoeff());
    worst_violation = std::max(worst_violation, viol);
    zero_pattern = zero_pattern && ((s.x.p.array() == 0.0) == (p.array() == 0.0)).all();
    const double scale = 0.01 + 100.0 * unit(rng);
    const SinkhornResult t = sinkhorn(ScoreMatrix{Matrix(scale * p)}, r, c, cfg);
    worst_scale = std::max(worst_scale, (t.x.p - s.x.p).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst_violation <= 1e-6 && zero_pattern && worst_scale <= 1e-8 && secs < 30.0,
          fmt("max violation %.2e, zero pattern %s, scale diff %.2e, %.2f s", worst_violation,
              zero_pattern ? "kept" : "broken", worst_scale, secs)};
}

Verdict gradient_check() {
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_way = 2 + static_cast<int>(rng() % 4);
    const int d = 1 + static_cast<int>(rng() % 10);
    const int rows = 2 + static_cast<int>(rng() % 10);
    const LinearClassifier m{ilpc::testing::random_matrix(n_way, d, 10 * trial),
                             ilpc::testing::random_matrix(n_way, 1, 10 * trial + 1).col(0)};
    const Matrix x = ilpc::testing::random_matrix(rows, d, 10 * trial + 2);
    Labels y(static_cast<std::size_t>(rows));
    for (int& v : y) v = static_cast<int>(rng() % static_cast<unsigned>(n_way));
    const Vector w = ilpc::testing::random_matrix(rows, 1, 10 * trial + 3).cwiseAbs().col(0);
    LinearClassifier g;
    weighted_cross_entropy(m, x, y, w, 5e-4, &g);
    const double h = 1e-6;
    auto rel = [&](double analytic, auto bump) {
      LinearClassifier p = m, q = m;
      bump(p, h);
      bump(q, -h);
      const double num = (weighted_cross_entropy(p, x, y, w, 5e-4) -
                          weighted_cross_entropy(q, x, y, w, 5e-4)) / (2 * h);
      return std::abs(analytic - num) / std::max(1.0, std::abs(num));
    };
    for (int c = 0; c < n_way; ++c) {
      for (int k = 0; k < d; ++k)
        worst = std::max(worst, rel(g.weights(c, k), [&](LinearClassifier& p, double e) { p.weights(c, k) += e; }));
      worst = std::max(worst, rel(g.bias(c), [&](LinearClassifier& p, double e) { p.bias(c) += e; }));
    }
  }
  return {worst <= 1e-4, fmt("max relative error %.2e over 100 instances", worst)};
}

Verdict loss_distribution() {
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  for (double noise : {0.2, 0.4}) {
    int mean_ok = 0, min_ok = 0;
    for (int rep = 0; rep < 20; ++rep) {
      BlobSpec b;
      b.class_count = 10;
      b.dim = 32;
      b.noise_sigma = 0.38;
      b.examples_per_class = 50;
      b.seed = 500 + static_cast<std::uint64_t>(rep);
      const LossHistogram h =
          loss_histogram_experiment(generate_blobs(b), noise, 500, CleanerConfig{}, 900u + rep);
      auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      mean_ok += mean(h.noisy_losses) > mean(h.clean_losses);
      const auto it = std::min_element(h.losses.begin(), h.losses.end());
      min_ok += h.is_clean[static_cast<std::size_t>(it - h.losses.begin())];
    }
    pass = pass && mean_ok >= 19 && min_ok >= 19;
    detail += fmt("noise %.0f%%: noisy>clean %d/20, min clean %d/20; ", 100 * noise, mean_ok, min_ok);
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 300.0, detail + fmt("%.1f s", secs)};
}

BenchmarkSpec one_shot(int tasks) {
  BenchmarkSpec s;
  s.episode_spec = EpisodeSpec{5, 1, QueryCount::fixed(15), 0, 0};
  s.n_tasks = tasks;
  s.seed = 3;
  return s;
}

Verdict component_ordering() {
  const auto t0 = Clock::now();
  const FeatureSet fs = overlapping_blobs(7);
  auto run = [&](Variant v) {
    BenchmarkSpec s = one_shot(500);
    s.pipeline.variant = v;
    return run_benchmark(fs, s);
  };
  const BenchmarkResult lp = run(Variant::LPOnly), lpb = run(Variant::LPBalance),
                        lpc = run(Variant::LPClean), full = run(Variant::Full);
  const bool pass = beats(full, lpb) && beats(lpb, lp) && beats(full, lpc) && beats(lpc, lp);
  const double secs = seconds_since(t0);
  return {pass && secs < 1800.0,
          "lp " + pct(lp) + ", lp+balance " + pct(lpb) + ", lp+ilc " + pct(lpc) + ", full " + pct(full)};
}

Verdict unbalanced_priors() {
  const FeatureSet fs = overlapping_blobs(8);
  auto run = [&](PriorMode p) {
    BenchmarkSpec s = one_shot(500);
    s.episode_spec.k_shot = 5;
    s.episode_spec.queries = QueryCount::range(10, 20);
    s.prior = p;
    return run_benchmark(fs, s);
  };
  const BenchmarkResult none = run(PriorMode::None), uniform = run(PriorMode::Uniform),
                        truth = run(PriorMode::True);
  return {beats(truth, none) && beats(none, uniform),
          "5-shot, none " + pct(none) + ", uniform " + pct(uniform) + ", true " + pct(truth)};
}

Verdict weight_policies() {
  const FeatureSet fs = overlapping_blobs(9);
  auto run = [&](WeightPolicy w) {
    BenchmarkSpec s = one_shot(500);
    s.pipeline.balance.weight_policy = w;
    return run_benchmark(fs, s);
  };
  const BenchmarkResult uni = run(WeightPolicy::Uniform), ent = run(WeightPolicy::Entropy);
  return {uni.mean_accuracy >= ent.mean_accuracy, "uniform " + pct(uni) + ", entropy " + pct(ent)};
}

Verdict conservation() {
  const FeatureSet fs = overlapping_blobs(10);
  std::mt19937_64 rng(4);
  const Variant variants[] = {Variant::Full, Variant::LPClean, Variant::IProb,
                              Variant::ClassifierBalance};
  int bad = 0;
  for (int e = 0; e < 200; ++e) {
    EpisodeSpec es{5, 1 + static_cast<int>(rng() % 3), QueryCount::range(5, 20), 0, 2000u + e};
    const Episode ep = sample_episode(fs, es);
    PipelineConfig cfg;
    cfg.variant = variants[e % 4];
    cfg.trace = true;
    const InferenceResult a = transduce(ep, cfg);
    const InferenceResult b = transduce(ep, cfg);
    const std::size_t l = ep.support_count(), m = ep.query_count();
    bool ok = a.predicted.size() == m && a.predicted == b.predicted &&
              a.final_scores.p == b.final_scores.p && !a.per_iteration_trace.empty();
    std::vector<int> seen(m, 0);
    std::size_t prev = m + 1;
    for (const IterationTrace& t : a.per_iteration_trace) {
      ok = ok && t.query_size < prev && t.support_size + t.query_size == l + m;
      prev = t.query_size;
      for (std::size_t q : t.selected) ++seen[q];
    }
    const IterationTrace& last = a.per_iteration_trace.back();
    ok = ok && last.support_size + last.selected.size() == l + m &&
         last.selected.size() == last.query_size;
    ok = ok && std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
    ok = ok && std::all_of(a.predicted.begin(), a.predicted.end(),
                           [](int y) { return y >= 0 && y < 5; });
    bad += !ok;
  }
  return {bad == 0, fmt("%d of 200 episodes violated the contract", bad)};
}

Verdict separability() {
  const FeatureSet fs = ilpc::testing::separable_blobs(10, 32, 40, 11);
  const Variant variants[] = {Variant::Full,    Variant::LPOnly, Variant::LPBalance,
                              Variant::LPClean, Variant::IProb,  Variant::ClassifierBalance};
  std::string detail;
  bool pass = true;
  BenchmarkSpec s = one_shot(50);
  s.mode = InferenceMode::Inductive;
  const BenchmarkResult ind = run_benchmark(fs, s);
  pass = pass && ind.mean_accuracy == 1.0;
  detail += fmt("inductive %.2f%%", 100 * ind.mean_accuracy);
  s.mode = InferenceMode::Transductive;
  for (Variant v : variants) {
    s.pipeline.variant = v;
    const BenchmarkResult r = run_benchmark(fs, s);
    pass = pass && r.mean_accuracy == 1.0;
    detail += fmt(", %s %.2f%%", to_string(v).c_str(), 100 * r.mean_accuracy);
  }
  return {pass, detail};
}

Verdict performance() {
  BlobSpec b;
  b.class_count = 5;
  b.dim = 640;
  b.noise_sigma = 0.5;
  b.examples_per_class = 16;
  b.seed = 12;
  const FeatureSet fs = generate_blobs(b);
  const Episode ep = sample_episode(fs, EpisodeSpec{5, 1, QueryCount::fixed(15), 0, 1});
  const auto t0 = Clock::now();
  const InferenceResult r = transduce(ep, PipelineConfig{});
  const double secs = seconds_since(t0);
  return {secs <= 5.0 && r.predicted.size() == 75,
          fmt("d=640, 75 queries, %d iterations in %.2f s", r.iterations_run, secs)};
}

}  // namespace

int main() {
  report("graph and propagation match dense oracle", graph_propagation_oracle);
  report("sinkhorn marginals, zero pattern, scale invariance", sinkhorn_contract);
  report("cleaner gradient matches finite differences", gradient_check);
  report("noisy labels carry higher loss, minimum-loss example clean", loss_distribution);
  report("component ordering full > lp+balance > lp, full > lp+ilc > lp", component_ordering);
  report("true prior > none > uniform prior on unbalanced tasks", unbalanced_priors);
  report("uniform weights >= entropy weights", weight_policies);
  report("iterative inference conservation and determinism", conservation);
  report("separable blobs give 100% under every variant", separability);
  report("full variant on d=640 episode within 5 s", performance);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
