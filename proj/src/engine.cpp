#include "ilpc/engine.hpp"

#include "ilpc/error.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace ilpc {

Variant parse_variant(const std::string& text) {
  if (text == "full") return Variant::Full;
  if (text == "lp") return Variant::LPOnly;
  if (text == "lp-balance") return Variant::LPBalance;
  if (text == "lp-clean") return Variant::LPClean;
  if (text == "iprob") return Variant::IProb;
  if (text == "class-balance") return Variant::ClassifierBalance;
  throw InvalidArgument("unknown variant '" + text + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::LPOnly: return "lp";
    case Variant::LPBalance: return "lp-balance";
    case Variant::LPClean: return "lp-clean";
    case Variant::IProb: return "iprob";
    case Variant::ClassifierBalance: return "class-balance";
  }
  return "?";
}

bool uses_balance(Variant v) { return v != Variant::LPOnly && v != Variant::LPClean; }

bool is_iterative(Variant v) { return v != Variant::LPOnly && v != Variant::LPBalance; }

void PipelineConfig::validate(int n_way) const {
  if (graph.k < 1) throw InvalidArgument("k must be >= 1");
  if (!(graph.gamma >= 1.0)) throw InvalidArgument("gamma must be >= 1");
  propagation.validate();
  balance.validate(n_way);
  cleaner.validate();
  logistic.validate();
}

namespace {

Matrix gather(const Matrix& data, const IndexList& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), data.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(ids[i]));
  }
  return out;
}

[[noreturn]] void rethrow_at(int iteration) {
  std::ostringstream prefix;
  prefix << "iteration " << iteration << ": ";
  try {
    throw;
  } catch (const SolverError& e) {
    throw SolverError(prefix.str() + e.what(), e.achieved_residual());
  } catch (const SinkhornError& e) {
    throw SinkhornError(prefix.str() + e.what(), e.max_violation());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(prefix.str() + e.what());
  } catch (const Error& e) {
    throw Error(prefix.str() + e.what());
  }
}

// Column targets for the current query set. Under a Given prior each class
// budget is u_j * M minus the examples already moved to that class.
std::optional<Vector> current_targets(const PipelineConfig& cfg, const Vector& row_weights,
                                      const std::vector<int>& moved, std::size_t total_queries,
                                      int n_way) {
  const ClassPrior& prior = cfg.balance.class_prior;
  if (prior.kind != ClassPrior::Kind::Given || !cfg.decrement_prior_budget) return std::nullopt;
  Vector budget(n_way);
  for (int j = 0; j < n_way; ++j) {
    budget(j) = std::max(0.0, prior.u(j) * static_cast<double>(total_queries) -
                                  static_cast<double>(moved[static_cast<std::size_t>(j)]));
  }
  const double sum = budget.sum();
  // Every budget exhausted by earlier (mis)labelings: fall back to the prior.
  if (!(sum > 0.0)) return row_weights.sum() * prior.u;
  return budget * (row_weights.sum() / sum);
}

}  // namespace

InferenceResult transduce_features(const Matrix& support_x, const Labels& support_y,
                                   const Matrix& query_x, int n_way, const PipelineConfig& cfg) {
  cfg.validate(n_way);
  const std::size_t l = support_y.size();
  const std::size_t m = static_cast<std::size_t>(query_x.rows());
  if (m == 0) throw InvalidArgument("transduction needs a nonempty query set");
  if (l == 0 && cfg.variant == Variant::ClassifierBalance) {
    throw InvalidArgument("classifier variant needs a nonempty support set");
  }
  if (static_cast<std::size_t>(support_x.rows()) != l) {
    throw InvalidArgument("support features and labels differ in count");
  }
  if (l > 0 && support_x.cols() != query_x.cols()) {
    throw InvalidArgument("support and query features differ in dimension");
  }

  Matrix all(static_cast<Eigen::Index>(l + m), query_x.cols());
  if (l > 0) all.topRows(static_cast<Eigen::Index>(l)) = support_x;
  all.bottomRows(static_cast<Eigen::Index>(m)) = query_x;

  LabeledIds support;
  support.ids.resize(l);
  std::iota(support.ids.begin(), support.ids.end(), std::size_t{0});
  support.labels = support_y;
  IndexList query(m);
  std::iota(query.begin(), query.end(), l);

  BalanceConfig balance = cfg.balance;
  balance.enabled = balance.enabled && uses_balance(cfg.variant);
  const int selects = cfg.cleaner.selects_per_class;

  InferenceResult result;
  result.predicted.assign(m, -1);
  result.final_scores.p = Matrix::Zero(static_cast<Eigen::Index>(m), n_way);
  std::vector<int> moved(static_cast<std::size_t>(n_way), 0);

  int iteration = 0;
  while (!query.empty()) {
    ++iteration;
    IterationTrace trace;
    trace.iteration = iteration;
    trace.support_size = support.ids.size();
    trace.query_size = query.size();
    IndexList chosen;  // positions into `query`
    Labels labels;
    try {
      const Matrix qx = gather(all, query);
      ScoreMatrix p;
      Vector weights;
      if (cfg.variant == Variant::ClassifierBalance) {
        const Matrix sx = gather(all, support.ids);
        const WeightedSet none{Matrix(0, all.cols()), {}, Vector(0)};
        const TrainOutcome trained = train_linear(sx, support.labels, none, n_way, cfg.cleaner);
        p.p = trained.model.forward(qx);
        weights = confidence_weights(p.p, 0, balance.weight_policy);
      } else {
        IndexList nodes = support.ids;
        nodes.insert(nodes.end(), query.begin(), query.end());
        const Matrix x = gather(all, nodes);
        GraphConfig gc = cfg.graph;
        gc.k = std::min<int>(gc.k, static_cast<int>(nodes.size()) - 1);
        const AffinityGraph g = build_graph(x, gc);
        const LabelMatrix y = make_label_matrix(support.labels, n_way, nodes.size());
        const PropagationResult z = propagate_with_stats(g, y, cfg.propagation);
        trace.max_solver_residual = z.max_rel_residual;
        p = extract_unlabeled_block(z.z, support.ids.size());
        weights = confidence_weights(z.z, support.ids.size(), balance.weight_policy);
      }
      const BalancedPrediction bp = balance_scores(
          p, weights, balance, current_targets(cfg, weights, moved, m, n_way));
      trace.max_violation = bp.max_violation;
      trace.sinkhorn_iterations = bp.sinkhorn_iterations;
      trace.sinkhorn_converged = bp.converged;
      labels = bp.labels;

      const bool admit_all = !is_iterative(cfg.variant) ||
                             query.size() <= static_cast<std::size_t>(selects) *
                                                 static_cast<std::size_t>(n_way);
      if (admit_all) {
        chosen.resize(query.size());
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
      } else if (cfg.variant == Variant::IProb) {
        Vector neg(static_cast<Eigen::Index>(query.size()));
        for (std::size_t i = 0; i < query.size(); ++i) {
          neg(static_cast<Eigen::Index>(i)) = -bp.scores.p(static_cast<Eigen::Index>(i), labels[i]);
        }
        chosen = select_cleanest(neg, labels, selects);
      } else {
        CleanerConfig cc = cfg.cleaner;
        cc.seed = cfg.cleaner.seed + static_cast<std::uint64_t>(iteration);
        const WeightedSet pseudo{qx, labels, weights};
        chosen = train_and_score(gather(all, support.ids), support.labels, pseudo, n_way, cc)
                     .selected;
      }
      for (std::size_t pos : chosen) {
        const std::size_t q = query[pos] - l;
        result.predicted[q] = labels[pos];
        result.final_scores.p.row(static_cast<Eigen::Index>(q)) =
            bp.scores.p.row(static_cast<Eigen::Index>(pos));
        ++moved[static_cast<std::size_t>(labels[pos])];
      }
    } catch (const Error&) {
      rethrow_at(iteration);
    }
    if (chosen.empty()) throw Error("selection returned no examples");  // unreachable
    IndexList ids;
    ids.reserve(chosen.size());
    for (std::size_t pos : chosen) ids.push_back(query[pos]);
    std::tie(support, query) = augment(support, query, ids, labels);
    if (cfg.trace) {
      for (std::size_t id : ids) trace.selected.push_back(id - l);
      result.per_iteration_trace.push_back(std::move(trace));
    }
  }
  result.iterations_run = iteration;
  return result;
}

InferenceResult transduce(const Episode& ep, const PipelineConfig& cfg) {
  const auto l = static_cast<Eigen::Index>(ep.support_count());
  const auto m = static_cast<Eigen::Index>(ep.query_count());
  if (m == 0) throw InvalidArgument("transduction needs a nonempty query set");
  Matrix all(l + m, ep.query_x.cols());
  all.topRows(l) = ep.support_x;
  all.bottomRows(m) = ep.query_x;
  const Matrix x = cfg.preprocess.empty() ? all : preprocess(all, cfg.preprocess);
  return transduce_features(x.topRows(l), ep.support_y, x.bottomRows(m), ep.n_way, cfg);
}

Labels inductive_baseline(const Episode& ep) {
  return inductive_baseline(ep, PreprocessSpec{}, LogisticConfig{});
}

Labels inductive_baseline(const Episode& ep, const PreprocessSpec& spec,
                          const LogisticConfig& logistic) {
  const auto l = static_cast<Eigen::Index>(ep.support_count());
  const auto m = static_cast<Eigen::Index>(ep.query_count());
  if (l == 0) throw InvalidArgument("inductive baseline needs a nonempty support set");
  Matrix all(l + m, ep.support_x.cols());
  all.topRows(l) = ep.support_x;
  if (m > 0) all.bottomRows(m) = ep.query_x;
  IndexList population(static_cast<std::size_t>(l));
  std::iota(population.begin(), population.end(), std::size_t{0});
  const Matrix x = spec.empty() ? all : preprocess(all, spec, population);
  const LogisticFit fit = fit_logistic(x.topRows(l), ep.support_y, ep.n_way, logistic);
  return predict_labels(fit.model, x.bottomRows(m));
}

Labels semi_supervised(const Episode& ep, const PipelineConfig& cfg) {
  if (ep.unlabeled_count() == 0) return inductive_baseline(ep, cfg.preprocess, cfg.logistic);
  const auto l = static_cast<Eigen::Index>(ep.support_count());
  const auto u = static_cast<Eigen::Index>(ep.unlabeled_count());
  const auto m = static_cast<Eigen::Index>(ep.query_count());
  Matrix all(l + u + m, ep.support_x.cols());
  all.topRows(l) = ep.support_x;
  all.middleRows(l, u) = ep.unlabeled_x;
  if (m > 0) all.bottomRows(m) = ep.query_x;
  IndexList population(static_cast<std::size_t>(l + u));
  std::iota(population.begin(), population.end(), std::size_t{0});
  const Matrix x = cfg.preprocess.empty() ? all : preprocess(all, cfg.preprocess, population);

  const InferenceResult pseudo =
      transduce_features(x.topRows(l), ep.support_y, x.middleRows(l, u), ep.n_way, cfg);
  Labels y = ep.support_y;
  y.insert(y.end(), pseudo.predicted.begin(), pseudo.predicted.end());
  const LogisticFit fit = fit_logistic(x.topRows(l + u), y, ep.n_way, cfg.logistic);
  return predict_labels(fit.model, x.bottomRows(m));
}

}  // namespace ilpc
