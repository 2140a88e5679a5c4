#pragma once

#include "ilpc/balance.hpp"
#include "ilpc/cleaner.hpp"
#include "ilpc/episodes.hpp"
#include "ilpc/features.hpp"
#include "ilpc/graph.hpp"
#include "ilpc/logistic.hpp"
#include "ilpc/propagation.hpp"

#include <string>
#include <vector>

namespace ilpc {

/// Pipeline variants. LPOnly and LPBalance are single-pass; the others
/// iterate until every query has been moved to the support set.
enum class Variant { Full, LPOnly, LPBalance, LPClean, IProb, ClassifierBalance };

/// CLI spelling: full, lp, lp-balance, lp-clean, iprob, class-balance.
Variant parse_variant(const std::string& text);
std::string to_string(Variant v);

bool uses_balance(Variant v);
bool is_iterative(Variant v);

struct PipelineConfig {
  GraphConfig graph;
  PropagationConfig propagation;
  BalanceConfig balance;
  CleanerConfig cleaner;
  Variant variant = Variant::Full;
  PreprocessSpec preprocess;
  LogisticConfig logistic;  // inductive and semi-supervised fits
  // With a Given prior, per-class targets shrink by the number of examples
  // of that class already moved to the support set.
  bool decrement_prior_budget = true;
  bool trace = false;

  void validate(int n_way) const;
};

struct IterationTrace {
  int iteration = 0;
  std::size_t support_size = 0;
  std::size_t query_size = 0;
  IndexList selected;  // original query indices moved this iteration
  double max_violation = 0.0;
  double max_solver_residual = 0.0;
  int sinkhorn_iterations = 0;
  bool sinkhorn_converged = true;
};

struct InferenceResult {
  Labels predicted;         // one per original query, in query order
  ScoreMatrix final_scores;  // score row each query carried when labeled
  int iterations_run = 0;
  std::vector<IterationTrace> per_iteration_trace;  // filled when cfg.trace
};

/// Transductive inference over support and query features of an episode.
/// Pre-processing statistics are taken over support and queries together.
InferenceResult transduce(const Episode& ep, const PipelineConfig& cfg);

/// Same on raw matrices that are already pre-processed.
InferenceResult transduce_features(const Matrix& support_x, const Labels& support_y,
                                   const Matrix& query_x, int n_way, const PipelineConfig& cfg);

/// Logistic regression on the support only. Pre-processing statistics come
/// from the support, so each query is classified independently.
Labels inductive_baseline(const Episode& ep);
Labels inductive_baseline(const Episode& ep, const PreprocessSpec& preprocess,
                          const LogisticConfig& logistic);

/// Transduction over (support, unlabeled), then logistic regression on the
/// support plus the pseudo-labeled unlabeled set, applied to the queries.
/// With no unlabeled data this is inductive_baseline.
Labels semi_supervised(const Episode& ep, const PipelineConfig& cfg);

}  // namespace ilpc
