#pragma once

#include "ilpc/features.hpp"
#include "ilpc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace ilpc {

/// Queries per class: a fixed count, or a per-class uniform draw from
/// [lo, hi] (unbalanced episodes).
struct QueryCount {
  int lo = 15;
  int hi = 15;

  static QueryCount fixed(int n) { return {n, n}; }
  static QueryCount range(int lo, int hi) { return {lo, hi}; }
  bool is_range() const { return lo != hi; }
};

/// Parses "15" or "10:20".
QueryCount parse_query_count(const std::string& text);

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 1;
  QueryCount queries;
  int unlabeled_per_class = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground-truth labels that travel with an episode but are not readable
/// through its public interface. Evaluation code reads them through
/// HiddenLabelAccess (ilpc/hidden_access.hpp).
class HiddenLabels {
 public:
  HiddenLabels() = default;
  explicit HiddenLabels(Labels values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

 private:
  friend class HiddenLabelAccess;
  Labels values_;
};

struct Episode {
  int n_way = 0;
  int k_shot = 0;

  Matrix support_x;
  Labels support_y;  // in [0, n_way), exactly k_shot of each
  Matrix query_x;
  HiddenLabels query_y;
  Matrix unlabeled_x;
  HiddenLabels unlabeled_y;

  /// Original class id of each episode class.
  std::vector<int> class_map;

  /// Source row of every example (debugging, disjointness checks).
  IndexList support_rows;
  IndexList query_rows;
  IndexList unlabeled_rows;

  std::size_t support_count() const { return support_y.size(); }
  std::size_t query_count() const { return static_cast<std::size_t>(query_x.rows()); }
  std::size_t unlabeled_count() const { return static_cast<std::size_t>(unlabeled_x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(support_x.cols()); }
};

/// Samples one N-way K-shot episode; deterministic for a fixed spec.seed.
/// Classes are drawn uniformly without replacement, examples without
/// replacement within the episode.
Episode sample_episode(const FeatureSet& fs, const EpisodeSpec& spec);

/// Normalized per-class query counts of the episode.
Vector true_prior(const Episode& ep);

/// Writes <stem>.support.f32, <stem>.query.f32 and, if present,
/// <stem>.unlabeled.f32 in the RAW_F32 container (labels included).
void save_episode(const Episode& ep, const std::filesystem::path& stem);

}  // namespace ilpc
