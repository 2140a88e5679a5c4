#pragma once

#include "ilpc/types.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>

namespace ilpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct GraphConfig {
  int k = 15;          // neighbours per node
  double gamma = 3.0;  // affinity exponent

  void validate(std::size_t node_count) const;
};

/// Symmetrically normalized k-NN adjacency D^{-1/2} W D^{-1/2}.
struct AffinityGraph {
  SparseMatrix adjacency;
  Vector degree;  // row sums of W; isolated nodes carry 1
  std::size_t node_count = 0;
};

/// Raw (unsymmetrized) affinity A: column j holds the k most similar nodes
/// i != j to node j, weighted by max(v_i . v_j, 0)^gamma. Ties in the k-th
/// place go to the lower index.
SparseMatrix knn_affinity(const Matrix& features, const GraphConfig& cfg);

/// Builds the normalized adjacency over the rows of `features`.
/// Requires T >= 2, 1 <= k < T and finite features.
AffinityGraph build_graph(const Matrix& features, const GraphConfig& cfg);

/// Coordinate-list dump, one "i j value" line per stored entry.
void write_coordinate_list(const AffinityGraph& graph, std::ostream& out);

}  // namespace ilpc
