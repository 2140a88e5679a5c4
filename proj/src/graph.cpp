#include "ilpc/graph.hpp"

#include "ilpc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ilpc {

void GraphConfig::validate(std::size_t node_count) const {
  if (node_count < 2) throw InvalidArgument("graph needs at least two nodes");
  if (k < 1 || static_cast<std::size_t>(k) >= node_count) {
    std::ostringstream msg;
    msg << "neighbour count k=" << k << " must satisfy 1 <= k < T=" << node_count;
    throw InvalidArgument(msg.str());
  }
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be >= 1");
}

SparseMatrix knn_affinity(const Matrix& features, const GraphConfig& cfg) {
  const auto t = static_cast<std::size_t>(features.rows());
  cfg.validate(t);
  if (!features.allFinite()) throw InvalidArgument("non-finite feature entries in graph input");

  const Matrix sim = features * features.transpose();
  const auto k = static_cast<std::size_t>(cfg.k);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(t * k);
  std::vector<std::size_t> order(t - 1);
  for (std::size_t j = 0; j < t; ++j) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < t; ++i) {
      if (i != j) order[n++] = i;
    }
    const auto col = static_cast<Eigen::Index>(j);
    auto closer = [&](std::size_t a, std::size_t b) {
      const double sa = sim(static_cast<Eigen::Index>(a), col);
      const double sb = sim(static_cast<Eigen::Index>(b), col);
      return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      closer);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t i = order[r];
      const double s = sim(static_cast<Eigen::Index>(i), col);
      if (s > 0.0) {
        triplets.emplace_back(static_cast<Eigen::Index>(i), col, std::pow(s, cfg.gamma));
      }
    }
  }
  SparseMatrix a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

AffinityGraph build_graph(const Matrix& features, const GraphConfig& cfg) {
  const SparseMatrix a = knn_affinity(features, cfg);
  const SparseMatrix at = a.transpose();
  SparseMatrix w = 0.5 * (a + at);

  const auto t = static_cast<Eigen::Index>(features.rows());
  Vector degree = Vector::Zero(t);
  for (Eigen::Index c = 0; c < w.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(w, c); it; ++it) degree(it.row()) += it.value();
  }
  Vector inv_sqrt(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    if (degree(i) <= 0.0) degree(i) = 1.0;
    inv_sqrt(i) = 1.0 / std::sqrt(degree(i));
  }
  for (Eigen::Index c = 0; c < w.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(w, c); it; ++it) {
      it.valueRef() *= inv_sqrt(it.row()) * inv_sqrt(it.col());
    }
  }
  w.makeCompressed();
  return AffinityGraph{std::move(w), std::move(degree), static_cast<std::size_t>(t)};
}

void write_coordinate_list(const AffinityGraph& graph, std::ostream& out) {
  const auto precision = out.precision(17);
  for (Eigen::Index c = 0; c < graph.adjacency.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(graph.adjacency, c); it; ++it) {
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
  out.precision(precision);
}

}  // namespace ilpc
