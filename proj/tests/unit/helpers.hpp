#pragma once

#include "ilpc/features.hpp"
#include "ilpc/types.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>

#include <unistd.h>

namespace ilpc::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Matrix row_normalized(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0) m.row(i) /= n;
  }
  return m;
}

// Dense reference: k-NN affinity over columns, symmetrized and normalized.
inline Matrix dense_normalized_adjacency(const Matrix& v, int k, double gamma) {
  const Eigen::Index t = v.rows();
  const Matrix s = v * v.transpose();
  Matrix a = Matrix::Zero(t, t);
  for (Eigen::Index j = 0; j < t; ++j) {
    std::vector<Eigen::Index> cand;
    for (Eigen::Index i = 0; i < t; ++i)
      if (i != j) cand.push_back(i);
    std::stable_sort(cand.begin(), cand.end(),
                     [&](Eigen::Index x, Eigen::Index y) { return s(x, j) > s(y, j); });
    for (int r = 0; r < k; ++r) {
      const Eigen::Index i = cand[static_cast<std::size_t>(r)];
      a(i, j) = std::pow(std::max(s(i, j), 0.0), gamma);
    }
  }
  const Matrix w = (a + a.transpose()) / 2.0;
  Vector d = w.rowwise().sum();
  for (Eigen::Index i = 0; i < t; ++i)
    if (d(i) == 0.0) d(i) = 1.0;
  Matrix out(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < t; ++j) out(i, j) = w(i, j) / std::sqrt(d(i) * d(j));
  return out;
}

// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ilpc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Well-separated blobs: orthonormal means, tiny noise.
inline FeatureSet separable_blobs(int classes, int dim, int per_class, std::uint64_t seed) {
  BlobSpec spec;
  spec.class_count = classes;
  spec.dim = dim;
  spec.per_class_mean_scale = 1.0;
  spec.noise_sigma = 1e-4;
  spec.examples_per_class = per_class;
  spec.seed = seed;
  return generate_blobs(spec);
}

}  // namespace ilpc::testing
