#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace ilpc {

/// Row-per-example dense matrix.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using IndexList = std::vector<std::size_t>;

}  // namespace ilpc
