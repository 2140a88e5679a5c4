#include "ilpc/features.hpp"

#include "ilpc/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace ilpc {

FeatureSet::FeatureSet(Matrix data, std::optional<Labels> labels,
                       int class_count, std::string source_tag)
    : data_(std::move(data)),
      labels_(std::move(labels)),
      source_tag_(std::move(source_tag)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw InvalidArgument("feature set needs at least one row and one column");
  }
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    for (Eigen::Index j = 0; j < data_.cols(); ++j) {
      if (!std::isfinite(data_(i, j))) {
        std::ostringstream msg;
        msg << "non-finite feature value at row " << i << ", column " << j;
        throw InvalidArgument(msg.str());
      }
    }
  }
  if (labels_) {
    if (labels_->size() != static_cast<std::size_t>(data_.rows())) {
      throw InvalidArgument("label count does not match row count");
    }
    const int max_label =
        labels_->empty() ? -1 : *std::max_element(labels_->begin(), labels_->end());
    class_count_ = class_count >= 0 ? class_count : max_label + 1;
    for (std::size_t i = 0; i < labels_->size(); ++i) {
      const int y = (*labels_)[i];
      if (y < 0 || y >= class_count_) {
        std::ostringstream msg;
        msg << "label out of range at row " << i << ": " << y;
        throw InvalidArgument(msg.str());
      }
    }
  } else {
    class_count_ = std::max(class_count, 0);
  }
}

// ---------------------------------------------------------------------------
// Pre-processing

namespace {

void normalize_rows_l2(Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > 0.0) x.row(i) /= n;
  }
}

void normalize_rows_l1(Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).lpNorm<1>();
    if (n > 0.0) x.row(i) /= n;
  }
}

Eigen::RowVectorXd population_mean(const Matrix& x,
                                   std::span<const std::size_t> population) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
  for (std::size_t r : population) mean += x.row(static_cast<Eigen::Index>(r));
  return mean / static_cast<double>(population.size());
}

void power_transform_center(Matrix& x, const PowerTransformCenter& step,
                            std::span<const std::size_t> population) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(i, j) < 0.0) {
        std::ostringstream msg;
        msg << "power transform needs nonnegative features; row " << i
            << ", column " << j << " is " << x(i, j);
        throw InvalidArgument(msg.str());
      }
      x(i, j) = std::pow(x(i, j) + step.eps, step.beta);
    }
  }
  normalize_rows_l2(x);
  x.rowwise() -= population_mean(x, population);
  normalize_rows_l2(x);
}

Matrix project_pca(const Matrix& x, int target_dim,
                   std::span<const std::size_t> population) {
  const Eigen::Index d = x.cols();
  if (target_dim < 1 || target_dim > d) {
    throw InvalidArgument("PCA target dimension must lie in [1, d]");
  }
  if (population.size() < static_cast<std::size_t>(target_dim)) {
    throw InvalidArgument("PCA needs at least target_dim rows in the statistics population");
  }
  const Eigen::RowVectorXd mean = population_mean(x, population);
  Matrix centered(static_cast<Eigen::Index>(population.size()), d);
  for (std::size_t k = 0; k < population.size(); ++k) {
    centered.row(static_cast<Eigen::Index>(k)) =
        x.row(static_cast<Eigen::Index>(population[k])) - mean;
  }
  const Matrix cov =
      centered.transpose() * centered / static_cast<double>(population.size());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("PCA eigen-decomposition failed");

  // Eigen returns ascending eigenvalues.
  const Vector& values = eig.eigenvalues();
  const double largest = std::max(values(d - 1), 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (values(i) > 1e-12 * largest && values(i) > 0.0) ++rank;
  }
  if (rank < target_dim) {
    std::ostringstream msg;
    msg << "PCA rank deficiency: achieved rank " << rank << " < target " << target_dim;
    throw InvalidArgument(msg.str());
  }

  Matrix components(d, target_dim);
  for (int c = 0; c < target_dim; ++c) {
    Vector v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    components.col(c) = v;
  }
  return (x.rowwise() - mean) * components;
}

}  // namespace

Matrix preprocess(const Matrix& data, const PreprocessSpec& spec,
                  std::span<const std::size_t> population) {
  if (spec.empty()) return data;
  if (population.empty()) throw InvalidArgument("empty statistics population");
  for (std::size_t r : population) {
    if (r >= static_cast<std::size_t>(data.rows())) {
      throw InvalidArgument("statistics population index out of range");
    }
  }
  Matrix x = data;
  for (const auto& step : spec.steps) {
    if (std::holds_alternative<L2Normalize>(step)) {
      normalize_rows_l2(x);
    } else if (std::holds_alternative<L1Normalize>(step)) {
      normalize_rows_l1(x);
    } else if (const auto* pt = std::get_if<PowerTransformCenter>(&step)) {
      power_transform_center(x, *pt, population);
    } else if (std::holds_alternative<Center>(step)) {
      x.rowwise() -= population_mean(x, population);
    } else if (const auto* pca = std::get_if<Pca>(&step)) {
      x = project_pca(x, pca->target_dim, population);
    }
  }
  return x;
}

Matrix preprocess(const Matrix& data, const PreprocessSpec& spec) {
  IndexList all(static_cast<std::size_t>(data.rows()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return preprocess(data, spec, all);
}

FeatureSet preprocess(const FeatureSet& fs, const PreprocessSpec& spec) {
  if (spec.empty()) return fs;
  return FeatureSet(preprocess(fs.data(), spec), fs.labels(), fs.class_count(),
                    fs.source_tag() + " | " + to_string(spec));
}

PreprocessSpec parse_preprocess_list(const std::string& text) {
  PreprocessSpec spec;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(),
                              [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty() || item == "none") continue;
    const auto eq = item.find('=');
    const std::string name = item.substr(0, eq);
    const std::string arg = eq == std::string::npos ? "" : item.substr(eq + 1);
    try {
      if (name == "l2" && arg.empty()) {
        spec.steps.emplace_back(L2Normalize{});
      } else if (name == "l1" && arg.empty()) {
        spec.steps.emplace_back(L1Normalize{});
      } else if (name == "pt") {
        PowerTransformCenter pt;
        if (!arg.empty()) pt.beta = std::stod(arg);
        spec.steps.emplace_back(pt);
      } else if (name == "center" && arg.empty()) {
        spec.steps.emplace_back(Center{});
      } else if (name == "pca" && !arg.empty()) {
        std::size_t used = 0;
        const int m = std::stoi(arg, &used);
        if (used != arg.size() || m < 1) throw std::invalid_argument(arg);
        spec.steps.emplace_back(Pca{m});
      } else {
        throw InvalidArgument("unknown pre-processing step '" + item + "'");
      }
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad argument in pre-processing step '" + item + "'");
    }
  }
  return spec;
}

std::string to_string(const PreprocessSpec& spec) {
  if (spec.empty()) return "none";
  std::ostringstream out;
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    if (i) out << ',';
    const auto& step = spec.steps[i];
    if (std::holds_alternative<L2Normalize>(step)) out << "l2";
    else if (std::holds_alternative<L1Normalize>(step)) out << "l1";
    else if (const auto* pt = std::get_if<PowerTransformCenter>(&step)) out << "pt=" << pt->beta;
    else if (std::holds_alternative<Center>(step)) out << "center";
    else if (const auto* pca = std::get_if<Pca>(&step)) out << "pca=" << pca->target_dim;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic blobs

namespace {

void validate(const BlobSpec& spec) {
  if (spec.class_count < 1 || spec.dim < 1 || spec.examples_per_class < 1) {
    throw InvalidArgument("blob counts must be >= 1");
  }
  if (!(spec.noise_sigma > 0.0)) throw InvalidArgument("blob noise_sigma must be > 0");
  if (!std::isfinite(spec.per_class_mean_scale)) {
    throw InvalidArgument("blob mean scale must be finite");
  }
}

}  // namespace

Matrix blob_means(const BlobSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(spec.class_count, spec.dim);
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = normal(rng);
  }
  if (spec.class_count <= spec.dim) {
    // Gram-Schmidt; a Gaussian draw is almost surely full rank.
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
      for (Eigen::Index p = 0; p < c; ++p) {
        means.row(c) -= means.row(c).dot(means.row(p)) * means.row(p);
      }
      means.row(c).normalize();
    }
    means *= spec.per_class_mean_scale;
  } else {
    means *= spec.per_class_mean_scale / std::sqrt(static_cast<double>(spec.dim));
  }
  return means;
}

FeatureSet generate_blobs(const BlobSpec& spec) {
  const Matrix means = blob_means(spec);
  // Separate stream from the means so changing the count never moves them.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, spec.noise_sigma);
  const Eigen::Index total =
      static_cast<Eigen::Index>(spec.class_count) * spec.examples_per_class;
  Matrix data(total, spec.dim);
  Labels labels(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.class_count; ++c) {
    for (int e = 0; e < spec.examples_per_class; ++e, ++row) {
      for (Eigen::Index j = 0; j < data.cols(); ++j) {
        data(row, j) = means(c, j) + normal(rng);
      }
      labels[static_cast<std::size_t>(row)] = c;
    }
  }
  std::ostringstream tag;
  tag << "blobs(N=" << spec.class_count << ",d=" << spec.dim
      << ",scale=" << spec.per_class_mean_scale << ",sigma=" << spec.noise_sigma
      << ",per_class=" << spec.examples_per_class << ",seed=" << spec.seed << ")";
  return FeatureSet(std::move(data), std::move(labels), spec.class_count, tag.str());
}

}  // namespace ilpc
