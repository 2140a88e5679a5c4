#pragma once

#include "ilpc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ilpc {

/// Embedding matrix (one example per row) with optional ground-truth labels.
///
/// Immutable once constructed; the constructor enforces that every entry is
/// finite and that labels, when present, lie in [0, class_count).
class FeatureSet {
 public:
  FeatureSet(Matrix data, std::optional<Labels> labels, int class_count = -1,
             std::string source_tag = {});

  const Matrix& data() const { return data_; }
  const std::optional<Labels>& labels() const { return labels_; }
  bool labeled() const { return labels_.has_value(); }
  int class_count() const { return class_count_; }
  const std::string& source_tag() const { return source_tag_; }

  std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }

 private:
  Matrix data_;
  std::optional<Labels> labels_;
  int class_count_ = 0;
  std::string source_tag_;
};

// Pre-processing steps. Steps run in list order.
struct L2Normalize {};
struct L1Normalize {};
/// x <- (x + eps)^beta, row l2-normalize, subtract population mean,
/// row l2-normalize again.
struct PowerTransformCenter {
  double beta = 0.5;
  double eps = 1e-6;
};
/// Subtract the population column mean.
struct Center {};
struct Pca {
  int target_dim = 1;
};

using PreprocessStep =
    std::variant<L2Normalize, L1Normalize, PowerTransformCenter, Center, Pca>;

struct PreprocessSpec {
  std::vector<PreprocessStep> steps;

  bool empty() const { return steps.empty(); }
};

/// Parses the comma list used on the command line: l2,l1,pt[=beta],center,pca=<m>.
PreprocessSpec parse_preprocess_list(const std::string& text);
std::string to_string(const PreprocessSpec& spec);

/// Applies `spec` to every row of `data`. Centering and PCA statistics are
/// computed over the rows listed in `population`.
Matrix preprocess(const Matrix& data, const PreprocessSpec& spec,
                  std::span<const std::size_t> population);
/// Same, with every row in the statistics population.
Matrix preprocess(const Matrix& data, const PreprocessSpec& spec);
FeatureSet preprocess(const FeatureSet& fs, const PreprocessSpec& spec);

/// Isotropic Gaussian classes for synthetic experiments.
///
/// When class_count <= dim the class means are mutually orthogonal with norm
/// per_class_mean_scale; otherwise they are Gaussian with that expected norm.
struct BlobSpec {
  int class_count = 5;
  int dim = 16;
  double per_class_mean_scale = 1.0;
  double noise_sigma = 1.0;
  int examples_per_class = 100;
  std::uint64_t seed = 0;
};

FeatureSet generate_blobs(const BlobSpec& spec);

/// Class means used by generate_blobs for `spec` (class_count x dim).
Matrix blob_means(const BlobSpec& spec);

enum class FileFormat { Csv, Npy, RawF32 };

std::optional<FileFormat> parse_file_format(const std::string& name);
/// Guesses the format from the file extension (.csv, .npy, anything else raw).
FileFormat format_from_extension(const std::filesystem::path& path);

struct LoadOptions {
  /// Feature dimension for header-less CSV; a trailing extra column is then
  /// read as the label. Without it every column is a feature.
  std::optional<int> csv_dim;
};

FeatureSet load_features(const std::filesystem::path& path, FileFormat format,
                         const LoadOptions& options = {});

struct SaveOptions {
  /// NPY element type; float64 keeps doubles lossless.
  bool npy_float32 = false;
};

void save_features(const FeatureSet& fs, const std::filesystem::path& path,
                   FileFormat format, const SaveOptions& options = {});

}  // namespace ilpc
