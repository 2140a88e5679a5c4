// Feature file formats: CSV, NPY v1.0 and the RAW_F32 container.

#include "ilpc/features.hpp"

#include "ilpc/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ilpc {

static_assert(std::endian::native == std::endian::little,
              "binary feature formats assume a little-endian host");

std::optional<FileFormat> parse_file_format(const std::string& name) {
  if (name == "csv") return FileFormat::Csv;
  if (name == "npy") return FileFormat::Npy;
  if (name == "raw" || name == "raw_f32" || name == "f32") return FileFormat::RawF32;
  return std::nullopt;
}

FileFormat format_from_extension(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".csv" || ext == ".txt") return FileFormat::Csv;
  if (ext == ".npy") return FileFormat::Npy;
  return FileFormat::RawF32;
}

namespace {

std::string describe(const std::filesystem::path& path) { return "'" + path.string() + "'"; }

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + describe(path) + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + describe(path) + " for writing");
  return out;
}

void check_finite(const Matrix& data, const std::filesystem::path& path) {
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (!std::isfinite(data(i, j))) {
        std::ostringstream msg;
        msg << describe(path) << ": non-finite value at row " << i << ", column " << j;
        throw IoError(msg.str());
      }
    }
  }
}

void check_labels(const Labels& labels, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      std::ostringstream msg;
      msg << describe(path) << ": label out of range at row " << i << ": " << labels[i];
      throw IoError(msg.str());
    }
  }
}

// --- CSV ------------------------------------------------------------------

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& cell, std::size_t row, std::size_t col,
                    const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used == cell.size()) return v;
  } catch (const std::logic_error&) {
  }
  std::ostringstream msg;
  msg << describe(path) << ": cannot parse '" << cell << "' at row " << row << ", column " << col;
  throw IoError(msg.str());
}

FeatureSet load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw IoError(describe(path) + ": malformed header (empty file)");

  std::optional<int> dim = options.csv_dim;
  std::optional<bool> labeled;
  std::size_t first = 0;
  if (lines[0].starts_with("#")) {
    int d = 0;
    int l = 0;
    if (std::sscanf(lines[0].c_str(), "#d=%d,labeled=%d", &d, &l) != 2 || d < 1 ||
        (l != 0 && l != 1)) {
      throw IoError(describe(path) + ": malformed header '" + lines[0] + "'");
    }
    dim = d;
    labeled = l == 1;
    first = 1;
  }
  if (first == lines.size()) throw IoError(describe(path) + ": no data rows");

  const std::size_t width = split_commas(lines[first]).size();
  if (!dim) dim = static_cast<int>(width);
  if (!labeled) labeled = width == static_cast<std::size_t>(*dim) + 1;
  const std::size_t expected = static_cast<std::size_t>(*dim) + (*labeled ? 1 : 0);

  const std::size_t rows = lines.size() - first;
  Matrix data(static_cast<Eigen::Index>(rows), *dim);
  Labels labels;
  if (*labeled) labels.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto cells = split_commas(lines[first + r]);
    if (cells.size() != expected) {
      std::ostringstream msg;
      msg << describe(path) << ": row " << r << " has " << cells.size() << " columns, expected "
          << expected;
      throw IoError(msg.str());
    }
    for (int c = 0; c < *dim; ++c) {
      data(static_cast<Eigen::Index>(r), c) =
          parse_double(cells[static_cast<std::size_t>(c)], r, static_cast<std::size_t>(c), path);
    }
    if (*labeled) {
      const double y = parse_double(cells.back(), r, expected - 1, path);
      if (y != std::floor(y) || y < 0 || y > std::numeric_limits<int>::max()) {
        std::ostringstream msg;
        msg << describe(path) << ": label out of range at row " << r << ": " << cells.back();
        throw IoError(msg.str());
      }
      labels[r] = static_cast<int>(y);
    }
  }
  check_finite(data, path);
  std::optional<Labels> out_labels;
  if (*labeled) out_labels = std::move(labels);
  return FeatureSet(std::move(data), std::move(out_labels), -1, path.string());
}

void save_csv(const FeatureSet& fs, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "#d=" << fs.dim() << ",labeled=" << (fs.labeled() ? 1 : 0) << '\n';
  out << std::setprecision(17);
  const Matrix& x = fs.data();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (j) out << ',';
      out << x(i, j);
    }
    if (fs.labeled()) out << ',' << (*fs.labels())[static_cast<std::size_t>(i)];
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + describe(path));
}

// --- NPY ------------------------------------------------------------------

struct NpyHeader {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

std::string header_value(const std::string& header, const std::string& key,
                         const std::filesystem::path& path) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) throw IoError(describe(path) + ": malformed header, missing " + key);
  auto colon = header.find(':', k);
  if (colon == std::string::npos) throw IoError(describe(path) + ": malformed header");
  ++colon;
  while (colon < header.size() && header[colon] == ' ') ++colon;
  if (header[colon] == '(') {
    const auto close = header.find(')', colon);
    if (close == std::string::npos) throw IoError(describe(path) + ": malformed header");
    return header.substr(colon, close - colon + 1);
  }
  if (header[colon] == '\'') {
    const auto close = header.find('\'', colon + 1);
    if (close == std::string::npos) throw IoError(describe(path) + ": malformed header");
    return header.substr(colon + 1, close - colon - 1);
  }
  const auto end = header.find_first_of(",}", colon);
  return header.substr(colon, end - colon);
}

NpyHeader read_npy_header(std::istream& in, const std::filesystem::path& path) {
  char magic[6] = {};
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw IoError(describe(path) + ": malformed header (bad NPY magic)");
  }
  unsigned char version[2] = {};
  in.read(reinterpret_cast<char*>(version), 2);
  std::uint32_t header_len = 0;
  if (version[0] == 1) {
    std::uint16_t len16 = 0;
    in.read(reinterpret_cast<char*>(&len16), 2);
    header_len = len16;
  } else if (version[0] == 2 || version[0] == 3) {
    in.read(reinterpret_cast<char*>(&header_len), 4);
  } else {
    throw IoError(describe(path) + ": unsupported NPY version");
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw IoError(describe(path) + ": malformed header (truncated)");

  NpyHeader h;
  h.descr = header_value(header, "descr", path);
  h.fortran_order = header_value(header, "fortran_order", path).find("True") != std::string::npos;
  const std::string shape = header_value(header, "shape", path);
  std::string digits;
  for (char c : shape.substr(1)) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits += c;
    } else if (!digits.empty()) {
      h.shape.push_back(std::stoull(digits));
      digits.clear();
    }
  }
  return h;
}

void write_npy_header(std::ostream& out, const std::string& descr,
                      const std::vector<std::size_t>& shape) {
  std::ostringstream dict;
  dict << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) dict << (i ? ", " : "") << shape[i];
  dict << (shape.size() == 1 ? ",), }" : "), }");
  std::string text = dict.str();
  // Magic (6) + version (2) + length (2) + text + '\n' padded to 64 bytes.
  const std::size_t unpadded = 10 + text.size() + 1;
  text.append((64 - unpadded % 64) % 64, ' ');
  text += '\n';
  out.write("\x93NUMPY", 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

template <typename T>
std::vector<T> read_block(std::istream& in, std::size_t count, const std::filesystem::path& path) {
  std::vector<T> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) throw IoError(describe(path) + ": truncated data");
  return buf;
}

std::filesystem::path npy_labels_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension();
  p += ".labels.npy";
  return p;
}

Matrix load_npy_matrix(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const NpyHeader h = read_npy_header(in, path);
  if (h.shape.size() != 2 || h.shape[0] == 0 || h.shape[1] == 0) {
    throw IoError(describe(path) + ": malformed header, expected a non-empty (T, d) shape");
  }
  const std::size_t rows = h.shape[0];
  const std::size_t cols = h.shape[1];
  std::vector<double> values;
  if (h.descr == "<f8" || h.descr == "=f8") {
    values = read_block<double>(in, rows * cols, path);
  } else if (h.descr == "<f4" || h.descr == "=f4") {
    const auto f = read_block<float>(in, rows * cols, path);
    values.assign(f.begin(), f.end());
  } else {
    throw IoError(describe(path) + ": unsupported dtype '" + h.descr + "'");
  }
  Matrix data(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = h.fortran_order ? j * rows + i : i * cols + j;
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[k];
    }
  }
  return data;
}

Labels load_npy_labels(const std::filesystem::path& path, std::size_t expected_rows) {
  std::ifstream in = open_in(path);
  const NpyHeader h = read_npy_header(in, path);
  if (h.shape.size() != 1 || h.shape[0] != expected_rows) {
    throw IoError(describe(path) + ": label shape does not match feature rows");
  }
  Labels labels(expected_rows);
  if (h.descr == "<i8" || h.descr == "=i8") {
    const auto v = read_block<std::int64_t>(in, expected_rows, path);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] < 0 || v[i] > std::numeric_limits<int>::max()) {
        std::ostringstream msg;
        msg << describe(path) << ": label out of range at row " << i << ": " << v[i];
        throw IoError(msg.str());
      }
      labels[i] = static_cast<int>(v[i]);
    }
  } else if (h.descr == "<i4" || h.descr == "=i4") {
    const auto v = read_block<std::int32_t>(in, expected_rows, path);
    labels.assign(v.begin(), v.end());
  } else {
    throw IoError(describe(path) + ": unsupported label dtype '" + h.descr + "'");
  }
  check_labels(labels, path);
  return labels;
}

FeatureSet load_npy(const std::filesystem::path& path) {
  Matrix data = load_npy_matrix(path);
  check_finite(data, path);
  std::optional<Labels> labels;
  const auto lpath = npy_labels_path(path);
  if (std::filesystem::exists(lpath)) {
    labels = load_npy_labels(lpath, static_cast<std::size_t>(data.rows()));
  }
  return FeatureSet(std::move(data), std::move(labels), -1, path.string());
}

void save_npy(const FeatureSet& fs, const std::filesystem::path& path, bool as_float32) {
  const Matrix& x = fs.data();
  {
    std::ofstream out = open_out(path);
    write_npy_header(out, as_float32 ? "<f4" : "<f8", {fs.rows(), fs.dim()});
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (as_float32) {
          const float v = static_cast<float>(x(i, j));
          out.write(reinterpret_cast<const char*>(&v), sizeof v);
        } else {
          const double v = x(i, j);
          out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
      }
    }
    if (!out) throw IoError("write failed for " + describe(path));
  }
  const auto lpath = npy_labels_path(path);
  if (fs.labeled()) {
    std::ofstream out = open_out(lpath);
    write_npy_header(out, "<i8", {fs.rows()});
    for (int y : *fs.labels()) {
      const std::int64_t v = y;
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    if (!out) throw IoError("write failed for " + describe(lpath));
  } else if (std::filesystem::exists(lpath)) {
    // A stale sibling would silently attach labels on the next load.
    std::filesystem::remove(lpath);
  }
}

// --- RAW_F32 --------------------------------------------------------------

FeatureSet load_raw(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  char magic[4] = {};
  std::uint32_t header[3] = {};
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || std::memcmp(magic, "ILPC", 4) != 0) {
    throw IoError(describe(path) + ": malformed header (bad ILPC magic)");
  }
  const std::size_t rows = header[0];
  const std::size_t cols = header[1];
  const bool labeled = (header[2] & 1u) != 0;
  if (rows == 0 || cols == 0) throw IoError(describe(path) + ": malformed header (zero shape)");
  const auto values = read_block<float>(in, rows * cols, path);
  Matrix data(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * cols + j];
    }
  }
  check_finite(data, path);
  std::optional<Labels> labels;
  if (labeled) {
    const auto raw = read_block<std::int32_t>(in, rows, path);
    labels = Labels(raw.begin(), raw.end());
    check_labels(*labels, path);
  }
  return FeatureSet(std::move(data), std::move(labels), -1, path.string());
}

void save_raw(const FeatureSet& fs, const std::filesystem::path& path) {
  if (fs.rows() > std::numeric_limits<std::uint32_t>::max() ||
      fs.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw IoError("feature set too large for the RAW_F32 container");
  }
  std::ofstream out = open_out(path);
  out.write("ILPC", 4);
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(fs.rows()),
                                   static_cast<std::uint32_t>(fs.dim()),
                                   fs.labeled() ? 1u : 0u};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  const Matrix& x = fs.data();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const float v = static_cast<float>(x(i, j));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (fs.labeled()) {
    for (int y : *fs.labels()) {
      const std::int32_t v = y;
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!out) throw IoError("write failed for " + describe(path));
}

}  // namespace

FeatureSet load_features(const std::filesystem::path& path, FileFormat format,
                         const LoadOptions& options) {
  if (!std::filesystem::exists(path)) throw IoError("no such file " + describe(path));
  try {
    switch (format) {
      case FileFormat::Csv: return load_csv(path, options);
      case FileFormat::Npy: return load_npy(path);
      case FileFormat::RawF32: return load_raw(path);
    }
  } catch (const IoError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw IoError(describe(path) + ": " + e.what());
  }
  throw IoError("unknown file format");
}

void save_features(const FeatureSet& fs, const std::filesystem::path& path, FileFormat format,
                   const SaveOptions& options) {
  switch (format) {
    case FileFormat::Csv: save_csv(fs, path); return;
    case FileFormat::Npy: save_npy(fs, path, options.npy_float32); return;
    case FileFormat::RawF32: save_raw(fs, path); return;
  }
}

}  // namespace ilpc
