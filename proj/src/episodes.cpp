#include "ilpc/episodes.hpp"

#include "ilpc/error.hpp"
#include "ilpc/hidden_access.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace ilpc {

QueryCount parse_query_count(const std::string& text) {
  auto parse_int = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) {
      throw InvalidArgument("bad query count '" + text + "'");
    }
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) return QueryCount::fixed(parse_int(text));
  return QueryCount::range(parse_int(text.substr(0, colon)), parse_int(text.substr(colon + 1)));
}

void EpisodeSpec::validate() const {
  if (n_way < 2) throw InvalidArgument("n_way must be >= 2");
  if (k_shot < 1) throw InvalidArgument("k_shot must be >= 1");
  if (queries.lo < 0 || queries.hi < queries.lo) {
    throw InvalidArgument("query count range must satisfy 0 <= lo <= hi");
  }
  if (queries.is_range() && queries.lo < 1) {
    throw InvalidArgument("query count range requires lo >= 1");
  }
  if (unlabeled_per_class < 0) throw InvalidArgument("unlabeled_per_class must be >= 0");
}

namespace {

Matrix gather_rows(const Matrix& data, const IndexList& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

Episode sample_episode(const FeatureSet& fs, const EpisodeSpec& spec) {
  spec.validate();
  if (!fs.labeled()) throw InvalidArgument("episode sampling needs a labeled feature set");
  const Labels& labels = *fs.labels();
  const int class_count = fs.class_count();
  if (class_count < spec.n_way) {
    std::ostringstream msg;
    msg << "feature set has " << class_count << " classes, episode needs " << spec.n_way;
    throw InvalidArgument(msg.str());
  }

  std::vector<IndexList> by_class(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<int> classes(static_cast<std::size_t>(class_count));
  std::iota(classes.begin(), classes.end(), 0);
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(static_cast<std::size_t>(spec.n_way));

  std::uniform_int_distribution<int> query_draw(spec.queries.lo, spec.queries.hi);
  std::vector<int> query_counts(static_cast<std::size_t>(spec.n_way));
  for (int& q : query_counts) q = query_draw(rng);

  Episode ep;
  ep.n_way = spec.n_way;
  ep.k_shot = spec.k_shot;
  ep.class_map = classes;
  Labels query_y;
  Labels unlabeled_y;
  for (int c = 0; c < spec.n_way; ++c) {
    const int source = classes[static_cast<std::size_t>(c)];
    IndexList pool = by_class[static_cast<std::size_t>(source)];
    const int queries = query_counts[static_cast<std::size_t>(c)];
    const std::size_t needed =
        static_cast<std::size_t>(spec.k_shot + queries + spec.unlabeled_per_class);
    if (pool.size() < needed) {
      std::ostringstream msg;
      msg << "insufficient examples in class " << source << ": have " << pool.size()
          << ", need " << needed;
      throw InvalidArgument(msg.str());
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    auto it = pool.begin();
    for (int k = 0; k < spec.k_shot; ++k, ++it) {
      ep.support_rows.push_back(*it);
      ep.support_y.push_back(c);
    }
    for (int q = 0; q < queries; ++q, ++it) {
      ep.query_rows.push_back(*it);
      query_y.push_back(c);
    }
    for (int u = 0; u < spec.unlabeled_per_class; ++u, ++it) {
      ep.unlabeled_rows.push_back(*it);
      unlabeled_y.push_back(c);
    }
  }

  // Class-grouped order would leak structure into index-based tie-breaking.
  auto shuffle_paired = [&](IndexList& rows, Labels& ys) {
    std::vector<std::size_t> perm(rows.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    IndexList r2(rows.size());
    Labels y2(ys.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      r2[i] = rows[perm[i]];
      y2[i] = ys[perm[i]];
    }
    rows.swap(r2);
    ys.swap(y2);
  };
  shuffle_paired(ep.query_rows, query_y);
  shuffle_paired(ep.unlabeled_rows, unlabeled_y);

  ep.support_x = gather_rows(fs.data(), ep.support_rows);
  ep.query_x = gather_rows(fs.data(), ep.query_rows);
  ep.unlabeled_x = gather_rows(fs.data(), ep.unlabeled_rows);
  ep.query_y = HiddenLabels(std::move(query_y));
  ep.unlabeled_y = HiddenLabels(std::move(unlabeled_y));
  return ep;
}

Vector true_prior(const Episode& ep) {
  const Labels& y = HiddenLabelAccess::reveal(ep.query_y);
  Vector prior = Vector::Zero(ep.n_way);
  if (y.empty()) return prior;
  for (int label : y) prior(label) += 1.0;
  return prior / static_cast<double>(y.size());
}

void save_episode(const Episode& ep, const std::filesystem::path& stem) {
  auto with_suffix = [&](const char* suffix) {
    std::filesystem::path p = stem;
    p += suffix;
    return p;
  };
  save_features(FeatureSet(ep.support_x, ep.support_y, ep.n_way, "support"),
                with_suffix(".support.f32"), FileFormat::RawF32);
  if (ep.query_count() > 0) {
    save_features(FeatureSet(ep.query_x, HiddenLabelAccess::reveal(ep.query_y), ep.n_way, "query"),
                  with_suffix(".query.f32"), FileFormat::RawF32);
  }
  if (ep.unlabeled_count() > 0) {
    save_features(FeatureSet(ep.unlabeled_x, HiddenLabelAccess::reveal(ep.unlabeled_y), ep.n_way,
                             "unlabeled"),
                  with_suffix(".unlabeled.f32"), FileFormat::RawF32);
  }
}

}  // namespace ilpc
