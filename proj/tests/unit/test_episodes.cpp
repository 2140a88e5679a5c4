#include "ilpc/episodes.hpp"
#include "ilpc/error.hpp"
#include "ilpc/hidden_access.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace ilpc;

namespace {

FeatureSet five_by_hundred() {
  BlobSpec b;
  b.class_count = 5;
  b.dim = 4;
  b.examples_per_class = 100;
  b.seed = 1;
  return generate_blobs(b);
}

std::vector<int> per_class_counts(const Labels& y, int n) {
  std::vector<int> c(static_cast<std::size_t>(n), 0);
  for (int v : y) ++c[static_cast<std::size_t>(v)];
  return c;
}

}  // namespace

TEST(QueryCount, Parses) {
  EXPECT_EQ(parse_query_count("15").lo, 15);
  EXPECT_FALSE(parse_query_count("15").is_range());
  const QueryCount r = parse_query_count("10:20");
  EXPECT_EQ(r.lo, 10);
  EXPECT_EQ(r.hi, 20);
  EXPECT_THROW(parse_query_count("ten"), InvalidArgument);
  EXPECT_THROW(parse_query_count("10:"), InvalidArgument);
}

TEST(EpisodeSpec, Validation) {
  EpisodeSpec s;
  s.n_way = 1;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.n_way = 5;
  s.k_shot = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.k_shot = 1;
  s.queries = QueryCount::range(0, 5);
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.queries = QueryCount::range(6, 5);
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(SampleEpisode, OneShotFifteenQueries) {
  EpisodeSpec s;
  s.seed = 3;
  const Episode ep = sample_episode(five_by_hundred(), s);
  EXPECT_EQ(ep.support_count(), 5u);
  EXPECT_EQ(ep.query_count(), 75u);
  EXPECT_EQ(ep.unlabeled_count(), 0u);
  EXPECT_EQ(per_class_counts(ep.support_y, 5), std::vector<int>(5, 1));
  EXPECT_EQ(per_class_counts(HiddenLabelAccess::reveal(ep.query_y), 5), std::vector<int>(5, 15));
}

TEST(SampleEpisode, FiveShotWithUnlabeled) {
  EpisodeSpec s;
  s.k_shot = 5;
  s.unlabeled_per_class = 50;
  const Episode ep = sample_episode(five_by_hundred(), s);
  EXPECT_EQ(ep.support_count(), 25u);
  EXPECT_EQ(ep.query_count(), 75u);
  EXPECT_EQ(ep.unlabeled_count(), 250u);
  EXPECT_EQ(per_class_counts(ep.support_y, 5), std::vector<int>(5, 5));
}

TEST(SampleEpisode, SplitsAreDisjointAndRowsMatchSource) {
  const FeatureSet fs = five_by_hundred();
  EpisodeSpec s;
  s.k_shot = 2;
  s.unlabeled_per_class = 10;
  s.seed = 9;
  const Episode ep = sample_episode(fs, s);
  std::set<std::size_t> seen;
  for (const IndexList* rows : {&ep.support_rows, &ep.query_rows, &ep.unlabeled_rows})
    for (std::size_t r : *rows) EXPECT_TRUE(seen.insert(r).second) << "row " << r << " reused";
  for (std::size_t i = 0; i < ep.query_rows.size(); ++i) {
    EXPECT_EQ(ep.query_x.row(static_cast<Eigen::Index>(i)),
              fs.data().row(static_cast<Eigen::Index>(ep.query_rows[i])));
    const int source = (*fs.labels())[ep.query_rows[i]];
    EXPECT_EQ(ep.class_map[static_cast<std::size_t>(HiddenLabelAccess::reveal(ep.query_y)[i])], source);
  }
}

TEST(SampleEpisode, RangeCountsWithinBoundsAndReproducible) {
  EpisodeSpec s;
  s.queries = QueryCount::range(10, 20);
  s.seed = 17;
  const FeatureSet fs = five_by_hundred();
  const Episode a = sample_episode(fs, s);
  const Episode b = sample_episode(fs, s);
  for (int c : per_class_counts(HiddenLabelAccess::reveal(a.query_y), 5)) {
    EXPECT_GE(c, 10);
    EXPECT_LE(c, 20);
  }
  EXPECT_EQ(a.query_rows, b.query_rows);
  EXPECT_EQ(a.support_rows, b.support_rows);
  EXPECT_EQ(HiddenLabelAccess::reveal(a.query_y), HiddenLabelAccess::reveal(b.query_y));
}

TEST(SampleEpisode, InsufficientExamplesNamesClass) {
  EpisodeSpec s;
  s.queries = QueryCount::fixed(100);
  try {
    sample_episode(five_by_hundred(), s);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient examples in class"), std::string::npos);
  }
}

TEST(SampleEpisode, UnlabeledFeatureSetRejected) {
  EXPECT_THROW(sample_episode(FeatureSet(Matrix::Ones(10, 2), std::nullopt), EpisodeSpec{}),
               InvalidArgument);
}

TEST(SampleEpisode, ClassFrequencyIsUniform) {
  BlobSpec b;
  b.class_count = 10;
  b.dim = 2;
  b.examples_per_class = 20;
  const FeatureSet fs = generate_blobs(b);
  std::vector<int> hits(10, 0);
  const int episodes = 1000;
  for (int e = 0; e < episodes; ++e) {
    EpisodeSpec s;
    s.queries = QueryCount::fixed(2);
    s.seed = static_cast<std::uint64_t>(e);
    for (int c : sample_episode(fs, s).class_map) ++hits[static_cast<std::size_t>(c)];
  }
  const double p = 0.5;  // 5 of 10 classes per episode
  const double mean = episodes * p;
  const double sd = std::sqrt(episodes * p * (1 - p));
  for (int h : hits) EXPECT_LE(std::abs(h - mean), 3 * sd);
}

TEST(TruePrior, BalancedAndUnbalanced) {
  EpisodeSpec s;
  const Episode ep = sample_episode(five_by_hundred(), s);
  const Vector u = true_prior(ep);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(u(j), 0.2, 1e-15);

  Episode manual;
  manual.n_way = 5;
  Labels y;
  const int counts[5] = {10, 20, 10, 10, 10};
  for (int c = 0; c < 5; ++c) y.insert(y.end(), static_cast<std::size_t>(counts[c]), c);
  manual.query_y = HiddenLabels(y);
  const Vector v = true_prior(manual);
  EXPECT_NEAR(v(0), 1.0 / 6, 1e-15);
  EXPECT_NEAR(v(1), 1.0 / 3, 1e-15);
  EXPECT_NEAR(v.sum(), 1.0, 1e-12);
}

TEST(TruePrior, SumsToOneForRandomEpisodes) {
  const FeatureSet fs = five_by_hundred();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EpisodeSpec s;
    s.queries = QueryCount::range(1, 19);
    s.seed = seed;
    EXPECT_NEAR(true_prior(sample_episode(fs, s)).sum(), 1.0, 1e-12);
  }
}

TEST(SaveEpisode, WritesOneFilePerSplit) {
  ilpc::testing::TempDir dir;
  EpisodeSpec s;
  s.unlabeled_per_class = 3;
  const Episode ep = sample_episode(five_by_hundred(), s);
  save_episode(ep, dir / "ep");
  const FeatureSet q = load_features(dir / "ep.query.f32", FileFormat::RawF32);
  EXPECT_EQ(q.rows(), 75u);
  EXPECT_EQ(*q.labels(), HiddenLabelAccess::reveal(ep.query_y));
  EXPECT_EQ(load_features(dir / "ep.support.f32", FileFormat::RawF32).rows(), 5u);
  EXPECT_EQ(load_features(dir / "ep.unlabeled.f32", FileFormat::RawF32).rows(), 15u);
}
