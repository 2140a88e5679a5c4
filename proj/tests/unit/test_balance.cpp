#include "ilpc/balance.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace ilpc;

namespace {

BalanceConfig tight(int max_iter = 100000, double tol = 1e-12) {
  BalanceConfig c;
  c.sinkhorn_max_iter = max_iter;
  c.sinkhorn_tol = tol;
  return c;
}

double max_marginal_violation(const Matrix& x, const Vector& r, const Vector& c) {
  return std::max((x.rowwise().sum() - r).cwiseAbs().maxCoeff(),
                  (x.colwise().sum().transpose() - c).cwiseAbs().maxCoeff());
}

}  // namespace

TEST(ExtractUnlabeledBlock, SlicesAndClamps) {
  Matrix z(3, 2);
  z << 1, 0, 0, 1, 0.2, 0.8;
  const ScoreMatrix p = extract_unlabeled_block(z, 2);
  ASSERT_EQ(p.rows(), 1);
  EXPECT_EQ(p.p(0, 0), 0.2);
  EXPECT_EQ(p.p(0, 1), 0.8);
  z(2, 0) = -1e-9;
  EXPECT_EQ(extract_unlabeled_block(z, 2).p(0, 0), 0.0);
  EXPECT_EQ(extract_unlabeled_block(Matrix::Ones(10, 3), 4).rows(), 6);
  EXPECT_THROW(extract_unlabeled_block(z, 3), InvalidArgument);
}

TEST(PowerTransform, Examples) {
  ScoreMatrix p{Matrix::Constant(2, 2, 0.5)};
  EXPECT_EQ(power_transform(p, 1.0).p, p.p);
  EXPECT_DOUBLE_EQ(power_transform(p, 3.0).p(0, 0), 0.125);
  const Matrix r = ilpc::testing::random_matrix(30, 5, 2).cwiseAbs();
  const Labels before = predict_pseudo_labels(ScoreMatrix{r}).labels;
  for (double tau : {1.5, 3.0, 7.0})
    EXPECT_EQ(predict_pseudo_labels(power_transform(ScoreMatrix{r}, tau)).labels, before);
}

TEST(ConfidenceWeights, Policies) {
  Matrix z(4, 4);
  z << 1, 0, 0, 0,                    // support row, ignored
      0.25, 0.25, 0.25, 0.25,         // maximum entropy
      0, 3, 0, 0,                     // one-hot
      0, 0, 0, 0;                     // all zero
  const Vector w = confidence_weights(z, 1, WeightPolicy::Entropy);
  EXPECT_NEAR(w(0), 0.0, 1e-15);
  EXPECT_NEAR(w(1), 1.0, 1e-15);
  EXPECT_EQ(w(2), 0.0);
  EXPECT_EQ(confidence_weights(z, 1, WeightPolicy::Uniform), Vector::Ones(3));
  const Vector r = confidence_weights(ilpc::testing::random_matrix(20, 5, 1).cwiseAbs(), 0,
                                      WeightPolicy::Entropy);
  EXPECT_GE(r.minCoeff(), 0.0);
  EXPECT_LE(r.maxCoeff(), 1.0);
}

TEST(Sinkhorn, IdentityIsAlreadyBalanced) {
  const SinkhornResult r =
      sinkhorn(ScoreMatrix{Matrix::Identity(2, 2)}, Vector::Ones(2), Vector::Ones(2), BalanceConfig{});
  EXPECT_EQ(r.x.p, Matrix(Matrix::Identity(2, 2)));
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.converged);
}

TEST(Sinkhorn, TwoByTwoMatchesLongRunOracle) {
  Matrix p(2, 2);
  p << 1, 2, 3, 4;
  // Oracle: 10000 sweeps of the same alternating rescaling, written out here.
  Matrix o = p;
  for (int it = 0; it < 10000; ++it) {
    for (int i = 0; i < 2; ++i) o.row(i) /= o.row(i).sum();
    for (int j = 0; j < 2; ++j) o.col(j) /= o.col(j).sum();
  }
  const SinkhornResult r = sinkhorn(ScoreMatrix{p}, Vector::Ones(2), Vector::Ones(2), tight());
  EXPECT_LT((r.x.p - o).cwiseAbs().maxCoeff(), 1e-8);
  // Closed form for 2x2 doubly stochastic diagonal scaling: x11 = 1 / (1 + sqrt(p12 p21 / (p11 p22))).
  const double x11 = 1.0 / (1.0 + std::sqrt(2.0 * 3.0 / (1.0 * 4.0)));
  EXPECT_NEAR(r.x.p(0, 0), x11, 1e-10);
  EXPECT_NEAR(r.x.p(1, 1), x11, 1e-10);
}

TEST(Sinkhorn, DiagonalEquivalenceAndZeroPattern) {
  Matrix p = ilpc::testing::random_matrix(12, 4, 3).cwiseAbs();
  p(0, 1) = 0.0;
  p(5, 3) = 0.0;
  const Vector r = Vector::Ones(12);
  const Vector c = Vector::Constant(4, 3.0);
  const SinkhornResult s = sinkhorn(ScoreMatrix{p}, r, c, tight());
  EXPECT_TRUE(((s.x.p.array() == 0.0) == (p.array() == 0.0)).all());
  const Matrix rebuilt = s.row_scale.asDiagonal() * p * s.col_scale.asDiagonal();
  EXPECT_LT((rebuilt - s.x.p).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(max_marginal_violation(s.x.p, r, c), 1e-12);
}

TEST(Sinkhorn, ScaleInvariance) {
  const Matrix p = ilpc::testing::random_matrix(15, 5, 4).cwiseAbs();
  const Vector r = Vector::Ones(15);
  const Vector c = Vector::Constant(5, 3.0);
  const Matrix a = sinkhorn(ScoreMatrix{p}, r, c, tight()).x.p;
  const Matrix b = sinkhorn(ScoreMatrix{Matrix(37.5 * p)}, r, c, tight()).x.p;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Sinkhorn, DoublyBalancedSquareInputUnchanged) {
  Matrix p(3, 3);
  p << 0.2, 0.5, 0.3, 0.5, 0.3, 0.2, 0.3, 0.2, 0.5;
  const SinkhornResult s = sinkhorn(ScoreMatrix{p}, Vector::Ones(3), Vector::Ones(3), tight());
  EXPECT_LT((s.x.p - p).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sinkhorn, ZeroRowIsFlooredAndFlagged) {
  Matrix p(3, 2);
  p << 1, 2, 0, 0, 3, 1;
  const SinkhornResult s = sinkhorn(ScoreMatrix{p}, Vector::Ones(3), Vector::Constant(2, 1.5), tight());
  EXPECT_TRUE(s.floored_zero_rows);
  EXPECT_LE(max_marginal_violation(s.x.p, Vector::Ones(3), Vector::Constant(2, 1.5)), 1e-12);
}

TEST(Sinkhorn, ZeroColumnWithPositiveTargetIsInfeasible) {
  Matrix p(2, 2);
  p << 1, 0, 1, 0;
  EXPECT_THROW(sinkhorn(ScoreMatrix{p}, Vector::Ones(2), Vector::Ones(2), BalanceConfig{}),
               SinkhornError);
}

TEST(Sinkhorn, BudgetExhaustionReturnsStateWithViolation) {
  Matrix p(2, 2);
  p << 1, 1e-9, 1e-9, 1;  // nearly diagonal, far-off targets converge slowly
  Vector r(2);
  r << 1.0, 1.0;
  Vector c(2);
  c << 1.9, 0.1;
  const SinkhornResult s = sinkhorn(ScoreMatrix{p}, r, c, tight(3, 1e-6));
  EXPECT_FALSE(s.converged);
  EXPECT_EQ(s.iterations, 3);
  EXPECT_NEAR(s.max_violation, max_marginal_violation(s.x.p, r, c), 1e-15);
  EXPECT_GT(s.max_violation, 1e-6);
}

TEST(Sinkhorn, RejectsBadInputs) {
  EXPECT_THROW(sinkhorn(ScoreMatrix{Matrix::Ones(2, 2)}, Vector::Ones(2), Vector::Constant(2, 2.0),
                        BalanceConfig{}),
               InvalidArgument);
  EXPECT_THROW(sinkhorn(ScoreMatrix{Matrix::Constant(2, 2, -1.0)}, Vector::Ones(2), Vector::Ones(2),
                        BalanceConfig{}),
               InvalidArgument);
}

TEST(PredictPseudoLabels, ArgmaxTiesAndZeroRows) {
  Matrix p(3, 3);
  p << 0.1, 0.7, 0.2, 0.5, 0.5, 0, 0, 0, 0;
  const PseudoLabels pl = predict_pseudo_labels(ScoreMatrix{p});
  EXPECT_EQ(pl.labels, (Labels{1, 0, 0}));
  EXPECT_NEAR(pl.confidence(0), 0.7, 1e-15);
  EXPECT_NEAR(pl.confidence(1), 0.5, 1e-15);
  EXPECT_EQ(pl.confidence(2), 0.0);
  EXPECT_TRUE(pl.zero_row[2]);
  EXPECT_FALSE(pl.zero_row[0]);
}

TEST(PredictPseudoLabels, InvariantToPositiveRowRescaling) {
  const Matrix p = ilpc::testing::random_matrix(20, 4, 9).cwiseAbs();
  const Vector s = ilpc::testing::random_matrix(20, 1, 10).cwiseAbs().col(0).array() + 0.1;
  EXPECT_EQ(predict_pseudo_labels(ScoreMatrix{p}).labels,
            predict_pseudo_labels(ScoreMatrix{Matrix(s.asDiagonal() * p)}).labels);
}

TEST(BalanceAndPredict, DisabledIsArgmaxOfPoweredScores) {
  const Matrix z = ilpc::testing::random_matrix(30, 5, 5).cwiseAbs();
  BalanceConfig cfg;
  cfg.enabled = false;
  const BalancedPrediction bp = balance_and_predict(z, 5, cfg);
  const ScoreMatrix powered = power_transform(extract_unlabeled_block(z, 5), 3.0);
  EXPECT_EQ(bp.scores.p, powered.p);
  EXPECT_EQ(bp.labels, predict_pseudo_labels(powered).labels);
}

TEST(BalanceAndPredict, UniformPriorColumnsSumToFifteen) {
  const Matrix z = ilpc::testing::random_matrix(80, 5, 6).cwiseAbs();
  const BalancedPrediction bp = balance_and_predict(z, 5, BalanceConfig{});
  ASSERT_EQ(bp.scores.rows(), 75);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(bp.scores.p.col(j).sum(), 15.0, 1e-6);
  for (int i = 0; i < 75; ++i) EXPECT_NEAR(bp.scores.p.row(i).sum(), 1.0, 1e-6);
  EXPECT_TRUE(bp.converged);
}

TEST(BalanceAndPredict, GivenPriorColumnTargets) {
  Vector u(5);
  u << 1.0 / 3, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6;
  const Vector q = column_targets(Vector::Ones(60), 5, ClassPrior::given(u));
  const double expected[5] = {20, 10, 10, 10, 10};
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(q(j), expected[j], 1e-12);
  EXPECT_NEAR(column_targets(Vector::Ones(75), 5, ClassPrior::uniform())(2), 15.0, 1e-12);

  const Matrix z = ilpc::testing::random_matrix(65, 5, 7).cwiseAbs();
  BalanceConfig cfg;
  cfg.class_prior = ClassPrior::given(u);
  const BalancedPrediction bp = balance_and_predict(z, 5, cfg);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(bp.scores.p.col(j).sum(), expected[j], 1e-6);
}

TEST(BalanceConfig, Validation) {
  BalanceConfig c;
  c.tau = 0.5;
  EXPECT_THROW(c.validate(3), InvalidArgument);
  c.tau = 3;
  Vector u(3);
  u << 0.5, 0.5, 0.5;
  c.class_prior = ClassPrior::given(u);
  EXPECT_THROW(c.validate(3), InvalidArgument);
  u << 0.5, 0.6, -0.1;
  c.class_prior = ClassPrior::given(u);
  EXPECT_THROW(c.validate(3), InvalidArgument);
  u << 0.5, 0.25, 0.25;
  c.class_prior = ClassPrior::given(u);
  EXPECT_NO_THROW(c.validate(3));
  EXPECT_THROW(c.validate(4), InvalidArgument);
}
