#include "kcf/regression.hpp"
#include "kcf/systems.hpp"

#include <gtest/gtest.h>

using namespace kcf;

namespace {

SnapshotDataset scalar_linear_data(Index n, std::uint64_t seed) {
  auto sys = SystemDescription::named("scalar-linear").build();
  sys.state_domain = Box::symmetric(1, 2.0);
  return sample_snapshots(sys, n, seed);
}

SnapshotDataset random_dataset(Index n, Index m, Index count, Rng& rng) {
  return SnapshotDataset(gaussian_matrix(n, count, rng), gaussian_matrix(n, count, rng), gaussian_matrix(m, count, rng));
}

}  // namespace

TEST(Pinv, Scalar) {
  Matrix m = Matrix::Constant(1, 1, 2.0);
  EXPECT_DOUBLE_EQ(pinv_full_row_rank(m)(0, 0), 0.5);
}

TEST(Pinv, UnitRow) {
  Matrix m(1, 3);
  m << 1, 0, 0;
  Matrix p = pinv_full_row_rank(m);
  ASSERT_EQ(p.rows(), 3);
  ASSERT_EQ(p.cols(), 1);
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(p(2, 0), 0.0);
}

TEST(Pinv, RightInverseOfGaussian) {
  Rng rng(5);
  Matrix m = gaussian_matrix(3, 8, rng);
  EXPECT_LE((m * pinv_full_row_rank(m) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pinv, MatchesSvdPseudoinverse) {
  Rng rng(6);
  Matrix m = gaussian_matrix(4, 9, rng);
  Matrix svd_pinv = m.completeOrthogonalDecomposition().pseudoInverse();
  EXPECT_LE((pinv_full_row_rank(m) - svd_pinv).norm(), 1e-12);
}

TEST(Pinv, Identities) {
  Rng rng(7);
  Matrix l = gaussian_matrix(5, 20, rng);
  Matrix p = pinv_full_row_rank(l);
  Matrix proj = p * l;
  EXPECT_LE((l * proj - l).norm(), 1e-10);
  EXPECT_LE((proj - proj.transpose()).norm(), 1e-10);
}

TEST(Pinv, RankDeficientReportsCondition) {
  Matrix m(2, 4);
  m << 1, 2, 3, 4, 2, 4, 6, 8;
  try {
    pinv_full_row_rank(m, "M");
    FAIL() << "expected RankError";
  } catch (const RankError& e) {
    EXPECT_EQ(e.matrix(), "M");
    EXPECT_GT(e.condition(), kGramConditionLimit);
  }
}

TEST(Pinv, TooFewColumns) { EXPECT_THROW(pinv_full_row_rank(Matrix::Identity(3, 2)), RankError); }

TEST(Edmd, IdentityTransition) {
  Rng rng(8);
  auto basis = make_bilinear(polynomial_dictionary(2, 2), 1);
  Matrix x = gaussian_matrix(2, 50, rng);
  SnapshotDataset d(x, x, gaussian_matrix(1, 50, rng));
  Matrix a = edmd_full(basis, d);
  EXPECT_LE((a - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Edmd, ScalarLinearTopRow) {
  auto basis = make_lifted_linear(identity_dictionary(1), 1);
  auto d = scalar_linear_data(200, 1);
  Matrix a = edmd_full(basis, d);
  EXPECT_NEAR(a(0, 0), 0.5, 1e-10);
  EXPECT_NEAR(a(0, 1), 0.0, 1e-10);
  EXPECT_NEAR(a(0, 2), 1.0, 1e-10);
}

TEST(Edmd, TooFewSamples) {
  Rng rng(9);
  auto basis = make_bilinear(polynomial_dictionary(2, 2), 1);
  EXPECT_THROW(edmd_full(basis, random_dataset(2, 1, 9, rng)), RankError);
}

TEST(FitTopBlock, ScalarLinearCoefficients) {
  auto basis = make_lifted_linear(identity_dictionary(1), 1);
  auto model = fit_top_block(basis, scalar_linear_data(200, 2));
  EXPECT_NEAR(model.a11(0, 0), 0.5, 1e-10);
  EXPECT_NEAR(model.a11(0, 1), 0.0, 1e-10);
  EXPECT_NEAR(model.a11(1, 0), 0.0, 1e-10);
  EXPECT_NEAR(model.a11(1, 1), 1.0, 1e-10);
  EXPECT_NEAR(model.a12(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(model.a12(1, 0), 0.0, 1e-10);
  EXPECT_LE(model.diagnostics.residual_fro, 1e-10);
  EXPECT_EQ(model.diagnostics.samples, 200);
}

TEST(FitTopBlock, IdentityTransition) {
  Rng rng(10);
  auto basis = make_bilinear(polynomial_dictionary(2, 1), 2);
  Matrix x = gaussian_matrix(2, 40, rng);
  auto model = fit_top_block(basis, SnapshotDataset(x, x, gaussian_matrix(2, 40, rng)));
  EXPECT_LE((model.a11 - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(model.a12.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitTopBlock, EqualsEdmdTopRows) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto basis = make_bilinear(polynomial_dictionary(2, 2), 1);
    auto d = random_dataset(2, 1, 60, rng);
    Matrix full = edmd_full(basis, d);
    auto model = fit_top_block(basis, d);
    const Matrix diff = full.topRows(basis.n_h()) - model.top_block();
    EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, full.cwiseAbs().maxCoeff()));
  }
}

TEST(FitTopBlock, ResidualOptimality) {
  Rng rng(12);
  auto basis = make_bilinear(polynomial_dictionary(2, 2), 1);
  auto d = random_dataset(2, 1, 80, rng);
  auto model = fit_top_block(basis, d);
  const Matrix j = basis.state_dictionary()(d.x_plus);
  const Matrix l = basis(d.x, d.u);
  const double best = (j - model.top_block() * l).norm();
  for (int k = 0; k < 50; ++k) {
    Matrix dp = gaussian_matrix(model.top_block().rows(), model.top_block().cols(), rng);
    dp *= 1e-3 / dp.norm();
    EXPECT_GE((j - (model.top_block() + dp) * l).norm(), best);
  }
}

TEST(FitTopBlock, DimensionMismatch) {
  Rng rng(13);
  auto basis = make_bilinear(identity_dictionary(3), 1);
  EXPECT_THROW(fit_top_block(basis, random_dataset(2, 1, 20, rng)), DimensionError);
}

TEST(ForwardBackward, RawMatrices) {
  Matrix j(2, 3), l(1, 3);
  j << 1, 0, 0, 0, 1, 0;
  l << 1, 0, 0;
  auto f = forward_backward(j, l);
  ASSERT_EQ(f.a_f.rows(), 2);
  ASSERT_EQ(f.a_f.cols(), 1);
  EXPECT_DOUBLE_EQ(f.a_f(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.a_f(1, 0), 0.0);
  ASSERT_EQ(f.a_b.rows(), 1);
  ASSERT_EQ(f.a_b.cols(), 2);
  EXPECT_DOUBLE_EQ(f.a_b(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.a_b(0, 1), 0.0);
}

TEST(ForwardBackward, ContainedRowSpaceGivesIdentity) {
  Rng rng(14);
  Matrix l = gaussian_matrix(5, 40, rng);
  Matrix j = gaussian_matrix(3, 5, rng) * l;
  auto fb = forward_backward(j, l);
  EXPECT_LE((fb.a_f * fb.a_b - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ForwardBackward, AfMatchesTopBlock) {
  Rng rng(15);
  auto basis = make_bilinear(polynomial_dictionary(2, 2), 1);
  auto d = random_dataset(2, 1, 50, rng);
  EXPECT_LE((forward_backward(basis, d).a_f - fit_top_block(basis, d).top_block()).norm(), 1e-12);
}

TEST(ForwardBackward, IdenticalColumnsReportEachMatrix) {
  Matrix l = Matrix::Ones(3, 10);
  Rng rng(16);
  try {
    forward_backward(gaussian_matrix(2, 10, rng), l);
    FAIL();
  } catch (const RankError& e) {
    EXPECT_EQ(e.matrix(), "Psi(X,U)");
  }
  try {
    forward_backward(Matrix::Ones(2, 10), gaussian_matrix(3, 10, rng));
    FAIL();
  } catch (const RankError& e) {
    EXPECT_EQ(e.matrix(), "H(X+)");
  }
}

TEST(SnapshotDataset, ValidatesColumns) {
  EXPECT_THROW(SnapshotDataset(Matrix::Zero(2, 3), Matrix::Zero(2, 4), Matrix::Zero(1, 3)), DimensionError);
  EXPECT_THROW(SnapshotDataset(Matrix::Zero(2, 0), Matrix::Zero(2, 0), Matrix::Zero(1, 0)), DimensionError);
}

TEST(SnapshotDataset, Splits) {
  Rng rng(17);
  auto d = random_dataset(1, 1, 10, rng);
  for (int i = 0; i < 10; ++i) d.train_mask[static_cast<std::size_t>(i)] = i < 7;
  EXPECT_EQ(d.train_split().size(), 7);
  EXPECT_EQ(d.test_split().size(), 3);
  EXPECT_EQ(d.test_split().x(0, 0), d.x(0, 7));
}
