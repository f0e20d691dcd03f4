#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ctxtest;

namespace {

// Random 2-D points separated by the line through the origin with normal (1, 0.5).
void separable(std::mt19937_64& rng, int n, Matrix& X, std::vector<int>& y) {
  X.resize(2, n);
  y.assign(static_cast<std::size_t>(n), 0);
  Vector normal(2);
  normal << 1, 0.5;
  for (int p = 0; p < n; ++p) {
    Vector x;
    do {
      x = random_matrix(rng, 2, 1) * 3.0;
    } while (std::abs(normal.dot(x)) < 0.5);
    X.col(p) = x;
    y[static_cast<std::size_t>(p)] = normal.dot(x) > 0 ? 1 : -1;
  }
  y[0] = 1;
  X.col(0) << 3, 0;
  y[1] = -1;
  X.col(1) << -3, 0;
}

}  // namespace

TEST(SvmDual, SymmetricPairGivesMaxMargin) {
  Matrix X(2, 2);
  X << 1, -1, 0, 0;
  const std::vector<int> y{1, -1};
  const auto m = train_dual(X, y, 1e4);
  EXPECT_NEAR(m.w(0), 1.0, 1e-4);
  EXPECT_NEAR(m.w(1), 0.0, 1e-4);
  EXPECT_LE(binary_primal(m.w, X, y, 1e4) - 0.5 * m.w.squaredNorm(), 1e-6);
}

TEST(SvmDual, SeparableSetReachesZeroHinge) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix X;
    std::vector<int> y;
    separable(rng, 40, X, y);
    const auto m = train_dual(X, y, 100.0);
    EXPECT_LE(m.gap(), 1e-6);
    for (Index p = 0; p < X.cols(); ++p) EXPECT_GE(y[static_cast<std::size_t>(p)] * m.w.dot(X.col(p)), 1.0 - 1e-6);
    EXPECT_LE(m.primal - 0.5 * m.w.squaredNorm(), 1e-6);
  }
}

TEST(SvmDual, DuplicatedDataWithHalvedCostGivesSameWeights) {
  std::mt19937_64 rng(22);
  const Matrix X = random_matrix(rng, 3, 30);
  std::vector<int> y(30);
  for (std::size_t p = 0; p < y.size(); ++p) y[p] = p % 3 == 0 ? 1 : -1;
  Matrix X2(3, 60);
  X2 << X, X;
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  const auto a = train_dual(X, y, 1.0);
  const auto b = train_dual(X2, y2, 0.5);
  EXPECT_LE((a.w - b.w).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SvmDual, ReturnedWeightsAreThePrimalOfTheDuals) {
  std::mt19937_64 rng(23);
  const Matrix X = random_matrix(rng, 4, 25);
  std::vector<int> y(25);
  for (std::size_t p = 0; p < y.size(); ++p) y[p] = uniform01(rng) < 0.4 ? 1 : -1;
  y[0] = 1;
  y[1] = -1;
  const auto m = train_dual(X, y, 0.7);
  const Vector w = primal_from_dual(m.alpha, y, X);
  for (Index i = 0; i < w.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(w(i)), std::bit_cast<std::uint64_t>(m.w(i)));
  EXPECT_LE(m.gap(), 1e-6 * std::max(1.0, m.primal));
  EXPECT_GE(m.alpha.minCoeff(), 0.0);
  EXPECT_LE(m.alpha.maxCoeff(), 0.7);
}

TEST(SvmDual, PrimalFromDualCases) {
  Matrix X(2, 1);
  X << 2, 3;
  const std::vector<int> y{1};
  EXPECT_TRUE(primal_from_dual(Vector::Zero(1), y, X) == Vector::Zero(2));
  EXPECT_TRUE(primal_from_dual(Vector::Ones(1), y, X) == X.col(0));
}

TEST(SvmDual, ErrorCases) {
  Matrix X = Matrix::Ones(2, 3);
  const std::vector<int> same{1, 1, 1};
  try {
    train_dual(X, same, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingleClass);
  }
  X(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<int> mixed{1, -1, 1};
  try {
    train_dual(X, mixed, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(HingeLoss, Cases) {
  std::mt19937_64 rng(24);
  const Matrix X = random_matrix(rng, 3, 5);
  IntMatrix labels(5, 2);
  labels << 1, -1, -1, 1, 1, 1, -1, -1, 1, -1;
  SvmModel m;
  m.W = Matrix::Zero(3, 2);
  m.costs = {0.5, 2.0};
  EXPECT_DOUBLE_EQ(hinge_loss(m, X, labels), 0.5 * 5 + 2.0 * 5);

  // Every margin >= 1: only the regularizer is left.
  Matrix Xs(1, 2);
  Xs << 2, -3;
  IntMatrix ls(2, 1);
  ls << 1, -1;
  SvmModel s;
  s.W = Matrix::Constant(1, 1, 1.0);
  s.costs = {4.0};
  EXPECT_DOUBLE_EQ(hinge_loss(s, Xs, ls), 0.5);

  // Hand case: w = (1, -1), C = 2, samples (0.5, 0) y=+1 and (1, 2) y=-1.
  // Margins 0.5 and 1 => hinge 0.5 + 0; objective 1 + 2 * 0.5 = 2.
  Matrix Xh(2, 2);
  Xh << 0.5, 1, 0, 2;
  SvmModel h;
  h.W = Matrix(2, 1);
  h.W << 1, -1;
  h.costs = {2.0};
  EXPECT_DOUBLE_EQ(hinge_loss(h, Xh, ls), 2.0);
}

TEST(LossGradient, ZeroWhenMarginsSatisfiedOrWeightsZero) {
  Matrix Xs(1, 2);
  Xs << 2, -3;
  IntMatrix ls(2, 1);
  ls << 1, -1;
  SvmModel s;
  s.W = Matrix::Constant(1, 1, 1.0);
  s.costs = {1.0};
  EXPECT_EQ(loss_gradient_wrt_maps(s, Xs, ls).cwiseAbs().maxCoeff(), 0.0);
  s.W.setZero();
  EXPECT_EQ(loss_gradient_wrt_maps(s, Xs, ls).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LossGradient, MatchesFiniteDifferencesAwayFromKink) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix X = random_matrix(rng, 4, 6);
    IntMatrix labels(6, 3);
    for (Index i = 0; i < labels.size(); ++i) labels.data()[i] = uniform01(rng) < 0.5 ? 1 : -1;
    SvmModel m;
    m.W = random_matrix(rng, 4, 3);
    m.costs = {0.5, 1.0, 2.0};
    bool clear = true;
    for (int k = 0; k < 3; ++k)
      for (Index p = 0; p < 6; ++p) clear = clear && std::abs(1 - labels(p, k) * m.W.col(k).dot(X.col(p))) > 0.05;
    if (!clear) continue;
    const Matrix G = loss_gradient_wrt_maps(m, X, labels);
    const double h = 1e-6;
    for (Index i = 0; i < X.size(); ++i) {
      Matrix up = X, down = X;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double numeric = (hinge_loss(m, up, labels) - hinge_loss(m, down, labels)) / (2 * h);
      EXPECT_NEAR(G.data()[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST(Ensemble, SingleFullMemberEqualsPlainSolver) {
  std::mt19937_64 rng(26);
  Matrix X;
  std::vector<int> y;
  separable(rng, 20, X, y);
  EnsembleConfig ens;
  ens.members = 1;
  ens.neg_ratio = 1e6;
  const auto e = train_ensemble(X, y, 1.0, ens);
  const auto plain = train_dual(X, y, 1.0);
  EXPECT_TRUE(e.members.front() == plain.w);
}

TEST(Ensemble, SubsetsAreSeededAndWellFormed) {
  std::mt19937_64 rng(27);
  const Matrix X = random_matrix(rng, 3, 60);
  std::vector<int> y(60, -1);
  for (int p = 0; p < 60; p += 10) y[static_cast<std::size_t>(p)] = 1;
  EnsembleConfig ens;
  ens.seed = 99;
  const auto a = train_ensemble(X, y, 1.0, ens);
  const auto b = train_ensemble(X, y, 1.0, ens);
  ASSERT_EQ(a.subsets.size(), 10u);
  EXPECT_EQ(a.subsets, b.subsets);
  for (std::size_t m = 0; m < a.members.size(); ++m) EXPECT_TRUE(a.members[m] == b.members[m]);
  for (const auto& s : a.subsets) {
    EXPECT_EQ(s.size(), 6u + 18u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::count_if(s.begin(), s.end(), [&](std::size_t i) { return y[i] > 0; }), 6);
  }
  ens.seed = 100;
  EXPECT_NE(train_ensemble(X, y, 1.0, ens).subsets, a.subsets);
}

TEST(Ensemble, RanksHeldOutPositiveAboveNegative) {
  std::mt19937_64 rng(28);
  Matrix X;
  std::vector<int> y;
  separable(rng, 60, X, y);
  EnsembleConfig ens;
  ens.neg_ratio = 1.0;
  const auto e = train_ensemble(X, y, 1.0, ens);
  Vector pos(2), neg(2);
  pos << 2, 1;
  neg << -2, -1;
  EXPECT_GT(e.score(pos), e.score(neg));
}

TEST(Ensemble, NoPositivesIsAnError) {
  const Matrix X = Matrix::Ones(2, 3);
  const std::vector<int> y{-1, -1, -1};
  try {
    train_ensemble(X, y, 1.0, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoPositives);
  }
}

TEST(SvmModelIo, RoundTripIsBitExact) {
  const auto dir = scratch("svm_io");
  std::mt19937_64 rng(29);
  SvmModel m;
  m.W = random_matrix(rng, 7, 3);
  m.costs = {0.1, 1.0 / 3.0, 2.5};
  SvmConfig cfg;
  cfg.max_passes = 123;
  cfg.tolerance = 1e-9;
  save_model(dir / "m.bin", m, cfg);
  SvmConfig back_cfg;
  const SvmModel back = load_model(dir / "m.bin", &back_cfg);
  EXPECT_TRUE(back.W == m.W);
  EXPECT_EQ(back.costs, m.costs);
  EXPECT_EQ(back_cfg.max_passes, 123);
  EXPECT_EQ(back_cfg.tolerance, 1e-9);

  EnsembleModel em;
  em.config.seed = 4;
  em.concepts.resize(2);
  for (auto& c : em.concepts)
    for (int i = 0; i < 3; ++i) c.members.push_back(random_matrix(rng, 7, 1));
  save_ensemble(dir / "e.bin", em);
  const EnsembleModel eb = load_ensemble(dir / "e.bin");
  ASSERT_EQ(eb.concepts.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(eb.concepts[k].members[i] == em.concepts[k].members[i]);
  EXPECT_EQ(eb.config.seed, 4u);
}
