#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ctxtest;

namespace {

// One-direction system on a 2-cell row with a single right edge, for hand cases.
NeighborhoodSystem single_edge() {
  NeighborhoodSystem h;
  h.grid = GridSpec(2, 1);
  h.radius = 1;
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = 1;
  h.masks = {m};
  return h;
}

// Direct evaluation of the gram recursion for one image, one stack.
Matrix gram_oracle(const Matrix& S, const ContextParams& p) {
  Matrix K = S;
  for (int t = 0; t < p.depth(); ++t) {
    Matrix next = S;
    for (int c = 0; c < p.directions(); ++c) next += p.gamma * p.P(0, t, c) * K * p.P(0, t, c).transpose();
    K = next;
  }
  return K;
}

}  // namespace

TEST(ForwardLayer, HandCase) {
  Matrix phi0(1, 2);
  phi0 << 1, 2;
  Matrix P(2, 2);
  P << 0, 1, 0, 0;
  const Matrix out = forward_layer(phi0, phi0, std::span<const Matrix>(&P, 1), 0.25);
  Matrix expect(2, 2);
  expect << 1, 2, 1, 0;
  EXPECT_TRUE(out == expect);
}

TEST(ForwardLayer, ZeroGammaAndZeroContextAgree) {
  std::mt19937_64 rng(1);
  const auto hood = build_neighborhood(GridSpec(3, 2), 1);
  const Matrix phi0 = random_matrix(rng, 4, 6);
  ContextParams a = make_context(hood, Variant::Layerwise, 2, 0.0);
  ContextParams b = make_context(hood, Variant::Layerwise, 2, 0.7);
  for (auto& layer : b.stacks[0].layers)
    for (auto& P : layer) P.setZero();
  const auto fa = forward(phi0, a).layers.top();
  const auto fb = forward(phi0, b).layers.top();
  EXPECT_TRUE(fa == fb);
  EXPECT_TRUE(fa.topRows(4) == phi0);
  EXPECT_EQ(fa.bottomRows(fa.rows() - 4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dimension, FollowsGeometricLaw) {
  EXPECT_EQ(map_dimension(16, 4, 3), 16 * 85);
  EXPECT_EQ(map_dimension(3, 4, 0), 3);
  EXPECT_EQ(map_dimension(2, 1, 4), 10);
  std::mt19937_64 rng(2);
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  const auto fr = forward(random_matrix(rng, 3, 4), make_context(hood, Variant::Layerwise, 3, 0.1));
  EXPECT_EQ(fr.pooled.size(), map_dimension(3, 4, 3));
}

TEST(Pooling, SingleCellAndGammaZero) {
  std::mt19937_64 rng(4);
  const auto hood1 = build_neighborhood(GridSpec(1, 1), 1);
  const Matrix cell = random_matrix(rng, 3, 1);
  const Vector pooled = forward(cell, make_context(hood1, Variant::Layerwise, 2, 0.5)).pooled;
  EXPECT_TRUE(pooled.head(3) == cell.col(0));
  EXPECT_EQ(pooled.tail(pooled.size() - 3).cwiseAbs().maxCoeff(), 0.0);

  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  const Matrix phi0 = random_matrix(rng, 3, 4);
  const Vector p1 = forward(phi0, make_context(hood, Variant::Layerwise, 1, 0.0)).pooled;
  EXPECT_TRUE(p1.head(3).isApprox(phi0.rowwise().sum()));
  EXPECT_EQ(p1.tail(12).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Pooling, MeanDividesByCells) {
  std::mt19937_64 rng(6);
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  const Matrix phi0 = random_matrix(rng, 3, 4);
  ContextParams p = make_context(hood, Variant::Layerwise, 2, 0.3);
  const Vector sum = forward(phi0, p).pooled;
  p.pooling = Pooling::Mean;
  EXPECT_TRUE(forward(phi0, p).pooled.isApprox(sum / 4.0, 1e-15));
}

TEST(Pooling, PooledInnerProductIsKernelDoubleSum) {
  std::mt19937_64 rng(8);
  const auto hood = build_neighborhood(GridSpec(3, 2), 1);
  for (int trial = 0; trial < 10; ++trial) {
    ContextParams p = random_context(hood, Variant::Layerwise, 3, 1, rng);
    const Matrix a = random_matrix(rng, 4, 6), b = random_matrix(rng, 4, 6);
    Matrix both(4, 12);
    both << a, b;
    const Matrix S = both.transpose() * both;
    std::vector<std::vector<Matrix>> layers;
    for (const auto& l : p.stacks[0].layers) {
      std::vector<Matrix> bd;
      for (const auto& P : l) bd.push_back(block_diagonal(P, 2));
      layers.push_back(bd);
    }
    p.gamma = 0.9 * max_gamma(S, layers.front());
    const Matrix K = gram_recursion(S, layers, p.gamma);
    const double brute = K.block(0, 6, 6, 6).sum();
    const double got = forward(a, p).pooled.dot(forward(b, p).pooled);
    EXPECT_NEAR(got, brute, 1e-10 * std::max(1.0, std::abs(brute)));
  }
}

TEST(GramRecursion, HandCase) {
  Matrix P(2, 2);
  P << 0, 1, 0, 0;
  const Matrix K = gram_recursion(Matrix::Identity(2, 2), {{P}}, 0.5);
  Matrix expect(2, 2);
  expect << 1.5, 0, 0, 1;
  EXPECT_TRUE(K == expect);
}

TEST(GramRecursion, ZeroGammaKeepsS) {
  std::mt19937_64 rng(9);
  const Matrix A = random_matrix(rng, 3, 4);
  const Matrix S = A.transpose() * A;
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  const auto P = normalized_neighborhood(hood);
  for (const auto& K : gram_iterates(S, {P, P, P}, 0.0)) EXPECT_TRUE(K == S);
}

TEST(GramRecursion, MatchesIndependentLoopOracle) {
  std::mt19937_64 rng(10);
  const auto hood = build_neighborhood(GridSpec(3, 3), 2);
  for (int trial = 0; trial < 20; ++trial) {
    ContextParams p = random_context(hood, Variant::Layerwise, 3, 1, rng);
    const Matrix phi0 = random_matrix(rng, 5, 9);
    const Matrix S = phi0.transpose() * phi0;
    p.gamma = 0.9 * max_gamma(S, p.stacks[0].layers.front());
    const Matrix got = gram_recursion(S, p.stacks[0].layers, p.gamma);
    const Matrix want = gram_oracle(S, p);
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12 * want.cwiseAbs().maxCoeff());
    const Matrix top = forward(phi0, p).layers.top();
    const Matrix viaMaps = top.transpose() * top;
    EXPECT_LE((viaMaps - want).cwiseAbs().maxCoeff(), 1e-10 * want.cwiseAbs().maxCoeff());
  }
}

TEST(RelativeError, Cases) {
  Matrix K = Matrix::Constant(2, 2, 3.0);
  EXPECT_EQ(relative_error(K, K), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(Matrix::Constant(1, 1, 3.0), Matrix::Constant(1, 1, 1.0)), 0.5);
  EXPECT_EQ(relative_error(Matrix::Zero(2, 2), Matrix::Zero(2, 2)), 0.0);
}

TEST(MaxGamma, Cases) {
  Matrix P(2, 2);
  P << 0, 1, 1, 0;
  EXPECT_DOUBLE_EQ(max_gamma(Matrix::Identity(2, 2), std::span<const Matrix>(&P, 1)), 1.0);
  const Matrix Z = Matrix::Zero(2, 2);
  EXPECT_TRUE(std::isinf(max_gamma(Matrix::Identity(2, 2), std::span<const Matrix>(&Z, 1))));
}

TEST(MaxGamma, RelativeErrorDecreasesOnRandomInstances) {
  std::mt19937_64 rng(12);
  const auto hood = build_neighborhood(GridSpec(3, 3), 1);
  const auto P = normalized_neighborhood(hood);
  for (int trial = 0; trial < 20; ++trial) {
    // Non-negative cell features, as histograms or rectified activations are.
    const Matrix A = random_matrix(rng, 4, 9).cwiseAbs();
    const Matrix S = A.transpose() * A;
    const double g = 0.9 * max_gamma(S, P);
    const auto Ks = gram_iterates(S, std::vector<std::vector<Matrix>>(6, P), g);
    for (int t = 2; t <= 5; ++t) EXPECT_LT(relative_error(Ks[t + 1], Ks[t]), relative_error(Ks[t], Ks[t - 1]));
  }
}

TEST(Backward, ZeroUpstreamAndZeroGamma) {
  std::mt19937_64 rng(13);
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  ContextParams p = random_context(hood, Variant::Layerwise, 2, 1, rng);
  p.gamma = 0.3;
  const Matrix phi0 = random_matrix(rng, 3, 4);
  const auto fr = forward(phi0, p);
  const auto g0 = backward(fr.layers, Vector::Zero(fr.pooled.size()), p);
  EXPECT_EQ(g0.squared_norm(), 0.0);
  p.gamma = 0;
  const auto fz = forward(phi0, p);
  const auto gz = backward(fz.layers, Vector::Ones(fz.pooled.size()), p);
  EXPECT_EQ(gz.squared_norm(), 0.0);
}

TEST(Backward, MatchesFiniteDifferencesOfLinearProbe) {
  std::mt19937_64 rng(14);
  const auto hood = build_neighborhood(GridSpec(3, 2), 1);
  for (Variant v : {Variant::Layerwise, Variant::Stationary}) {
    ContextParams p = random_context(hood, v, 3, 1, rng);
    p.gamma = 0.2;
    const Matrix phi0 = random_matrix(rng, 3, 6);
    const auto fr = forward(phi0, p);
    const Vector u = random_matrix(rng, fr.pooled.size(), 1);
    const auto g = backward(fr.layers, u, p);
    const double h = 1e-6;
    const int distinct = p.shared_layers ? 1 : p.depth();
    for (int t = 0; t < distinct; ++t)
      for (int c = 0; c < 4; ++c)
        for (Index i = 0; i < 36; ++i) {
          if (hood.masks[c].data()[i] == 0) continue;
          auto probe = [&](double delta) {
            ContextParams q = p;
            for (int tt = 0; tt < q.depth(); ++tt)
              if (tt == t || q.shared_layers) q.stacks[0].layers[tt][c].data()[i] += delta;
            return u.dot(forward(phi0, q).pooled);
          };
          const double numeric = (probe(h) - probe(-h)) / (2 * h);
          const double analytic = g.layers[t][c].data()[i];
          EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
        }
  }
}

TEST(Backward, GradientIsMaskedToSupport) {
  std::mt19937_64 rng(15);
  const auto hood = build_neighborhood(GridSpec(3, 3), 1);
  ContextParams p = random_context(hood, Variant::Layerwise, 2, 1, rng);
  p.gamma = 0.2;
  const Matrix phi0 = random_matrix(rng, 2, 9);
  const auto fr = forward(phi0, p);
  const auto g = backward(fr.layers, Vector::Ones(fr.pooled.size()), p);
  for (const auto& layer : g.layers)
    for (int c = 0; c < 4; ++c)
      for (Index i = 0; i < layer[c].size(); ++i) {
        if (hood.masks[c].data()[i] == 0) {
          EXPECT_EQ(layer[c].data()[i], 0.0);
        }
      }
}

TEST(Backward, RejectsMismatchedState) {
  std::mt19937_64 rng(16);
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  ContextParams p = make_context(hood, Variant::Layerwise, 2, 0.2);
  const auto fr = forward(random_matrix(rng, 3, 4), p);
  ContextParams deeper = make_context(hood, Variant::Layerwise, 3, 0.2);
  try {
    backward(fr.layers, fr.pooled, deeper);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StateMismatch);
  }
}

TEST(ContextExport, ZeroParamsGiveNoEdges) {
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  ContextParams p = make_context(hood, Variant::Layerwise, 1, 0.5);
  for (auto& P : p.stacks[0].layers[0]) P.setZero();
  std::ostringstream os;
  export_context(os, p);
  EXPECT_EQ(os.str().find("\nctx "), std::string::npos);
}

TEST(ContextExport, NormalizedTwoByTwoHasEightUnitEdges) {
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  std::ostringstream os;
  export_context(os, make_context(hood, Variant::Layerwise, 1, 0.5));
  std::istringstream is(os.str());
  std::string line;
  int edges = 0;
  while (std::getline(is, line)) {
    if (line.rfind("ctx ", 0) != 0) continue;
    ++edges;
    EXPECT_EQ(line.substr(line.rfind(' ') + 1), "1");
  }
  EXPECT_EQ(edges, 8);
}

TEST(ContextExport, RoundTripIsBitExact) {
  std::mt19937_64 rng(17);
  const auto hood = build_neighborhood(GridSpec(3, 2), 2);
  for (Variant v : {Variant::Layerwise, Variant::Stationary, Variant::Classwise}) {
    ContextParams p = random_context(hood, v, 3, 2, rng);
    p.gamma = 0.123456789012345678;
    perturb_context(p, 5, 0.3);
    std::ostringstream os;
    export_context(os, p);
    std::istringstream is(os.str());
    const ContextParams back = import_context(is);
    ASSERT_EQ(back.stack_count(), p.stack_count());
    EXPECT_EQ(back.variant, p.variant);
    EXPECT_EQ(back.shared_layers, p.shared_layers);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.gamma), std::bit_cast<std::uint64_t>(p.gamma));
    for (int s = 0; s < p.stack_count(); ++s)
      for (int t = 0; t < p.depth(); ++t)
        for (int c = 0; c < 4; ++c) EXPECT_TRUE(back.P(s, t, c) == p.P(s, t, c));
    std::ostringstream again;
    export_context(again, back);
    EXPECT_EQ(again.str(), os.str());
  }
}

TEST(ContextImport, RejectsEdgeOffSupport) {
  const auto hood = build_neighborhood(GridSpec(2, 2), 1);
  std::ostringstream os;
  export_context(os, make_context(hood, Variant::Layerwise, 1, 0.5));
  std::istringstream is(os.str() + "ctx layerwise 0 0 3 right 0.5\n");
  EXPECT_THROW(import_context(is), Error);
}

TEST(SingleEdge, HandForwardThroughParams) {
  ContextParams p = make_context(single_edge(), Variant::Layerwise, 1, 0.25);
  Matrix phi0(1, 2);
  phi0 << 1, 2;
  const Vector pooled = forward(phi0, p).pooled;
  Vector expect(2);
  expect << 3, 1;
  EXPECT_TRUE(pooled == expect);
}
