#pragma once

#include "ctxkernel/common.hpp"
#include "ctxkernel/grid.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ctxkernel {

enum class Variant { Layerwise, Stationary, Classwise };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Layerwise: return "layerwise";
    case Variant::Stationary: return "stationary";
    case Variant::Classwise: return "classwise";
  }
  return "layerwise";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "layerwise") return Variant::Layerwise;
  if (s == "stationary") return Variant::Stationary;
  if (s == "classwise") return Variant::Classwise;
  throw Error(ErrorKind::Config, "unknown variant '" + std::string(s) + "'");
}

enum class Pooling { Sum, Mean };

// One network's context matrices: layers[t][c] is P_c used when mapping
// layer t to layer t + 1. Shared (stationary) stacks keep T bit-identical copies.
struct ContextStack {
  std::vector<std::vector<Matrix>> layers;

  int depth() const noexcept { return static_cast<int>(layers.size()); }
  int directions() const noexcept { return layers.empty() ? 0 : static_cast<int>(layers.front().size()); }

  static ContextStack zeros_like(const ContextStack& other) {
    ContextStack z = other;
    for (auto& layer : z.layers)
      for (auto& p : layer) p.setZero();
    return z;
  }

  double squared_norm() const {
    double s = 0;
    for (const auto& layer : layers)
      for (const auto& p : layer) s += p.squaredNorm();
    return s;
  }

  ContextStack& operator+=(const ContextStack& o) {
    for (std::size_t t = 0; t < layers.size(); ++t)
      for (std::size_t c = 0; c < layers[t].size(); ++c) layers[t][c] += o.layers[t][c];
    return *this;
  }
};

// Gradients share the parameter layout.
using ContextGradient = ContextStack;

struct ContextParams {
  Variant variant = Variant::Layerwise;
  bool shared_layers = false;  // stationary, or classwise stacks built from a stationary base
  double gamma = 0;
  Pooling pooling = Pooling::Sum;
  NeighborhoodSystem hood;
  std::vector<ContextStack> stacks;  // one for global variants, K for classwise

  int depth() const noexcept { return stacks.empty() ? 0 : stacks.front().depth(); }
  int directions() const noexcept { return hood.directions(); }
  int cells() const noexcept { return hood.cells(); }
  int stack_count() const noexcept { return static_cast<int>(stacks.size()); }

  const Matrix& P(int stack, int layer, int c) const {
    return stacks.at(static_cast<std::size_t>(stack)).layers.at(static_cast<std::size_t>(layer)).at(static_cast<std::size_t>(c));
  }
};

// Handcrafted context: each row of each direction mask normalized to sum 1
// (rows without neighbors stay zero).
inline std::vector<Matrix> normalized_neighborhood(const NeighborhoodSystem& hood) {
  std::vector<Matrix> out;
  for (const auto& m : hood.masks) {
    Matrix p = m;
    for (Index x = 0; x < p.rows(); ++x) {
      const double s = p.row(x).sum();
      if (s > 0) p.row(x) /= s;
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline ContextStack make_stack(const std::vector<Matrix>& per_direction, int depth) {
  ContextStack st;
  st.layers.assign(static_cast<std::size_t>(depth), per_direction);
  return st;
}

// Context parameters initialized from the normalized neighborhood system.
// `classes` only matters for the classwise variant.
inline ContextParams make_context(const NeighborhoodSystem& hood, Variant variant, int depth, double gamma, int classes = 1,
                                  bool classwise_shared = false) {
  if (depth < 1) throw Error(ErrorKind::Config, "depth must be >= 1");
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw Error(ErrorKind::Config, "gamma must be finite and >= 0");
  ContextParams params;
  params.variant = variant;
  params.shared_layers = variant == Variant::Stationary || (variant == Variant::Classwise && classwise_shared);
  params.gamma = gamma;
  params.hood = hood;
  const int copies = variant == Variant::Classwise ? classes : 1;
  if (copies < 1) throw Error(ErrorKind::Config, "classwise context needs at least one class");
  params.stacks.assign(static_cast<std::size_t>(copies), make_stack(normalized_neighborhood(hood), depth));
  return params;
}

// Replicates a trained global context into K class stacks.
inline ContextParams classwise_from(const ContextParams& global, int classes) {
  if (classes < 1) throw Error(ErrorKind::Config, "classwise context needs at least one class");
  if (global.stacks.size() != 1) throw Error(ErrorKind::StateMismatch, "warm start expects a single global context stack");
  ContextParams out = global;
  out.variant = Variant::Classwise;
  out.stacks.assign(static_cast<std::size_t>(classes), global.stacks.front());
  return out;
}

// Sets every entry outside the mask to +0 (a product would leave -0 behind).
inline void mask_to_support(Matrix& P, const Matrix& mask) { P = (mask.array() != 0.0).select(P, 0.0); }

inline void apply_support(ContextStack& stack, const NeighborhoodSystem& hood) {
  for (auto& layer : stack.layers)
    for (std::size_t c = 0; c < layer.size(); ++c) mask_to_support(layer[c], hood.masks[c]);
}

// ---------------------------------------------------------------------------
// Forward map recursion.

// Output rows: [phi0 ; sqrt(g) phi_t P_1' ; ... ; sqrt(g) phi_t P_C'].
inline Matrix forward_layer(const Matrix& phi0, const Matrix& phi_t, std::span<const Matrix> P, double gamma) {
  const Index n = phi0.cols();
  require_shape(phi_t.cols() == n, "forward_layer: cell count differs between phi0 and phi_t");
  for (const auto& p : P) require_shape(p.rows() == n && p.cols() == n, "forward_layer: context matrix is not n x n");
  const Index d0 = phi0.rows();
  const Index dt = phi_t.rows();
  Matrix out(d0 + static_cast<Index>(P.size()) * dt, n);
  out.topRows(d0) = phi0;
  const double s = std::sqrt(gamma);
  for (std::size_t c = 0; c < P.size(); ++c) out.middleRows(d0 + static_cast<Index>(c) * dt, dt).noalias() = s * phi_t * P[c].transpose();
  return out;
}

// maps[t] is the layer-t map (D_t x n), t = 0..T.
struct LayerStack {
  std::vector<Matrix> maps;

  int depth() const noexcept { return static_cast<int>(maps.size()) - 1; }
  const Matrix& top() const { return maps.back(); }
};

// D_T = d0' * sum_{i=0..T} C^i.
inline Index map_dimension(Index d0, int directions, int depth) {
  Index total = 0, term = d0;
  for (int i = 0; i <= depth; ++i) {
    total += term;
    term *= directions;
  }
  return total;
}

inline Vector pool(const Matrix& top, Pooling pooling) {
  Vector v = top.rowwise().sum();
  if (pooling == Pooling::Mean && top.cols() > 0) v /= static_cast<double>(top.cols());
  return v;
}

inline LayerStack forward_stack(const Matrix& phi0, const ContextParams& params, int stack = 0) {
  require_shape(phi0.cols() == params.cells(), "forward: map has " + std::to_string(phi0.cols()) + " cells, context expects " +
                                                   std::to_string(params.cells()));
  const auto& st = params.stacks.at(static_cast<std::size_t>(stack));
  LayerStack out;
  out.maps.reserve(static_cast<std::size_t>(st.depth()) + 1);
  out.maps.push_back(phi0);
  for (int t = 0; t < st.depth(); ++t)
    out.maps.push_back(forward_layer(phi0, out.maps.back(), st.layers[static_cast<std::size_t>(t)], params.gamma));
  return out;
}

struct ForwardResult {
  LayerStack layers;
  Vector pooled;
};

inline ForwardResult forward(const Matrix& phi0, const ContextParams& params, int stack = 0) {
  ForwardResult r;
  r.layers = forward_stack(phi0, params, stack);
  r.pooled = pool(r.layers.top(), params.pooling);
  return r;
}

// Pooled maps of many images as columns of a D_T x N matrix.
inline Matrix pooled_maps(std::span<const Matrix> phi0s, const ContextParams& params, int stack = 0) {
  if (phi0s.empty()) return Matrix(0, 0);
  const Index dt = map_dimension(phi0s.front().rows(), params.directions(), params.depth());
  Matrix out(dt, static_cast<Index>(phi0s.size()));
  for (std::size_t p = 0; p < phi0s.size(); ++p) out.col(static_cast<Index>(p)) = forward(phi0s[p], params, stack).pooled;
  return out;
}

// ---------------------------------------------------------------------------
// Gram recursion K(t+1) = S + gamma sum_c P_c K(t) P_c'.

// Block-diagonal copy of P over `copies` images (cross-image cells are never neighbors).
inline Matrix block_diagonal(const Matrix& P, int copies) {
  Matrix out = Matrix::Zero(P.rows() * copies, P.cols() * copies);
  for (int i = 0; i < copies; ++i) out.block(i * P.rows(), i * P.cols(), P.rows(), P.cols()) = P;
  return out;
}

// Returns K(0..T). layers[t] holds the C matrices used for step t -> t + 1.
inline std::vector<Matrix> gram_iterates(const Matrix& S, const std::vector<std::vector<Matrix>>& layers, double gamma) {
  require_shape(S.rows() == S.cols(), "gram_recursion: S must be square");
  std::vector<Matrix> Ks{S};
  for (const auto& P : layers) {
    Matrix next = S;
    for (const auto& p : P) {
      require_shape(p.rows() == S.rows() && p.cols() == S.cols(), "gram_recursion: context matrix does not match S");
      next.noalias() += gamma * p * Ks.back() * p.transpose();
    }
    Ks.push_back(std::move(next));
  }
  return Ks;
}

inline Matrix gram_recursion(const Matrix& S, const std::vector<std::vector<Matrix>>& layers, double gamma) {
  return gram_iterates(S, layers, gamma).back();
}

// Mean over entries of |K_t - K_prev| / |K_t + K_prev|; near-zero denominators contribute 0.
inline double relative_error(const Matrix& K_t, const Matrix& K_prev) {
  require_shape(K_t.rows() == K_prev.rows() && K_t.cols() == K_prev.cols(), "relative_error: shapes differ");
  if (K_t.size() == 0) return 0;
  double acc = 0;
  for (Index j = 0; j < K_t.cols(); ++j)
    for (Index i = 0; i < K_t.rows(); ++i) {
      const double den = std::abs(K_t(i, j) + K_prev(i, j));
      if (den >= 1e-30) acc += std::abs(K_t(i, j) - K_prev(i, j)) / den;
    }
  return acc / static_cast<double>(K_t.size());
}

// ||S||_F / ||sum_c P_c S P_c'||_F, or +inf when the context term vanishes.
inline double max_gamma(const Matrix& S, std::span<const Matrix> P) {
  Matrix ctx = Matrix::Zero(S.rows(), S.cols());
  for (const auto& p : P) {
    require_shape(p.rows() == S.rows() && p.cols() == S.cols(), "max_gamma: context matrix does not match S");
    ctx.noalias() += p * S * p.transpose();
  }
  const double den = ctx.norm();
  if (den == 0) return std::numeric_limits<double>::infinity();
  return S.norm() / den;
}

// ---------------------------------------------------------------------------
// Backward pass through pooling and the map recursion.

// dE/dP for one image given dE/d(pooled map). For shared stacks the per-layer
// gradients are summed and the sum is written to every layer slot.
inline ContextGradient backward(const LayerStack& layers, const Vector& grad_pooled, const ContextParams& params, int stack = 0) {
  const auto& st = params.stacks.at(static_cast<std::size_t>(stack));
  const int T = st.depth();
  if (layers.depth() != T) throw Error(ErrorKind::StateMismatch, "backward: layer stack depth differs from context depth");
  const Index n = params.cells();
  const Index d0 = layers.maps.front().rows();
  const int C = params.directions();
  for (int t = 0; t <= T; ++t) {
    const Index expected = map_dimension(d0, C, t);
    if (layers.maps[static_cast<std::size_t>(t)].rows() != expected || layers.maps[static_cast<std::size_t>(t)].cols() != n)
      throw Error(ErrorKind::StateMismatch, "backward: layer " + std::to_string(t) + " has an unexpected shape");
  }
  if (grad_pooled.size() != layers.top().rows()) throw Error(ErrorKind::StateMismatch, "backward: pooled gradient has wrong size");

  ContextGradient grad = ContextStack::zeros_like(st);
  const double s = std::sqrt(params.gamma);
  const double pool_scale = params.pooling == Pooling::Mean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
  Matrix G = (grad_pooled * pool_scale).replicate(1, n);
  for (int t = T - 1; t >= 0; --t) {
    const Matrix& phi_t = layers.maps[static_cast<std::size_t>(t)];
    const Index dt = phi_t.rows();
    Matrix down = Matrix::Zero(dt, n);
    for (int c = 0; c < C; ++c) {
      const auto Gc = G.middleRows(d0 + c * dt, dt);
      const Matrix& P = st.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
      grad.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)].noalias() = s * (Gc.transpose() * phi_t);
      if (t > 0) down.noalias() += s * (Gc * P);
    }
    G = std::move(down);
  }
  for (auto& layer : grad.layers)
    for (std::size_t c = 0; c < layer.size(); ++c) mask_to_support(layer[c], params.hood.masks[c]);

  if (params.shared_layers && T > 1) {
    std::vector<Matrix> total = grad.layers.front();
    for (int t = 1; t < T; ++t)
      for (int c = 0; c < C; ++c) total[static_cast<std::size_t>(c)] += grad.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
    for (auto& layer : grad.layers) layer = total;
  }
  return grad;
}

// Norm over distinct parameters (one copy for shared stacks).
inline double gradient_norm(const ContextGradient& g, bool shared_layers) {
  if (!shared_layers || g.layers.empty()) return std::sqrt(g.squared_norm());
  double s = 0;
  for (const auto& p : g.layers.front()) s += p.squaredNorm();
  return std::sqrt(s);
}

}  // namespace ctxkernel
