#pragma once

#include "ctxkernel/common.hpp"
#include "ctxkernel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace ctxkernel {

struct SvmConfig {
  double cost = 1.0;                 // uniform C_k
  std::vector<double> costs;         // per-concept override; empty means uniform
  int max_passes = 20000;            // dual coordinate-descent sweeps
  double tolerance = 1e-10;          // duality gap, relative to max(1, primal)

  double cost_for(int k) const {
    const double c = costs.empty() ? cost : costs.at(static_cast<std::size_t>(k));
    if (!(c > 0)) throw Error(ErrorKind::Config, "SVM cost must be > 0");
    return c;
  }
};

// One binary hinge-loss SVM without bias: f(x) = w'x.
struct BinarySvm {
  Vector w;
  Vector alpha;
  double cost = 1;
  double primal = 0;
  double dual = 0;
  int passes = 0;

  double gap() const { return primal - dual; }
};

// w = sum_p y_p alpha_p x_p.
inline Vector primal_from_dual(const Vector& alpha, std::span<const int> y, const Matrix& X) {
  require_shape(alpha.size() == X.cols() && static_cast<Index>(y.size()) == X.cols(), "primal_from_dual: sizes differ");
  Vector w = Vector::Zero(X.rows());
  for (Index p = 0; p < X.cols(); ++p)
    if (alpha(p) != 0) w.noalias() += (static_cast<double>(y[static_cast<std::size_t>(p)]) * alpha(p)) * X.col(p);
  return w;
}

inline double binary_primal(const Vector& w, const Matrix& X, std::span<const int> y, double C) {
  double hinge = 0;
  for (Index p = 0; p < X.cols(); ++p) hinge += std::max(0.0, 1.0 - y[static_cast<std::size_t>(p)] * w.dot(X.col(p)));
  return 0.5 * w.squaredNorm() + C * hinge;
}

inline double binary_dual(const Vector& alpha, const Vector& w) { return alpha.sum() - 0.5 * w.squaredNorm(); }

// Dual coordinate descent on  min_a 1/2 a'Qa - 1'a,  0 <= a <= C,  Q_pq = y_p y_q x_p'x_q.
// Sweeps samples in index order; stops when the duality gap falls below tolerance.
inline BinarySvm train_dual(const Matrix& X, std::span<const int> y, double C, const SvmConfig& config = {},
                            const Vector* warm_alpha = nullptr) {
  const Index N = X.cols();
  require_shape(static_cast<Index>(y.size()) == N, "train_dual: label count differs from sample count");
  if (!(C > 0)) throw Error(ErrorKind::Config, "SVM cost must be > 0");
  if (!X.allFinite()) throw Error(ErrorKind::NonFinite, "train_dual: non-finite features");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 1 && v != -1) throw Error(ErrorKind::BadValue, "train_dual: labels must be +1 or -1");
    (v > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw Error(ErrorKind::SingleClass, "train_dual: needs at least one positive and one negative sample");

  BinarySvm m;
  m.cost = C;
  m.alpha = Vector::Zero(N);
  if (warm_alpha != nullptr && warm_alpha->size() == N) m.alpha = warm_alpha->cwiseMax(0.0).cwiseMin(C);
  m.w = primal_from_dual(m.alpha, y, X);
  const Vector qdiag = X.colwise().squaredNorm().transpose();

  for (m.passes = 1; m.passes <= config.max_passes; ++m.passes) {
    for (Index p = 0; p < N; ++p) {
      const double yp = y[static_cast<std::size_t>(p)];
      const double g = yp * m.w.dot(X.col(p)) - 1.0;
      const double a = m.alpha(p);
      double pg = g;
      if (a <= 0) pg = std::min(g, 0.0);
      else if (a >= C) pg = std::max(g, 0.0);
      if (pg == 0) continue;
      const double next = qdiag(p) > 0 ? std::clamp(a - g / qdiag(p), 0.0, C) : C;
      if (next != a) {
        m.w.noalias() += ((next - a) * yp) * X.col(p);
        m.alpha(p) = next;
      }
    }
    m.primal = binary_primal(m.w, X, y, C);
    m.dual = binary_dual(m.alpha, m.w);
    if (m.gap() <= config.tolerance * std::max(1.0, std::abs(m.primal))) break;
  }
  if (m.passes > config.max_passes) {
    m.passes = config.max_passes;
    log(LogLevel::Warn, "train_dual: pass budget exhausted with duality gap ", m.gap());
  }
  // Report the primal recovered from the final duals, not the running sum.
  m.w = primal_from_dual(m.alpha, y, X);
  m.primal = binary_primal(m.w, X, y, C);
  m.dual = binary_dual(m.alpha, m.w);
  return m;
}

// ---------------------------------------------------------------------------
// Multi-concept model: column k of W is w_k.

struct SvmModel {
  Matrix W;                      // D x K
  std::vector<Vector> alphas;    // per concept, may be empty after loading
  std::vector<double> costs;     // C_k

  int concepts() const noexcept { return static_cast<int>(W.cols()); }
  Index dimension() const noexcept { return W.rows(); }
};

// `features` holds either one D x N matrix shared by all concepts or one per concept.
inline const Matrix& features_for(std::span<const Matrix> features, int k) {
  return features.size() == 1 ? features.front() : features[static_cast<std::size_t>(k)];
}

inline std::vector<int> concept_labels(const IntMatrix& labels, int k) {
  std::vector<int> y(static_cast<std::size_t>(labels.rows()));
  for (Index p = 0; p < labels.rows(); ++p) y[static_cast<std::size_t>(p)] = labels(p, k);
  return y;
}

inline SvmModel train_svms(std::span<const Matrix> features, const IntMatrix& labels, const SvmConfig& config,
                           const SvmModel* warm = nullptr) {
  const int K = static_cast<int>(labels.cols());
  if (features.size() != 1 && static_cast<int>(features.size()) != K) throw Error(ErrorKind::ShapeMismatch, "train_svms: feature set count");
  SvmModel model;
  model.W = Matrix::Zero(features.front().rows(), K);
  for (int k = 0; k < K; ++k) {
    const Matrix& X = features_for(features, k);
    require_shape(X.cols() == labels.rows(), "train_svms: sample count differs from label rows");
    const auto y = concept_labels(labels, k);
    const Vector* w0 = warm != nullptr && static_cast<int>(warm->alphas.size()) == K ? &warm->alphas[static_cast<std::size_t>(k)] : nullptr;
    BinarySvm b = train_dual(X, y, config.cost_for(k), config, w0);
    model.W.col(k) = b.w;
    model.alphas.push_back(std::move(b.alpha));
    model.costs.push_back(b.cost);
  }
  return model;
}

// sum_k 1/2 ||w_k||^2 + C_k sum_p max(0, 1 - Y_kp w_k' phi_p).
inline double hinge_loss(const SvmModel& model, std::span<const Matrix> features, const IntMatrix& labels) {
  require_shape(model.concepts() == labels.cols(), "hinge_loss: concept count differs");
  double total = 0;
  for (int k = 0; k < model.concepts(); ++k) {
    const Matrix& X = features_for(features, k);
    require_shape(X.rows() == model.dimension() && X.cols() == labels.rows(), "hinge_loss: feature shape");
    total += binary_primal(model.W.col(k), X, concept_labels(labels, k), model.costs.at(static_cast<std::size_t>(k)));
  }
  return total;
}

inline double hinge_loss(const SvmModel& model, const Matrix& features, const IntMatrix& labels) {
  return hinge_loss(model, std::span<const Matrix>(&features, 1), labels);
}

// dE/dphi_p = -sum_k C_k Y_kp w_k [1 - Y_kp w_k' phi_p >= 0]. With one shared
// feature matrix the result has one entry; with per-concept features entry k
// carries only the class-k terms.
inline std::vector<Matrix> loss_gradient_wrt_maps(const SvmModel& model, std::span<const Matrix> features, const IntMatrix& labels) {
  require_shape(model.concepts() == labels.cols(), "loss_gradient_wrt_maps: concept count differs");
  std::vector<Matrix> out;
  for (const auto& X : features) {
    require_shape(X.rows() == model.dimension() && X.cols() == labels.rows(), "loss_gradient_wrt_maps: feature shape");
    out.push_back(Matrix::Zero(X.rows(), X.cols()));
  }
  for (int k = 0; k < model.concepts(); ++k) {
    const Matrix& X = features_for(features, k);
    Matrix& G = out.size() == 1 ? out.front() : out[static_cast<std::size_t>(k)];
    const double C = model.costs.at(static_cast<std::size_t>(k));
    for (Index p = 0; p < X.cols(); ++p) {
      const double y = labels(p, k);
      if (1.0 - y * model.W.col(k).dot(X.col(p)) >= 0) G.col(p).noalias() -= (C * y) * model.W.col(k);
    }
  }
  return out;
}

inline Matrix loss_gradient_wrt_maps(const SvmModel& model, const Matrix& features, const IntMatrix& labels) {
  return loss_gradient_wrt_maps(model, std::span<const Matrix>(&features, 1), labels).front();
}

// N x K decision values.
inline Matrix decision_scores(const SvmModel& model, std::span<const Matrix> features) {
  const Index N = features.front().cols();
  Matrix s(N, model.concepts());
  for (int k = 0; k < model.concepts(); ++k) s.col(k) = features_for(features, k).transpose() * model.W.col(k);
  return s;
}

// ---------------------------------------------------------------------------
// Ensembles for unbalanced concepts: every member sees all positives plus a
// seeded random subset of ceil(neg_ratio * |positives|) negatives.

struct EnsembleConfig {
  int members = 10;
  double neg_ratio = 3.0;
  std::uint64_t seed = 0;
};

struct ConceptEnsemble {
  std::vector<Vector> members;                     // weight vectors
  std::vector<std::vector<std::size_t>> subsets;   // training indices of each member

  double score(const Eigen::Ref<const Vector>& x) const {
    double s = 0;
    for (const auto& w : members) s += w.dot(x);
    return s / static_cast<double>(members.size());
  }
};

inline ConceptEnsemble train_ensemble(const Matrix& X, std::span<const int> y, double C, const EnsembleConfig& ens,
                                      const SvmConfig& config = {}, std::uint64_t stream = 0) {
  if (ens.members < 1) throw Error(ErrorKind::Config, "ensemble needs at least one member");
  require_shape(static_cast<Index>(y.size()) == X.cols(), "train_ensemble: label count differs from sample count");
  std::vector<std::size_t> pos, neg;
  for (std::size_t p = 0; p < y.size(); ++p) (y[p] > 0 ? pos : neg).push_back(p);
  if (pos.empty()) throw Error(ErrorKind::NoPositives, "train_ensemble: concept has no positive samples");
  const auto want = static_cast<std::size_t>(std::ceil(ens.neg_ratio * static_cast<double>(pos.size())));
  if (want > neg.size())
    log(LogLevel::Warn, "train_ensemble: ", to_string(ErrorKind::InsufficientNegatives), ", wanted ", want, " negatives, have ", neg.size());

  ConceptEnsemble out;
  for (int m = 0; m < ens.members; ++m) {
    auto rng = stream_rng(ens.seed, {stream, static_cast<std::uint64_t>(m)});
    const auto negs = sample_subset(neg, want, rng);
    std::vector<std::size_t> subset;
    std::merge(pos.begin(), pos.end(), negs.begin(), negs.end(), std::back_inserter(subset));
    Matrix Xs(X.rows(), static_cast<Index>(subset.size()));
    std::vector<int> ys(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
      Xs.col(static_cast<Index>(i)) = X.col(static_cast<Index>(subset[i]));
      ys[i] = y[subset[i]];
    }
    out.members.push_back(train_dual(Xs, ys, C, config).w);
    out.subsets.push_back(std::move(subset));
  }
  return out;
}

struct EnsembleModel {
  EnsembleConfig config;
  std::vector<ConceptEnsemble> concepts;
};

inline EnsembleModel train_ensembles(std::span<const Matrix> features, const IntMatrix& labels, const EnsembleConfig& ens,
                                     const SvmConfig& config) {
  EnsembleModel out;
  out.config = ens;
  for (int k = 0; k < labels.cols(); ++k)
    out.concepts.push_back(train_ensemble(features_for(features, k), concept_labels(labels, k), config.cost_for(k), ens, config,
                                          static_cast<std::uint64_t>(k)));
  return out;
}

inline Matrix decision_scores(const EnsembleModel& model, std::span<const Matrix> features) {
  const Index N = features.front().cols();
  Matrix s(N, static_cast<Index>(model.concepts.size()));
  for (std::size_t k = 0; k < model.concepts.size(); ++k) {
    const Matrix& X = features_for(features, static_cast<int>(k));
    for (Index p = 0; p < N; ++p) s(p, static_cast<Index>(k)) = model.concepts[k].score(X.col(p));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Binary serialization, little-endian.
//   model:    "CKSV" u64 K, u64 D, K x f64 C_k, u64 max_passes, f64 tolerance, K*D f64 weights
//   ensemble: "CKEN" u64 K, u64 M, u64 D, u64 seed, f64 neg_ratio, K*M*D f64 weights

inline void save_model(const std::filesystem::path& path, const SvmModel& model, const SvmConfig& config) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  binary::write_magic(os, "CKSV");
  binary::write_u64(os, static_cast<std::uint64_t>(model.concepts()));
  binary::write_u64(os, static_cast<std::uint64_t>(model.dimension()));
  for (int k = 0; k < model.concepts(); ++k) binary::write_f64(os, model.costs.at(static_cast<std::size_t>(k)));
  binary::write_u64(os, static_cast<std::uint64_t>(config.max_passes));
  binary::write_f64(os, config.tolerance);
  for (Index k = 0; k < model.W.cols(); ++k)
    for (Index i = 0; i < model.W.rows(); ++i) binary::write_f64(os, model.W(i, k));
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline SvmModel load_model(const std::filesystem::path& path, SvmConfig* config = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  if (!binary::read_magic(is, "CKSV")) throw Error(ErrorKind::BadValue, path.string() + ": bad magic");
  const auto K = binary::read_u64(is);
  const auto D = binary::read_u64(is);
  if (K > (1u << 20) || D > (1u << 30)) throw Error(ErrorKind::BadValue, path.string() + ": implausible header");
  SvmModel m;
  for (std::uint64_t k = 0; k < K; ++k) m.costs.push_back(binary::read_f64(is));
  const auto passes = binary::read_u64(is);
  const double tol = binary::read_f64(is);
  if (config != nullptr) {
    config->max_passes = static_cast<int>(passes);
    config->tolerance = tol;
    config->costs = m.costs;
  }
  m.W.resize(static_cast<Index>(D), static_cast<Index>(K));
  for (Index k = 0; k < m.W.cols(); ++k)
    for (Index i = 0; i < m.W.rows(); ++i) m.W(i, k) = binary::read_f64(is);
  return m;
}

inline void save_ensemble(const std::filesystem::path& path, const EnsembleModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  const std::uint64_t K = model.concepts.size();
  const std::uint64_t M = K ? model.concepts.front().members.size() : 0;
  const std::uint64_t D = M ? static_cast<std::uint64_t>(model.concepts.front().members.front().size()) : 0;
  binary::write_magic(os, "CKEN");
  binary::write_u64(os, K);
  binary::write_u64(os, M);
  binary::write_u64(os, D);
  binary::write_u64(os, model.config.seed);
  binary::write_f64(os, model.config.neg_ratio);
  for (const auto& c : model.concepts)
    for (const auto& w : c.members)
      for (Index i = 0; i < w.size(); ++i) binary::write_f64(os, w(i));
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline EnsembleModel load_ensemble(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  if (!binary::read_magic(is, "CKEN")) throw Error(ErrorKind::BadValue, path.string() + ": bad magic");
  const auto K = binary::read_u64(is);
  const auto M = binary::read_u64(is);
  const auto D = binary::read_u64(is);
  if (K > (1u << 20) || M > (1u << 20) || D > (1u << 30)) throw Error(ErrorKind::BadValue, path.string() + ": implausible header");
  EnsembleModel out;
  out.config.seed = binary::read_u64(is);
  out.config.neg_ratio = binary::read_f64(is);
  out.config.members = static_cast<int>(M);
  for (std::uint64_t k = 0; k < K; ++k) {
    ConceptEnsemble c;
    for (std::uint64_t m = 0; m < M; ++m) {
      Vector w(static_cast<Index>(D));
      for (Index i = 0; i < w.size(); ++i) w(i) = binary::read_f64(is);
      c.members.push_back(std::move(w));
    }
    out.concepts.push_back(std::move(c));
  }
  return out;
}

}  // namespace ctxkernel
