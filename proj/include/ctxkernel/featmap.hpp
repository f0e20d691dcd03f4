#pragma once

#include "ctxkernel/common.hpp"
#include "ctxkernel/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ctxkernel {

// Context-free explicit maps used as the first layer of the network.
struct InitMapKind {
  enum class Tag { Linear, Poly2, HistogramIntersection };
  Tag tag = Tag::Linear;
  int levels = 16;       // hi only
  double max_value = 1;  // hi only
  bool l2_normalize = false;

  static InitMapKind linear() { return {}; }
  static InitMapKind poly2() { return {Tag::Poly2, 16, 1.0, false}; }
  static InitMapKind hi(int levels, double max_value) {
    if (levels < 1) throw Error(ErrorKind::BadValue, "hi levels must be >= 1");
    if (!(max_value > 0)) throw Error(ErrorKind::BadValue, "hi max value must be > 0");
    return {Tag::HistogramIntersection, levels, max_value, false};
  }

  int mapped_dim(int d0) const {
    switch (tag) {
      case Tag::Linear: return d0;
      case Tag::Poly2: return d0 * d0;
      case Tag::HistogramIntersection: return d0 * levels;
    }
    return d0;
  }
};

inline std::string to_string(const InitMapKind& k) {
  switch (k.tag) {
    case InitMapKind::Tag::Linear: return "linear";
    case InitMapKind::Tag::Poly2: return "poly2";
    case InitMapKind::Tag::HistogramIntersection: return "hi";
  }
  return "linear";
}

inline Vector map_linear(const Eigen::Ref<const Vector>& x) { return x; }

// Flattened outer product; <map(x), map(y)> = (x.y)^2.
inline Vector map_poly2(const Eigen::Ref<const Vector>& x) {
  const Index d = x.size();
  Vector out(d * d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) out(i * d + j) = x(i) * x(j);
  return out;
}

// Decimal-to-unary code: each coordinate becomes q ones followed by L - q
// zeros, q = round(x * L / M) clipped to [0, L]. <map(x), map(y)> = sum min(q, q').
inline Vector map_hi(const Eigen::Ref<const Vector>& x, int levels, double max_value) {
  if (levels < 1 || !(max_value > 0)) throw Error(ErrorKind::BadValue, "hi map needs levels >= 1 and max value > 0");
  Vector out = Vector::Zero(x.size() * levels);
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    if (v < 0) throw Error(ErrorKind::NegativeInput, "hi map input " + format_exact(v));
    if (v > max_value) throw Error(ErrorKind::OutOfRange, "hi map input " + format_exact(v) + " exceeds " + format_exact(max_value));
    const long q = std::clamp(std::lround(v * levels / max_value), 0L, static_cast<long>(levels));
    out.segment(i * levels, q).setOnes();
  }
  return out;
}

// Maps every cell column of a d0 x n matrix.
inline Matrix apply_map(const Matrix& features, const InitMapKind& kind) {
  const Index d = kind.mapped_dim(static_cast<int>(features.rows()));
  Matrix out(d, features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    Vector x = features.col(j);
    if (kind.l2_normalize) {
      const double nrm = x.norm();
      if (nrm > 0) x /= nrm;
    }
    switch (kind.tag) {
      case InitMapKind::Tag::Linear: out.col(j) = map_linear(x); break;
      case InitMapKind::Tag::Poly2: out.col(j) = map_poly2(x); break;
      case InitMapKind::Tag::HistogramIntersection: out.col(j) = map_hi(x, kind.levels, kind.max_value); break;
    }
  }
  return out;
}

// One d0' x n matrix per sample, in dataset order.
inline std::vector<Matrix> init_maps(const Dataset& ds, const InitMapKind& kind) {
  std::vector<Matrix> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    try {
      out.push_back(apply_map(s.features, kind));
    } catch (const Error& e) {
      throw Error(e.kind(), "sample '" + s.id + "': " + e.detail());
    }
  }
  return out;
}

// Largest feature value over the training split; default hi max value.
inline double max_train_feature(const Dataset& ds) {
  double m = 0;
  for (const auto& s : ds.samples)
    if (s.split == Split::Train && s.features.size() > 0) m = std::max(m, s.features.maxCoeff());
  return m > 0 ? m : 1.0;
}

}  // namespace ctxkernel
