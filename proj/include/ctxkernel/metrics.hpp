#pragma once

#include "ctxkernel/common.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace ctxkernel {

// F1 = 2TP / (2TP + FP + FN); empty-vs-empty counts as a perfect match.
inline double f1_from_counts(long tp, long fp, long fn) {
  const long den = 2 * tp + fp + fn;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

struct MfScores {
  double mf_s = 0;  // percent
  double mf_c = 0;  // percent
};

// Sample- and concept-level mean F1 with positives predicted where score > threshold.
inline MfScores mf_scores(const Matrix& scores, const IntMatrix& truth, double threshold = 0.0) {
  require_shape(scores.rows() == truth.rows() && scores.cols() == truth.cols(), "mf_scores: score and truth shapes differ");
  const Index N = scores.rows(), K = scores.cols();
  MfScores out;
  if (N == 0 || K == 0) return out;
  std::vector<long> ctp(static_cast<std::size_t>(K), 0), cfp(static_cast<std::size_t>(K), 0), cfn(static_cast<std::size_t>(K), 0);
  double sample_sum = 0;
  for (Index p = 0; p < N; ++p) {
    long tp = 0, fp = 0, fn = 0;
    for (Index k = 0; k < K; ++k) {
      const bool pred = scores(p, k) > threshold;
      const bool real = truth(p, k) > 0;
      const auto kk = static_cast<std::size_t>(k);
      if (pred && real) ++tp, ++ctp[kk];
      else if (pred) ++fp, ++cfp[kk];
      else if (real) ++fn, ++cfn[kk];
    }
    sample_sum += f1_from_counts(tp, fp, fn);
  }
  double concept_sum = 0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) concept_sum += f1_from_counts(ctp[k], cfp[k], cfn[k]);
  out.mf_s = 100.0 * sample_sum / static_cast<double>(N);
  out.mf_c = 100.0 * concept_sum / static_cast<double>(K);
  return out;
}

// Sample indices sorted by descending score; ties keep the lower index first.
inline std::vector<Index> rank_descending(const Eigen::Ref<const Vector>& s) {
  std::vector<Index> order(static_cast<std::size_t>(s.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s(a) > s(b); });
  return order;
}

// Non-interpolated average precision of one ranking; nullopt without positives.
inline std::optional<double> average_precision(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Eigen::VectorXi>& truth) {
  const auto order = rank_descending(scores);
  long hits = 0;
  double acc = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (truth(order[r]) > 0) acc += static_cast<double>(++hits) / static_cast<double>(r + 1);
  if (hits == 0) return std::nullopt;
  return acc / static_cast<double>(hits);
}

// Mean AP over concepts (percent). Concepts without positives are skipped.
inline double map_score(const Matrix& scores, const IntMatrix& truth) {
  require_shape(scores.rows() == truth.rows() && scores.cols() == truth.cols(), "map_score: score and truth shapes differ");
  double sum = 0;
  int used = 0;
  for (Index k = 0; k < scores.cols(); ++k) {
    const Vector s = scores.col(k);
    const Eigen::VectorXi t = truth.col(k);
    if (auto ap = average_precision(s, t)) {
      sum += *ap;
      ++used;
    } else {
      log(LogLevel::Warn, "map_score: concept ", k, " has no positive sample, excluded");
    }
  }
  if (used == 0) throw Error(ErrorKind::NoPositives, "map_score: no concept has a positive sample");
  return 100.0 * sum / used;
}

struct CorelScores {
  double recall = 0;     // percent, mean over keywords
  double precision = 0;  // percent, mean over keywords
  double f = 0;          // harmonic mean of recall and precision
  int n_plus = 0;        // keywords with non-zero recall
  int keywords_used = 0;
};

// Top-n keyword annotation. Keywords absent from the ground truth are left out
// of the R/P means unless `include_absent` is set (they then contribute 0).
inline CorelScores corel_metrics(const Matrix& scores, const IntMatrix& truth, int top_n = 5, bool include_absent = false) {
  require_shape(scores.rows() == truth.rows() && scores.cols() == truth.cols(), "corel_metrics: score and truth shapes differ");
  if (top_n < 1) throw Error(ErrorKind::Config, "corel_metrics: top_n must be >= 1");
  const Index N = scores.rows(), K = scores.cols();
  std::vector<long> correct(static_cast<std::size_t>(K), 0), assigned(static_cast<std::size_t>(K), 0), present(static_cast<std::size_t>(K), 0);
  const Index take = std::min<Index>(top_n, K);
  for (Index p = 0; p < N; ++p) {
    const Vector row = scores.row(p).transpose();
    const auto order = rank_descending(row);
    for (Index r = 0; r < take; ++r) {
      const auto k = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
      ++assigned[k];
      if (truth(p, static_cast<Index>(k)) > 0) ++correct[k];
    }
    for (Index k = 0; k < K; ++k)
      if (truth(p, k) > 0) ++present[static_cast<std::size_t>(k)];
  }
  CorelScores out;
  double rsum = 0, psum = 0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
    const double rec = present[k] > 0 ? static_cast<double>(correct[k]) / static_cast<double>(present[k]) : 0.0;
    const double prec = assigned[k] > 0 ? static_cast<double>(correct[k]) / static_cast<double>(assigned[k]) : 0.0;
    if (rec > 0) ++out.n_plus;
    if (present[k] == 0 && !include_absent) continue;
    rsum += rec;
    psum += prec;
    ++out.keywords_used;
  }
  if (out.keywords_used > 0) {
    out.recall = 100.0 * rsum / out.keywords_used;
    out.precision = 100.0 * psum / out.keywords_used;
  }
  out.f = out.recall + out.precision > 0 ? 2.0 * out.recall * out.precision / (out.recall + out.precision) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Reports: an aligned table for people and key=value lines for scripts.

struct MetricReport {
  std::string protocol;  // "imageclef" or "corel"
  std::vector<std::pair<std::string, double>> values;

  std::string table() const {
    std::string out = "protocol  " + protocol + "\n";
    char buf[96];
    for (const auto& [k, v] : values) {
      std::snprintf(buf, sizeof(buf), "%-8s %10.4f\n", k.c_str(), v);
      out += buf;
    }
    return out;
  }

  std::string key_values() const {
    std::string out = "protocol=" + protocol + "\n";
    for (const auto& [k, v] : values) out += k + "=" + format_exact(v) + "\n";
    return out;
  }
};

inline MetricReport imageclef_report(const Matrix& scores, const IntMatrix& truth, double threshold = 0.0) {
  const auto mf = mf_scores(scores, truth, threshold);
  return {"imageclef", {{"MF-S", mf.mf_s}, {"MF-C", mf.mf_c}, {"mAP", map_score(scores, truth)}}};
}

inline MetricReport corel_report(const Matrix& scores, const IntMatrix& truth, int top_n = 5, bool include_absent = false) {
  const auto c = corel_metrics(scores, truth, top_n, include_absent);
  return {"corel", {{"R", c.recall}, {"P", c.precision}, {"F", c.f}, {"N+", static_cast<double>(c.n_plus)}}};
}

}  // namespace ctxkernel
