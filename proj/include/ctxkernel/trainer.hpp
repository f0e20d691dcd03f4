#pragma once

#include "ctxkernel/common.hpp"
#include "ctxkernel/context.hpp"
#include "ctxkernel/dataset.hpp"
#include "ctxkernel/parallel.hpp"
#include "ctxkernel/rng.hpp"
#include "ctxkernel/svm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ctxkernel {

struct TrainConfig {
  Variant variant = Variant::Layerwise;
  bool classwise_shared = false;   // classwise stacks share tensors across layers
  int depth = 3;
  double gamma_factor = 0.9;       // gamma = factor * max_gamma unless `gamma` is set
  std::optional<double> gamma;
  Pooling pooling = Pooling::Sum;
  double learning_rate = 1e-3;
  double lr_decay = 0.98;          // per alternation
  int max_alternations = 100;
  double stop_tolerance = 1e-4;
  double clip_norm = 10.0;         // global gradient norm per context stack; <= 0 disables
  double divergence_factor = 10.0;
  SvmConfig svm;
  std::uint64_t seed = 0;
  int threads = 1;
  std::ostream* log = nullptr;     // receives "alt <i> loss <v> dP <v> dW <v>" lines
  std::function<void(int, const ContextParams&)> on_update;  // called after each context step

  void validate() const {
    if (!(learning_rate >= 0)) throw Error(ErrorKind::Config, "learning rate must be >= 0");
    if (max_alternations < 1) throw Error(ErrorKind::Config, "max alternations must be >= 1");
    if (depth < 1) throw Error(ErrorKind::Config, "depth must be >= 1");
    if (!(gamma_factor >= 0)) throw Error(ErrorKind::Config, "gamma factor must be >= 0");
  }
};

// Initial maps and labels of the images the trainer sees.
struct TrainingSet {
  std::vector<Matrix> maps;  // d0' x n per image
  IntMatrix labels;          // N x K, +-1

  std::size_t size() const noexcept { return maps.size(); }
  int concepts() const noexcept { return static_cast<int>(labels.cols()); }
};

inline TrainingSet make_training_set(const Dataset& ds, const std::vector<Matrix>& maps, Split split) {
  TrainingSet set;
  const auto idx = ds.indices(split);
  for (auto i : idx) set.maps.push_back(maps.at(i));
  set.labels = ds.label_matrix(idx);
  return set;
}

struct TrainState {
  ContextParams params;
  SvmModel model;
  std::vector<double> loss_history;  // SVM objective right after each SVM phase
  std::vector<double> re_history;    // mean relative error between the two top layers
  std::vector<double> dp_history;    // relative parameter change of the step taken after the fit
  std::vector<double> dw_history;    // relative weight change versus the previous fit
  int alternations = 0;
  bool converged = false;
};

// ---------------------------------------------------------------------------

// Smallest per-image bound over the set, using the layer-0 tensors of every stack.
inline double dataset_max_gamma(const std::vector<Matrix>& maps, const ContextParams& params) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& phi0 : maps) {
    const Matrix S = phi0.transpose() * phi0;
    for (const auto& st : params.stacks) best = std::min(best, max_gamma(S, st.layers.front()));
  }
  return best;
}

// Sets params.gamma from the config; rejects an explicit gamma above the bound.
inline void assign_gamma(ContextParams& params, const std::vector<Matrix>& maps, const TrainConfig& config) {
  const double bound = dataset_max_gamma(maps, params);
  if (config.gamma) {
    if (*config.gamma < 0) throw Error(ErrorKind::Config, "gamma must be >= 0");
    if (std::isfinite(bound) && *config.gamma > bound)
      throw Error(ErrorKind::Config, "gamma " + format_exact(*config.gamma) + " exceeds max_gamma " + format_exact(bound));
    params.gamma = *config.gamma;
  } else if (std::isfinite(bound)) {
    params.gamma = config.gamma_factor * bound;
  } else {
    // No context edges at all; gamma has no effect.
    log(LogLevel::Warn, "max_gamma: ", to_string(ErrorKind::DegenerateContext), ", context term vanishes; using gamma = 1");
    params.gamma = 1.0;
  }
}

struct NetworkPass {
  std::vector<Matrix> features;               // per stack, D_T x N
  std::vector<std::vector<LayerStack>> layers;  // [stack][image]
};

inline NetworkPass run_forward(const TrainingSet& set, const ContextParams& params, int threads, bool keep_layers = true) {
  NetworkPass pass;
  const std::size_t N = set.size();
  for (int s = 0; s < params.stack_count(); ++s) {
    std::vector<ForwardResult> results(N);
    parallel_for(threads, N, [&](std::size_t p) { results[p] = forward(set.maps[p], params, s); });
    const Index dt = N ? results.front().pooled.size() : 0;
    Matrix X(dt, static_cast<Index>(N));
    std::vector<LayerStack> stacks;
    for (std::size_t p = 0; p < N; ++p) {
      X.col(static_cast<Index>(p)) = results[p].pooled;
      if (keep_layers) stacks.push_back(std::move(results[p].layers));
    }
    pass.features.push_back(std::move(X));
    pass.layers.push_back(std::move(stacks));
  }
  return pass;
}

// Sum over images of dE/dP per stack, reduced in image order.
inline std::vector<ContextGradient> context_gradient(const TrainingSet& set, const ContextParams& params, const SvmModel& model,
                                                     const NetworkPass& pass, int threads) {
  const auto grads = loss_gradient_wrt_maps(model, pass.features, set.labels);
  std::vector<ContextGradient> out;
  for (int s = 0; s < params.stack_count(); ++s) {
    const auto& G = grads[static_cast<std::size_t>(s)];
    std::vector<ContextGradient> per(set.size());
    parallel_for(threads, set.size(), [&](std::size_t p) {
      per[p] = backward(pass.layers[static_cast<std::size_t>(s)][p], G.col(static_cast<Index>(p)), params, s);
    });
    ContextGradient total = ContextStack::zeros_like(params.stacks[static_cast<std::size_t>(s)]);
    for (const auto& g : per) total += g;
    out.push_back(std::move(total));
  }
  return out;
}

inline double mean_top_relative_error(const NetworkPass& pass) {
  if (pass.layers.empty() || pass.layers.front().empty()) return 0;
  double acc = 0;
  for (const auto& ls : pass.layers.front()) {
    if (ls.depth() < 1) continue;
    const auto& a = ls.maps[ls.maps.size() - 1];
    const auto& b = ls.maps[ls.maps.size() - 2];
    acc += relative_error(a.transpose() * a, b.transpose() * b);
  }
  return acc / static_cast<double>(pass.layers.front().size());
}

inline double relative_change(double diff_sq, double base_sq) {
  if (base_sq > 0) return std::sqrt(diff_sq / base_sq);
  return diff_sq > 0 ? std::numeric_limits<double>::infinity() : 0.0;
}

// Alternating optimization from the given initial parameters: fit the SVMs at
// fixed context, then take one gradient step on the context at fixed weights.
inline TrainState alternate_from(const TrainingSet& set, ContextParams params, const TrainConfig& config) {
  config.validate();
  if (set.size() == 0) throw Error(ErrorKind::BadValue, "training set is empty");
  TrainState state;
  double lr = config.learning_rate;
  double last_dp = std::numeric_limits<double>::infinity();
  Matrix prev_W;

  for (int i = 0; i < config.max_alternations; ++i) {
    const NetworkPass pass = run_forward(set, params, config.threads);
    SvmModel model = train_svms(pass.features, set.labels, config.svm);
    const double loss = hinge_loss(model, pass.features, set.labels);
    if (!std::isfinite(loss)) throw Error(ErrorKind::NonFinite, "objective became non-finite at alternation " + std::to_string(i));
    if (!state.loss_history.empty() && loss > config.divergence_factor * state.loss_history.front())
      throw Error(ErrorKind::DivergenceDetected, "objective " + format_exact(loss) + " exceeds " + format_exact(config.divergence_factor) +
                                                     "x the initial value at alternation " + std::to_string(i));
    const double dw = prev_W.size() ? relative_change((model.W - prev_W).squaredNorm(), prev_W.squaredNorm())
                                    : std::numeric_limits<double>::infinity();
    state.loss_history.push_back(loss);
    state.re_history.push_back(mean_top_relative_error(pass));
    state.dw_history.push_back(dw);
    state.alternations = i + 1;
    prev_W = model.W;

    const bool converged = i > 0 && std::max(last_dp, dw) < config.stop_tolerance;
    const bool last = i + 1 == config.max_alternations;
    double dp = 0;
    if (!converged && !last) {
      const auto grads = context_gradient(set, params, model, pass, config.threads);
      double diff_sq = 0, base_sq = 0;
      for (int s = 0; s < params.stack_count(); ++s) {
        auto& st = params.stacks[static_cast<std::size_t>(s)];
        const auto& g = grads[static_cast<std::size_t>(s)];
        const double gnorm = gradient_norm(g, params.shared_layers);
        const double scale = config.clip_norm > 0 && gnorm > config.clip_norm ? config.clip_norm / gnorm : 1.0;
        log(LogLevel::Debug, "alternation ", i, " stack ", s, " gradient norm ", gnorm, scale < 1 ? " (clipped)" : "");
        const int distinct = params.shared_layers ? std::min(1, st.depth()) : st.depth();
        for (int t = 0; t < st.depth(); ++t)
          for (std::size_t c = 0; c < st.layers[static_cast<std::size_t>(t)].size(); ++c) {
            Matrix& P = st.layers[static_cast<std::size_t>(t)][c];
            const Matrix step = (lr * scale) * g.layers[static_cast<std::size_t>(t)][c];
            if (t < distinct) {
              diff_sq += step.squaredNorm();
              base_sq += P.squaredNorm();
            }
            P -= step;
          }
        apply_support(st, params.hood);
      }
      dp = relative_change(diff_sq, base_sq);
      lr *= config.lr_decay;
      if (config.on_update) config.on_update(i, params);
    }
    state.dp_history.push_back(dp);
    if (config.log != nullptr)
      *config.log << "alt " << i << " loss " << format_exact(loss) << " dP " << format_exact(dp) << " dW " << format_exact(dw) << '\n';
    state.model = std::move(model);
    if (converged) {
      state.converged = true;
      break;
    }
    last_dp = dp;
  }
  state.params = std::move(params);
  return state;
}

inline ContextParams initial_params(const TrainingSet& set, const NeighborhoodSystem& hood, const TrainConfig& config) {
  ContextParams params = make_context(hood, config.variant, config.depth, 0.0, std::max(1, set.concepts()), config.classwise_shared);
  params.pooling = config.pooling;
  assign_gamma(params, set.maps, config);
  return params;
}

// Global context, layerwise or stationary according to config.variant.
inline TrainState alternate(const TrainingSet& set, const NeighborhoodSystem& hood, const TrainConfig& config) {
  for (int k = 0; k < set.concepts(); ++k) {
    bool any = false;
    for (Index p = 0; p < set.labels.rows(); ++p) any = any || set.labels(p, k) > 0;
    if (!any) throw Error(ErrorKind::NoPositives, "concept " + std::to_string(k) + " has no positive training sample");
  }
  return alternate_from(set, initial_params(set, hood, config), config);
}

inline TrainState train_stationary(const TrainingSet& set, const NeighborhoodSystem& hood, TrainConfig config) {
  config.variant = Variant::Stationary;
  return alternate(set, hood, config);
}

// Per-class context stacks, each a copy of `warm` before the first alternation.
inline TrainState train_classwise(const TrainingSet& set, const ContextParams& warm, TrainConfig config) {
  config.variant = Variant::Classwise;
  return alternate_from(set, classwise_from(warm, set.concepts()), config);
}

// ---------------------------------------------------------------------------
// Gradient check: analytic dE/dP through the full pipeline (frozen SVM weights,
// pooling, layers) against central finite differences of the objective.

struct GradcheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t entries = 0;
  double step = 1e-5;
  double weight_scale = 1;   // factor applied to the frozen weights to clear the hinge kink
  double min_kink_gap = 0;   // smallest |1 - y f| after scaling
  double floor = 0;          // lower bound of the relative-error denominator
  int active_terms = 0;      // hinge terms inside the margin at the chosen scale
  bool kink_clear = true;
};

inline double objective_at(const TrainingSet& set, const ContextParams& params, const SvmModel& model) {
  const auto pass = run_forward(set, params, 1, false);
  return hinge_loss(model, pass.features, set.labels);
}

inline double min_margin_gap(const SvmModel& model, const std::vector<Matrix>& features, const IntMatrix& labels) {
  double gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < model.concepts(); ++k) {
    const Matrix& X = features_for(features, k);
    for (Index p = 0; p < X.cols(); ++p) gap = std::min(gap, std::abs(1.0 - labels(p, k) * model.W.col(k).dot(X.col(p))));
  }
  return gap;
}

inline GradcheckReport gradcheck(const TrainingSet& set, const ContextParams& params, SvmModel model, double step = 1e-5,
                                 double kink_gap = 0.05) {
  GradcheckReport rep;
  rep.step = step;
  const auto pass = run_forward(set, params, 1);
  // Rescale the frozen weights until every margin clears the kink by kink_gap.
  // Scales are tried in order of distance from 1; one that also leaves some
  // hinge term active is preferred, so the check is not vacuous.
  std::vector<double> scales{1.0};
  for (int i = 1; i <= 120; ++i) {
    scales.push_back(std::pow(0.98, i));
    scales.push_back(std::pow(1.0 / 0.98, i));
  }
  auto active_terms = [&](const SvmModel& m) {
    int n = 0;
    for (int k = 0; k < m.concepts(); ++k) {
      const Matrix& X = features_for(pass.features, k);
      for (Index p = 0; p < X.cols(); ++p) n += 1.0 - set.labels(p, k) * m.W.col(k).dot(X.col(p)) > 0;
    }
    return n;
  };
  const SvmModel base = model;
  rep.kink_clear = false;
  std::optional<double> fallback;
  for (double s : scales) {
    model.W = base.W * s;
    if (min_margin_gap(model, pass.features, set.labels) < kink_gap) continue;
    if (active_terms(model) > 0) {
      rep.weight_scale = s;
      rep.kink_clear = true;
      break;
    }
    if (!fallback) fallback = s;
  }
  if (!rep.kink_clear && fallback) {
    rep.weight_scale = *fallback;
    rep.kink_clear = true;
  }
  model.W = base.W * rep.weight_scale;
  rep.min_kink_gap = min_margin_gap(model, pass.features, set.labels);
  rep.active_terms = active_terms(model);

  // Central differences resolve about eps * |E| / step; entries smaller than
  // this floor are judged against it rather than against their own size.
  rep.floor = 1e-4 * std::max(1.0, std::abs(hinge_loss(model, pass.features, set.labels)));
  const auto analytic = context_gradient(set, params, model, pass, 1);
  ContextParams probe = params;
  for (int s = 0; s < params.stack_count(); ++s) {
    const auto& st = params.stacks[static_cast<std::size_t>(s)];
    const int distinct = params.shared_layers ? std::min(1, st.depth()) : st.depth();
    for (int t = 0; t < distinct; ++t)
      for (int c = 0; c < params.directions(); ++c) {
        const Matrix& mask = params.hood.masks[static_cast<std::size_t>(c)];
        for (Index x = 0; x < mask.rows(); ++x)
          for (Index y = 0; y < mask.cols(); ++y) {
            if (mask(x, y) == 0.0) continue;
            auto set_entry = [&](double v) {
              auto& pst = probe.stacks[static_cast<std::size_t>(s)];
              if (params.shared_layers) {
                for (auto& layer : pst.layers) layer[static_cast<std::size_t>(c)](x, y) = v;
              } else {
                pst.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)](x, y) = v;
              }
            };
            const double v0 = st.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)](x, y);
            set_entry(v0 + step);
            const double up = objective_at(set, probe, model);
            set_entry(v0 - step);
            const double down = objective_at(set, probe, model);
            set_entry(v0);
            const double numeric = (up - down) / (2 * step);
            const double a = analytic[static_cast<std::size_t>(s)].layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)](x, y);
            const double abs_err = std::abs(a - numeric);
            const double scale = std::max({std::abs(a), std::abs(numeric), rep.floor});
            const double rel = scale > 0 ? abs_err / scale : 0.0;
            rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
            rep.max_rel_error = std::max(rep.max_rel_error, rel);
            ++rep.entries;
          }
      }
  }
  return rep;
}

// Random perturbation of the context on its support, for gradient checks and tests.
inline void perturb_context(ContextParams& params, std::uint64_t seed, double amplitude) {
  for (std::size_t s = 0; s < params.stacks.size(); ++s) {
    auto& st = params.stacks[s];
    const int distinct = params.shared_layers ? std::min(1, st.depth()) : st.depth();
    for (int t = 0; t < distinct; ++t) {
      auto rng = stream_rng(seed, {s, static_cast<std::uint64_t>(t)});
      for (auto& P : st.layers[static_cast<std::size_t>(t)])
        for (Index j = 0; j < P.cols(); ++j)
          for (Index i = 0; i < P.rows(); ++i) P(i, j) += amplitude * (2.0 * uniform01(rng) - 1.0);
    }
    if (params.shared_layers)
      for (int t = 1; t < st.depth(); ++t) st.layers[static_cast<std::size_t>(t)] = st.layers.front();
    apply_support(st, params.hood);
  }
}

// Gradient check on a fresh context built from the config: normalized
// neighborhood plus seeded noise, SVM weights fitted once and then frozen.
inline GradcheckReport gradcheck(const TrainingSet& set, const NeighborhoodSystem& hood, const TrainConfig& config, double step = 1e-5,
                                 double kink_gap = 0.05) {
  ContextParams params = initial_params(set, hood, config);
  perturb_context(params, config.seed, 0.3);
  const auto pass = run_forward(set, params, 1, false);
  const SvmModel model = train_svms(pass.features, set.labels, config.svm);
  return gradcheck(set, params, model, step, kink_gap);
}

}  // namespace ctxkernel
