#pragma once

#include "ctxkernel/checkpoint.hpp"
#include "ctxkernel/config.hpp"
#include "ctxkernel/metrics.hpp"

#include <ostream>
#include <string>

namespace ctxkernel {

// Dataset plus initial maps as seen by a run.
struct PreparedData {
  Dataset dataset;
  InitMapKind init_map;
  std::vector<Matrix> maps;
  NeighborhoodSystem hood;
};

inline PreparedData prepare(const RunConfig& cfg, const InitMapKind* fixed_map = nullptr) {
  if (cfg.manifest.empty()) throw Error(ErrorKind::Config, "no manifest given");
  PreparedData d;
  d.dataset = load_dataset(cfg.manifest);
  d.init_map = fixed_map != nullptr ? *fixed_map : cfg.init_map_kind(max_train_feature(d.dataset));
  d.maps = init_maps(d.dataset, d.init_map);
  d.hood = build_neighborhood(d.dataset.grid, cfg.radius);
  return d;
}

struct ValidationReport {
  std::size_t samples = 0, train = 0, test = 0;
  int width = 0, height = 0, d0 = 0, mapped_dim = 0, directions = 0, depth = 0;
  Index forecast_dim = 0;
  double max_gamma = 0;
  std::vector<std::string> concepts;
  std::vector<std::size_t> positives;  // training positives per concept

  std::string text() const {
    std::ostringstream os;
    os << "samples " << samples << " train " << train << " test " << test << '\n';
    os << "grid " << width << ' ' << height << " cells " << width * height << '\n';
    os << "d0 " << d0 << " mapped " << mapped_dim << " directions " << directions << " depth " << depth << '\n';
    os << "D_T " << forecast_dim << '\n';
    os << "max_gamma " << format_exact(max_gamma) << '\n';
    for (std::size_t k = 0; k < concepts.size(); ++k) os << "concept " << concepts[k] << " train_positives " << positives[k] << '\n';
    return os.str();
  }
};

inline ValidationReport validate_run(const RunConfig& cfg) {
  cfg.validate();
  const PreparedData d = prepare(cfg);
  ValidationReport r;
  r.samples = d.dataset.samples.size();
  r.train = d.dataset.indices(Split::Train).size();
  r.test = d.dataset.indices(Split::Test).size();
  r.width = d.dataset.grid.width;
  r.height = d.dataset.grid.height;
  r.d0 = d.dataset.d0;
  r.mapped_dim = d.init_map.mapped_dim(d.dataset.d0);
  r.directions = d.hood.directions();
  r.depth = cfg.train.depth;
  r.forecast_dim = map_dimension(r.mapped_dim, r.directions, r.depth);
  const ContextParams probe = make_context(d.hood, Variant::Layerwise, cfg.train.depth, 0.0);
  std::vector<Matrix> train_maps;
  for (auto i : d.dataset.indices(Split::Train)) train_maps.push_back(d.maps[i]);
  r.max_gamma = dataset_max_gamma(train_maps, probe);
  r.concepts = d.dataset.concept_names;
  const IntMatrix labels = d.dataset.label_matrix(d.dataset.indices(Split::Train));
  for (Index k = 0; k < labels.cols(); ++k) r.positives.push_back(static_cast<std::size_t>((labels.col(k).array() > 0).count()));
  return r;
}

// Trains the configured variant; classwise runs first train the global
// context (layerwise, or stationary when classwise_shared) and warm-start from it.
inline Checkpoint train_run(const RunConfig& cfg, std::ostream* log_stream = nullptr) {
  cfg.validate();
  const PreparedData d = prepare(cfg);
  const TrainingSet set = make_training_set(d.dataset, d.maps, Split::Train);
  if (set.size() == 0) throw Error(ErrorKind::BadValue, "no training samples in " + cfg.manifest.string());
  TrainConfig tc = cfg.train;
  tc.log = log_stream;

  Checkpoint ck;
  ck.init_map = d.init_map;
  ck.d0 = d.dataset.d0;
  ck.concept_names = d.dataset.concept_names;
  ck.svm_config = tc.svm;
  if (tc.variant == Variant::Classwise) {
    TrainConfig global = tc;
    global.variant = tc.classwise_shared ? Variant::Stationary : Variant::Layerwise;
    const TrainState warm = alternate(set, d.hood, global);
    ck.state = train_classwise(set, warm.params, tc);
  } else {
    ck.state = alternate(set, d.hood, tc);
  }
  if (cfg.ensemble) {
    EnsembleConfig ens = cfg.ensemble_config;
    ens.seed = tc.seed;
    const NetworkPass pass = run_forward(set, ck.state.params, tc.threads, false);
    ck.ensemble = train_ensembles(pass.features, set.labels, ens, tc.svm);
  }
  return ck;
}

// Scores one split of the configured dataset with a trained checkpoint.
inline MetricReport evaluate_run(const RunConfig& cfg, const Checkpoint& ck, Split split = Split::Test) {
  const PreparedData d = prepare(cfg, &ck.init_map);
  if (d.dataset.d0 != ck.d0)
    throw Error(ErrorKind::CheckpointMismatch, "dataset d0 " + std::to_string(d.dataset.d0) + " differs from checkpoint d0 " + std::to_string(ck.d0));
  if (static_cast<int>(d.dataset.concept_names.size()) != ck.state.model.concepts())
    throw Error(ErrorKind::CheckpointMismatch, "dataset has " + std::to_string(d.dataset.concept_names.size()) + " concepts, checkpoint " +
                                                   std::to_string(ck.state.model.concepts()));
  if (d.dataset.grid.cells() != ck.state.params.cells())
    throw Error(ErrorKind::CheckpointMismatch, "dataset grid has " + std::to_string(d.dataset.grid.cells()) + " cells, checkpoint context " +
                                                   std::to_string(ck.state.params.cells()));
  const TrainingSet set = make_training_set(d.dataset, d.maps, split);
  if (set.size() == 0) throw Error(ErrorKind::BadValue, "no " + std::string(to_string(split)) + " samples to evaluate");
  const NetworkPass pass = run_forward(set, ck.state.params, cfg.train.threads, false);
  if (pass.features.front().rows() != ck.state.model.dimension())
    throw Error(ErrorKind::CheckpointMismatch, "feature dimension " + std::to_string(pass.features.front().rows()) + " differs from model dimension " +
                                                   std::to_string(ck.state.model.dimension()));
  Matrix scores;
  if (cfg.ensemble) {
    if (!ck.ensemble) throw Error(ErrorKind::CheckpointMismatch, "ensemble scoring requested but the checkpoint holds no ensemble");
    scores = decision_scores(*ck.ensemble, pass.features);
  } else {
    scores = decision_scores(ck.state.model, pass.features);
  }
  return cfg.protocol == Protocol::Corel ? corel_report(scores, set.labels, cfg.top_n) : imageclef_report(scores, set.labels, cfg.threshold);
}

inline GradcheckReport gradcheck_run(const RunConfig& cfg, std::size_t limit) {
  cfg.validate();
  const PreparedData d = prepare(cfg);
  TrainingSet set = make_training_set(d.dataset, d.maps, Split::Train);
  if (limit > 0 && set.size() > limit) {
    set.maps.resize(limit);
    set.labels = set.labels.topRows(static_cast<Index>(limit)).eval();
  }
  if (set.size() == 0) throw Error(ErrorKind::BadValue, "no training samples for the gradient check");
  return gradcheck(set, d.hood, cfg.train);
}

}  // namespace ctxkernel
