#pragma once

#include "ctxkernel/common.hpp"
#include "ctxkernel/context.hpp"
#include "ctxkernel/featmap.hpp"
#include "ctxkernel/svm.hpp"
#include "ctxkernel/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace ctxkernel {

enum class Protocol { ImageClef, Corel };

inline Protocol parse_protocol(std::string_view s) {
  if (s == "imageclef") return Protocol::ImageClef;
  if (s == "corel") return Protocol::Corel;
  throw Error(ErrorKind::Config, "unknown protocol '" + std::string(s) + "' (expected imageclef|corel)");
}

inline std::string_view to_string(Protocol p) { return p == Protocol::Corel ? "corel" : "imageclef"; }

// Everything a CLI run needs. Read from a flat "key = value" file; '#' starts a comment.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path output;
  std::filesystem::path checkpoint;
  int radius = 1;
  std::string init_map = "linear";  // linear | poly2 | hi
  int hi_levels = 16;
  std::optional<double> hi_max;     // default: training maximum
  bool l2_normalize = false;
  TrainConfig train;
  bool ensemble = false;
  EnsembleConfig ensemble_config;
  Protocol protocol = Protocol::ImageClef;
  int top_n = 5;
  double threshold = 0.0;

  void set(const std::string& key, const std::string& value, const std::string& where) {
    auto num = [&] { return parse_double(value, where); };
    auto integer = [&] { return parse_int(value, where); };
    auto flag = [&] {
      if (value == "1" || value == "true" || value == "yes") return true;
      if (value == "0" || value == "false" || value == "no") return false;
      throw Error(ErrorKind::Config, where + ": expected a boolean for '" + key + "'");
    };
    try {
      if (key == "manifest") manifest = value;
      else if (key == "output") output = value;
      else if (key == "checkpoint") checkpoint = value;
      else if (key == "radius") radius = static_cast<int>(integer());
      else if (key == "init_map") init_map = value;
      else if (key == "hi_levels") hi_levels = static_cast<int>(integer());
      else if (key == "hi_max") hi_max = num();
      else if (key == "l2_normalize") l2_normalize = flag();
      else if (key == "variant") train.variant = parse_variant(value);
      else if (key == "classwise_shared") train.classwise_shared = flag();
      else if (key == "depth") train.depth = static_cast<int>(integer());
      else if (key == "gamma_factor") train.gamma_factor = num();
      else if (key == "gamma") train.gamma = num();
      else if (key == "mean_pooling") train.pooling = flag() ? Pooling::Mean : Pooling::Sum;
      else if (key == "svm_cost") train.svm.cost = num();
      else if (key == "svm_costs") {
        train.svm.costs.clear();
        for (const auto& c : detail::split_commas(value)) train.svm.costs.push_back(parse_double(c, where));
      }
      else if (key == "svm_max_passes") train.svm.max_passes = static_cast<int>(integer());
      else if (key == "svm_tol") train.svm.tolerance = num();
      else if (key == "learning_rate") train.learning_rate = num();
      else if (key == "lr_decay") train.lr_decay = num();
      else if (key == "max_alternations") train.max_alternations = static_cast<int>(integer());
      else if (key == "stop_tol") train.stop_tolerance = num();
      else if (key == "clip_norm") train.clip_norm = num();
      else if (key == "seed") train.seed = static_cast<std::uint64_t>(integer());
      else if (key == "threads") train.threads = static_cast<int>(integer());
      else if (key == "ensemble") ensemble = flag();
      else if (key == "ensemble_members") ensemble_config.members = static_cast<int>(integer());
      else if (key == "ensemble_neg_ratio") ensemble_config.neg_ratio = num();
      else if (key == "protocol") protocol = parse_protocol(value);
      else if (key == "top_n") top_n = static_cast<int>(integer());
      else if (key == "threshold") threshold = num();
      else throw Error(ErrorKind::Config, where + ": unknown key '" + key + "'");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Config) throw;
      throw Error(ErrorKind::Config, e.detail());
    }
  }

  InitMapKind init_map_kind(double train_max) const {
    InitMapKind k;
    if (init_map == "poly2") {
      k = InitMapKind::poly2();
    } else if (init_map == "hi") {
      k = InitMapKind::hi(hi_levels, hi_max.value_or(train_max));
    } else if (init_map != "linear") {
      throw Error(ErrorKind::Config, "unknown init map '" + init_map + "' (expected linear|poly2|hi)");
    }
    k.l2_normalize = l2_normalize;
    return k;
  }

  void validate() const {
    if (radius < 1) throw Error(ErrorKind::Config, "radius must be >= 1");
    if (hi_levels < 1) throw Error(ErrorKind::Config, "hi_levels must be >= 1");
    if (hi_max && !(*hi_max > 0)) throw Error(ErrorKind::Config, "hi_max must be > 0");
    if (!(train.svm.cost > 0)) throw Error(ErrorKind::Config, "svm_cost must be > 0");
    for (double c : train.svm.costs)
      if (!(c > 0)) throw Error(ErrorKind::Config, "svm_costs entries must be > 0");
    if (top_n < 1) throw Error(ErrorKind::Config, "top_n must be >= 1");
    if (ensemble_config.members < 1) throw Error(ErrorKind::Config, "ensemble_members must be >= 1");
    if (!(ensemble_config.neg_ratio > 0)) throw Error(ErrorKind::Config, "ensemble_neg_ratio must be > 0");
    train.validate();
  }
};

inline void read_run_config(const std::filesystem::path& path, RunConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Config, "cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw Error(ErrorKind::Config, where + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  // Relative paths in the file are taken relative to the file itself.
  const auto base = path.parent_path();
  for (auto* p : {&cfg.manifest, &cfg.output, &cfg.checkpoint})
    if (!p->empty() && p->is_relative()) *p = base / *p;
}

}  // namespace ctxkernel
