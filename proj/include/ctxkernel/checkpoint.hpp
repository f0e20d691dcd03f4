#pragma once

#include "ctxkernel/context_io.hpp"
#include "ctxkernel/featmap.hpp"
#include "ctxkernel/svm.hpp"
#include "ctxkernel/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

namespace ctxkernel {

// A checkpoint is a directory:
//   meta.txt      key=value description (initial map, shapes, concepts)
//   context.ctx   context export
//   svm.bin       per-concept weights
//   ensemble.bin  optional ensemble members
//   history.txt   per-alternation log lines
struct Checkpoint {
  InitMapKind init_map;
  int d0 = 0;
  std::vector<std::string> concept_names;
  TrainState state;
  SvmConfig svm_config;
  std::optional<EnsembleModel> ensemble;

  Index map_dim() const { return map_dimension(init_map.mapped_dim(d0), state.params.directions(), state.params.depth()); }
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "meta.txt", std::ios::trunc);
    if (!os) throw Error(ErrorKind::IoError, "cannot write " + (dir / "meta.txt").string());
    os << "format=1\n";
    os << "init_map=" << to_string(ck.init_map) << '\n';
    os << "hi_levels=" << ck.init_map.levels << '\n';
    os << "hi_max=" << format_exact(ck.init_map.max_value) << '\n';
    os << "l2_normalize=" << (ck.init_map.l2_normalize ? 1 : 0) << '\n';
    os << "d0=" << ck.d0 << '\n';
    os << "map_dim=" << ck.map_dim() << '\n';
    os << "concepts=";
    for (std::size_t k = 0; k < ck.concept_names.size(); ++k) os << (k ? "," : "") << ck.concept_names[k];
    os << '\n';
    os << "alternations=" << ck.state.alternations << '\n';
    os << "converged=" << (ck.state.converged ? 1 : 0) << '\n';
    if (!os) throw Error(ErrorKind::IoError, "write failed for meta.txt");
  }
  export_context(dir / "context.ctx", ck.state.params);
  save_model(dir / "svm.bin", ck.state.model, ck.svm_config);
  if (ck.ensemble) {
    save_ensemble(dir / "ensemble.bin", *ck.ensemble);
  } else {
    std::filesystem::remove(dir / "ensemble.bin");
  }
  std::ofstream hs(dir / "history.txt", std::ios::trunc);
  if (!hs) throw Error(ErrorKind::IoError, "cannot write history.txt");
  const auto& st = ck.state;
  for (std::size_t i = 0; i < st.loss_history.size(); ++i) {
    hs << "alt " << i << " loss " << format_exact(st.loss_history[i]) << " dP " << format_exact(i < st.dp_history.size() ? st.dp_history[i] : 0.0)
       << " dW " << format_exact(i < st.dw_history.size() ? st.dw_history[i] : 0.0) << '\n';
    if (i < st.re_history.size()) hs << "re " << i << ' ' << format_exact(st.re_history[i]) << '\n';
  }
}

inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::MissingFile, "checkpoint directory " + dir.string());
  const auto meta = read_key_values(dir / "meta.txt");
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw Error(ErrorKind::CheckpointMismatch, "meta.txt lacks '" + key + "'");
    return it->second;
  };
  Checkpoint ck;
  const std::string kind = get("init_map");
  if (kind == "poly2") {
    ck.init_map.tag = InitMapKind::Tag::Poly2;
  } else if (kind == "hi") {
    ck.init_map.tag = InitMapKind::Tag::HistogramIntersection;
  } else if (kind != "linear") {
    throw Error(ErrorKind::CheckpointMismatch, "unknown init map '" + kind + "'");
  }
  ck.init_map.levels = static_cast<int>(parse_int(get("hi_levels"), "meta.txt"));
  ck.init_map.max_value = parse_double(get("hi_max"), "meta.txt");
  ck.init_map.l2_normalize = get("l2_normalize") == "1";
  ck.d0 = static_cast<int>(parse_int(get("d0"), "meta.txt"));
  ck.concept_names = detail::split_commas(get("concepts"));
  ck.state.alternations = static_cast<int>(parse_int(get("alternations"), "meta.txt"));
  ck.state.converged = get("converged") == "1";
  ck.state.params = import_context(dir / "context.ctx");
  ck.state.model = load_model(dir / "svm.bin", &ck.svm_config);
  if (std::filesystem::exists(dir / "ensemble.bin")) ck.ensemble = load_ensemble(dir / "ensemble.bin");

  std::ifstream hs(dir / "history.txt");
  std::string line;
  while (std::getline(hs, line)) {
    std::istringstream iss(line);
    std::string tag;
    iss >> tag;
    if (tag == "alt") {
      std::string i, l, lv, p, pv, w, wv;
      iss >> i >> l >> lv >> p >> pv >> w >> wv;
      ck.state.loss_history.push_back(parse_double(lv, "history.txt"));
      ck.state.dp_history.push_back(parse_double(pv, "history.txt"));
      ck.state.dw_history.push_back(parse_double(wv, "history.txt"));
    } else if (tag == "re") {
      std::string i, v;
      iss >> i >> v;
      ck.state.re_history.push_back(parse_double(v, "history.txt"));
    }
  }
  const auto expected = static_cast<Index>(parse_int(get("map_dim"), "meta.txt"));
  if (ck.state.model.dimension() != expected || ck.map_dim() != expected)
    throw Error(ErrorKind::CheckpointMismatch, "svm.bin dimension disagrees with meta.txt");
  return ck;
}

}  // namespace ctxkernel
