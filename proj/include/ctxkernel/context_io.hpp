#pragma once

#include "ctxkernel/context.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace ctxkernel {

// Text export of context weights as direction-tagged edge lists:
//   ctx <variant> <layer|shared> [class] <x> <x'> <dir> <weight>
// preceded by a header (grid, directions, radius, gamma, depth, ...).
// Weights use 17 significant digits so import reproduces them exactly.

inline void export_context(std::ostream& os, const ContextParams& params) {
  os << "# ctxkernel context\n";
  os << "grid " << params.hood.grid.width << ' ' << params.hood.grid.height << '\n';
  os << "directions " << params.directions() << '\n';
  os << "radius " << params.hood.radius << '\n';
  os << "gamma " << format_exact(params.gamma) << '\n';
  os << "depth " << params.depth() << '\n';
  os << "variant " << to_string(params.variant) << '\n';
  os << "sharing " << (params.shared_layers ? "shared" : "per-layer") << '\n';
  os << "pooling " << (params.pooling == Pooling::Mean ? "mean" : "sum") << '\n';
  os << "stacks " << params.stack_count() << '\n';
  const bool classwise = params.variant == Variant::Classwise;
  for (int k = 0; k < params.stack_count(); ++k) {
    const auto& st = params.stacks[static_cast<std::size_t>(k)];
    const int layers = params.shared_layers ? std::min(1, st.depth()) : st.depth();
    for (int t = 0; t < layers; ++t)
      for (int c = 0; c < params.directions(); ++c) {
        const Matrix& P = st.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
        for (Index x = 0; x < P.rows(); ++x)
          for (Index y = 0; y < P.cols(); ++y) {
            const double w = P(x, y);
            if (w == 0.0 && !std::signbit(w)) continue;
            os << "ctx " << to_string(params.variant) << ' ';
            if (params.shared_layers) {
              os << "shared";
            } else {
              os << t;
            }
            if (classwise) os << ' ' << k;
            os << ' ' << x << ' ' << y << ' ' << direction_name(c) << ' ' << format_exact(w) << '\n';
          }
      }
  }
}

inline void export_context(const std::filesystem::path& path, const ContextParams& params) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  export_context(os, params);
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline ContextParams import_context(std::istream& is, const std::string& source = "<stream>") {
  int W = 0, H = 0, C = -1, radius = 0, depth = 0, stacks = 0;
  double gamma = 0;
  Variant variant = Variant::Layerwise;
  bool shared = false;
  Pooling pooling = Pooling::Sum;
  bool header_done = false;
  ContextParams params;
  std::string line;
  int lineno = 0;
  auto where = [&] { return source + ":" + std::to_string(lineno); };

  auto finish_header = [&] {
    if (W < 1 || H < 1 || depth < 1 || stacks < 1 || radius < 1) throw Error(ErrorKind::BadValue, where() + ": incomplete context header");
    params = make_context(build_neighborhood(GridSpec(W, H), radius), variant, depth, gamma, stacks, shared);
    if (C != params.directions()) throw Error(ErrorKind::BadValue, where() + ": unsupported direction count");
    params.shared_layers = shared;
    params.pooling = pooling;
    params.stacks.assign(static_cast<std::size_t>(stacks), ContextStack::zeros_like(params.stacks.front()));
    header_done = true;
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream iss(line);
    std::vector<std::string> tok;
    for (std::string t; iss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const auto& key = tok[0];
    if (key != "ctx") {
      if (header_done) throw Error(ErrorKind::BadValue, where() + ": header line after edges");
      if (tok.size() < 2) throw Error(ErrorKind::BadValue, where() + ": missing value");
      if (key == "grid" && tok.size() == 3) {
        W = static_cast<int>(parse_int(tok[1], where()));
        H = static_cast<int>(parse_int(tok[2], where()));
      } else if (key == "directions") {
        C = static_cast<int>(parse_int(tok[1], where()));
      } else if (key == "radius") {
        radius = static_cast<int>(parse_int(tok[1], where()));
      } else if (key == "gamma") {
        gamma = parse_double(tok[1], where());
      } else if (key == "depth") {
        depth = static_cast<int>(parse_int(tok[1], where()));
      } else if (key == "variant") {
        variant = parse_variant(tok[1]);
      } else if (key == "sharing") {
        shared = tok[1] == "shared";
      } else if (key == "pooling") {
        pooling = tok[1] == "mean" ? Pooling::Mean : Pooling::Sum;
      } else if (key == "stacks") {
        stacks = static_cast<int>(parse_int(tok[1], where()));
      } else {
        throw Error(ErrorKind::BadValue, where() + ": unknown header key '" + key + "'");
      }
      continue;
    }
    if (!header_done) finish_header();
    const bool classwise = params.variant == Variant::Classwise;
    const std::size_t expected = classwise ? 8 : 7;
    if (tok.size() != expected) throw Error(ErrorKind::BadValue, where() + ": malformed ctx line");
    if (parse_variant(tok[1]) != params.variant) throw Error(ErrorKind::BadValue, where() + ": variant differs from header");
    std::size_t i = 2;
    const std::string layer_tok = tok[i++];
    const int k = classwise ? static_cast<int>(parse_int(tok[i++], where())) : 0;
    const auto x = static_cast<Index>(parse_int(tok[i++], where()));
    const auto y = static_cast<Index>(parse_int(tok[i++], where()));
    const int c = parse_direction(tok[i++]);
    const double w = parse_double(tok[i++], where());
    if (k < 0 || k >= params.stack_count() || x < 0 || y < 0 || x >= params.cells() || y >= params.cells())
      throw Error(ErrorKind::BadValue, where() + ": index out of range");
    if (params.hood.masks[static_cast<std::size_t>(c)](x, y) == 0.0) throw Error(ErrorKind::BadValue, where() + ": edge outside the neighborhood support");
    auto& st = params.stacks[static_cast<std::size_t>(k)];
    if (layer_tok == "shared") {
      if (!params.shared_layers) throw Error(ErrorKind::BadValue, where() + ": 'shared' edge in a per-layer context");
      for (auto& layer : st.layers) layer[static_cast<std::size_t>(c)](x, y) = w;
    } else {
      const auto t = parse_int(layer_tok, where());
      if (params.shared_layers || t < 0 || t >= st.depth()) throw Error(ErrorKind::BadValue, where() + ": bad layer index");
      st.layers[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)](x, y) = w;
    }
  }
  if (!header_done) finish_header();
  return params;
}

inline ContextParams import_context(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  return import_context(is, path.string());
}

}  // namespace ctxkernel
