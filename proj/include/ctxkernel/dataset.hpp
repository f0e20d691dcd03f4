#pragma once

#include "ctxkernel/common.hpp"
#include "ctxkernel/grid.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ctxkernel {

enum class Split { Train, Test };

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct ImageSample {
  std::string id;
  Split split = Split::Train;
  Matrix features;               // d0 x n, column j describes cell j
  std::vector<int> labels;       // K values in {+1, -1}
  std::string feature_file;      // as written in the manifest (relative or absolute)
};

struct Dataset {
  GridSpec grid;
  int d0 = 0;
  std::vector<std::string> concept_names;
  std::vector<ImageSample> samples;

  int concepts() const noexcept { return static_cast<int>(concept_names.size()); }
  int cells() const noexcept { return grid.cells(); }

  std::vector<std::size_t> indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == split) out.push_back(i);
    return out;
  }

  // N x K label matrix over the given sample indices.
  IntMatrix label_matrix(const std::vector<std::size_t>& idx) const {
    IntMatrix y(static_cast<Index>(idx.size()), concepts());
    for (std::size_t p = 0; p < idx.size(); ++p)
      for (int k = 0; k < concepts(); ++k) y(static_cast<Index>(p), k) = samples[idx[p]].labels[static_cast<std::size_t>(k)];
    return y;
  }
};

// ---------------------------------------------------------------------------
// Feature files: "CKNF", u64 rows, u64 cols, rows*cols f64 column-major, all LE.

inline constexpr std::string_view kFeatureMagic = "CKNF";

inline void write_feature_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  binary::write_magic(os, kFeatureMagic);
  binary::write_u64(os, static_cast<std::uint64_t>(m.rows()));
  binary::write_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) binary::write_f64(os, m(i, j));
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline Matrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  if (!binary::read_magic(is, kFeatureMagic)) throw Error(ErrorKind::BadValue, path.string() + ": bad magic");
  const auto rows = binary::read_u64(is);
  const auto cols = binary::read_u64(is);
  if (rows > (1u << 30) || cols > (1u << 30)) throw Error(ErrorKind::BadValue, path.string() + ": implausible shape");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  try {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = binary::read_f64(is);
  } catch (const Error&) {
    throw Error(ErrorKind::IoError, path.string() + ": truncated feature file");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Manifest:
//   grid W H
//   d0 D
//   concepts a,b,c
//   sample <id> <train|test> <feature_file> <+-...>

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream iss(line);
  std::vector<std::string> out;
  for (std::string tok; iss >> tok;) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw Error(ErrorKind::MissingFile, manifest_path.string());
  const auto base = manifest_path.parent_path();

  Dataset ds;
  bool have_grid = false, have_d0 = false, have_concepts = false;
  std::string line;
  int lineno = 0;
  auto where = [&] { return manifest_path.string() + ":" + std::to_string(lineno); };

  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const auto& key = tok[0];
    if (key == "grid") {
      if (tok.size() != 3) throw Error(ErrorKind::BadValue, where() + ": expected 'grid W H'");
      ds.grid = GridSpec(static_cast<int>(parse_int(tok[1], where())), static_cast<int>(parse_int(tok[2], where())));
      have_grid = true;
    } else if (key == "d0") {
      if (tok.size() != 2) throw Error(ErrorKind::BadValue, where() + ": expected 'd0 D'");
      ds.d0 = static_cast<int>(parse_int(tok[1], where()));
      if (ds.d0 < 1) throw Error(ErrorKind::BadValue, where() + ": d0 must be positive");
      have_d0 = true;
    } else if (key == "concepts") {
      if (tok.size() != 2) throw Error(ErrorKind::BadValue, where() + ": expected 'concepts a,b,...'");
      ds.concept_names = detail::split_commas(tok[1]);
      have_concepts = true;
    } else if (key == "sample") {
      if (!have_grid || !have_d0 || !have_concepts)
        throw Error(ErrorKind::BadValue, where() + ": sample before grid/d0/concepts header");
      if (tok.size() != 5) throw Error(ErrorKind::BadValue, where() + ": expected 'sample <id> <split> <file> <labels>'");
      ImageSample s;
      s.id = tok[1];
      if (tok[2] == "train") {
        s.split = Split::Train;
      } else if (tok[2] == "test") {
        s.split = Split::Test;
      } else {
        throw Error(ErrorKind::BadValue, where() + ": split must be train or test");
      }
      s.feature_file = tok[3];
      const std::string& lab = tok[4];
      if (static_cast<int>(lab.size()) != ds.concepts())
        throw Error(ErrorKind::LabelArity, where() + ": label string has " + std::to_string(lab.size()) + " entries, expected " +
                                               std::to_string(ds.concepts()));
      for (char ch : lab) {
        if (ch == '+') {
          s.labels.push_back(1);
        } else if (ch == '-') {
          s.labels.push_back(-1);
        } else {
          throw Error(ErrorKind::BadValue, where() + ": labels must be '+' or '-'");
        }
      }
      std::filesystem::path fpath(s.feature_file);
      if (fpath.is_relative()) fpath = base / fpath;
      if (!std::filesystem::exists(fpath)) throw Error(ErrorKind::MissingFile, where() + ": " + fpath.string());
      s.features = read_feature_file(fpath);
      if (s.features.rows() != ds.d0 || s.features.cols() != ds.cells())
        throw Error(ErrorKind::DimensionMismatch, where() + ": " + fpath.string() + " is " + std::to_string(s.features.rows()) + "x" +
                                                      std::to_string(s.features.cols()) + ", expected " + std::to_string(ds.d0) + "x" +
                                                      std::to_string(ds.cells()));
      if (!s.features.allFinite()) throw Error(ErrorKind::BadValue, where() + ": " + fpath.string() + " has non-finite features");
      ds.samples.push_back(std::move(s));
    } else {
      throw Error(ErrorKind::BadValue, where() + ": unknown directive '" + key + "'");
    }
  }
  if (!have_grid || !have_d0 || !have_concepts)
    throw Error(ErrorKind::BadValue, manifest_path.string() + ": missing grid/d0/concepts header");
  return ds;
}

// Writes the manifest plus one feature file per sample. Samples whose
// feature_file is empty get "<id>.cknf".
inline void write_dataset(const std::filesystem::path& manifest_path, const Dataset& ds) {
  const auto base = manifest_path.parent_path();
  if (!base.empty()) std::filesystem::create_directories(base);
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + manifest_path.string());
  os << "grid " << ds.grid.width << ' ' << ds.grid.height << '\n';
  os << "d0 " << ds.d0 << '\n';
  os << "concepts ";
  for (std::size_t k = 0; k < ds.concept_names.size(); ++k) os << (k ? "," : "") << ds.concept_names[k];
  os << '\n';
  for (const auto& s : ds.samples) {
    const std::string file = s.feature_file.empty() ? s.id + ".cknf" : s.feature_file;
    std::filesystem::path fpath(file);
    if (fpath.is_relative()) fpath = base / fpath;
    write_feature_file(fpath, s.features);
    os << "sample " << s.id << ' ' << to_string(s.split) << ' ' << file << ' ';
    for (int y : s.labels) os << (y > 0 ? '+' : '-');
    os << '\n';
  }
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + manifest_path.string());
}

}  // namespace ctxkernel
