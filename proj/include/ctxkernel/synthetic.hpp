#pragma once

#include "ctxkernel/dataset.hpp"
#include "ctxkernel/rng.hpp"

#include <string>

namespace ctxkernel {

// Toy annotation task where content alone carries no signal: every image holds
// the same multiset of cell vectors (two markers, background elsewhere) and only
// the horizontal order of the markers differs. Concept "left" has marker A
// immediately left of marker B, concept "right" the mirrored arrangement.
// Even pairs of images go to the training split, odd pairs to the test split.
struct MarkerTaskOptions {
  int images = 200;
  int width = 3;
  int height = 3;
  std::uint64_t seed = 7;
  double scale = 1.0;  // multiplies every cell vector
};

inline Dataset make_marker_dataset(const MarkerTaskOptions& opt = {}) {
  if (opt.width < 2) throw Error(ErrorKind::Config, "marker task needs at least two columns");
  Dataset ds;
  ds.grid = GridSpec(opt.width, opt.height);
  ds.d0 = 3;
  ds.concept_names = {"left", "right"};
  Vector marker_a(3), marker_b(3), background(3);
  marker_a << 1.0, 0.0, 0.2;
  marker_b << 0.0, 1.0, 0.2;
  background << 0.1, 0.1, 1.0;

  auto rng = stream_rng(opt.seed, {0x6d61726b});
  for (int i = 0; i < opt.images; ++i) {
    const bool left = i % 2 == 0;
    const int row = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(opt.height)));
    const int col = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(opt.width - 1)));
    ImageSample s;
    s.id = "img" + std::to_string(i);
    s.split = (i / 2) % 2 == 0 ? Split::Train : Split::Test;
    const int first = ds.grid.index(row, col), second = ds.grid.index(row, col + 1);
    s.features = background.replicate(1, ds.cells());
    s.features.col(first) = left ? marker_a : marker_b;
    s.features.col(second) = left ? marker_b : marker_a;
    s.features *= opt.scale;
    s.labels = left ? std::vector<int>{1, -1} : std::vector<int>{-1, 1};
    s.feature_file = s.id + ".cknf";
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ctxkernel
