#include "ctxkernel/dataset.hpp"
#include "ctxkernel/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Write the marker-arrangement toy dataset (manifest plus feature files)"};
  std::string manifest;
  ctxkernel::MarkerTaskOptions opt;
  app.add_option("--manifest", manifest, "Manifest path to write")->required();
  app.add_option("--images", opt.images, "Number of images");
  app.add_option("--width", opt.width, "Grid width");
  app.add_option("--height", opt.height, "Grid height");
  app.add_option("--seed", opt.seed, "Placement seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    ctxkernel::write_dataset(manifest, ctxkernel::make_marker_dataset(opt));
  } catch (const ctxkernel::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ctxkernel::exit_code(e.kind());
  }
  return 0;
}
