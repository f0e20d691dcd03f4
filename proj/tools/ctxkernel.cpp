#include "ctxkernel/ctxkernel.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace ctxkernel;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> depth;
  std::optional<int> radius;
  std::optional<std::string> init_map;
  std::optional<double> gamma_factor;
  std::optional<std::string> protocol;
  bool ensemble = false;
  std::string checkpoint;
  std::string output;
};

void add_common(CLI::App* cmd, Overrides& o, bool needs_config) {
  auto* c = cmd->add_option("--config", o.config, "Run configuration (key = value lines)");
  if (needs_config) c->required();
  cmd->add_option("--threads", o.threads, "Worker threads (default: hardware parallelism)");
  cmd->add_option("--seed", o.seed, "Seed for every random stream");
  cmd->add_option("--variant", o.variant, "layerwise | stationary | classwise");
  cmd->add_option("--depth", o.depth, "Number of context layers T");
  cmd->add_option("--radius", o.radius, "Neighborhood radius");
  cmd->add_option("--init-map", o.init_map, "linear | poly2 | hi");
  cmd->add_option("--gamma-factor", o.gamma_factor, "Fraction of max_gamma used as gamma");
  cmd->add_option("--protocol", o.protocol, "imageclef | corel");
  cmd->add_flag("--ensemble", o.ensemble, "Train or score with negative-subsampled SVM ensembles");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  cfg.train.threads = default_threads();
  if (!o.config.empty()) read_run_config(o.config, cfg);
  const std::string where = "command line";
  if (o.threads) cfg.set("threads", std::to_string(*o.threads), where);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed), where);
  if (o.variant) cfg.set("variant", *o.variant, where);
  if (o.depth) cfg.set("depth", std::to_string(*o.depth), where);
  if (o.radius) cfg.set("radius", std::to_string(*o.radius), where);
  if (o.init_map) cfg.set("init_map", *o.init_map, where);
  if (o.gamma_factor) cfg.set("gamma_factor", format_exact(*o.gamma_factor), where);
  if (o.protocol) cfg.set("protocol", *o.protocol, where);
  if (o.ensemble) cfg.ensemble = true;
  if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
  if (!o.output.empty()) cfg.output = o.output;
  if (cfg.train.threads < 1) throw Error(ErrorKind::Config, "threads must be >= 1");
  return cfg;
}

fs::path checkpoint_dir(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  if (!cfg.output.empty()) return cfg.output / "checkpoint";
  throw Error(ErrorKind::Config, "no checkpoint location (set checkpoint, output, --checkpoint or --output)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os || !(os << text)) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep context-aware kernel networks: train, evaluate and inspect learned context"};
  app.require_subcommand(1);
  Overrides o;

  auto* validate = app.add_subcommand("validate", "Load the dataset and report shapes, D_T and max_gamma");
  add_common(validate, o, true);

  auto* train = app.add_subcommand("train", "Alternate SVM fits and context updates, then write a checkpoint");
  add_common(train, o, true);
  train->add_option("--checkpoint", o.checkpoint, "Checkpoint directory to write");
  train->add_option("--output", o.output, "Output directory");

  std::string split = "test";
  auto* eval = app.add_subcommand("eval", "Score a split with a checkpoint and print the protocol report");
  add_common(eval, o, true);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint directory to read");
  eval->add_option("--output", o.output, "Directory receiving report.txt");
  eval->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));

  auto* exportc = app.add_subcommand("export-context", "Write the learned context weights as text");
  add_common(exportc, o, false);
  exportc->add_option("--checkpoint", o.checkpoint, "Checkpoint directory to read");
  exportc->add_option("--output", o.output, "Destination file (default: stdout)");

  std::size_t limit = 12;
  double tolerance = 1e-5;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic context gradients with central differences");
  add_common(grad, o, true);
  grad->add_option("--limit", limit, "Use at most this many training images (0: all)");
  grad->add_option("--tolerance", tolerance, "Largest accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = resolve(o);
    if (validate->parsed()) {
      std::cout << validate_run(cfg).text();
    } else if (train->parsed()) {
      const fs::path dir = checkpoint_dir(cfg);
      const Checkpoint ck = train_run(cfg, &std::cout);
      save_checkpoint(dir, ck);
      std::cout << "alternations " << ck.state.alternations << " converged " << (ck.state.converged ? 1 : 0) << '\n';
      std::cout << "checkpoint " << dir.string() << '\n';
    } else if (eval->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_dir(cfg));
      const MetricReport rep = evaluate_run(cfg, ck, split == "train" ? Split::Train : Split::Test);
      std::cout << rep.table();
      if (!cfg.output.empty()) write_text(cfg.output / "report.txt", rep.key_values());
    } else if (exportc->parsed()) {
      if (o.checkpoint.empty() && cfg.checkpoint.empty()) throw Error(ErrorKind::Config, "export-context needs --checkpoint");
      const fs::path dir = o.checkpoint.empty() ? cfg.checkpoint : fs::path(o.checkpoint);
      const Checkpoint ck = load_checkpoint(dir);
      if (o.output.empty()) {
        export_context(std::cout, ck.state.params);
      } else {
        export_context(fs::path(o.output), ck.state.params);
      }
    } else if (grad->parsed()) {
      const GradcheckReport rep = gradcheck_run(cfg, limit);
      std::cout << "entries " << rep.entries << '\n'
                << "max_rel_error " << format_exact(rep.max_rel_error) << '\n'
                << "max_abs_error " << format_exact(rep.max_abs_error) << '\n'
                << "error_floor " << format_exact(rep.floor) << '\n'
                << "weight_scale " << format_exact(rep.weight_scale) << '\n'
                << "active_terms " << rep.active_terms << '\n'
                << "min_kink_gap " << format_exact(rep.min_kink_gap) << '\n'
                << "kink_clear " << (rep.kink_clear ? 1 : 0) << '\n';
      if (!rep.kink_clear) log(LogLevel::Warn, "gradcheck: margins could not be kept away from the hinge kink");
      if (!(rep.max_rel_error <= tolerance)) {
        std::cerr << "error: gradient check failed, max relative error " << format_exact(rep.max_rel_error) << '\n';
        return 3;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
