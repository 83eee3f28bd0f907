#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "CLI11.hpp"
#include "adrs/error.hpp"
#include "adrs/metrics.hpp"
#include "adrs/pipeline.hpp"
#include "adrs/raster_io.hpp"
#include "adrs/sim.hpp"

namespace adrs {

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string input;
  std::string ckpt;
  std::string out;
  std::string mode = "tiled";
  int tile = 224;
  double overlap = 0.5;
  std::string pred;
  std::string gt;
  std::string kind = "spectral";
  std::string bank;
  int bank_count = 0;
  std::string sweep = "unique";
  std::string method = "network";
};

void cmd_synth(const Options& o, std::ostream& out) {
  if (o.bank_count > 0) {
    for (const auto& e : synth_bank_entries(o.bank_count, o.seed.value_or(0))) {
      write_bank_entry(e, std::filesystem::path(o.out) / e.id);
    }
    out << "wrote " << o.bank_count << " bank entries to " << o.out << '\n';
    return;
  }
  SceneSpec spec = o.config.empty() ? SceneSpec{} : scene_spec_from_json(read_json_file(o.config));
  if (o.seed) spec.seed = *o.seed;
  const auto [raster, labels] = synth_scene(spec);
  write_raster(raster, labels, o.out);
  out << "wrote scene " << raster.height << "x" << raster.width << "x" << raster.bands << " to " << o.out << '\n';
}

void cmd_simulate(const Options& o, std::ostream& out) {
  const SimConfig cfg = o.config.empty() ? SimConfig{} : sim_config_from_json(read_json_file(o.config));
  const RasterFile src = read_raster(o.input);
  Rng rng(mix_seed(o.seed.value_or(0)));
  AnomalySample sample;
  if (o.kind == "spectral") {
    sample = simulate_spectral(src.raster, cfg, rng);
  } else if (o.kind == "spatial") {
    if (o.bank.empty()) throw ConfigError("spatial simulation needs --bank");
    sample = simulate_spatial(src.raster, src.labels, build_object_bank(o.bank), cfg, rng);
  } else {
    throw ConfigError("unknown simulation kind: " + o.kind);
  }
  write_raster(sample.image, sample.labels, o.out);
  out << "wrote " << o.kind << " sample with " << sample.labels.count(kAnomaly) << " anomaly pixels to " << o.out
      << '\n';
}

void cmd_train(const Options& o, std::ostream& out) {
  TrainConfig cfg = train_config_from_json(read_json_file(o.config));
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (cfg.output_dir.empty()) throw ConfigError("train needs --out or output_dir");
  const Checkpoint ckpt = train(cfg);
  const auto path = std::filesystem::path(cfg.output_dir) / "checkpoint.bin";
  save_checkpoint(ckpt, path);
  out << "trained " << ckpt.iteration << " iterations, checkpoint " << path.string() << '\n';
}

void cmd_infer(const Options& o, std::ostream& out) {
  const RasterFile src = read_raster(o.input);
  AnomalyMap map;
  if (o.method == "grx") {
    map = grx(src.raster);
  } else {
    if (o.ckpt.empty()) throw ConfigError("infer needs --ckpt");
    map = infer(src.raster, load_checkpoint(o.ckpt), parse_infer_mode(o.mode), o.tile, o.overlap);
  }
  write_map(map, o.out);
  export_png(map, std::filesystem::path(o.out) / "map.png");
  out << "wrote map " << map.height << "x" << map.width << " to " << o.out << '\n';
}

void cmd_eval(const Options& o, std::ostream& out) {
  const AnomalyMap map = read_map(o.pred);
  const RasterFile gt = read_raster(o.gt);
  if (!gt.labels) throw FormatError("ground-truth scene has no labels.bin: " + o.gt);
  TauSweep sweep = TauSweep::kUniqueScores;
  if (o.sweep == "fixed201") {
    sweep = TauSweep::kFixed201;
  } else if (o.sweep != "unique") {
    throw ConfigError("unknown sweep: " + o.sweep);
  }
  out << to_json(evaluate(map, *gt.labels, sweep)).dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Modality-agnostic anomaly detection for remote sensing rasters", "adrs");
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Write a synthetic scene or a synthetic object bank");
  synth->add_option("--config", o.config, "Scene spec JSON");
  synth->add_option("--seed", o.seed, "Seed override");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--bank", o.bank_count, "Write this many object-bank entries instead of a scene")
      ->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Simulate one anomaly training sample");
  simulate->add_option("--input", o.input, "Source scene directory")->required();
  simulate->add_option("--out", o.out, "Output directory")->required();
  simulate->add_option("--seed", o.seed, "Seed");
  simulate->add_option("--kind", o.kind, "spectral or spatial")->check(CLI::IsMember({"spectral", "spatial"}));
  simulate->add_option("--bank", o.bank, "Object bank directory (spatial)");
  simulate->add_option("--config", o.config, "Simulation config JSON");

  auto* train_cmd = app.add_subcommand("train", "Train a detector");
  train_cmd->add_option("--config", o.config, "train.json")->required();
  train_cmd->add_option("--seed", o.seed, "Seed override");
  train_cmd->add_option("--out", o.out, "Output directory (checkpoint and log)");

  auto* infer_cmd = app.add_subcommand("infer", "Produce an anomaly map");
  infer_cmd->add_option("--input", o.input, "Scene directory")->required();
  infer_cmd->add_option("--ckpt", o.ckpt, "Checkpoint file");
  infer_cmd->add_option("--out", o.out, "Output directory")->required();
  infer_cmd->add_option("--mode", o.mode, "tiled or whole")->check(CLI::IsMember({"tiled", "whole"}));
  infer_cmd->add_option("--tile", o.tile, "Tile side")->check(CLI::Range(32, 1 << 16));
  infer_cmd->add_option("--overlap", o.overlap, "Tile overlap fraction")->check(CLI::Range(0.0, 0.99));
  infer_cmd->add_option("--method", o.method, "network or grx")->check(CLI::IsMember({"network", "grx"}));

  auto* eval_cmd = app.add_subcommand("eval", "Score a map against ground truth");
  eval_cmd->add_option("--pred", o.pred, "Map directory")->required();
  eval_cmd->add_option("--gt", o.gt, "Labelled scene directory")->required();
  eval_cmd->add_option("--sweep", o.sweep, "unique or fixed201")->check(CLI::IsMember({"unique", "fixed201"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) cmd_synth(o, out);
    if (*simulate) cmd_simulate(o, out);
    if (*train_cmd) cmd_train(o, out);
    if (*infer_cmd) cmd_infer(o, out);
    if (*eval_cmd) cmd_eval(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace adrs
