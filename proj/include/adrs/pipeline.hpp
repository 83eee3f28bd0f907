#ifndef ADRS_PIPELINE_HPP_
#define ADRS_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adrs/losses.hpp"
#include "adrs/metrics.hpp"
#include "adrs/network.hpp"
#include "adrs/raster.hpp"
#include "adrs/sim.hpp"
#include "json.hpp"

namespace adrs {

enum class LossMode { kPixelOnly, kPixelFeature, kCrossEntropy, kDice };

std::string_view to_string(LossMode m);
LossMode parse_loss_mode(std::string_view s);

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 1e-5;
  int epochs = 100;
  int iterations_per_epoch = 100;
  int batch_size = 4;
  /// Weight of the feature-level loss in the total.
  double w = 0.1;
  /// Side of the training patches and of the inference tiles.
  int tile = 224;
  double lambda_step = 0.01;
  int anchors = 10;
  std::uint64_t seed = 0;

  std::vector<std::string> spectral_sources;
  std::vector<std::string> spatial_sources;
  std::string object_bank;
  /// Checkpoint and training log go here when non-empty.
  std::string output_dir;

  bool simulate_ol = true;
  bool use_spectral_stem = true;
  bool use_spatial_stem = true;
  LossMode loss_mode = LossMode::kPixelFeature;

  NetworkConfig network;
  HypersphereConfig hypersphere;
  SimConfig sim;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkConfig network;
  ModelParams params;
  RankingState ranking;
  nlohmann::json train_config;
  std::uint64_t iteration = 0;
  std::uint32_t format_version = kCheckpointVersion;
};

/// Single-file archive: 8-byte magic, u32 version, u64 manifest length, the
/// manifest JSON (tensor names, shapes, offsets, ranking state, config) and
/// the little-endian float32 payload.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<char>& bytes);

/// In-memory simulation sources.
struct TrainingData {
  std::vector<Raster> spectral;
  std::vector<std::pair<Raster, std::optional<LabelMask>>> spatial;
  ObjectBank bank;
};

TrainingData load_training_data(const TrainConfig& cfg);

/// One JSON object per iteration.
struct IterationLog {
  std::uint64_t iter = 0;
  double loss_total = 0.0;
  double loss_f = 0.0;
  double loss_p = 0.0;
  double lambda_mean = 0.0;
};

nlohmann::json to_json(const IterationLog& l);

struct TrainHooks {
  std::function<void(const IterationLog&)> on_iteration;
};

/// Draws one training pair for iteration-local stream `rng`: sample kind,
/// source scene, aligned random crop, then simulation (placement failures
/// retried with fresh streams up to 10 times).
AnomalySample draw_training_sample(const TrainingData& data, const TrainConfig& cfg, Rng& rng);

Checkpoint initial_checkpoint(const TrainConfig& cfg);
Checkpoint train(const TrainConfig& cfg, const TrainingData& data, const TrainHooks& hooks = {});
Checkpoint train(const TrainConfig& cfg);

enum class InferMode { kTiled, kWhole };

InferMode parse_infer_mode(std::string_view s);

/// Tiled mode averages overlapping windows with uniform weights; whole mode
/// runs one padded pass.
AnomalyMap infer(const Raster& raster, const Checkpoint& ckpt, InferMode mode, int tile = 224,
                 double overlap = 0.5);

/// Window start offsets covering [0, extent) with windows of `tile`.
std::vector<int> window_starts(int extent, int tile, double overlap);

/// Anomaly = code 2, normal = codes 0/1, code 255 dropped.
MetricsReport evaluate(const AnomalyMap& map, const LabelMask& gt, TauSweep sweep = TauSweep::kUniqueScores);

/// Command-line entry: 0 success, 1 runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adrs

#endif  // ADRS_PIPELINE_HPP_
