#ifndef ADRS_NETWORK_HPP_
#define ADRS_NETWORK_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "adrs/autograd.hpp"
#include "adrs/raster.hpp"
#include "adrs/tensor.hpp"
#include "json.hpp"

namespace adrs {

/// Channel plan of the detector. Five encoder levels; level 1 keeps the
/// input resolution and each later level halves it, so the deepest level
/// is 16x smaller than the input.
struct NetworkConfig {
  int in_channels = 4;
  int features = 32;
  std::array<int, 5> widths{32, 64, 128, 256, 512};

  /// Input height and width must be multiples of this.
  static constexpr int kAlign = 16;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// Kaiming-normal convolutions, unit/zero instance-norm affines, zero LAM
/// biases. Deterministic in `seed`.
ModelParams init_params(const NetworkConfig& cfg, std::uint64_t seed);

/// Min-max normalises every band to [0, 1] (constant bands become 0), then
/// regroups to `in_channels` bands.
Tensor adapt_channels(const Raster& raster, int in_channels);

/// Reflect-pads height and width up to multiples of `multiple`.
Tensor pad_reflect(const Tensor& x, int multiple);
Tensor crop(const Tensor& x, int height, int width);

// Graph builders. `prefix` selects the parameter group, e.g. "f1_3".
Graph::Var build_stem(Graph& g, Graph::Var x, const ModelParams& p);
Graph::Var build_lam(Graph& g, Graph::Var x, const ModelParams& p, std::string_view prefix);
Graph::Var build_fuse_f1(Graph& g, Graph::Var n, const ModelParams& p, std::string_view prefix);
Graph::Var build_fuse_f2(Graph& g, Graph::Var low, Graph::Var high, const ModelParams& p, std::string_view prefix);

struct NetworkVars {
  Graph::Var d;
  std::array<Graph::Var, 5> n;
  Graph::Var t;
  Graph::Var logits;
  Graph::Var p;
};

/// Full detector on an aligned input. Throws ShapeError on misaligned sizes.
NetworkVars build_network(Graph& g, Graph::Var x, const ModelParams& p, const NetworkConfig& cfg);

// Standalone evaluation of single stages (read-only over the parameters).
FeatureCube stem_forward(const Tensor& x, const ModelParams& p);
FeatureCube lam(const FeatureCube& x, const ModelParams& p, std::string_view prefix);
FeatureCube fuse_f1(const FeatureCube& n, const ModelParams& p, std::string_view prefix);
FeatureCube fuse_f2(const FeatureCube& low, const FeatureCube& high, const ModelParams& p, std::string_view prefix);

struct ForwardResult {
  AnomalyMap p;
  FeatureCube t;
  FeatureCube d;
  /// Spatial size of the deepest encoder level.
  int n5_height = 0;
  int n5_width = 0;
};

/// Aligned input in, anomaly map and fused cube at input resolution out.
ForwardResult forward(const Tensor& x, const ModelParams& p, const NetworkConfig& cfg);

/// Pads, runs the detector and crops back; any input size.
AnomalyMap predict(const Raster& raster, const ModelParams& p, const NetworkConfig& cfg);

}  // namespace adrs

#endif  // ADRS_NETWORK_HPP_
