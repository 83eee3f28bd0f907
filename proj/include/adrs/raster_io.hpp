#ifndef ADRS_RASTER_IO_HPP_
#define ADRS_RASTER_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "adrs/raster.hpp"
#include "json.hpp"

namespace adrs {

struct RasterFile {
  Raster raster;
  std::optional<LabelMask> labels;
};

/// Reads `meta.json` + `data.bin` (+ `labels.bin` when present) from `dir`.
RasterFile read_raster(const std::filesystem::path& dir);

/// Writes the container into `dir`, creating it when needed. The raster is
/// validated before any file is touched.
void write_raster(const Raster& raster, const std::optional<LabelMask>& labels,
                  const std::filesystem::path& dir);

/// Stores an anomaly map as a one-band container raster.
void write_map(const AnomalyMap& map, const std::filesystem::path& dir);
AnomalyMap read_map(const std::filesystem::path& dir);

/// 8-bit grayscale PNG after a min-max stretch; a constant map gives zeros.
void export_png(const AnomalyMap& map, const std::filesystem::path& path);
std::vector<std::uint8_t> stretch_to_u8(const AnomalyMap& map);

enum class RegionShape { kRectangle, kEllipse };

struct SceneSpec {
  int height = 64;
  int width = 64;
  int bands = 1;
  Modality modality = Modality::kSynthetic;
  /// One entry per band, or a single entry broadcast to all bands.
  std::vector<double> background_mean{1.0};
  std::vector<double> background_stddev{0.1};
  int anomaly_count = 1;
  /// Mean offset of anomaly pixels in background-stddev units; the sign of
  /// the offset is drawn per band.
  double anomaly_shift = 3.0;
  RegionShape anomaly_shape = RegionShape::kRectangle;
  /// Fraction of the image covered by all anomalies together.
  double anomaly_area_ratio = 0.01;
  /// Zero disables the large-object region.
  double large_object_ratio = 0.0;
  double large_object_shift = 2.0;
  bool speckle = false;
  double speckle_looks = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& spec);

/// Deterministic labelled test scene.
std::pair<Raster, LabelMask> synth_scene(const SceneSpec& spec);

}  // namespace adrs

#endif  // ADRS_RASTER_IO_HPP_
