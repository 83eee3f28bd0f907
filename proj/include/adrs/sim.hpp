#ifndef ADRS_SIM_HPP_
#define ADRS_SIM_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "adrs/raster.hpp"
#include "adrs/rng.hpp"
#include "json.hpp"

namespace adrs {

/// Closed interval of area ratios (region pixels / image pixels).
struct AreaRange {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double r) const { return r >= lo && r <= hi; }
};

struct AffineRanges {
  double rotation_deg = 45.0;  // symmetric, +-
  double shear = 0.3;          // symmetric, +-
  double scale_lo = 0.8;
  double scale_hi = 1.2;
};

struct SimConfig {
  AreaRange spectral_anomaly{0.0064, 0.0225};
  AreaRange spectral_large{0.0225, 0.5};
  AreaRange spatial_anomaly{0.02, 0.06};
  AreaRange spatial_large{0.06, 0.5};
  int max_anomalies = 2;
  int max_large = 2;
  /// When false no large normal objects are generated.
  bool simulate_large = true;
  AffineRanges affine;
  int patch_side = 224;

  void validate() const;
};

SimConfig sim_config_from_json(const nlohmann::json& j);

enum class RegionKind : std::uint8_t { kLarge, kAnomaly };

struct Region {
  RegionKind kind = RegionKind::kAnomaly;
  /// Binary H x W mask, row-major.
  std::vector<std::uint8_t> mask;

  std::size_t area() const;
};

struct RegionPlan {
  int height = 0;
  int width = 0;
  std::vector<Region> regions;

  double area_ratio(std::size_t i) const;
  /// Codes 1 / 2 on the region masks, 0 elsewhere.
  LabelMask to_labels() const;
};

/// A simulated training pair: anomaly image and its label map.
struct AnomalySample {
  Raster image;
  LabelMask labels;
};

/// Picks 1-2 anomaly squares and 1-2 large squares (none when large-object
/// simulation is off), pairwise disjoint, with spectral area ratios.
RegionPlan pi1_select_regions(int height, int width, const SimConfig& cfg, Rng& rng);

/// Uniformly random band permutation; `permutation` receives out-band -> in-band.
Raster channel_shuffle(const Raster& h, Rng& rng, std::vector<int>* permutation = nullptr);

/// `shuffled` inside the plan's masks, `h` everywhere else.
Raster phi1_copy_paste(const Raster& shuffled, const Raster& h, const RegionPlan& plan);

struct WarpedSample {
  Raster image;
  LabelMask labels;
  RegionPlan plan;
};

/// Warps every region mask by a random rotation/shear/scale about its
/// centroid (nearest neighbour, clipped to the frame), then re-pastes
/// `content` under the warped masks over `background`. A warp is redrawn
/// when its area leaves the kind's range or it touches an earlier region.
WarpedSample affine_boundary(const Raster& background, const Raster& content, const RegionPlan& plan,
                             const SimConfig& cfg, Rng& rng);

/// Spectral anomaly sample from an anomaly-free multi-band patch.
AnomalySample simulate_spectral(const Raster& h, const SimConfig& cfg, Rng& rng);

struct BankEntry {
  std::string id;
  std::string category;
  Raster patch;
  std::vector<std::uint8_t> mask;
  std::size_t area = 0;
};

class ObjectBank {
 public:
  ObjectBank() = default;
  /// Drops entries with an empty mask or mismatched dimensions.
  explicit ObjectBank(std::vector<BankEntry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const BankEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<BankEntry>& entries() const { return entries_; }

  /// Entry indices ordered by nondecreasing mask area.
  const std::vector<std::size_t>& by_area() const { return by_area_; }

 private:
  std::vector<BankEntry> entries_;
  std::vector<std::size_t> by_area_;
};

/// Loads every `<id>/{meta.json,data.bin,mask.bin}` entry under `dir`.
ObjectBank build_object_bank(const std::filesystem::path& dir);
void write_bank_entry(const BankEntry& entry, const std::filesystem::path& dir);

/// Procedural 3-band objects (ellipses, boxes, crosses, L-shapes, blobs)
/// with near-black or near-white content, for fixtures.
std::vector<BankEntry> synth_bank_entries(int count, std::uint64_t seed);

/// Spatial anomaly sample: labelled objects of `s` become ignore pixels,
/// then bank objects are resized into the large/anomaly ranges and pasted.
AnomalySample simulate_spatial(const Raster& s, const std::optional<LabelMask>& s_labels, const ObjectBank& bank,
                               const SimConfig& cfg, Rng& rng);

// Resampling helpers shared with the network input path.
std::vector<std::uint8_t> resize_mask_nearest(const std::vector<std::uint8_t>& mask, int h, int w, int out_h,
                                              int out_w);
Raster resize_bilinear(const Raster& r, int out_h, int out_w);

}  // namespace adrs

#endif  // ADRS_SIM_HPP_
