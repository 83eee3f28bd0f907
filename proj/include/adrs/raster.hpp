#ifndef ADRS_RASTER_HPP_
#define ADRS_RASTER_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace adrs {

enum class Modality { kHyperspectral, kVisible, kSar, kInfrared, kLowLight, kSynthetic };

std::string_view to_string(Modality m);
/// Throws ValidationError on an unknown tag.
Modality parse_modality(std::string_view tag);

/// H x W x C single-precision image stored band-sequentially
/// (band-major, then row-major).
struct Raster {
  int height = 0;
  int width = 0;
  int bands = 0;
  std::vector<float> values;
  Modality modality = Modality::kSynthetic;

  Raster() = default;
  Raster(int h, int w, int c, Modality m = Modality::kSynthetic)
      : height(h), width(w), bands(c),
        values(static_cast<std::size_t>(h) * w * c, 0.0f), modality(m) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

  float& at(int band, int y, int x) {
    return values[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  float at(int band, int y, int x) const {
    return values[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  float* band_data(int band) { return values.data() + band * pixels(); }
  const float* band_data(int band) const { return values.data() + band * pixels(); }

  /// Throws ValidationError when the size or finiteness invariant is broken.
  void validate() const;

  bool operator==(const Raster&) const = default;
};

/// Per-pixel label codes.
enum LabelCode : std::uint8_t {
  kBackground = 0,
  kLargeObject = 1,
  kAnomaly = 2,
  kIgnore = 255,
};

struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> codes;

  LabelMask() = default;
  LabelMask(int h, int w, std::uint8_t fill = kBackground)
      : height(h), width(w), codes(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return codes[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return codes[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count(std::uint8_t code) const;
  void validate() const;

  bool operator==(const LabelMask&) const = default;
};

/// Per-pixel anomaly scores in [0, 1].
struct AnomalyMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  AnomalyMap() = default;
  AnomalyMap(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0f) {}

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  void validate() const;

  bool operator==(const AnomalyMap&) const = default;
};

/// Maps `raster` onto exactly `count` bands: with more bands than `count`
/// the bands are split into contiguous near-equal groups and averaged; with
/// fewer, output band g copies input band g mod bands.
Raster regroup_bands(const Raster& raster, int count);

}  // namespace adrs

#endif  // ADRS_RASTER_HPP_
