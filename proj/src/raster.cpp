#include "adrs/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "adrs/error.hpp"

namespace adrs {

namespace {

constexpr std::array<std::pair<Modality, std::string_view>, 6> kModalityNames{{
    {Modality::kHyperspectral, "hyperspectral"},
    {Modality::kVisible, "visible"},
    {Modality::kSar, "sar"},
    {Modality::kInfrared, "infrared"},
    {Modality::kLowLight, "lowlight"},
    {Modality::kSynthetic, "synthetic"},
}};

}  // namespace

std::string_view to_string(Modality m) {
  for (const auto& [mod, name] : kModalityNames) {
    if (mod == m) return name;
  }
  return "synthetic";
}

Modality parse_modality(std::string_view tag) {
  for (const auto& [mod, name] : kModalityNames) {
    if (name == tag) return mod;
  }
  throw ValidationError("unknown modality '" + std::string(tag) + "'");
}

void Raster::validate() const {
  if (height <= 0 || width <= 0 || bands <= 0) {
    throw ValidationError("raster dimensions must be positive");
  }
  if (values.size() != static_cast<std::size_t>(height) * width * bands) {
    throw ValidationError("raster value count does not match height*width*bands");
  }
  if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
    throw ValidationError("raster contains non-finite values");
  }
}

std::size_t LabelMask::count(std::uint8_t code) const {
  return static_cast<std::size_t>(std::count(codes.begin(), codes.end(), code));
}

void LabelMask::validate() const {
  if (height <= 0 || width <= 0) throw ValidationError("label mask dimensions must be positive");
  if (codes.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("label mask size does not match height*width");
  }
  for (std::uint8_t c : codes) {
    if (c != kBackground && c != kLargeObject && c != kAnomaly && c != kIgnore) {
      throw ValidationError("illegal label code " + std::to_string(c));
    }
  }
}

void AnomalyMap::validate() const {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("anomaly map size does not match height*width");
  }
  for (float v : values) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ValidationError("anomaly map values must be finite and inside [0, 1]");
    }
  }
}

}  // namespace adrs

namespace adrs {

Raster regroup_bands(const Raster& raster, int count) {
  if (count < 1) throw ValidationError("band count must be >= 1");
  if (raster.bands < 1) throw ValidationError("raster has no bands");
  Raster out(raster.height, raster.width, count, raster.modality);
  const std::size_t n = raster.pixels();
  if (raster.bands <= count) {
    for (int g = 0; g < count; ++g) {
      const float* src = raster.band_data(g % raster.bands);
      std::copy(src, src + n, out.band_data(g));
    }
    return out;
  }
  for (int g = 0; g < count; ++g) {
    const int first = static_cast<int>(static_cast<long>(g) * raster.bands / count);
    const int last = static_cast<int>(static_cast<long>(g + 1) * raster.bands / count);
    std::vector<double> acc(n, 0.0);
    for (int b = first; b < last; ++b) {
      const float* src = raster.band_data(b);
      for (std::size_t i = 0; i < n; ++i) acc[i] += src[i];
    }
    float* dst = out.band_data(g);
    const double inv = 1.0 / (last - first);
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(acc[i] * inv);
  }
  return out;
}

}  // namespace adrs
