#include "adrs/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "adrs/error.hpp"
#include "adrs/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace adrs {

namespace {

constexpr const char* kMetaName = "meta.json";
constexpr const char* kDataName = "data.bin";
constexpr const char* kLabelsName = "labels.bin";

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on " + path.string());
  return bytes;
}

void spill(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed on " + path.string());
}

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::vector<char> encode_f32_le(const std::vector<float>& values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
    std::memcpy(bytes.data() + 4 * i, &u, 4);
  }
  return bytes;
}

std::vector<float> decode_f32_le(const std::vector<char>& bytes, std::size_t count) {
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
    values[i] = std::bit_cast<float>(u);
  }
  return values;
}

int positive_int(const json& meta, const char* key) {
  if (!meta.contains(key) || !meta[key].is_number_integer() || meta[key].get<long long>() <= 0) {
    throw FormatError(std::string("meta.json: '") + key + "' must be a positive integer");
  }
  return meta[key].get<int>();
}

}  // namespace

RasterFile read_raster(const fs::path& dir) {
  json meta;
  {
    const auto text = slurp(dir / kMetaName);
    try {
      meta = json::parse(text.begin(), text.end());
    } catch (const json::exception& e) {
      throw FormatError("meta.json is not valid JSON: " + std::string(e.what()));
    }
  }
  if (meta.value("dtype", "f32") != "f32") throw FormatError("meta.json: dtype must be f32");
  if (meta.value("layout", "band-sequential") != "band-sequential") {
    throw FormatError("meta.json: layout must be band-sequential");
  }

  RasterFile out;
  Raster& r = out.raster;
  r.height = positive_int(meta, "height");
  r.width = positive_int(meta, "width");
  r.bands = positive_int(meta, "bands");
  r.modality = parse_modality(meta.value("modality", "synthetic"));

  const std::size_t count = r.pixels() * static_cast<std::size_t>(r.bands);
  const auto payload = slurp(dir / kDataName);
  if (payload.size() != count * 4) {
    throw FormatError("data.bin holds " + std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(count * 4));
  }
  r.values = decode_f32_le(payload, count);
  r.validate();

  if (fs::exists(dir / kLabelsName)) {
    const auto bytes = slurp(dir / kLabelsName);
    if (bytes.size() != r.pixels()) throw FormatError("labels.bin size does not match height*width");
    LabelMask mask(r.height, r.width);
    std::memcpy(mask.codes.data(), bytes.data(), bytes.size());
    try {
      mask.validate();
    } catch (const ValidationError& e) {
      throw FormatError(std::string("labels.bin: ") + e.what());
    }
    out.labels = std::move(mask);
  }
  return out;
}

void write_raster(const Raster& raster, const std::optional<LabelMask>& labels, const fs::path& dir) {
  raster.validate();
  if (labels) {
    labels->validate();
    if (labels->height != raster.height || labels->width != raster.width) {
      throw ValidationError("label mask dimensions differ from the raster");
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  const json meta = {{"height", raster.height},   {"width", raster.width},
                     {"bands", raster.bands},     {"dtype", "f32"},
                     {"layout", "band-sequential"}, {"modality", std::string(to_string(raster.modality))}};
  const std::string text = meta.dump();
  spill(dir / kMetaName, text.data(), text.size());
  const auto payload = encode_f32_le(raster.values);
  spill(dir / kDataName, payload.data(), payload.size());
  if (labels) {
    spill(dir / kLabelsName, labels->codes.data(), labels->codes.size());
  } else if (fs::exists(dir / kLabelsName)) {
    fs::remove(dir / kLabelsName, ec);
  }
}

void write_map(const AnomalyMap& map, const fs::path& dir) {
  map.validate();
  Raster r(map.height, map.width, 1);
  r.values = map.values;
  write_raster(r, std::nullopt, dir);
}

AnomalyMap read_map(const fs::path& dir) {
  auto file = read_raster(dir);
  if (file.raster.bands != 1) throw FormatError("anomaly map container must have one band");
  AnomalyMap map(file.raster.height, file.raster.width);
  map.values = std::move(file.raster.values);
  return map;
}

std::vector<std::uint8_t> stretch_to_u8(const AnomalyMap& map) {
  std::vector<std::uint8_t> pixels(map.values.size(), 0);
  if (map.values.empty()) return pixels;
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi <= lo) return pixels;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double t = (static_cast<double>(map.values[i]) - lo) / (hi - lo);
    // Half steps within single-precision noise round upward.
    const double level = std::floor(255.0 * t + 0.5 + 1e-4);
    pixels[i] = static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
  }
  return pixels;
}

void export_png(const AnomalyMap& map, const fs::path& path) {
  map.validate();
  const auto pixels = stretch_to_u8(map);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(map.width);
  image.height = static_cast<png_uint_32>(map.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void SceneSpec::validate() const {
  if (height < 8 || width < 8 || bands < 1) throw ValidationError("scene must be at least 8x8 with >= 1 band");
  auto check_vec = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != 1 && v.size() != static_cast<std::size_t>(bands)) {
      throw ValidationError(std::string(what) + " needs 1 or `bands` entries");
    }
  };
  check_vec(background_mean, "background_mean");
  check_vec(background_stddev, "background_stddev");
  for (double s : background_stddev) {
    if (!(s >= 0.0)) throw ValidationError("background_stddev must be >= 0");
  }
  if (anomaly_count < 0) throw ValidationError("anomaly_count must be >= 0");
  if (anomaly_count > 0 && !(anomaly_area_ratio > 0.0 && anomaly_area_ratio <= 0.1)) {
    throw ValidationError("anomaly_area_ratio must lie in (0, 0.1]");
  }
  if (large_object_ratio != 0.0 && !(large_object_ratio > 0.0 && large_object_ratio <= 0.5)) {
    throw ValidationError("large_object_ratio must lie in (0, 0.5]");
  }
  if (speckle && !(speckle_looks > 0.0)) throw ValidationError("speckle_looks must be positive");
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  auto vec = [&](const char* key, std::vector<double>& dst) {
    if (!j.contains(key)) return;
    if (j[key].is_array()) {
      dst = j[key].get<std::vector<double>>();
    } else {
      dst = {j[key].get<double>()};
    }
  };
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.bands = j.value("bands", s.bands);
  s.modality = parse_modality(j.value("modality", std::string(to_string(s.modality))));
  vec("background_mean", s.background_mean);
  vec("background_stddev", s.background_stddev);
  s.anomaly_count = j.value("anomaly_count", s.anomaly_count);
  s.anomaly_shift = j.value("anomaly_shift", s.anomaly_shift);
  const std::string shape = j.value("anomaly_shape", std::string("rectangle"));
  if (shape == "rectangle") {
    s.anomaly_shape = RegionShape::kRectangle;
  } else if (shape == "ellipse") {
    s.anomaly_shape = RegionShape::kEllipse;
  } else {
    throw ValidationError("anomaly_shape must be rectangle or ellipse");
  }
  s.anomaly_area_ratio = j.value("anomaly_area_ratio", s.anomaly_area_ratio);
  s.large_object_ratio = j.value("large_object_ratio", s.large_object_ratio);
  s.large_object_shift = j.value("large_object_shift", s.large_object_shift);
  s.speckle = j.value("speckle", s.speckle);
  s.speckle_looks = j.value("speckle_looks", s.speckle_looks);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

json to_json(const SceneSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"bands", s.bands},
          {"modality", std::string(to_string(s.modality))},
          {"background_mean", s.background_mean},
          {"background_stddev", s.background_stddev},
          {"anomaly_count", s.anomaly_count},
          {"anomaly_shift", s.anomaly_shift},
          {"anomaly_shape", s.anomaly_shape == RegionShape::kRectangle ? "rectangle" : "ellipse"},
          {"anomaly_area_ratio", s.anomaly_area_ratio},
          {"large_object_ratio", s.large_object_ratio},
          {"large_object_shift", s.large_object_shift},
          {"speckle", s.speckle},
          {"speckle_looks", s.speckle_looks},
          {"seed", s.seed}};
}

namespace {

struct Template {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> on;
  std::size_t area() const { return static_cast<std::size_t>(std::count(on.begin(), on.end(), 1)); }
};

// Near-square block of full rows plus one partial row: exactly `target`
// pixels whenever it fits.
Template rectangle_template(long target, int max_h, int max_w) {
  const int w = std::clamp(static_cast<int>(std::ceil(std::sqrt(static_cast<double>(target)))), 1, max_w);
  const long full = target / w;
  const int rest = static_cast<int>(target % w);
  const int h = std::clamp(static_cast<int>(full) + (rest > 0 ? 1 : 0), 1, max_h);
  Template t{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  const long limit = std::min<long>(target, static_cast<long>(h) * w);
  for (long i = 0; i < limit; ++i) t.on[static_cast<std::size_t>(i)] = 1;
  return t;
}

Template ellipse_of(double ry, double rx) {
  Template t;
  t.h = std::max(1, 2 * static_cast<int>(std::ceil(ry)) + 1);
  t.w = std::max(1, 2 * static_cast<int>(std::ceil(rx)) + 1);
  t.on.assign(static_cast<std::size_t>(t.h) * t.w, 0);
  const double cy = (t.h - 1) / 2.0;
  const double cx = (t.w - 1) / 2.0;
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      const double dy = (y - cy) / ry;
      const double dx = (x - cx) / rx;
      if (dy * dy + dx * dx <= 1.0) t.on[static_cast<std::size_t>(y) * t.w + x] = 1;
    }
  }
  return t;
}

/// Ellipse whose rasterised area is the closest achievable to `target`.
Template ellipse_template(long target, double aspect, int max_h, int max_w) {
  double lo = 0.3;
  double hi = std::max(2.0, std::sqrt(static_cast<double>(target) / (3.14159 * aspect)) * 2.0);
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (static_cast<long>(ellipse_of(mid, mid * aspect).area()) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Template a = ellipse_of(lo, lo * aspect);
  Template b = ellipse_of(hi, hi * aspect);
  Template best = std::labs(static_cast<long>(a.area()) - target) <= std::labs(static_cast<long>(b.area()) - target)
                      ? std::move(a)
                      : std::move(b);
  if (best.h > max_h || best.w > max_w) return rectangle_template(target, max_h, max_w);
  return best;
}

struct Placed {
  Template shape;
  int y0 = 0;
  int x0 = 0;
};

bool overlaps(const LabelMask& mask, const Template& t, int y0, int x0) {
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      if (t.on[static_cast<std::size_t>(y) * t.w + x] && mask.at(y0 + y, x0 + x) != kBackground) return true;
    }
  }
  return false;
}

Placed place(LabelMask& mask, Template t, std::uint8_t code, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int y0 = uniform_int(rng, 0, mask.height - t.h);
    const int x0 = uniform_int(rng, 0, mask.width - t.w);
    if (overlaps(mask, t, y0, x0)) continue;
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        if (t.on[static_cast<std::size_t>(y) * t.w + x]) mask.at(y0 + y, x0 + x) = code;
      }
    }
    return {std::move(t), y0, x0};
  }
  throw PlacementError("synth_scene: could not place a region without overlap after 100 retries");
}

void shift_region(Raster& r, const Placed& p, const std::vector<double>& offsets) {
  for (int b = 0; b < r.bands; ++b) {
    const auto delta = static_cast<float>(offsets[static_cast<std::size_t>(b)]);
    for (int y = 0; y < p.shape.h; ++y) {
      for (int x = 0; x < p.shape.w; ++x) {
        if (p.shape.on[static_cast<std::size_t>(y) * p.shape.w + x]) r.at(b, p.y0 + y, p.x0 + x) += delta;
      }
    }
  }
}

}  // namespace

std::pair<Raster, LabelMask> synth_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto per_band = [&](const std::vector<double>& v, int b) {
    return v.size() == 1 ? v[0] : v[static_cast<std::size_t>(b)];
  };

  Raster raster(spec.height, spec.width, spec.bands, spec.modality);
  LabelMask mask(spec.height, spec.width);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int b = 0; b < spec.bands; ++b) {
    const double mu = per_band(spec.background_mean, b);
    const double sd = per_band(spec.background_stddev, b);
    float* band = raster.band_data(b);
    for (std::size_t i = 0; i < raster.pixels(); ++i) band[i] = static_cast<float>(mu + sd * gauss(rng));
  }

  const auto signed_offsets = [&](double shift) {
    std::vector<double> off(static_cast<std::size_t>(spec.bands));
    for (int b = 0; b < spec.bands; ++b) {
      const double sign = (rng() & 1u) ? 1.0 : -1.0;
      off[static_cast<std::size_t>(b)] = sign * shift * per_band(spec.background_stddev, b);
    }
    return off;
  };

  const long total = static_cast<long>(spec.height) * spec.width;
  if (spec.large_object_ratio > 0.0) {
    const long area = std::max(1L, std::lround(spec.large_object_ratio * static_cast<double>(total)));
    const Placed p = place(mask, rectangle_template(area, spec.height, spec.width), kLargeObject, rng);
    shift_region(raster, p, signed_offsets(spec.large_object_shift));
  }

  if (spec.anomaly_count > 0) {
    const long target = std::max(1L, std::lround(spec.anomaly_area_ratio * static_cast<double>(total)));
    for (int i = 0; i < spec.anomaly_count; ++i) {
      const long share = target / spec.anomaly_count + (i < target % spec.anomaly_count ? 1 : 0);
      Template t = spec.anomaly_shape == RegionShape::kRectangle
                       ? rectangle_template(std::max(1L, share), spec.height, spec.width)
                       : ellipse_template(std::max(1L, share), uniform(rng, 0.6, 1.0), spec.height, spec.width);
      const Placed p = place(mask, std::move(t), kAnomaly, rng);
      shift_region(raster, p, signed_offsets(spec.anomaly_shift));
    }
  }

  if (spec.speckle) {
    std::gamma_distribution<double> gamma(spec.speckle_looks, 1.0 / spec.speckle_looks);
    for (float& v : raster.values) v = static_cast<float>(v * gamma(rng));
  }
  return {std::move(raster), std::move(mask)};
}

}  // namespace adrs
