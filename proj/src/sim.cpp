#include "adrs/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "adrs/error.hpp"
#include "adrs/raster_io.hpp"

namespace fs = std::filesystem;

namespace adrs {

namespace {

void check_range(const AreaRange& r, const char* what) {
  if (!(r.lo > 0.0 && r.lo < r.hi && r.hi < 1.0)) {
    throw ConfigError(std::string(what) + " must be a nonempty sub-interval of (0, 1)");
  }
}

AreaRange read_range(const nlohmann::json& j, const char* key, AreaRange fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j[key].get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError(std::string(key) + " must be [lo, hi]");
  return {v[0], v[1]};
}

}  // namespace

void SimConfig::validate() const {
  check_range(spectral_anomaly, "spectral anomaly range");
  check_range(spectral_large, "spectral large-object range");
  check_range(spatial_anomaly, "spatial anomaly range");
  check_range(spatial_large, "spatial large-object range");
  if (spectral_anomaly.hi > spectral_large.lo || spatial_anomaly.hi > spatial_large.lo) {
    throw ConfigError("anomaly ranges must end below the large-object ranges");
  }
  if (max_anomalies < 1 || max_large < 1) throw ConfigError("region counts must be >= 1");
  if (affine.rotation_deg < 0.0 || affine.shear < 0.0 || !(affine.scale_lo > 0.0) ||
      affine.scale_hi < affine.scale_lo) {
    throw ConfigError("invalid affine ranges");
  }
  if (patch_side < 32) throw ConfigError("patch side must be >= 32");
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.spectral_anomaly = read_range(j, "spectral_anomaly", c.spectral_anomaly);
  c.spectral_large = read_range(j, "spectral_large", c.spectral_large);
  c.spatial_anomaly = read_range(j, "spatial_anomaly", c.spatial_anomaly);
  c.spatial_large = read_range(j, "spatial_large", c.spatial_large);
  c.max_anomalies = j.value("max_anomalies", c.max_anomalies);
  c.max_large = j.value("max_large", c.max_large);
  c.simulate_large = j.value("simulate_large", c.simulate_large);
  c.affine.rotation_deg = j.value("rotation_deg", c.affine.rotation_deg);
  c.affine.shear = j.value("shear", c.affine.shear);
  c.affine.scale_lo = j.value("scale_lo", c.affine.scale_lo);
  c.affine.scale_hi = j.value("scale_hi", c.affine.scale_hi);
  c.patch_side = j.value("patch_side", c.patch_side);
  c.validate();
  return c;
}

std::size_t Region::area() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

double RegionPlan::area_ratio(std::size_t i) const {
  return static_cast<double>(regions[i].area()) / (static_cast<double>(height) * width);
}

LabelMask RegionPlan::to_labels() const {
  LabelMask labels(height, width);
  for (const auto& r : regions) {
    const auto code = r.kind == RegionKind::kLarge ? kLargeObject : kAnomaly;
    for (std::size_t i = 0; i < r.mask.size(); ++i) {
      if (r.mask[i]) labels.codes[i] = code;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Spectral simulation

namespace {

struct SideRange {
  int lo;
  int hi;
};

SideRange square_sides(const AreaRange& range, int height, int width) {
  const double total = static_cast<double>(height) * width;
  SideRange s{static_cast<int>(std::ceil(std::sqrt(range.lo * total) - 1e-9)),
              static_cast<int>(std::floor(std::sqrt(range.hi * total) + 1e-9))};
  s.lo = std::max(s.lo, 1);
  s.hi = std::min(s.hi, std::min(height, width));
  if (s.lo > s.hi) throw ConfigError("no square side satisfies the area range on this patch size");
  return s;
}

bool rect_free(const std::vector<std::uint8_t>& occ, int width, int y0, int x0, int side) {
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) {
      if (occ[static_cast<std::size_t>(y) * width + x]) return false;
    }
  }
  return true;
}

}  // namespace

RegionPlan pi1_select_regions(int height, int width, const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  if (height < 32 || width < 32) throw ValidationError("pi1 needs a patch of at least 32x32");
  const double total = static_cast<double>(height) * width;
  const SideRange large_sides = square_sides(cfg.spectral_large, height, width);
  const SideRange anomaly_sides = square_sides(cfg.spectral_anomaly, height, width);
  const auto draw_side = [&](const AreaRange& range, SideRange sides) {
    const double ratio = uniform(rng, range.lo, range.hi);
    return std::clamp(static_cast<int>(std::lround(std::sqrt(ratio * total))), sides.lo, sides.hi);
  };

  for (int attempt = 0; attempt < 100; ++attempt) {
    const int n_large = cfg.simulate_large ? uniform_int(rng, 1, cfg.max_large) : 0;
    const int n_anomaly = uniform_int(rng, 1, cfg.max_anomalies);
    RegionPlan plan{height, width, {}};
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(height) * width, 0);
    bool ok = true;
    for (int i = 0; i < n_large + n_anomaly && ok; ++i) {
      const bool large = i < n_large;
      const int side = large ? draw_side(cfg.spectral_large, large_sides)
                             : draw_side(cfg.spectral_anomaly, anomaly_sides);
      ok = false;
      for (int tries = 0; tries < 20; ++tries) {
        const int y0 = uniform_int(rng, 0, height - side);
        const int x0 = uniform_int(rng, 0, width - side);
        if (!rect_free(occ, width, y0, x0, side)) continue;
        Region region{large ? RegionKind::kLarge : RegionKind::kAnomaly,
                      std::vector<std::uint8_t>(occ.size(), 0)};
        for (int y = y0; y < y0 + side; ++y) {
          for (int x = x0; x < x0 + side; ++x) {
            occ[static_cast<std::size_t>(y) * width + x] = 1;
            region.mask[static_cast<std::size_t>(y) * width + x] = 1;
          }
        }
        plan.regions.push_back(std::move(region));
        ok = true;
        break;
      }
    }
    if (ok) return plan;
  }
  throw PlacementError("pi1: could not place disjoint regions after 100 retries");
}

Raster channel_shuffle(const Raster& h, Rng& rng, std::vector<int>* permutation) {
  if (h.bands < 1) throw ValidationError("channel_shuffle needs at least one band");
  std::vector<int> perm(static_cast<std::size_t>(h.bands));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Raster out = h;
  for (int b = 0; b < h.bands; ++b) {
    const float* src = h.band_data(perm[static_cast<std::size_t>(b)]);
    std::copy(src, src + h.pixels(), out.band_data(b));
  }
  if (permutation) *permutation = std::move(perm);
  return out;
}

Raster phi1_copy_paste(const Raster& shuffled, const Raster& h, const RegionPlan& plan) {
  if (shuffled.height != h.height || shuffled.width != h.width || shuffled.bands != h.bands) {
    throw ValidationError("phi1: shuffled and source rasters differ in shape");
  }
  if (plan.height != h.height || plan.width != h.width) throw ValidationError("phi1: plan does not fit the raster");
  Raster out = h;
  for (const auto& region : plan.regions) {
    for (std::size_t i = 0; i < region.mask.size(); ++i) {
      if (!region.mask[i]) continue;
      for (int b = 0; b < h.bands; ++b) out.band_data(b)[i] = shuffled.band_data(b)[i];
    }
  }
  return out;
}

namespace {

std::vector<std::uint8_t> warp_mask(const std::vector<std::uint8_t>& mask, int height, int width, double angle,
                                    double shear, double scale) {
  double cy = 0.0, cx = 0.0, n = 0.0;
  int y_lo = height, y_hi = -1, x_lo = width, x_hi = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!mask[static_cast<std::size_t>(y) * width + x]) continue;
      cy += y;
      cx += x;
      n += 1.0;
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
    }
  }
  std::vector<std::uint8_t> out(mask.size(), 0);
  if (n == 0.0) return out;
  cy /= n;
  cx /= n;

  // Forward map on (x, y): scale * R(angle) * [[1, shear], [0, 1]].
  const double c = std::cos(angle), s = std::sin(angle);
  const double a00 = scale * c, a01 = scale * (c * shear - s);
  const double a10 = scale * s, a11 = scale * (s * shear + c);
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

  // Bounding box of the warped source box.
  double ox_lo = 1e300, ox_hi = -1e300, oy_lo = 1e300, oy_hi = -1e300;
  for (double py : {y_lo - 0.5, y_hi + 0.5}) {
    for (double px : {x_lo - 0.5, x_hi + 0.5}) {
      const double dx = px - cx, dy = py - cy;
      const double qx = a00 * dx + a01 * dy + cx, qy = a10 * dx + a11 * dy + cy;
      ox_lo = std::min(ox_lo, qx);
      ox_hi = std::max(ox_hi, qx);
      oy_lo = std::min(oy_lo, qy);
      oy_hi = std::max(oy_hi, qy);
    }
  }
  const int yb = std::max(0, static_cast<int>(std::floor(oy_lo)) - 1);
  const int ye = std::min(height - 1, static_cast<int>(std::ceil(oy_hi)) + 1);
  const int xb = std::max(0, static_cast<int>(std::floor(ox_lo)) - 1);
  const int xe = std::min(width - 1, static_cast<int>(std::ceil(ox_hi)) + 1);
  for (int y = yb; y <= ye; ++y) {
    for (int x = xb; x <= xe; ++x) {
      const double dx = x - cx, dy = y - cy;
      const long sx = std::lround(i00 * dx + i01 * dy + cx);
      const long sy = std::lround(i10 * dx + i11 * dy + cy);
      if (sx < 0 || sy < 0 || sx >= width || sy >= height) continue;
      if (mask[static_cast<std::size_t>(sy) * width + sx]) out[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
  return out;
}

}  // namespace

WarpedSample affine_boundary(const Raster& background, const Raster& content, const RegionPlan& plan,
                             const SimConfig& cfg, Rng& rng) {
  if (background.height != content.height || background.width != content.width ||
      background.bands != content.bands) {
    throw ValidationError("affine_boundary: background and content differ in shape");
  }
  if (plan.height != background.height || plan.width != background.width) {
    throw ValidationError("affine_boundary: plan does not fit the raster");
  }
  const int height = plan.height, width = plan.width;
  const double total = static_cast<double>(height) * width;
  const auto& aff = cfg.affine;

  WarpedSample out{background, LabelMask(height, width), RegionPlan{height, width, {}}};
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(height) * width, 0);
  for (const auto& region : plan.regions) {
    const AreaRange& range = region.kind == RegionKind::kLarge ? cfg.spectral_large : cfg.spectral_anomaly;
    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
      const double angle = uniform(rng, -aff.rotation_deg, aff.rotation_deg) * std::numbers::pi / 180.0;
      const double shear = uniform(rng, -aff.shear, aff.shear);
      const double scale = uniform(rng, aff.scale_lo, aff.scale_hi);
      auto warped = warp_mask(region.mask, height, width, angle, shear, scale);
      const auto area = static_cast<double>(std::count(warped.begin(), warped.end(), 1));
      if (!range.contains(area / total)) continue;
      bool clash = false;
      for (std::size_t i = 0; i < warped.size() && !clash; ++i) clash = warped[i] && occ[i];
      if (clash) continue;
      for (std::size_t i = 0; i < warped.size(); ++i) occ[i] |= warped[i];
      out.plan.regions.push_back({region.kind, std::move(warped)});
      placed = true;
    }
    if (!placed) throw PlacementError("affine_boundary: area range unrecoverable after 10 resamples");
  }

  out.labels = out.plan.to_labels();
  out.image = phi1_copy_paste(content, background, out.plan);
  return out;
}

AnomalySample simulate_spectral(const Raster& h, const SimConfig& cfg, Rng& rng) {
  h.validate();
  if (h.bands < 2) throw ValidationError("spectral simulation needs at least two bands");
  const RegionPlan plan = pi1_select_regions(h.height, h.width, cfg, rng);
  std::vector<int> perm;
  Raster shuffled;
  // The identity permutation would paste the source onto itself.
  do {
    shuffled = channel_shuffle(h, rng, &perm);
  } while (std::is_sorted(perm.begin(), perm.end()));
  WarpedSample w = affine_boundary(h, shuffled, plan, cfg, rng);
  return {std::move(w.image), std::move(w.labels)};
}

// ---------------------------------------------------------------------------
// Object bank

ObjectBank::ObjectBank(std::vector<BankEntry> entries) {
  for (auto& e : entries) {
    if (e.patch.height <= 0 || e.patch.width <= 0) continue;
    if (e.mask.size() != e.patch.pixels()) continue;
    if (e.patch.values.size() != e.patch.pixels() * static_cast<std::size_t>(e.patch.bands)) continue;
    e.area = static_cast<std::size_t>(std::count_if(e.mask.begin(), e.mask.end(), [](auto v) { return v != 0; }));
    if (e.area == 0) continue;
    for (auto& m : e.mask) m = m ? 1 : 0;
    entries_.push_back(std::move(e));
  }
  by_area_.resize(entries_.size());
  std::iota(by_area_.begin(), by_area_.end(), std::size_t{0});
  std::stable_sort(by_area_.begin(), by_area_.end(),
                   [&](std::size_t a, std::size_t b) { return entries_[a].area < entries_[b].area; });
}

ObjectBank build_object_bank(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("object bank directory " + dir.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (item.is_directory()) dirs.push_back(item.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<BankEntry> entries;
  for (const auto& d : dirs) {
    try {
      auto file = read_raster(d);
      BankEntry e;
      e.id = d.filename().string();
      e.patch = std::move(file.raster);
      std::ifstream meta_in(d / "meta.json");
      const auto meta = nlohmann::json::parse(meta_in, nullptr, false);
      if (!meta.is_discarded()) e.category = meta.value("category", "");
      std::ifstream mask_in(d / "mask.bin", std::ios::binary);
      if (!mask_in) continue;
      e.mask.assign(std::istreambuf_iterator<char>(mask_in), std::istreambuf_iterator<char>());
      entries.push_back(std::move(e));
    } catch (const Error&) {
      continue;
    }
  }
  ObjectBank bank(std::move(entries));
  if (bank.empty()) throw ConfigError("object bank " + dir.string() + " holds no valid entries");
  return bank;
}

void write_bank_entry(const BankEntry& entry, const fs::path& dir) {
  write_raster(entry.patch, std::nullopt, dir);
  std::ifstream meta_in(dir / "meta.json");
  auto meta = nlohmann::json::parse(meta_in);
  meta_in.close();
  meta["category"] = entry.category;
  std::ofstream meta_out(dir / "meta.json", std::ios::trunc);
  meta_out << meta.dump();
  std::ofstream mask_out(dir / "mask.bin", std::ios::binary | std::ios::trunc);
  mask_out.write(reinterpret_cast<const char*>(entry.mask.data()), static_cast<std::streamsize>(entry.mask.size()));
  if (!mask_out || !meta_out) throw IoError("cannot write bank entry " + dir.string());
}

std::vector<BankEntry> synth_bank_entries(int count, std::uint64_t seed) {
  static constexpr const char* kShapes[] = {"ellipse", "box", "cross", "lshape", "blob"};
  std::vector<BankEntry> out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int n = 0; n < count; ++n) {
    Rng rng = split_stream(seed, static_cast<std::uint64_t>(n));
    const int h = uniform_int(rng, 10, 28);
    const int w = uniform_int(rng, 10, 28);
    const int shape = uniform_int(rng, 0, 4);
    BankEntry e;
    e.id = "obj" + std::to_string(n);
    e.category = kShapes[shape];
    e.patch = Raster(h, w, 3, Modality::kVisible);
    e.mask.assign(static_cast<std::size_t>(h) * w, 0);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    std::vector<std::array<double, 3>> blobs;
    for (int k = 0; k < 3; ++k) {
      blobs.push_back({uniform(rng, 0.3, 0.7) * h, uniform(rng, 0.3, 0.7) * w, uniform(rng, 0.2, 0.35) * std::min(h, w)});
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dy = (y - cy) / (h / 2.0), dx = (x - cx) / (w / 2.0);
        bool on = false;
        switch (shape) {
          case 0: on = dy * dy + dx * dx <= 1.0; break;
          case 1: on = std::abs(dy) <= 0.8 && std::abs(dx) <= 0.8; break;
          case 2: on = std::abs(dy) <= 0.3 || std::abs(dx) <= 0.3; break;
          case 3: on = (dx <= -0.2) || (dy >= 0.2); break;
          default:
            for (const auto& b : blobs) on = on || std::hypot(y - b[0], x - b[1]) <= b[2];
        }
        e.mask[static_cast<std::size_t>(y) * w + x] = on ? 1 : 0;
      }
    }
    const bool bright = (rng() & 1u) != 0;
    for (int b = 0; b < 3; ++b) {
      const double base = bright ? uniform(rng, 0.85, 1.0) : uniform(rng, 0.0, 0.15);
      const double ramp = uniform(rng, -0.05, 0.05);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const bool on = e.mask[static_cast<std::size_t>(y) * w + x] != 0;
          const double v = on ? base + ramp * (x - cx) / w + 0.02 * gauss(rng) : 0.5;
          e.patch.at(b, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial simulation

std::vector<std::uint8_t> resize_mask_nearest(const std::vector<std::uint8_t>& mask, int h, int w, int out_h,
                                              int out_w) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / out_w));
      out[static_cast<std::size_t>(y) * out_w + x] = mask[static_cast<std::size_t>(sy) * w + sx];
    }
  }
  return out;
}

Raster resize_bilinear(const Raster& r, int out_h, int out_w) {
  Raster out(out_h, out_w, r.bands, r.modality);
  const double sy = static_cast<double>(r.height) / out_h;
  const double sx = static_cast<double>(r.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, r.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, r.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, r.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, r.width - 1);
      const double wx = fx - x0;
      for (int b = 0; b < r.bands; ++b) {
        const double top = r.at(b, y0, x0) * (1 - wx) + r.at(b, y0, x1) * wx;
        const double bot = r.at(b, y1, x0) * (1 - wx) + r.at(b, y1, x1) * wx;
        out.at(b, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

AnomalySample simulate_spatial(const Raster& s, const std::optional<LabelMask>& s_labels, const ObjectBank& bank,
                               const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  s.validate();
  if (s.bands != 1 && s.bands != 3) throw ValidationError("spatial simulation needs a 1- or 3-band scene");
  if (s.height < 32 || s.width < 32) throw ValidationError("spatial simulation needs at least 32x32");
  if (bank.empty()) throw ConfigError("object bank is empty");
  if (s_labels && (s_labels->height != s.height || s_labels->width != s.width)) {
    throw ValidationError("scene labels differ in size from the scene");
  }
  const int height = s.height, width = s.width;
  const double total = static_cast<double>(height) * width;

  AnomalySample out{s, LabelMask(height, width)};
  if (s_labels) {
    for (std::size_t i = 0; i < out.labels.codes.size(); ++i) {
      if (s_labels->codes[i] != kBackground) out.labels.codes[i] = kIgnore;
    }
  }

  // Scene intensity range per band: pasted objects span it end to end.
  std::vector<float> lo(static_cast<std::size_t>(s.bands)), hi(static_cast<std::size_t>(s.bands));
  for (int b = 0; b < s.bands; ++b) {
    const auto [mn, mx] = std::minmax_element(s.band_data(b), s.band_data(b) + s.pixels());
    lo[static_cast<std::size_t>(b)] = *mn;
    hi[static_cast<std::size_t>(b)] = *mx;
  }

  const int n_large = cfg.simulate_large ? uniform_int(rng, 1, cfg.max_large) : 0;
  const int n_anomaly = uniform_int(rng, 1, cfg.max_anomalies);
  const auto needed = static_cast<std::size_t>(n_large + n_anomaly);
  if (bank.size() < needed) throw ConfigError("object bank exhausted");
  std::vector<std::size_t> picks(bank.size());
  std::iota(picks.begin(), picks.end(), std::size_t{0});
  for (std::size_t i = 0; i < needed; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, picks.size() - 1);
    std::swap(picks[i], picks[pick(rng)]);
  }

  std::vector<std::uint8_t> occ(static_cast<std::size_t>(height) * width, 0);
  for (std::size_t k = 0; k < needed; ++k) {
    const bool large = k < static_cast<std::size_t>(n_large);
    const AreaRange& range = large ? cfg.spatial_large : cfg.spatial_anomaly;
    const BankEntry& entry = bank[picks[k]];

    // pi2 + phi2: resize into the range, then hard paste at a free interior
    // position. Draws are capped at an even share of the free area and each failed
    // attempt narrows them toward the lower end of the range.
    const auto occupied = static_cast<double>(std::count(occ.begin(), occ.end(), 1));
    const double share = (1.0 - occupied / total) / static_cast<double>(needed - k + 1);
    double hi_eff = std::clamp(share, range.lo, range.hi);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double ratio = uniform(rng, range.lo, hi_eff);
      hi_eff = range.lo + 0.9 * (hi_eff - range.lo);
      const double scale = std::sqrt(ratio * total / static_cast<double>(entry.area));
      const int oh = std::max(1, static_cast<int>(std::lround(entry.patch.height * scale)));
      const int ow = std::max(1, static_cast<int>(std::lround(entry.patch.width * scale)));
      if (oh > height || ow > width) continue;
      const auto mask = resize_mask_nearest(entry.mask, entry.patch.height, entry.patch.width, oh, ow);
      const auto area = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
      if (!range.contains(area / total)) continue;

      const int y0 = uniform_int(rng, 0, height - oh);
      const int x0 = uniform_int(rng, 0, width - ow);
      bool clash = false;
      for (int y = 0; y < oh && !clash; ++y) {
        for (int x = 0; x < ow && !clash; ++x) {
          clash = mask[static_cast<std::size_t>(y) * ow + x] && occ[static_cast<std::size_t>(y0 + y) * width + x0 + x];
        }
      }
      if (clash) continue;
      const Raster patch = regroup_bands(resize_bilinear(entry.patch, oh, ow), s.bands);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          if (!mask[static_cast<std::size_t>(y) * ow + x]) continue;
          const auto idx = static_cast<std::size_t>(y0 + y) * width + x0 + x;
          occ[idx] = 1;
          out.labels.codes[idx] = large ? kLargeObject : kAnomaly;
          for (int b = 0; b < s.bands; ++b) {
            const auto bi = static_cast<std::size_t>(b);
            out.image.band_data(b)[idx] = lo[bi] + patch.at(b, y, x) * (hi[bi] - lo[bi]);
          }
        }
      }
      placed = true;
    }
    if (!placed) throw PlacementError("phi2: could not place a bank object after 100 attempts");
  }
  return out;
}

}  // namespace adrs
