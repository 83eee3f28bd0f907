#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "adrs/error.hpp"
#include "adrs/raster_io.hpp"
#include "adrs/sim.hpp"
#include "doctest.h"
#include "support/temp_dir.hpp"

using namespace adrs;
using adrs::testing::TempDir;

namespace {

Raster random_raster(int h, int w, int bands, std::uint64_t seed) {
  Rng rng(seed);
  Raster r(h, w, bands);
  for (auto& v : r.values) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  return r;
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

// Side of a square mask; 0 when the mask is not a filled square.
int square_side(const std::vector<std::uint8_t>& mask, int h, int w) {
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask[static_cast<std::size_t>(y) * w + x]) continue;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  const auto area = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
  const int side = y1 - y0 + 1;
  return (side == x1 - x0 + 1 && side * side == area) ? side : 0;
}

bool pairwise_disjoint(const RegionPlan& plan) {
  std::vector<int> cover(static_cast<std::size_t>(plan.height) * plan.width, 0);
  for (const auto& r : plan.regions) {
    for (std::size_t i = 0; i < r.mask.size(); ++i) cover[i] += r.mask[i];
  }
  return std::all_of(cover.begin(), cover.end(), [](int c) { return c <= 1; });
}

BankEntry square_entry(const std::string& id, int side, int fill) {
  BankEntry e;
  e.id = id;
  e.category = "square";
  e.patch = Raster(side, side, 3);
  std::fill(e.patch.values.begin(), e.patch.values.end(), 0.5f);
  e.mask.assign(static_cast<std::size_t>(side) * side, 0);
  for (int i = 0; i < fill; ++i) e.mask[static_cast<std::size_t>(i)] = 1;
  e.area = static_cast<std::size_t>(fill);
  return e;
}

}  // namespace

TEST_CASE("pi1 anomaly squares on 224x224 have sides in [18, 33]") {
  SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto plan = pi1_select_regions(224, 224, cfg, rng);
    for (const auto& r : plan.regions) {
      const int side = square_side(r.mask, 224, 224);
      REQUIRE(side > 0);
      if (r.kind == RegionKind::kAnomaly) {
        CHECK(side >= 18);
        CHECK(side <= 33);
      }
    }
  }
}

TEST_CASE("pi1 on a 32x32 patch gives anomaly sides 3 or 4") {
  SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto plan = pi1_select_regions(32, 32, cfg, rng);
    for (const auto& r : plan.regions) {
      if (r.kind != RegionKind::kAnomaly) continue;
      const int side = square_side(r.mask, 32, 32);
      CHECK((side == 3 || side == 4));
    }
  }
}

TEST_CASE("pi1 plans are disjoint, counted and area controlled over 1000 draws") {
  SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto plan = pi1_select_regions(64, 64, cfg, rng);
    REQUIRE(pairwise_disjoint(plan));
    int anomalies = 0, large = 0;
    for (std::size_t i = 0; i < plan.regions.size(); ++i) {
      const bool is_large = plan.regions[i].kind == RegionKind::kLarge;
      (is_large ? large : anomalies)++;
      REQUIRE((is_large ? cfg.spectral_large : cfg.spectral_anomaly).contains(plan.area_ratio(i)));
    }
    REQUIRE(anomalies >= 1);
    REQUIRE(anomalies <= 2);
    REQUIRE(large >= 1);
    REQUIRE(large <= 2);
  }
}

TEST_CASE("pi1 without large objects and with undersized input") {
  SimConfig cfg;
  cfg.simulate_large = false;
  Rng rng(1);
  const auto plan = pi1_select_regions(64, 64, cfg, rng);
  for (const auto& r : plan.regions) CHECK(r.kind == RegionKind::kAnomaly);
  CHECK_THROWS_AS(pi1_select_regions(31, 64, cfg, rng), ValidationError);
}

TEST_CASE("channel shuffle of a single band is the identity") {
  const Raster r = random_raster(8, 8, 1, 2);
  Rng rng(5);
  CHECK(channel_shuffle(r, rng) == r);
}

TEST_CASE("channel shuffle preserves every pixel's multiset of values") {
  const Raster r = random_raster(6, 5, 7, 3);
  Rng rng(9);
  std::vector<int> perm;
  const Raster s = channel_shuffle(r, rng, &perm);
  REQUIRE(perm.size() == 7);
  for (int b = 0; b < 7; ++b) {
    CHECK(std::equal(s.band_data(b), s.band_data(b) + s.pixels(), r.band_data(perm[static_cast<std::size_t>(b)])));
  }
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 5; ++x) {
      std::multiset<float> a, c;
      for (int b = 0; b < 7; ++b) {
        a.insert(r.at(b, y, x));
        c.insert(s.at(b, y, x));
      }
      CHECK(a == c);
    }
  }
}

TEST_CASE("channel shuffle of 3 bands with a fixed seed is reproducible") {
  const Raster r = random_raster(4, 4, 3, 1);
  std::vector<int> p1, p2;
  Rng a(42), b(42);
  const Raster s1 = channel_shuffle(r, a, &p1);
  const Raster s2 = channel_shuffle(r, b, &p2);
  CHECK(p1 == p2);
  CHECK(s1 == s2);
  CHECK(p1 == std::vector<int>{0, 2, 1});
}

TEST_CASE("phi1 copy paste") {
  const Raster h = random_raster(20, 20, 3, 1);
  const Raster cs = random_raster(20, 20, 3, 2);
  RegionPlan plan{20, 20, {}};
  CHECK(phi1_copy_paste(cs, h, plan) == h);

  Region all{RegionKind::kLarge, std::vector<std::uint8_t>(400, 1)};
  plan.regions = {all};
  CHECK(phi1_copy_paste(cs, h, plan) == cs);

  Region sq{RegionKind::kAnomaly, std::vector<std::uint8_t>(400, 0)};
  for (int y = 5; y < 15; ++y) {
    for (int x = 3; x < 13; ++x) sq.mask[static_cast<std::size_t>(y) * 20 + x] = 1;
  }
  plan.regions = {sq};
  const Raster out = phi1_copy_paste(cs, h, plan);
  int differing = 0;
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      bool diff = false;
      for (int b = 0; b < 3; ++b) diff = diff || out.at(b, y, x) != h.at(b, y, x);
      differing += diff;
    }
  }
  CHECK(differing == 100);
  CHECK_THROWS_AS(phi1_copy_paste(random_raster(10, 20, 3, 1), h, plan), ValidationError);
}

TEST_CASE("identity affine leaves the plan masks unchanged") {
  SimConfig cfg;
  cfg.affine = {0.0, 0.0, 1.0, 1.0};
  const Raster h = random_raster(64, 64, 5, 1);
  const Raster cs = random_raster(64, 64, 5, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto plan = pi1_select_regions(64, 64, cfg, rng);
    const auto warped = affine_boundary(h, cs, plan, cfg, rng);
    CHECK(warped.labels == plan.to_labels());
    CHECK(warped.image == phi1_copy_paste(cs, h, plan));
  }
}

TEST_CASE("affine warps keep regions disjoint and inside their ranges") {
  SimConfig cfg;
  const Raster h = random_raster(96, 96, 4, 1);
  const Raster cs = random_raster(96, 96, 4, 2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto plan = pi1_select_regions(96, 96, cfg, rng);
    try {
      const auto warped = affine_boundary(h, cs, plan, cfg, rng);
      REQUIRE(pairwise_disjoint(warped.plan));
      for (std::size_t i = 0; i < warped.plan.regions.size(); ++i) {
        const auto& range =
            warped.plan.regions[i].kind == RegionKind::kLarge ? cfg.spectral_large : cfg.spectral_anomaly;
        REQUIRE(range.contains(warped.plan.area_ratio(i)));
      }
      CHECK(warped.labels == warped.plan.to_labels());
    } catch (const PlacementError&) {
      // Allowed outcome; the training loop retries.
    }
  }
}

TEST_CASE("spectral samples: permuted anomalies, untouched background") {
  SimConfig cfg;
  const Raster h = random_raster(64, 64, 6, 7);
  int samples = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    AnomalySample s;
    try {
      s = simulate_spectral(h, cfg, rng);
    } catch (const PlacementError&) {
      continue;
    }
    ++samples;
    CHECK(s.labels.count(kAnomaly) > 0);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const auto code = s.labels.at(y, x);
        std::multiset<float> a, b;
        bool equal = true;
        for (int band = 0; band < 6; ++band) {
          a.insert(h.at(band, y, x));
          b.insert(s.image.at(band, y, x));
          equal = equal && h.at(band, y, x) == s.image.at(band, y, x);
        }
        if (code == kBackground) REQUIRE(equal);
        if (code == kAnomaly) {
          REQUIRE(a == b);
          REQUIRE_FALSE(equal);
        }
      }
    }
  }
  CHECK(samples >= 45);
}

TEST_CASE("spectral simulation is deterministic and matches the recorded checksum") {
  SimConfig cfg;
  const Raster h = random_raster(64, 64, 6, 7);
  Rng a(123), b(123);
  const auto s1 = simulate_spectral(h, cfg, a);
  const auto s2 = simulate_spectral(h, cfg, b);
  CHECK(s1.image == s2.image);
  CHECK(s1.labels == s2.labels);
  CHECK(fnv1a(s1.labels.codes) == 6024553776373344816ULL);
}

TEST_CASE("spectral simulation needs at least two bands") {
  Rng rng(1);
  CHECK_THROWS_AS(simulate_spectral(random_raster(64, 64, 1, 1), SimConfig{}, rng), ValidationError);
}

TEST_CASE("object bank loading, filtering and area index") {
  TempDir dir;
  CHECK_THROWS_AS(build_object_bank(dir.path()), ConfigError);
  CHECK_THROWS_AS(build_object_bank(dir / "missing"), ConfigError);

  write_bank_entry(square_entry("a", 6, 20), dir / "a");
  write_bank_entry(square_entry("b", 6, 0), dir / "b");
  write_bank_entry(square_entry("c", 6, 9), dir / "c");
  const auto bank = build_object_bank(dir.path());
  CHECK(bank.size() == 2);

  const ObjectBank synth(synth_bank_entries(40, 3));
  REQUIRE(synth.size() == 40);
  const auto& order = synth.by_area();
  REQUIRE(order.size() == 40);
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(synth[order[i - 1]].area <= synth[order[i]].area);
}

TEST_CASE("object bank entries round trip through disk") {
  TempDir dir;
  const auto entries = synth_bank_entries(5, 11);
  for (const auto& e : entries) write_bank_entry(e, dir / e.id);
  const auto bank = build_object_bank(dir.path());
  REQUIRE(bank.size() == 5);
  for (const auto& e : bank.entries()) {
    const auto it = std::find_if(entries.begin(), entries.end(), [&](const BankEntry& o) { return o.id == e.id; });
    REQUIRE(it != entries.end());
    CHECK(e.patch == it->patch);
    CHECK(e.mask == it->mask);
  }
}

TEST_CASE("spatial samples: locality, ignore codes and area control") {
  SimConfig cfg;
  const ObjectBank bank(synth_bank_entries(30, 5));
  for (int bands : {1, 3}) {
    const Raster s = random_raster(96, 96, bands, 17);
    LabelMask objects(96, 96);
    for (int y = 10; y < 40; ++y) {
      for (int x = 20; x < 51; ++x) objects.at(y, x) = kLargeObject;
    }
    const double labelled = static_cast<double>(objects.count(kLargeObject)) / (96.0 * 96.0);
    CHECK(labelled == doctest::Approx(0.1).epsilon(0.02));
    int placed = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Rng rng(seed);
      AnomalySample out;
      try {
        out = simulate_spatial(s, objects, bank, cfg, rng);
      } catch (const PlacementError&) {
        continue;
      }
      ++placed;
      int anomaly_pixels = 0;
      for (std::size_t i = 0; i < out.labels.codes.size(); ++i) {
        const auto code = out.labels.codes[i];
        if (code == kBackground) {
          for (int b = 0; b < bands; ++b) REQUIRE(out.image.values[b * s.pixels() + i] == s.values[b * s.pixels() + i]);
          REQUIRE(objects.codes[i] == kBackground);
        }
        if (code == kIgnore) REQUIRE(objects.codes[i] != kBackground);
        if (objects.codes[i] != kBackground) REQUIRE(code != kBackground);
        anomaly_pixels += code == kAnomaly;
      }
      // Total anomaly area covers 1-2 objects each inside the range.
      const double ratio = anomaly_pixels / (96.0 * 96.0);
      CHECK(ratio >= cfg.spatial_anomaly.lo);
      CHECK(ratio <= 2 * cfg.spatial_anomaly.hi);
    }
    CHECK(placed >= 27);
  }
}

TEST_CASE("spatial simulation on 224x224 keeps anomalies in [0.02, 0.06] each") {
  SimConfig cfg;
  cfg.simulate_large = false;
  cfg.max_anomalies = 1;
  const ObjectBank bank(synth_bank_entries(20, 8));
  const Raster s = random_raster(224, 224, 3, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto out = simulate_spatial(s, std::nullopt, bank, cfg, rng);
    const double ratio = static_cast<double>(out.labels.count(kAnomaly)) / (224.0 * 224.0);
    CHECK(cfg.spatial_anomaly.contains(ratio));
  }
}

TEST_CASE("spatial simulation determinism and preconditions") {
  const ObjectBank bank(synth_bank_entries(10, 1));
  const Raster s = random_raster(64, 64, 1, 2);
  Rng a(7), b(7);
  const auto s1 = simulate_spatial(s, std::nullopt, bank, SimConfig{}, a);
  const auto s2 = simulate_spatial(s, std::nullopt, bank, SimConfig{}, b);
  CHECK(s1.image == s2.image);
  CHECK(s1.labels == s2.labels);
  Rng rng(1);
  CHECK_THROWS_AS(simulate_spatial(random_raster(64, 64, 2, 1), std::nullopt, bank, SimConfig{}, rng),
                  ValidationError);
  CHECK_THROWS_AS(simulate_spatial(s, std::nullopt, ObjectBank{}, SimConfig{}, rng), ConfigError);
  CHECK_THROWS_AS(simulate_spatial(s, std::nullopt, ObjectBank(synth_bank_entries(1, 1)), SimConfig{}, rng),
                  ConfigError);
}

TEST_CASE("sim config validation") {
  SimConfig c;
  c.spectral_anomaly = {0.03, 0.01};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.spatial_anomaly.hi = 0.07;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  const auto j = nlohmann::json{{"max_anomalies", 1}, {"spectral_anomaly", {0.01, 0.02}}};
  const auto parsed = sim_config_from_json(j);
  CHECK(parsed.max_anomalies == 1);
  CHECK(parsed.spectral_anomaly.lo == 0.01);
}

TEST_CASE("mask resize is nearest neighbour") {
  const std::vector<std::uint8_t> m{1, 0, 0, 1};
  const auto up = resize_mask_nearest(m, 2, 2, 4, 4);
  const std::vector<std::uint8_t> expect{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1};
  CHECK(up == expect);
}
