#include "adrs/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "adrs/error.hpp"
#include "adrs/rng.hpp"

namespace adrs {

namespace {

std::string join(std::string_view prefix, std::string_view leaf) {
  std::string s(prefix);
  s += '.';
  s += leaf;
  return s;
}

void add_conv(ModelParams& p, Rng& rng, const std::string& name, int cout, int cin, int k, bool bias) {
  const int fan_in = cin * k * k;
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  std::vector<float> w(static_cast<std::size_t>(cout) * fan_in);
  for (float& v : w) v = dist(rng);
  p.add(name + ".w", {cout, cin, k, k}, std::move(w));
  if (bias) p.add(name + ".b", {cout}, 0.0f);
}

void add_norm(ModelParams& p, const std::string& name, int c) {
  p.add(name + ".g", {c}, 1.0f);
  p.add(name + ".b", {c}, 0.0f);
}

void add_lam(ModelParams& p, Rng& rng, const std::string& name, int c) {
  std::normal_distribution<float> dist(0.0f, 0.1f);
  std::vector<float> w(static_cast<std::size_t>(c) * 9);
  for (float& v : w) v = dist(rng);
  p.add(name + ".w", {c, 1, 3, 3}, std::move(w));
  p.add(name + ".b", {c}, 0.0f);
}

Graph::Var conv_norm_relu(Graph& g, Graph::Var x, const ModelParams& p, const std::string& name, int stride) {
  const auto y = g.conv(x, p.id(name + ".conv.w"), Graph::npos, stride);
  const auto z = g.instance_norm(y, p.id(name + ".in.g"), p.id(name + ".in.b"));
  g.drop(y);
  const auto r = g.relu(z);
  g.drop(z);
  return r;
}

}  // namespace

void NetworkConfig::validate() const {
  if (in_channels < 1 || features < 1) throw ConfigError("network channel counts must be positive");
  for (int w : widths) {
    if (w < 1) throw ConfigError("encoder widths must be positive");
  }
}

nlohmann::json to_json(const NetworkConfig& c) {
  return {{"in_channels", c.in_channels}, {"features", c.features}, {"widths", c.widths}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.features = j.value("features", c.features);
  if (j.contains("widths")) c.widths = j["widths"].get<std::array<int, 5>>();
  c.validate();
  return c;
}

ModelParams init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  const int f = cfg.features;
  add_conv(p, rng, "stem.conv1", f, cfg.in_channels, 3, false);
  add_norm(p, "stem.in1", f);
  add_conv(p, rng, "stem.conv2", f, f, 3, false);
  add_norm(p, "stem.in2", f);

  int prev = f;
  for (int i = 0; i < 5; ++i) {
    const std::string name = "enc" + std::to_string(i + 1);
    const int c = cfg.widths[static_cast<std::size_t>(i)];
    add_conv(p, rng, name + ".conv", c, prev, 3, false);
    add_norm(p, name + ".in", c);
    prev = c;
  }
  for (int i = 0; i < 5; ++i) {
    const std::string name = "f1_" + std::to_string(i + 1);
    const int c = cfg.widths[static_cast<std::size_t>(i)];
    add_lam(p, rng, name + ".lam", c);
    add_conv(p, rng, name + ".proj", c, 2 * c, 1, true);
  }
  for (int i = 0; i < 4; ++i) {
    const std::string name = "dec" + std::to_string(i + 1);
    const int c = cfg.widths[static_cast<std::size_t>(i)];
    add_conv(p, rng, name + ".proj", c, c + cfg.widths[static_cast<std::size_t>(i + 1)], 1, true);
  }
  add_conv(p, rng, "fuse_t.proj", f, f + cfg.widths[0], 1, true);
  {
    std::normal_distribution<float> dist(0.0f, std::sqrt(1.0f / static_cast<float>(f)));
    std::vector<float> w(static_cast<std::size_t>(f));
    for (float& v : w) v = dist(rng);
    p.add("head.w", {1, f, 1, 1}, std::move(w));
    p.add("head.b", {1}, 0.0f);
  }
  return p;
}

Tensor adapt_channels(const Raster& raster, int in_channels) {
  raster.validate();
  Raster norm = raster;
  for (int b = 0; b < norm.bands; ++b) {
    float* band = norm.band_data(b);
    const auto [lo, hi] = std::minmax_element(band, band + norm.pixels());
    const float mn = *lo, span = *hi - *lo;
    for (std::size_t i = 0; i < norm.pixels(); ++i) band[i] = span > 0.0f ? (band[i] - mn) / span : 0.0f;
  }
  const Raster grouped = regroup_bands(norm, in_channels);
  Tensor t(in_channels, raster.height, raster.width);
  t.data = grouped.values;
  return t;
}

Tensor pad_reflect(const Tensor& x, int multiple) {
  const int h = (x.height + multiple - 1) / multiple * multiple;
  const int w = (x.width + multiple - 1) / multiple * multiple;
  if (h == x.height && w == x.width) return x;
  const auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  Tensor out(x.channels, h, w);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = reflect(y, x.height);
      for (int xx = 0; xx < w; ++xx) out.at(c, y, xx) = x.at(c, sy, reflect(xx, x.width));
    }
  }
  return out;
}

Tensor crop(const Tensor& x, int height, int width) {
  if (height > x.height || width > x.width) throw ShapeError("crop larger than the tensor");
  if (height == x.height && width == x.width) return x;
  Tensor out(x.channels, height, width);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const float* src = x.data.data() + (static_cast<std::size_t>(c) * x.height + y) * x.width;
      std::copy_n(src, width, &out.at(c, y, 0));
    }
  }
  return out;
}

Graph::Var build_stem(Graph& g, Graph::Var x, const ModelParams& p) {
  auto a = g.conv(x, p.id("stem.conv1.w"), Graph::npos);
  auto b = g.instance_norm(a, p.id("stem.in1.g"), p.id("stem.in1.b"));
  g.drop(a);
  auto c = g.relu(b);
  g.drop(b);
  auto d = g.conv(c, p.id("stem.conv2.w"), Graph::npos);
  g.drop(c);
  auto e = g.instance_norm(d, p.id("stem.in2.g"), p.id("stem.in2.b"));
  g.drop(d);
  auto out = g.relu(e);
  g.drop(e);
  return out;
}

Graph::Var build_lam(Graph& g, Graph::Var x, const ModelParams& p, std::string_view prefix) {
  const auto logits = g.depthwise3x3(x, p.id(join(prefix, "w")), p.id(join(prefix, "b")));
  const auto gate = g.sigmoid(logits);
  g.drop(logits);
  const auto out = g.mul(gate, x);
  g.drop(gate);
  return out;
}

Graph::Var build_fuse_f1(Graph& g, Graph::Var n, const ModelParams& p, std::string_view prefix) {
  const auto attended = build_lam(g, n, p, join(prefix, "lam"));
  const auto cat = g.concat(n, attended);
  g.drop(attended);
  const auto out = g.conv(cat, p.id(join(prefix, "proj.w")), p.id(join(prefix, "proj.b")));
  g.drop(cat);
  return out;
}

Graph::Var build_fuse_f2(Graph& g, Graph::Var low, Graph::Var high, const ModelParams& p, std::string_view prefix) {
  const Tensor& lo = g.value(low);
  const auto up = g.resize(high, lo.height, lo.width);
  const auto cat = g.concat(low, up);
  if (up != high) g.drop(up);
  const auto out = g.conv(cat, p.id(join(prefix, "proj.w")), p.id(join(prefix, "proj.b")));
  g.drop(cat);
  return out;
}

NetworkVars build_network(Graph& g, Graph::Var x, const ModelParams& p, const NetworkConfig& cfg) {
  const Tensor& in = g.value(x);
  if (in.channels != cfg.in_channels) throw ShapeError("network input has the wrong channel count");
  if (in.height % NetworkConfig::kAlign != 0 || in.width % NetworkConfig::kAlign != 0) {
    throw ShapeError("network input height/width must be multiples of 16");
  }
  NetworkVars v{};
  v.d = build_stem(g, x, p);

  Graph::Var prev = v.d;
  for (int i = 0; i < 5; ++i) {
    v.n[static_cast<std::size_t>(i)] =
        conv_norm_relu(g, prev, p, "enc" + std::to_string(i + 1), i == 0 ? 1 : 2);
    prev = v.n[static_cast<std::size_t>(i)];
  }
  std::array<Graph::Var, 5> fused{};
  for (int i = 0; i < 5; ++i) {
    fused[static_cast<std::size_t>(i)] =
        build_fuse_f1(g, v.n[static_cast<std::size_t>(i)], p, "f1_" + std::to_string(i + 1));
  }
  // Decoder: N'_5 = F1(N_5); N'_i = relu(F2(F1(N_i), N'_{i+1})).
  Graph::Var dec = fused[4];
  for (int i = 3; i >= 0; --i) {
    const auto f = build_fuse_f2(g, fused[static_cast<std::size_t>(i)], dec, p, "dec" + std::to_string(i + 1));
    g.drop(dec);
    dec = g.relu(f);
    g.drop(f);
  }
  v.t = build_fuse_f2(g, v.d, dec, p, "fuse_t");
  g.drop(dec);
  v.logits = g.conv(v.t, p.id("head.w"), p.id("head.b"));
  v.p = g.sigmoid(v.logits);
  return v;
}

FeatureCube stem_forward(const Tensor& x, const ModelParams& p) {
  if (x.height % NetworkConfig::kAlign != 0 || x.width % NetworkConfig::kAlign != 0) {
    throw ShapeError("stem input height/width must be multiples of 16");
  }
  Graph g(p, false);
  return g.take(build_stem(g, g.input(x), p));
}

FeatureCube lam(const FeatureCube& x, const ModelParams& p, std::string_view prefix) {
  Graph g(p, false);
  return g.take(build_lam(g, g.input(x), p, prefix));
}

FeatureCube fuse_f1(const FeatureCube& n, const ModelParams& p, std::string_view prefix) {
  Graph g(p, false);
  return g.take(build_fuse_f1(g, g.input(n), p, prefix));
}

FeatureCube fuse_f2(const FeatureCube& low, const FeatureCube& high, const ModelParams& p, std::string_view prefix) {
  Graph g(p, false);
  const auto l = g.input(low);
  const auto h = g.input(high);
  return g.take(build_fuse_f2(g, l, h, p, prefix));
}

ForwardResult forward(const Tensor& x, const ModelParams& p, const NetworkConfig& cfg) {
  Graph g(p, false);
  const auto v = build_network(g, g.input(x), p, cfg);
  ForwardResult r;
  r.n5_height = g.value(v.n[4]).height;
  r.n5_width = g.value(v.n[4]).width;
  Tensor prob = g.take(v.p);
  r.p = AnomalyMap(prob.height, prob.width);
  r.p.values = std::move(prob.data);
  r.t = g.take(v.t);
  r.d = g.take(v.d);
  return r;
}

AnomalyMap predict(const Raster& raster, const ModelParams& p, const NetworkConfig& cfg) {
  const Tensor x = pad_reflect(adapt_channels(raster, cfg.in_channels), NetworkConfig::kAlign);
  Graph g(p, false);
  const auto v = build_network(g, g.input(x), p, cfg);
  Tensor prob = g.take(v.p);
  prob = crop(prob, raster.height, raster.width);
  AnomalyMap map(prob.height, prob.width);
  map.values = std::move(prob.data);
  return map;
}

}  // namespace adrs
