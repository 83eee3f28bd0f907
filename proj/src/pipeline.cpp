#include "adrs/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "adrs/error.hpp"
#include "adrs/raster_io.hpp"

namespace adrs {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'R', 'S', 'C', 'K', 'P', 'T'};
constexpr int kPlacementAttempts = 10;

nlohmann::json range_json(const AreaRange& r) { return nlohmann::json::array({r.lo, r.hi}); }

nlohmann::json sim_to_json(const SimConfig& c) {
  return {{"spectral_anomaly", range_json(c.spectral_anomaly)},
          {"spectral_large", range_json(c.spectral_large)},
          {"spatial_anomaly", range_json(c.spatial_anomaly)},
          {"spatial_large", range_json(c.spatial_large)},
          {"max_anomalies", c.max_anomalies},
          {"max_large", c.max_large},
          {"simulate_large", c.simulate_large},
          {"rotation_deg", c.affine.rotation_deg},
          {"shear", c.affine.shear},
          {"scale_lo", c.affine.scale_lo},
          {"scale_hi", c.affine.scale_hi},
          {"patch_side", c.patch_side}};
}

nlohmann::json hypersphere_to_json(const HypersphereConfig& c) {
  return {{"beta", c.beta},
          {"nu", c.nu},
          {"eps", c.eps},
          {"rho", c.rho},
          {"stop_radius_gradient", c.stop_radius_gradient},
          {"form", c.form == FeatureLossForm::kReciprocal ? "reciprocal" : "exp_difference"}};
}

HypersphereConfig hypersphere_from_json(const nlohmann::json& j) {
  HypersphereConfig c;
  c.beta = j.value("beta", c.beta);
  c.nu = j.value("nu", c.nu);
  c.eps = j.value("eps", c.eps);
  c.rho = j.value("rho", c.rho);
  c.stop_radius_gradient = j.value("stop_radius_gradient", c.stop_radius_gradient);
  const auto form = j.value("form", std::string("reciprocal"));
  if (form == "reciprocal") {
    c.form = FeatureLossForm::kReciprocal;
  } else if (form == "exp_difference") {
    c.form = FeatureLossForm::kExpDifference;
  } else {
    throw ConfigError("unknown feature loss form: " + form);
  }
  c.validate();
  return c;
}

nlohmann::json ranking_to_json(const RankingState& s) {
  return {{"k", s.k}, {"eta", s.eta}, {"delta", s.delta}, {"theta", s.theta}, {"lambda", s.lambda}};
}

RankingState ranking_from_json(const nlohmann::json& j) {
  RankingState s;
  s.k = j.at("k").get<int>();
  s.eta = j.at("eta").get<std::vector<double>>();
  s.delta = j.at("delta").get<std::vector<double>>();
  s.theta = j.at("theta").get<std::vector<double>>();
  s.lambda = j.at("lambda").get<std::vector<double>>();
  s.validate();
  return s;
}

template <typename T>
void put(std::vector<char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get(const std::vector<char>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return v;
}

Raster crop_raster(const Raster& r, int y0, int x0, int h, int w) {
  Raster out(h, w, r.bands, r.modality);
  for (int b = 0; b < r.bands; ++b) {
    for (int y = 0; y < h; ++y) {
      const float* src = r.band_data(b) + static_cast<std::size_t>(y0 + y) * r.width + x0;
      std::copy_n(src, w, out.band_data(b) + static_cast<std::size_t>(y) * w);
    }
  }
  return out;
}

LabelMask crop_labels(const LabelMask& m, int y0, int x0, int h, int w) {
  LabelMask out(h, w);
  for (int y = 0; y < h; ++y) {
    const auto* src = m.codes.data() + static_cast<std::size_t>(y0 + y) * m.width + x0;
    std::copy_n(src, w, out.codes.data() + static_cast<std::size_t>(y) * w);
  }
  return out;
}

// Largest aligned side not above the tile and the scene.
int patch_side_for(const TrainConfig& cfg, const Raster& r) {
  const int side = std::min({cfg.tile, r.height, r.width}) / NetworkConfig::kAlign * NetworkConfig::kAlign;
  if (side < 32) throw ConfigError("training scenes must be at least 32 x 32");
  return side;
}

bool spectral_enabled(const TrainingData& data, const TrainConfig& cfg) {
  return cfg.use_spectral_stem && !data.spectral.empty();
}

bool spatial_enabled(const TrainingData& data, const TrainConfig& cfg) {
  return cfg.use_spatial_stem && !data.spatial.empty() && !data.bank.empty();
}

class Adam {
 public:
  Adam(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}

  // One update of `x` (float or double) given its gradient.
  template <typename T, typename G>
  void step(std::size_t slot, std::vector<T>& x, const std::vector<G>& g) {
    if (slot >= m_.size()) {
      m_.resize(slot + 1);
      v_.resize(slot + 1);
    }
    auto& m = m_[slot];
    auto& v = v_[slot];
    if (m.empty()) {
      m.assign(x.size(), 0.0);
      v.assign(x.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + wd_ * static_cast<double>(x[i]);
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
      const double update = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      x[i] = static_cast<T>(static_cast<double>(x[i]) - update);
    }
  }

  void tick() { ++t_; }
  void set_weight_decay(double wd) { wd_ = wd; }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  double wd_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct SampleLoss {
  double total = 0.0;
  double loss_f = 0.0;
  double loss_p = 0.0;
};

}  // namespace

std::string_view to_string(LossMode m) {
  switch (m) {
    case LossMode::kPixelOnly: return "pixel_only";
    case LossMode::kPixelFeature: return "pixel+feature";
    case LossMode::kCrossEntropy: return "ce";
    case LossMode::kDice: return "dice";
  }
  return "pixel+feature";
}

LossMode parse_loss_mode(std::string_view s) {
  if (s == "pixel_only") return LossMode::kPixelOnly;
  if (s == "pixel+feature") return LossMode::kPixelFeature;
  if (s == "ce") return LossMode::kCrossEntropy;
  if (s == "dice") return LossMode::kDice;
  throw ConfigError("unknown loss mode: " + std::string(s));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || !(lambda_step > 0.0) || !(w >= 0.0)) {
    throw ConfigError("rates must be positive (weight decay and w non-negative)");
  }
  if (epochs < 0 || iterations_per_epoch < 0) throw ConfigError("epoch counts must be non-negative");
  if (batch_size < 1 || anchors < 1) throw ConfigError("batch size and anchor count must be positive");
  if (tile < 32) throw ConfigError("tile side must be at least 32");
  if (!use_spectral_stem && !use_spatial_stem) throw ConfigError("at least one stem must be enabled");
  network.validate();
  hypersphere.validate();
  sim.validate();
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.iterations_per_epoch = j.value("iterations_per_epoch", c.iterations_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.w = j.value("w", c.w);
    c.tile = j.value("tile", c.tile);
    c.lambda_step = j.value("lambda_step", c.lambda_step);
    c.anchors = j.value("anchors", c.anchors);
    c.seed = j.value("seed", c.seed);
    c.spectral_sources = j.value("spectral_sources", c.spectral_sources);
    c.spatial_sources = j.value("spatial_sources", c.spatial_sources);
    c.object_bank = j.value("object_bank", c.object_bank);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.simulate_ol = j.value("simulate_ol", c.simulate_ol);
    c.use_spectral_stem = j.value("use_spectral_stem", c.use_spectral_stem);
    c.use_spatial_stem = j.value("use_spatial_stem", c.use_spatial_stem);
    c.loss_mode = parse_loss_mode(j.value("loss_mode", std::string(to_string(c.loss_mode))));
    if (j.contains("network")) c.network = network_config_from_json(j["network"]);
    if (j.contains("hypersphere")) c.hypersphere = hypersphere_from_json(j["hypersphere"]);
    if (j.contains("sim")) c.sim = sim_config_from_json(j["sim"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"iterations_per_epoch", c.iterations_per_epoch},
          {"batch_size", c.batch_size},
          {"w", c.w},
          {"tile", c.tile},
          {"lambda_step", c.lambda_step},
          {"anchors", c.anchors},
          {"seed", c.seed},
          {"spectral_sources", c.spectral_sources},
          {"spatial_sources", c.spatial_sources},
          {"object_bank", c.object_bank},
          {"output_dir", c.output_dir},
          {"simulate_ol", c.simulate_ol},
          {"use_spectral_stem", c.use_spectral_stem},
          {"use_spatial_stem", c.use_spatial_stem},
          {"loss_mode", std::string(to_string(c.loss_mode))},
          {"network", to_json(c.network)},
          {"hypersphere", hypersphere_to_json(c.hypersphere)},
          {"sim", sim_to_json(c.sim)}};
}

// ---------------------------------------------------------------------------
// Checkpoint archive

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : ckpt.params.list()) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"count", p.count()}});
    offset += p.count();
  }
  const nlohmann::json manifest = {{"format_version", ckpt.format_version},
                                   {"iteration", ckpt.iteration},
                                   {"network", to_json(ckpt.network)},
                                   {"ranking_state", ranking_to_json(ckpt.ranking)},
                                   {"train_config", ckpt.train_config},
                                   {"tensors", tensors}};
  const std::string text = manifest.dump();

  std::vector<char> out(kMagic, kMagic + sizeof(kMagic));
  put<std::uint32_t>(out, ckpt.format_version);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset * sizeof(float));
  for (const auto& p : ckpt.params.list()) {
    for (float v : p.value) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto length = get<std::uint64_t>(bytes, pos);
  if (length > bytes.size() - pos) throw FormatError("checkpoint manifest truncated");
  Checkpoint ckpt;
  std::size_t payload = 0;
  try {
    const auto manifest = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                                bytes.begin() + static_cast<std::ptrdiff_t>(pos + length));
    pos += length;
    if (manifest.at("format_version").get<std::uint32_t>() != version) {
      throw VersionError("checkpoint header and manifest disagree on the version");
    }
    ckpt.format_version = version;
    ckpt.iteration = manifest.at("iteration").get<std::uint64_t>();
    ckpt.network = network_config_from_json(manifest.at("network"));
    ckpt.ranking = ranking_from_json(manifest.at("ranking_state"));
    ckpt.train_config = manifest.at("train_config");
    for (const auto& t : manifest.at("tensors")) {
      const auto count = t.at("count").get<std::uint64_t>();
      if (t.at("offset").get<std::uint64_t>() != payload) throw FormatError("checkpoint tensor offsets not contiguous");
      if (count > (bytes.size() - pos) / sizeof(float) - payload) throw FormatError("checkpoint payload truncated");
      std::vector<float> values(count);
      std::size_t at = pos + payload * sizeof(float);
      for (auto& v : values) v = std::bit_cast<float>(get<std::uint32_t>(bytes, at));
      ckpt.params.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>(), std::move(values));
      payload += count;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  if (pos + payload * sizeof(float) != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  // The stored tensors must match what the recorded network expects.
  const auto reference = init_params(ckpt.network, 0);
  if (reference.size() != ckpt.params.size()) throw VersionError("checkpoint tensors do not match the network");
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i].name != ckpt.params[i].name || reference[i].shape != ckpt.params[i].shape) {
      throw VersionError("checkpoint tensor " + ckpt.params[i].name + " does not match the network");
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// Training

TrainingData load_training_data(const TrainConfig& cfg) {
  TrainingData data;
  for (const auto& s : cfg.spectral_sources) {
    auto f = read_raster(s);
    if (f.raster.bands < 2) throw ConfigError("spectral source needs at least two bands: " + s);
    data.spectral.push_back(std::move(f.raster));
  }
  for (const auto& s : cfg.spatial_sources) {
    auto f = read_raster(s);
    if (f.raster.bands != 1 && f.raster.bands != 3) throw ConfigError("spatial source needs 1 or 3 bands: " + s);
    data.spatial.emplace_back(std::move(f.raster), std::move(f.labels));
  }
  if (!cfg.spatial_sources.empty() && cfg.use_spatial_stem) {
    if (cfg.object_bank.empty()) throw ConfigError("spatial sources given without an object bank");
    data.bank = build_object_bank(cfg.object_bank);
  }
  return data;
}

nlohmann::json to_json(const IterationLog& l) {
  return {{"iter", l.iter}, {"loss_total", l.loss_total}, {"loss_f", l.loss_f}, {"loss_p", l.loss_p},
          {"lambda_mean", l.lambda_mean}};
}

AnomalySample draw_training_sample(const TrainingData& data, const TrainConfig& cfg, Rng& rng) {
  const bool spectral = spectral_enabled(data, cfg);
  const bool spatial = spatial_enabled(data, cfg);
  if (!spectral && !spatial) throw ConfigError("no simulation source for the enabled stems");
  const bool use_spectral = spectral && (!spatial || uniform_int(rng, 0, 1) == 0);

  SimConfig sim = cfg.sim;
  sim.simulate_large = sim.simulate_large && cfg.simulate_ol;

  const Raster& scene = use_spectral ? data.spectral[static_cast<std::size_t>(
                                           uniform_int(rng, 0, static_cast<int>(data.spectral.size()) - 1))]
                                     : data.spatial[static_cast<std::size_t>(
                                           uniform_int(rng, 0, static_cast<int>(data.spatial.size()) - 1))]
                                           .first;
  const std::optional<LabelMask>* scene_labels = nullptr;
  if (!use_spectral) {
    for (const auto& [r, l] : data.spatial) {
      if (&r == &scene) scene_labels = &l;
    }
  }
  const int side = patch_side_for(cfg, scene);
  const int y0 = uniform_int(rng, 0, scene.height - side);
  const int x0 = uniform_int(rng, 0, scene.width - side);
  const Raster patch = crop_raster(scene, y0, x0, side, side);
  std::optional<LabelMask> patch_labels;
  if (scene_labels && scene_labels->has_value()) patch_labels = crop_labels(**scene_labels, y0, x0, side, side);

  for (int attempt = 1;; ++attempt) {
    Rng local(rng());
    try {
      return use_spectral ? simulate_spectral(patch, sim, local)
                          : simulate_spatial(patch, patch_labels, data.bank, sim, local);
    } catch (const PlacementError&) {
      if (attempt >= kPlacementAttempts) throw;
    }
  }
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.network = cfg.network;
  ckpt.params = init_params(cfg.network, mix_seed(cfg.seed));
  ckpt.ranking = RankingState::make(cfg.anchors);
  // The run directory is not part of the model; keep checkpoints relocatable.
  ckpt.train_config = to_json(cfg);
  ckpt.train_config.erase("output_dir");
  return ckpt;
}

Checkpoint train(const TrainConfig& cfg, const TrainingData& data, const TrainHooks& hooks) {
  Checkpoint ckpt = initial_checkpoint(cfg);
  const std::uint64_t total =
      static_cast<std::uint64_t>(cfg.epochs) * static_cast<std::uint64_t>(cfg.iterations_per_epoch);
  if (total == 0) return ckpt;
  if (!spectral_enabled(data, cfg) && !spatial_enabled(data, cfg)) {
    throw ConfigError("no simulation source for the enabled stems");
  }

  std::ofstream log;
  std::filesystem::path ckpt_path;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    ckpt_path = std::filesystem::path(cfg.output_dir) / "checkpoint.bin";
    log.open(std::filesystem::path(cfg.output_dir) / "train_log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write the training log in " + cfg.output_dir);
  }

  const bool ranking_mode = cfg.loss_mode == LossMode::kPixelOnly || cfg.loss_mode == LossMode::kPixelFeature;
  const double inv_batch = 1.0 / cfg.batch_size;
  ModelParams& params = ckpt.params;
  RankingState& state = ckpt.ranking;
  Adam adam(cfg.learning_rate, cfg.weight_decay);
  std::vector<std::vector<float>> grads(params.size());
  std::vector<double> grad_theta(static_cast<std::size_t>(state.k));
  std::vector<double> grad_lambda(static_cast<std::size_t>(state.k));

  for (std::uint64_t it = 0; it < total; ++it) {
    for (std::size_t i = 0; i < params.size(); ++i) grads[i].assign(params[i].count(), 0.0f);
    std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
    std::fill(grad_lambda.begin(), grad_lambda.end(), 0.0);
    SampleLoss mean;

    for (int b = 0; b < cfg.batch_size; ++b) {
      Rng rng = split_stream(cfg.seed, it * static_cast<std::uint64_t>(cfg.batch_size) + static_cast<std::uint64_t>(b));
      const AnomalySample sample = draw_training_sample(data, cfg, rng);
      Graph g(params, true);
      const auto v = build_network(g, g.input(adapt_channels(sample.image, cfg.network.in_channels)), params,
                                   cfg.network);
      // Scores in double straight from the logits; float sigmoid saturates.
      const Tensor& logits = g.value(v.logits);
      std::vector<double> p(logits.data.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.data[i])));
      const auto& codes = sample.labels.codes;
      const bool has_anomaly = sample.labels.count(kAnomaly) > 0;

      SampleLoss s;
      std::vector<double> dz(p.size(), 0.0);
      std::vector<std::pair<Graph::Var, Tensor>> seeds;
      if (ranking_mode) {
        if (has_anomaly) {
          const PixelLoss pl = pixel_loss(p, codes, state);
          s.loss_p = pl.value;
          dz = pl.grad_z;
          for (int t = 0; t < state.k; ++t) {
            grad_theta[static_cast<std::size_t>(t)] += pl.grad_theta[static_cast<std::size_t>(t)] * inv_batch;
            grad_lambda[static_cast<std::size_t>(t)] += pl.grad_lambda[static_cast<std::size_t>(t)] * inv_batch;
          }
          if (cfg.loss_mode == LossMode::kPixelFeature && cfg.w > 0.0) {
            const FeatureLoss fl = feature_loss(g.value(v.t), sample.labels, cfg.hypersphere, rng);
            s.loss_f = fl.value;
            Tensor dt = fl.grad;
            for (float& x : dt.data) x = static_cast<float>(x * cfg.w * inv_batch);
            seeds.emplace_back(v.t, std::move(dt));
          }
        }
        s.total = total_loss(s.loss_f, s.loss_p, cfg.loss_mode == LossMode::kPixelFeature ? cfg.w : 0.0);
      } else {
        const ScalarLoss sl =
            cfg.loss_mode == LossMode::kCrossEntropy ? bce_loss(p, codes) : dice_loss(p, codes);
        s.loss_p = sl.value;
        s.total = sl.value;
        dz = sl.grad_z;
      }
      if (!std::isfinite(s.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << it << " (sample " << b << "): loss_f=" << s.loss_f
            << " loss_p=" << s.loss_p;
        throw NumericalError(msg.str());
      }
      Tensor dlogits(1, logits.height, logits.width);
      for (std::size_t i = 0; i < dz.size(); ++i) dlogits.data[i] = static_cast<float>(dz[i] * inv_batch);
      seeds.emplace_back(v.logits, std::move(dlogits));
      g.backward(seeds);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& pg = g.param_grad(i);
        if (pg.empty()) continue;
        for (std::size_t k = 0; k < pg.size(); ++k) grads[i][k] += pg[k];
      }
      mean.total += s.total * inv_batch;
      mean.loss_f += s.loss_f * inv_batch;
      mean.loss_p += s.loss_p * inv_batch;
    }

    for (const auto& gr : grads) {
      for (float x : gr) {
        if (!std::isfinite(x)) throw NumericalError("non-finite gradient at iteration " + std::to_string(it));
      }
    }
    adam.tick();
    adam.set_weight_decay(cfg.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) adam.step(i, params[i].value, grads[i]);
    if (ranking_mode) {
      adam.set_weight_decay(0.0);
      adam.step(params.size(), state.theta, grad_theta);
      state = lambda_ascent_step(state, grad_lambda, cfg.lambda_step);
    }
    ckpt.iteration = it + 1;

    IterationLog entry{it, mean.total, mean.loss_f, mean.loss_p, 0.0};
    for (double l : state.lambda) entry.lambda_mean += l / state.k;
    if (log.is_open()) log << to_json(entry).dump() << '\n';
    if (hooks.on_iteration) hooks.on_iteration(entry);
    if (!ckpt_path.empty() && ckpt.iteration % static_cast<std::uint64_t>(cfg.iterations_per_epoch) == 0) {
      save_checkpoint(ckpt, ckpt_path);
    }
  }
  return ckpt;
}

Checkpoint train(const TrainConfig& cfg) {
  cfg.validate();
  return train(cfg, load_training_data(cfg));
}

// ---------------------------------------------------------------------------
// Inference and evaluation

InferMode parse_infer_mode(std::string_view s) {
  if (s == "tiled") return InferMode::kTiled;
  if (s == "whole") return InferMode::kWhole;
  throw ConfigError("unknown inference mode: " + std::string(s));
}

std::vector<int> window_starts(int extent, int tile, double overlap) {
  if (extent < 1 || tile < 1) throw ValidationError("window extent and tile must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ValidationError("overlap must lie in [0, 1)");
  if (extent <= tile) return {0};
  const int stride = std::max(1, static_cast<int>(std::lround(tile * (1.0 - overlap))));
  std::vector<int> starts;
  for (int s = 0; s + tile < extent; s += stride) starts.push_back(s);
  starts.push_back(extent - tile);
  return starts;
}

AnomalyMap infer(const Raster& raster, const Checkpoint& ckpt, InferMode mode, int tile, double overlap) {
  raster.validate();
  if (ckpt.format_version != kCheckpointVersion) throw VersionError("checkpoint format version mismatch");
  if (mode == InferMode::kWhole) return predict(raster, ckpt.params, ckpt.network);

  const auto ys = window_starts(raster.height, tile, overlap);
  const auto xs = window_starts(raster.width, tile, overlap);
  if (ys.size() == 1 && xs.size() == 1) return predict(raster, ckpt.params, ckpt.network);
  const int th = std::min(tile, raster.height);
  const int tw = std::min(tile, raster.width);
  std::vector<double> sum(raster.pixels(), 0.0);
  std::vector<int> hits(raster.pixels(), 0);
  for (int y0 : ys) {
    for (int x0 : xs) {
      const AnomalyMap part = predict(crop_raster(raster, y0, x0, th, tw), ckpt.params, ckpt.network);
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          const auto i = static_cast<std::size_t>(y0 + y) * raster.width + (x0 + x);
          sum[i] += part.at(y, x);
          ++hits[i];
        }
      }
    }
  }
  AnomalyMap map(raster.height, raster.width);
  for (std::size_t i = 0; i < sum.size(); ++i) map.values[i] = static_cast<float>(sum[i] / hits[i]);
  return map;
}

MetricsReport evaluate(const AnomalyMap& map, const LabelMask& gt, TauSweep sweep) {
  map.validate();
  gt.validate();
  if (map.height != gt.height || map.width != gt.width) {
    throw ValidationError("map and ground truth differ in size");
  }
  constexpr std::uint8_t kDropped = 255;
  std::vector<double> scores(map.values.begin(), map.values.end());
  std::vector<std::uint8_t> labels(gt.codes.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = gt.codes[i];
    labels[i] = c == kAnomaly ? kPositive : (c == kBackground || c == kLargeObject) ? kNegative : kDropped;
  }
  return report(scores, labels, sweep);
}

}  // namespace adrs
