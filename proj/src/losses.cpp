#include "adrs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adrs/error.hpp"

namespace adrs {

void HypersphereConfig::validate() const {
  if (!(beta > 0.0)) throw ValidationError("beta must be > 0");
  if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("nu must lie in (0, 1]");
  if (!(eps > 0.0)) throw ValidationError("eps must be > 0");
  if (!(rho >= 0.0)) throw ValidationError("rho must be >= 0");
}

Eigen::RowVectorXd hypersphere_center(const Descriptors& d) {
  if (d.rows() == 0) throw ValidationError("hypersphere center of an empty descriptor set");
  return d.colwise().mean();
}

double interpolated_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

Compactness m3_compactness_grad(const Descriptors& d, const HypersphereConfig& cfg) {
  cfg.validate();
  const Eigen::RowVectorXd c = hypersphere_center(d);
  const Eigen::Index n = d.rows();
  const Descriptors diff = d.rowwise() - c;
  const Eigen::VectorXd dist = diff.rowwise().squaredNorm();

  // Quantile weights on the sorted distances.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return dist(a) < dist(b); });
  const double pos = cfg.nu * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  double r2;
  if (lo + 1 >= static_cast<std::size_t>(n)) {
    r2 = dist(order.back());
    q(order.back()) = 1.0;
  } else {
    r2 = dist(order[lo]) + frac * (dist(order[lo + 1]) - dist(order[lo]));
    q(order[lo]) += 1.0 - frac;
    q(order[lo + 1]) += frac;
  }

  double hinge = 0.0;
  Eigen::Index active = 0;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double excess = dist(i) - r2;
    if (excess > 0.0) {
      hinge += excess;
      ++active;
      w(i) = cfg.beta / static_cast<double>(n);
    }
  }
  if (!cfg.stop_radius_gradient) w += (1.0 - cfg.beta * static_cast<double>(active) / static_cast<double>(n)) * q;

  Compactness out;
  out.radius_sq = r2;
  out.value = -(r2 + cfg.beta * hinge / static_cast<double>(n));
  // d|d_i - c|^2 / dd_k = 2 (d_i - c)(delta_ik - 1/n)
  const Eigen::RowVectorXd weighted_mean = (w.asDiagonal() * diff).colwise().sum() / static_cast<double>(n);
  out.grad = -2.0 * ((w.asDiagonal() * diff).rowwise() - weighted_mean);
  return out;
}

double m3_compactness(const Descriptors& d, const HypersphereConfig& cfg) {
  return m3_compactness_grad(d, cfg).value;
}

GroupLoss feature_loss_groups(const Descriptors& normal, const Descriptors& joint, const HypersphereConfig& cfg) {
  cfg.validate();
  const Compactness m_n = m3_compactness_grad(normal, cfg);
  const Compactness m_j = m3_compactness_grad(joint, cfg);
  GroupLoss out;
  out.m3_normal = m_n.value;
  out.m3_joint = m_j.value;
  if (cfg.form == FeatureLossForm::kReciprocal) {
    const double denom = m_j.value - cfg.eps;
    out.value = -m_n.value - 1.0 / denom;
    out.grad_normal = -m_n.grad;
    out.grad_joint = m_j.grad / (denom * denom);
  } else {
    const double en = std::exp(m_n.value);
    const double ej = std::exp(m_j.value);
    out.value = 1.0 + ej - en;
    out.grad_normal = -en * m_n.grad;
    out.grad_joint = ej * m_j.grad;
  }
  return out;
}

FeatureLoss feature_loss(const FeatureCube& t, const LabelMask& labels, const HypersphereConfig& cfg, Rng& rng) {
  cfg.validate();
  if (labels.height != t.height || labels.width != t.width) {
    throw ValidationError("feature_loss: label mask and feature cube differ in size");
  }
  std::vector<std::size_t> normal, anomaly;
  for (std::size_t i = 0; i < labels.codes.size(); ++i) {
    const auto code = labels.codes[i];
    if (code == kAnomaly) {
      anomaly.push_back(i);
    } else if (code == kBackground || code == kLargeObject) {
      normal.push_back(i);
    }
  }
  if (anomaly.empty()) throw ValidationError("feature_loss: no anomaly pixels");
  if (normal.empty()) throw ValidationError("feature_loss: no normal pixels");

  // Seeded share of normal descriptors joins the anomaly clique.
  const auto share = std::min(normal.size(), static_cast<std::size_t>(std::lround(cfg.rho * anomaly.size())));
  std::vector<std::size_t> joint = anomaly;
  if (share > 0) {
    std::vector<std::size_t> pool = normal;
    for (std::size_t i = 0; i < share; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      joint.push_back(pool[i]);
    }
  }

  const auto gather = [&](const std::vector<std::size_t>& idx) {
    Descriptors d(static_cast<Eigen::Index>(idx.size()), t.channels);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (int c = 0; c < t.channels; ++c) d(static_cast<Eigen::Index>(r), c) = t.channel(c)[idx[r]];
    }
    return d;
  };
  const GroupLoss g = feature_loss_groups(gather(normal), gather(joint), cfg);

  FeatureLoss out;
  out.value = g.value;
  out.m3_normal = g.m3_normal;
  out.m3_joint = g.m3_joint;
  out.grad = Tensor(t.channels, t.height, t.width);
  const auto scatter = [&](const std::vector<std::size_t>& idx, const Descriptors& grad) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (int c = 0; c < t.channels; ++c) {
        out.grad.channel(c)[idx[r]] += static_cast<float>(grad(static_cast<Eigen::Index>(r), c));
      }
    }
  };
  scatter(normal, g.grad_normal);
  scatter(joint, g.grad_joint);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_threshold(double th) {
  if (!(th > 0.0 && th < 1.0)) throw ValidationError("threshold must lie in (0, 1)");
}

void check_sizes(std::span<const double> p, std::span<const std::uint8_t> codes) {
  if (p.size() != codes.size()) throw ValidationError("scores and labels differ in length");
}

double clamp_score(double p) { return std::clamp(p, kScoreClamp, 1.0 - kScoreClamp); }

bool is_normal(std::uint8_t code) { return code == kBackground || code == kLargeObject; }

}  // namespace

double tp_ce(std::span<const double> p, std::span<const std::uint8_t> codes, double th) {
  check_threshold(th);
  check_sizes(p, codes);
  const double log_th = std::log(th);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (codes[i] == kAnomaly) sum += 1.0 - std::log(clamp_score(p[i])) / log_th;
  }
  return sum;
}

double fp_ce(std::span<const double> p, std::span<const std::uint8_t> codes, double th) {
  check_threshold(th);
  check_sizes(p, codes);
  const double log_th = std::log1p(-th);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (is_normal(codes[i])) sum += std::log1p(-clamp_score(p[i])) / log_th;
  }
  return sum;
}

double tp_count(std::span<const double> p, std::span<const std::uint8_t> codes, double th) {
  check_sizes(p, codes);
  double n = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) n += (codes[i] == kAnomaly && p[i] >= th) ? 1.0 : 0.0;
  return n;
}

double fp_count(std::span<const double> p, std::span<const std::uint8_t> codes, double th) {
  check_sizes(p, codes);
  double n = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) n += (is_normal(codes[i]) && p[i] >= th) ? 1.0 : 0.0;
  return n;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

RankingState RankingState::make(int k) {
  if (k < 1) throw ValidationError("anchor count must be >= 1");
  RankingState s;
  s.k = k;
  for (int t = 1; t <= k; ++t) {
    const double eta = static_cast<double>(t) / k;
    const double prev = static_cast<double>(t - 1) / k;
    s.eta.push_back(eta);
    s.delta.push_back(eta - prev);
    s.lambda.push_back(eta - prev);
    const double th = 1.0 - (t - 0.5) / k;
    s.theta.push_back(std::log(th / (1.0 - th)));
  }
  return s;
}

std::vector<double> RankingState::thresholds() const {
  std::vector<double> th(theta.size());
  std::transform(theta.begin(), theta.end(), th.begin(), logistic);
  return th;
}

void RankingState::validate() const {
  const auto n = static_cast<std::size_t>(k);
  if (k < 1 || eta.size() != n || delta.size() != n || theta.size() != n || lambda.size() != n) {
    throw ValidationError("ranking state vectors must all have k entries");
  }
  for (double l : lambda) {
    if (!(l >= 0.0)) throw ValidationError("multipliers must be >= 0");
  }
  for (double th : thresholds()) {
    if (!(th > 0.0 && th < 1.0)) throw ValidationError("thresholds must lie in (0, 1)");
  }
}

PixelLoss pixel_loss(std::span<const double> p, std::span<const std::uint8_t> codes, const RankingState& state) {
  check_sizes(p, codes);
  state.validate();
  std::size_t n_a = 0, n_n = 0;
  for (auto c : codes) {
    n_a += c == kAnomaly;
    n_n += is_normal(c);
  }
  if (n_a == 0 || n_n == 0) throw ValidationError("pixel_loss needs anomaly and normal pixels");
  const double inv_a = 1.0 / static_cast<double>(n_a);
  const double inv_n = 1.0 / static_cast<double>(n_n);

  PixelLoss out;
  out.grad_p.assign(p.size(), 0.0);
  out.grad_z.assign(p.size(), 0.0);
  const auto th = state.thresholds();
  for (int t = 0; t < state.k; ++t) {
    const double h = th[static_cast<std::size_t>(t)];
    const double delta = state.delta[static_cast<std::size_t>(t)];
    const double lambda = state.lambda[static_cast<std::size_t>(t)];
    const double log_h = std::log(h);
    const double log_1mh = std::log1p(-h);

    double tp = 0.0, fp = 0.0, dtp_dh = 0.0, dfp_dh = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool inside = p[i] > kScoreClamp && p[i] < 1.0 - kScoreClamp;
      const double pi = clamp_score(p[i]);
      if (codes[i] == kAnomaly) {
        const double lp = std::log(pi);
        tp += 1.0 - lp / log_h;
        dtp_dh += lp / (log_h * log_h * h);
        // d/dP of -delta/|D_a| * (1 - log P / log th)
        if (inside) out.grad_p[i] += delta * inv_a / (pi * log_h);
        out.grad_z[i] += delta * inv_a * (1.0 - p[i]) / log_h;
      } else if (is_normal(codes[i])) {
        const double l1p = std::log1p(-pi);
        fp += l1p / log_1mh;
        dfp_dh += l1p / (log_1mh * log_1mh * (1.0 - h));
        if (inside) out.grad_p[i] += -lambda * inv_n / ((1.0 - pi) * log_1mh);
        out.grad_z[i] -= lambda * inv_n * p[i] / log_1mh;
      }
    }
    out.tp_ce.push_back(tp);
    out.fp_ce.push_back(fp);
    const double slack = fp * inv_n - state.eta[static_cast<std::size_t>(t)];
    out.value += delta * (1.0 - tp * inv_a) + lambda * slack;
    out.grad_lambda.push_back(slack);
    const double dh_dtheta = h * (1.0 - h);
    out.grad_theta.push_back((-delta * inv_a * dtp_dh + lambda * inv_n * dfp_dh) * dh_dtheta);
  }
  return out;
}

RankingState lambda_ascent_step(const RankingState& state, std::span<const double> grad_lambda, double step) {
  if (grad_lambda.size() != state.lambda.size()) throw ValidationError("multiplier gradient has the wrong length");
  RankingState next = state;
  for (std::size_t t = 0; t < next.lambda.size(); ++t) {
    next.lambda[t] = std::max(0.0, next.lambda[t] + step * grad_lambda[t]);
  }
  return next;
}

double total_loss(double loss_f, double loss_p, double w) { return w * loss_f + loss_p; }

ScalarLoss bce_loss(std::span<const double> p, std::span<const std::uint8_t> codes) {
  check_sizes(p, codes);
  ScalarLoss out;
  out.grad_p.assign(p.size(), 0.0);
  out.grad_z.assign(p.size(), 0.0);
  std::size_t n = 0;
  for (auto c : codes) n += c == kAnomaly || is_normal(c);
  if (n == 0) throw ValidationError("bce_loss: every pixel is ignored");
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool inside = p[i] > kScoreClamp && p[i] < 1.0 - kScoreClamp;
    const double pi = clamp_score(p[i]);
    if (codes[i] == kAnomaly) {
      out.value -= inv * std::log(pi);
      if (inside) out.grad_p[i] = -inv / pi;
      out.grad_z[i] = -inv * (1.0 - p[i]);
    } else if (is_normal(codes[i])) {
      out.value -= inv * std::log1p(-pi);
      if (inside) out.grad_p[i] = inv / (1.0 - pi);
      out.grad_z[i] = inv * p[i];
    }
  }
  return out;
}

ScalarLoss dice_loss(std::span<const double> p, std::span<const std::uint8_t> codes) {
  check_sizes(p, codes);
  double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (codes[i] == kIgnore) continue;
    const double y = codes[i] == kAnomaly ? 1.0 : 0.0;
    inter += p[i] * y;
    sum_p += p[i];
    sum_y += y;
  }
  const double denom = sum_p + sum_y + 1e-12;
  ScalarLoss out;
  out.value = 1.0 - 2.0 * inter / denom;
  out.grad_p.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (codes[i] == kIgnore) continue;
    const double y = codes[i] == kAnomaly ? 1.0 : 0.0;
    out.grad_p[i] = -2.0 * (y * denom - inter) / (denom * denom);
  }
  out.grad_z.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.grad_z[i] = out.grad_p[i] * p[i] * (1.0 - p[i]);
  return out;
}

nlohmann::json to_json(const LossReport& r) {
  return {{"loss_f", r.loss_f}, {"loss_p", r.loss_p}, {"loss_total", r.loss_total},
          {"tp_ce", r.tp_ce},   {"fp_ce", r.fp_ce}};
}

}  // namespace adrs
