#include "adrs/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "adrs/error.hpp"

namespace adrs {

namespace {

struct Scored {
  double score;
  bool positive;
};

std::vector<Scored> normalised_samples(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  std::vector<Scored> kept;
  kept.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != kPositive && labels[i] != kNegative) continue;
    if (!std::isfinite(scores[i])) throw ValidationError("non-finite score");
    kept.push_back({scores[i], labels[i] == kPositive});
  }
  const auto positives = std::count_if(kept.begin(), kept.end(), [](const Scored& s) { return s.positive; });
  if (positives == 0 || positives == static_cast<long>(kept.size())) {
    throw ValidationError("ROC needs at least one positive and one negative pixel");
  }
  const auto [lo_it, hi_it] =
      std::minmax_element(kept.begin(), kept.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  const double lo = lo_it->score;
  const double span = hi_it->score - lo;
  for (auto& s : kept) s.score = span > 0.0 ? (s.score - lo) / span : 0.0;
  return kept;
}

}  // namespace

Roc3d roc_3d(std::span<const double> scores, std::span<const std::uint8_t> labels, TauSweep sweep) {
  auto samples = normalised_samples(scores, labels);
  Roc3d roc;
  for (const auto& s : samples) (s.positive ? roc.positives : roc.negatives) += 1;
  const double np = static_cast<double>(roc.positives);
  const double nn = static_cast<double>(roc.negatives);

  if (sweep == TauSweep::kFixed201) {
    std::sort(samples.begin(), samples.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
    std::vector<double> pd(201), pf(201);
    for (int j = 0; j <= 200; ++j) {
      const double tau = j / 200.0;
      auto first = std::lower_bound(samples.begin(), samples.end(), tau,
                                    [](const Scored& s, double t) { return s.score < t; });
      std::size_t tp = 0, fp = 0;
      for (auto it = first; it != samples.end(); ++it) (it->positive ? tp : fp) += 1;
      pd[j] = tp / np;
      pf[j] = fp / nn;
      roc.pd_vs_tau.emplace_back(tau, pd[j]);
      roc.pf_vs_tau.emplace_back(tau, pf[j]);
    }
    roc.pd_vs_pf.emplace_back(0.0, 0.0);
    for (int j = 200; j >= 0; --j) roc.pd_vs_pf.emplace_back(pf[j], pd[j]);
    roc.thresholds = 201;
    return roc;
  }

  // Descending scan over distinct scores: cumulative detections at tau = u.
  std::sort(samples.begin(), samples.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  struct Level {
    double tau;
    double pd_ge;  // P_D at score >= tau
    double pf_ge;
    double pd_gt;  // P_D at score > tau
    double pf_gt;
  };
  std::vector<Level> levels;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < samples.size();) {
    const double u = samples[i].score;
    const double pd_gt = tp / np;
    const double pf_gt = fp / nn;
    for (; i < samples.size() && samples[i].score == u; ++i) (samples[i].positive ? tp : fp) += 1;
    levels.push_back({u, tp / np, fp / nn, pd_gt, pf_gt});
  }
  std::reverse(levels.begin(), levels.end());  // ascending tau

  roc.pd_vs_pf.emplace_back(0.0, 0.0);
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) roc.pd_vs_pf.emplace_back(it->pf_ge, it->pd_ge);
  roc.pd_vs_pf.emplace_back(1.0, 1.0);

  // Staircases: both sides of every jump so the trapezoid rule is exact.
  roc.pd_vs_tau.emplace_back(0.0, 1.0);
  roc.pf_vs_tau.emplace_back(0.0, 1.0);
  for (const auto& l : levels) {
    roc.pd_vs_tau.emplace_back(l.tau, l.pd_ge);
    roc.pd_vs_tau.emplace_back(l.tau, l.pd_gt);
    roc.pf_vs_tau.emplace_back(l.tau, l.pf_ge);
    roc.pf_vs_tau.emplace_back(l.tau, l.pf_gt);
  }
  roc.pd_vs_tau.emplace_back(1.0, 0.0);
  roc.pf_vs_tau.emplace_back(1.0, 0.0);
  roc.thresholds = levels.size() + (levels.front().tau > 0.0 ? 1 : 0) + (levels.back().tau < 1.0 ? 1 : 0);
  return roc;
}

double auc(const Curve& curve) {
  if (curve.size() < 2) throw ValidationError("AUC needs at least two curve points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double dx = curve[i].first - curve[i - 1].first;
    if (dx < 0.0) throw ValidationError("curve abscissa must be nondecreasing");
    area += 0.5 * dx * (curve[i].second + curve[i - 1].second);
  }
  return area;
}

MetricsReport derive_metrics(double auc_df, double auc_dtau, double auc_ftau) {
  MetricsReport r;
  r.auc_df = auc_df;
  r.auc_dtau = auc_dtau;
  r.auc_ftau = auc_ftau;
  r.auc_td = auc_df + auc_dtau;
  r.auc_bs = auc_df - auc_ftau;
  r.auc_odp = auc_df + auc_dtau - auc_ftau;
  return r;
}

MetricsReport report(std::span<const double> scores, std::span<const std::uint8_t> labels, TauSweep sweep) {
  const Roc3d roc = roc_3d(scores, labels, sweep);
  MetricsReport r = derive_metrics(auc(roc.pd_vs_pf), auc(roc.pd_vs_tau), auc(roc.pf_vs_tau));
  r.positives = roc.positives;
  r.negatives = roc.negatives;
  r.thresholds = roc.thresholds;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"auc_df", r.auc_df},       {"auc_dtau", r.auc_dtau},   {"auc_ftau", r.auc_ftau},
          {"auc_td", r.auc_td},       {"auc_bs", r.auc_bs},       {"auc_odp", r.auc_odp},
          {"positives", r.positives}, {"negatives", r.negatives}, {"thresholds", r.thresholds}};
}

std::vector<double> grx_scores(const Raster& raster) {
  raster.validate();
  const auto n = static_cast<Eigen::Index>(raster.pixels());
  const Eigen::Index c = raster.bands;
  if (n <= c) throw ValidationError("GRX needs more pixels than bands");

  Eigen::MatrixXd x(n, c);
  for (Eigen::Index b = 0; b < c; ++b) {
    const float* band = raster.band_data(static_cast<int>(b));
    for (Eigen::Index i = 0; i < n; ++i) x(i, b) = band[i];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  const double ridge = 1e-6 * cov.trace() / static_cast<double>(c);
  if (!(ridge > 0.0) || !std::isfinite(ridge)) throw NumericalError("GRX: covariance is zero or non-finite");
  cov.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("GRX: covariance not positive definite after ridge");

  // delta = || L^{-1} (x - mu) ||^2, row by row.
  const Eigen::MatrixXd whitened = llt.matrixL().solve(x.transpose());
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) scores[static_cast<std::size_t>(i)] = whitened.col(i).squaredNorm();
  return scores;
}

AnomalyMap grx(const Raster& raster) {
  const auto raw = grx_scores(raster);
  AnomalyMap map(raster.height, raster.width);
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    map.values[i] = span > 0.0 ? static_cast<float>((raw[i] - *lo) / span) : 0.0f;
  }
  return map;
}

}  // namespace adrs
