#ifndef ADRS_METRICS_HPP_
#define ADRS_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "adrs/raster.hpp"
#include "json.hpp"

namespace adrs {

/// Binary ground truth used by the ROC code: 1 = target, 0 = background,
/// anything else is dropped.
inline constexpr std::uint8_t kNegative = 0;
inline constexpr std::uint8_t kPositive = 1;

/// Polyline with nondecreasing abscissa.
using Curve = std::vector<std::pair<double, double>>;

enum class TauSweep {
  /// Every distinct normalised score plus the endpoints; exact integrals.
  kUniqueScores,
  /// 201 evenly spaced thresholds on [0, 1].
  kFixed201,
};

/// The three projections of the 3D ROC surface (P_D, P_F, tau).
struct Roc3d {
  Curve pd_vs_pf;
  Curve pd_vs_tau;
  Curve pf_vs_tau;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t thresholds = 0;
};

/// Scores are min-max normalised (a constant vector maps to zeros) and a
/// pixel is detected at threshold tau when its score is >= tau.
Roc3d roc_3d(std::span<const double> scores, std::span<const std::uint8_t> labels,
             TauSweep sweep = TauSweep::kUniqueScores);

/// Trapezoidal area under a curve.
double auc(const Curve& curve);

struct MetricsReport {
  double auc_df = 0.0;
  double auc_dtau = 0.0;
  double auc_ftau = 0.0;
  double auc_td = 0.0;
  double auc_bs = 0.0;
  double auc_odp = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t thresholds = 0;
};

/// Target detectability, background suppressibility and overall detection
/// probability from the three primary areas.
MetricsReport derive_metrics(double auc_df, double auc_dtau, double auc_ftau);

MetricsReport report(std::span<const double> scores, std::span<const std::uint8_t> labels,
                     TauSweep sweep = TauSweep::kUniqueScores);

nlohmann::json to_json(const MetricsReport& r);

/// Global RX: squared Mahalanobis distance of each pixel to the image mean
/// under the ridge-regularised image covariance. Unnormalised.
std::vector<double> grx_scores(const Raster& raster);

/// grx_scores min-max normalised to [0, 1].
AnomalyMap grx(const Raster& raster);

}  // namespace adrs

#endif  // ADRS_METRICS_HPP_
