#ifndef ADRS_LOSSES_HPP_
#define ADRS_LOSSES_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "adrs/raster.hpp"
#include "adrs/rng.hpp"
#include "adrs/tensor.hpp"
#include "json.hpp"

namespace adrs {

// ---------------------------------------------------------------------------
// Feature level: hypersphere compactness ranking on the fused cube T.
//
// M3(S) = -(R^2 + beta * mean(max(|d - c|^2 - R^2, 0))), c = mean(S), with
// R^2 the nu-quantile of the squared distances. The loss rewards a compact
// normal group and a spread-out group formed by the anomaly descriptors plus
// a share of normal ones.

enum class FeatureLossForm {
  /// -M3(normal) - 1 / (M3(joint) - eps)
  kReciprocal,
  /// 1 + exp(M3(joint)) - exp(M3(normal))
  kExpDifference,
};

struct HypersphereConfig {
  double beta = 1.0;
  double nu = 0.9;
  double eps = 1e-6;
  /// Normal descriptors added to the joint group, as a multiple of the
  /// anomaly count.
  double rho = 1.0;
  /// Treat R^2 as a constant when differentiating.
  bool stop_radius_gradient = false;
  FeatureLossForm form = FeatureLossForm::kReciprocal;

  void validate() const;
};

/// Rows are descriptors.
using Descriptors = Eigen::MatrixXd;

Eigen::RowVectorXd hypersphere_center(const Descriptors& d);

/// Linearly interpolated quantile of `values` at level q in [0, 1].
double interpolated_quantile(std::vector<double> values, double q);

struct Compactness {
  double value = 0.0;
  double radius_sq = 0.0;
  /// dM3 / dd, same shape as the input.
  Descriptors grad;
};

double m3_compactness(const Descriptors& d, const HypersphereConfig& cfg);
Compactness m3_compactness_grad(const Descriptors& d, const HypersphereConfig& cfg);

struct GroupLoss {
  double value = 0.0;
  double m3_normal = 0.0;
  double m3_joint = 0.0;
  Descriptors grad_normal;
  Descriptors grad_joint;
};

/// The feature-level loss on already grouped descriptors, in double
/// precision. feature_loss gathers the groups from T and scatters back.
GroupLoss feature_loss_groups(const Descriptors& normal, const Descriptors& joint, const HypersphereConfig& cfg);

struct FeatureLoss {
  double value = 0.0;
  double m3_normal = 0.0;
  double m3_joint = 0.0;
  /// dL_f / dT.
  Tensor grad;
};

/// Pixels with codes {0, 1} form the normal group, code 2 the anomaly group;
/// code 255 is ignored. Needs at least one pixel of each group.
FeatureLoss feature_loss(const FeatureCube& t, const LabelMask& labels, const HypersphereConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Pixel level: differentiable AUC through scaled cross-entropy bounds on the
// true/false positive counts at k learned thresholds.

inline constexpr double kScoreClamp = 1e-6;

/// Sum over anomaly pixels of 1 - log(P)/log(th); a lower bound of tp.
double tp_ce(std::span<const double> p, std::span<const std::uint8_t> codes, double th);
/// Sum over normal pixels of log(1-P)/log(1-th); an upper bound of fp.
double fp_ce(std::span<const double> p, std::span<const std::uint8_t> codes, double th);

/// Hard counts at threshold th (score >= th is a detection).
double tp_count(std::span<const double> p, std::span<const std::uint8_t> codes, double th);
double fp_count(std::span<const double> p, std::span<const std::uint8_t> codes, double th);

double logistic(double x);

struct RankingState {
  int k = 0;
  std::vector<double> eta;     // FPR anchors t/k
  std::vector<double> delta;   // integral weights
  std::vector<double> theta;   // threshold pre-activations
  std::vector<double> lambda;  // multipliers, >= 0

  /// Anchors eta_t = t/k, weights 1/k, multipliers eta_t - eta_{t-1} and
  /// thresholds spread over (0, 1) from high to low.
  static RankingState make(int k = 10);

  std::vector<double> thresholds() const;
  void validate() const;
  bool operator==(const RankingState&) const = default;
};

struct PixelLoss {
  double value = 0.0;
  std::vector<double> grad_p;       // dL_p / dP per pixel
  /// dL_p / dz for P = sigmoid(z). Unlike grad_p it does not vanish
  /// outside the clamp, so a saturated head can still recover.
  std::vector<double> grad_z;
  std::vector<double> grad_theta;   // dL_p / dtheta_t
  std::vector<double> grad_lambda;  // fp_ce/|D_n| - eta_t
  std::vector<double> tp_ce;
  std::vector<double> fp_ce;
};

/// L_p = sum_t delta_t (1 - tp_ce_t/|D_a|) + lambda_t (fp_ce_t/|D_n| - eta_t).
PixelLoss pixel_loss(std::span<const double> p, std::span<const std::uint8_t> codes, const RankingState& state);

/// Projected ascent on the multipliers: lambda <- max(0, lambda + step*grad).
RankingState lambda_ascent_step(const RankingState& state, std::span<const double> grad_lambda, double step);

double total_loss(double loss_f, double loss_p, double w);

struct ScalarLoss {
  double value = 0.0;
  std::vector<double> grad_p;
  /// Gradient with respect to the logits, as in PixelLoss::grad_z.
  std::vector<double> grad_z;
};

/// Mean binary cross-entropy over non-ignored pixels.
ScalarLoss bce_loss(std::span<const double> p, std::span<const std::uint8_t> codes);
/// Soft Dice loss 1 - 2 sum(p y) / (sum p + sum y) over non-ignored pixels.
ScalarLoss dice_loss(std::span<const double> p, std::span<const std::uint8_t> codes);

struct LossReport {
  double loss_f = 0.0;
  double loss_p = 0.0;
  double loss_total = 0.0;
  std::vector<double> tp_ce;
  std::vector<double> fp_ce;
};

nlohmann::json to_json(const LossReport& r);

}  // namespace adrs

#endif  // ADRS_LOSSES_HPP_
