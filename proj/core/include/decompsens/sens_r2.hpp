#pragma once

#include "decompsens/contour.hpp"
#include "decompsens/decomp.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace decompsens {

/// Partial R-squared strengths of an omitted confounder U.
struct R2Params {
  /// U with the outcome, given group, confounders, mediator and covariates.
  double r2_yu = 0.0;
  /// U with the mediator, given group, confounders and covariates.
  double r2_mu = 0.0;

  /// Throws DomainError unless both lie in [0, 1).
  void check() const;
};

/// Estimates for one comparison group that the R-squared formulas consume.
struct R2Inputs {
  std::string comparison;
  double alpha_r = 0.0;
  double se_alpha_r = 0.0;
  /// Mediator coefficient for the comparison group (beta_m + beta_rm under
  /// interaction) and its standard error.
  double beta_res_m = 0.0;
  double se_beta_res_m = 0.0;
  /// Residual degrees of freedom of the outcome model.
  double df = 0.0;
  double delta_res = 0.0;
  double zeta_res = 0.0;
  double tau = 0.0;
  /// Bootstrap moments; needed only for zeta standard errors.
  std::optional<GroupCov> cov;

  void check() const;
};

/// Collects R2Inputs for `group` from a fitted system and its reduced model.
R2Inputs r2_inputs(const FittedSystem& system, const TauFit& tau_fit, std::size_t group,
                   const CovBundle* cov = nullptr);

enum class Quantity { delta, zeta };
std::string_view to_string(Quantity q);
Quantity parse_quantity(std::string_view text);

enum class Direction { toward_zero, away_from_zero };

/// sqrt(df * r2_yu * r2_mu / (1 - r2_mu)).
double k_factor(double df, const R2Params& params);

/// |alpha_r| * se * k: the absolute bias shared by delta and zeta.
double bias_r2(const R2Inputs& inputs, const R2Params& params);

struct AdjustedR2 {
  double delta = 0.0;
  double zeta = 0.0;
  /// Mediator coefficient implied by the adjusted delta.
  double beta_m = 0.0;
};

/// Moves `quantity` by the bias toward (or away from) zero and recovers the
/// other quantity from tau.
AdjustedR2 adjust_point_r2(const R2Inputs& inputs, const R2Params& params,
                           Direction direction = Direction::toward_zero,
                           Quantity quantity = Quantity::delta);

/// Variance of the mediator coefficient once U is in the model.
double adjusted_var_beta_m(const R2Inputs& inputs, const R2Params& params);

double adjusted_var_delta(const R2Inputs& inputs, const R2Params& params,
                          Direction direction = Direction::toward_zero,
                          Quantity quantity = Quantity::delta);

struct VarianceResult {
  double value = 0.0;
  /// The raw expression was negative and has been set to zero.
  bool clamped = false;
  double raw = 0.0;
};

/// Needs inputs.cov; throws DependencyError otherwise.
VarianceResult adjusted_var_zeta(const R2Inputs& inputs, const R2Params& params,
                                 Direction direction = Direction::toward_zero,
                                 Quantity quantity = Quantity::zeta);

struct AdjustedInterval {
  double estimate = 0.0;
  double se = 0.0;
  Interval ci;
  bool variance_clamped = false;
};

/// Adjusted estimate of `quantity` with a t interval on df - 1 degrees of
/// freedom. Adjustment is toward zero for `quantity`.
AdjustedInterval adjusted_interval(const R2Inputs& inputs, const R2Params& params, Quantity quantity,
                                   double alpha = 0.05);

/// Nonnegative root of rv^2 / (1 - rv) = g^2.
double rv(double g);

/// |estimate| / (|alpha_r| * se * sqrt(df)).
double g_statistic(const R2Inputs& inputs, Quantity quantity);

struct RvAlphaOptions {
  double alpha = 0.05;
  double tol = 1e-3;
  std::size_t max_iterations = 50;
  /// Points sampled along the bracket to confirm a monotone CI bound.
  std::size_t monotone_samples = 33;
};

/// Smallest equal strength r2_yu = r2_mu = v at which the interval for
/// `quantity` reaches zero; 0 when the unadjusted interval already covers it.
/// Throws SearchError when the bound is not monotone over [0, rv].
double rv_alpha(const R2Inputs& inputs, Quantity quantity, const RvAlphaOptions& options = {});

struct RobustnessEntry {
  Quantity quantity = Quantity::delta;
  double g = 0.0;
  double rv = 0.0;
  /// Missing when the quantity's variance cannot be formed.
  std::optional<double> rv_alpha;
  double alpha = 0.05;
  double df = 0.0;
  double tol = 1e-3;
};

RobustnessEntry robustness(const R2Inputs& inputs, Quantity quantity, const RvAlphaOptions& options = {});

/// Refits the outcome model with `level` as the reference group and returns
/// its mediator coefficient.
CoefEstimate reference_switch(const EncodedDataset& data, std::string_view level, bool interaction = true);

struct R2GridOptions {
  double max_r2 = 0.3;
  std::size_t resolution = 201;
  double alpha = 0.05;
  RvAlphaOptions rv_alpha;
};

/// estimate_adj, se_adj, ci_lo and ci_hi over (r2_yu, r2_mu), with the
/// estimate=0, ci_lo=0 and ci_hi=0 level curves and the rv and rv_alpha
/// diagonal points as one-point curves.
SensitivityGrid grid_r2(const R2Inputs& inputs, Quantity quantity, const R2GridOptions& options = {});

}  // namespace decompsens
