#pragma once

#include "decompsens/contour.hpp"
#include "decompsens/decomp.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace decompsens {

/// Strength of an omitted mediator-outcome confounder U, in coefficient units.
struct CoefParams {
  /// Change in Y per unit of U, holding group, mediator and confounders fixed.
  double beta_u = 0.0;
  /// Change in E[U] per unit of M within group.
  double delta_m = 0.0;
  /// Extra U effect on Y in the comparison group, when it differs by group.
  std::optional<double> beta_ru;

  double beta_u_total() const noexcept { return beta_u + beta_ru.value_or(0.0); }
  void check() const;
};

struct CoefBias {
  double delta = 0.0;
  double zeta = 0.0;
};

/// Bias of the residual-disparity estimators under a linear U. The zeta bias
/// is always the negated delta bias.
CoefBias bias_coef(double alpha_r, const CoefParams& params);

struct Adjusted {
  double delta = 0.0;
  double zeta = 0.0;
};

/// Subtracts the bias. tau is untouched, so delta + zeta still equals it.
Adjusted adjust_coef(double tau, double delta, double zeta, double alpha_r, const CoefParams& params);
Adjusted adjust_coef(const GroupDecomposition& estimate, double alpha_r, const CoefParams& params);

/// delta_m that makes the bias equal `target`. Throws NoSolutionError when
/// alpha_r or beta_u_total is zero.
double explain_away_coef(double target, double alpha_r, double beta_u_total);

struct CoefGridOptions {
  double beta_u_lo = 0.0;
  double beta_u_hi = 1.0;
  double delta_m_lo = 0.0;
  double delta_m_hi = 1.0;
  std::size_t resolution = 201;
  std::optional<double> beta_ru;
  /// Contour levels traced for each adjusted surface.
  std::vector<double> levels{0.0};
};

/// Adjusted delta and zeta over (beta_u, delta_m), with level curves named
/// "<surface>=<level>#<piece>".
SensitivityGrid grid_coef(double tau, double delta, double zeta, double alpha_r,
                          const CoefGridOptions& options);
SensitivityGrid grid_coef(const GroupDecomposition& estimate, double alpha_r,
                          const CoefGridOptions& options);

/// Every conditional table needed by the general bias of delta at one group
/// r and one covariate stratum c, over finite supports of X, M and U.
struct DiscreteWorld {
  std::size_t nx = 1;
  std::size_t nm = 2;
  std::size_t nu = 2;
  /// E[Y | r, x, m, c, u], indexed (x * nm + m) * nu + u.
  std::vector<double> mean_y;
  /// P(u | r, x, c), indexed x * nu + u.
  std::vector<double> p_u_given_x;
  /// P(u | r, x, m, c), indexed (x * nm + m) * nu + u.
  std::vector<double> p_u_given_xm;
  /// P(x | r, c).
  std::vector<double> p_x;
  /// P(m | R = reference, c).
  std::vector<double> p_m_reference;
  /// Optional P(m | r, x, c), indexed x * nm + m. When present the tables are
  /// also checked against the law of total probability.
  std::vector<double> p_m_given_x;
  std::size_t u_reference = 0;

  double y(std::size_t x, std::size_t m, std::size_t u) const { return mean_y[(x * nm + m) * nu + u]; }
  double pu_x(std::size_t x, std::size_t u) const { return p_u_given_x[x * nu + u]; }
  double pu_xm(std::size_t x, std::size_t m, std::size_t u) const {
    return p_u_given_xm[(x * nm + m) * nu + u];
  }

  /// Throws ValidationError on shape, sign or normalization violations.
  void validate(double tol = 1e-9) const;
};

/// Nonparametric bias of delta in a discrete world; the zeta bias is its
/// negation.
double general_bias_discrete(const DiscreteWorld& world);

}  // namespace decompsens
