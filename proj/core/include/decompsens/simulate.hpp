#pragma once

#include "decompsens/dataset.hpp"
#include "decompsens/sens_coef.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace decompsens {

enum class VariableKind { continuous, binary };
enum class UTiming { pre_exposure, intermediate };

std::string_view to_string(VariableKind k);
std::string_view to_string(UTiming t);

/// Linear structural model with Gaussian noise. Generation order is
/// C -> R -> U -> X -> M -> Y. Group-indexed blocks have one entry per
/// comparison group (levels after the first); empty interaction blocks mean
/// zero. Binary kinds threshold the latent variable at its sample median.
struct SemSpec {
  std::vector<std::string> group_levels{"0", "1"};
  /// Baseline group probabilities at C = 0.
  std::vector<double> group_probs{0.5, 0.5};
  std::size_t n_confounders = 0;
  std::size_t n_covariates = 0;

  /// Multinomial-logit slopes of each comparison group on C: [group][c].
  std::vector<std::vector<double>> c_to_r;

  UTiming u_timing = UTiming::intermediate;
  double u_intercept = 0.0;
  std::vector<double> r_to_u;
  std::vector<double> c_to_u;

  std::vector<double> x_intercept;
  /// [group][x]
  std::vector<std::vector<double>> r_to_x;
  /// [x][c]
  std::vector<std::vector<double>> c_to_x;

  double m_intercept = 0.0;
  std::vector<double> r_to_m;
  std::vector<double> x_to_m;
  std::vector<double> c_to_m;
  double u_to_m = 0.0;

  double y_intercept = 0.0;
  std::vector<double> r_to_y;
  std::vector<double> x_to_y;
  double m_to_y = 0.0;
  std::vector<double> rm_to_y;
  std::vector<double> c_to_y;
  double u_to_y = 0.0;
  std::vector<double> ru_to_y;

  double sd_u = 1.0;
  std::vector<double> sd_x;
  double sd_m = 1.0;
  double sd_y = 1.0;

  std::vector<VariableKind> c_kind;
  std::vector<VariableKind> x_kind;
  VariableKind m_kind = VariableKind::continuous;
  VariableKind u_kind = VariableKind::continuous;

  std::uint64_t seed = 1;

  std::size_t comparison_count() const noexcept { return group_levels.size() - 1; }
  /// Throws ValidationError naming the offending block.
  void validate() const;
};

SemSpec sem_spec_from_json(std::string_view text);
std::string to_json(const SemSpec& spec);

/// Four groups, two continuous confounders, two continuous covariates,
/// binary intermediate U, continuous M and Y.
SemSpec default_verification_spec();
/// Same shape with binary C, X, M and U: every variable except Y is discrete.
SemSpec all_binary_spec();
/// Every variable continuous, so population coefficients follow from the
/// structural coefficients.
SemSpec gaussian_spec();

struct CompleteDataset {
  /// Carries the generated U in its unobserved column.
  EncodedDataset data;
  SemSpec spec;
  std::size_t n = 0;
};

/// Reproducible from (spec, n): the generator is seeded from spec.seed only.
CompleteDataset generate(const SemSpec& spec, std::size_t n);

struct GroupEffects {
  std::string comparison;
  double tau = 0.0;
  double delta = 0.0;
  double zeta = 0.0;
};

/// Stratified plug-in estimator over discrete X, M and C cells, averaged over
/// the comparison group's covariate distribution. Throws PositivityError on an
/// empty required cell and ValidationError on non-discrete columns.
std::vector<GroupEffects> oracle_np_identify(const EncodedDataset& data);

/// The same estimand computed from saturated cell-dummy least-squares fits.
std::vector<GroupEffects> saturated_regression_decomposition(const EncodedDataset& data);

struct RealizedGroup {
  std::string comparison;
  double delta_res = 0.0;
  double zeta_res = 0.0;
  double delta_true = 0.0;
  double zeta_true = 0.0;
  /// Residual estimate minus the U-adjusted estimate.
  double bias_delta = 0.0;
  double bias_zeta = 0.0;
  double alpha_r = 0.0;
  /// U coefficient in the U-adjusted outcome model.
  double beta_u = 0.0;
  /// Mediator coefficient of U regressed on the outcome design, including the
  /// group's interaction term when present.
  double delta_m = 0.0;
  double se_beta_res_m = 0.0;
  double df = 0.0;
  /// Partial R-squared computed on all rows with group indicators as controls.
  double r2_yu_pooled = 0.0;
  double r2_mu_pooled = 0.0;
  /// Partial R-squared within the comparison group's rows.
  double r2_yu_group = 0.0;
  double r2_mu_group = 0.0;

  double formula_bias() const noexcept { return alpha_r * delta_m * beta_u; }
};

struct OracleBias {
  bool interaction = false;
  std::vector<RealizedGroup> groups;
};

/// Refit-with-U oracle: compares systems fitted without and with U and
/// reports the realized sensitivity parameters.
OracleBias oracle_bias(const CompleteDataset& data, bool interaction = false);

struct PopulationTerms {
  std::string comparison;
  double alpha_r = 0.0;
  double delta_m = 0.0;
  double beta_u = 0.0;
  double bias_delta() const noexcept { return alpha_r * delta_m * beta_u; }
};

/// Population coefficients implied by path tracing. Needs continuous X, M
/// and U; throws ValidationError otherwise.
std::vector<PopulationTerms> population_terms(const SemSpec& spec);

/// Distinct covariate patterns present in the data, sorted.
std::vector<std::vector<double>> covariate_strata(const EncodedDataset& data);

/// Empirical tables for one comparison group and covariate stratum of a
/// discrete dataset with U.
DiscreteWorld extract_world(const EncodedDataset& data, std::string_view level,
                            const std::vector<double>& stratum);

/// Residual-minus-true disparity reduction computed directly from cell
/// counts at one group and stratum, without going through a DiscreteWorld.
double enumerated_bias(const EncodedDataset& data, std::string_view level,
                       const std::vector<double>& stratum);

}  // namespace decompsens
