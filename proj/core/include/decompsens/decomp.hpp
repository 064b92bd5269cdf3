#pragma once

#include "decompsens/dataset.hpp"
#include "decompsens/regress.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace decompsens {

/// Column labels used in every design built from an EncodedDataset.
namespace columns {
inline constexpr std::string_view kIntercept = "(Intercept)";
inline constexpr std::string_view kMediator = "M";
inline constexpr std::string_view kUnobserved = "U";
std::string indicator(std::string_view level);
std::string indicator_mediator(std::string_view level);
std::string indicator_unobserved(std::string_view level);
std::string confounder(std::string_view name);
std::string covariate(std::string_view name);
}  // namespace columns

/// Where the covariate mean in the interaction estimator of zeta is taken.
enum class CovariateMeanScope { full_sample, comparison_group };

struct SystemOptions {
  bool interaction = false;
  CovariateMeanScope covariate_means = CovariateMeanScope::full_sample;
  /// Add the unobserved column (and its group interactions) to the outcome
  /// model. Only simulated data carry it.
  bool outcome_unobserved = false;
  bool outcome_unobserved_interaction = false;
};

/// Design blocks shared by the decomposition and the simulation oracles.
struct DesignSpec {
  bool indicators = true;
  bool confounders = false;
  bool mediator = false;
  bool indicator_mediator = false;
  bool unobserved = false;
  bool indicator_unobserved = false;
  bool covariates = true;
};
Design build_design(const EncodedDataset& data, const DesignSpec& spec);

/// Mediator, confounder and outcome models of one analysis.
struct FittedSystem {
  ModelFit mediator_fit;
  std::vector<ModelFit> confounder_fits;
  ModelFit outcome_fit;
  bool interaction = false;
  CovariateMeanScope covariate_scope = CovariateMeanScope::full_sample;
  std::vector<std::string> comparison_groups;
  std::vector<std::string> confounder_names;
  /// Estimated E[C], one vector per comparison group (identical entries for
  /// the full-sample scope).
  std::vector<Eigen::VectorXd> covariate_means;
  std::size_t n = 0;
  std::uint64_t data_fingerprint = 0;

  std::size_t group_position(std::string_view level) const;
};

FittedSystem fit_system(const EncodedDataset& data, const SystemOptions& options = {});

/// Reduced regression Y ~ indicators + C; tau is the indicator coefficient.
struct TauFit {
  ModelFit fit;
  std::vector<std::string> comparison_groups;
  std::vector<CoefEstimate> tau;
};

TauFit initial_disparity(const EncodedDataset& data);

/// Coefficients of a fitted system that the estimators and sensitivity
/// formulas consume for one comparison group.
struct GroupTerms {
  std::string comparison;
  double alpha_r = 0.0;
  double var_alpha_r = 0.0;
  /// Mediator effect in the comparison group: beta_m, plus beta_rm with
  /// interaction.
  double beta_m = 0.0;
  double var_beta_m = 0.0;
  double delta = 0.0;
  double zeta = 0.0;
  std::size_t outcome_df = 0;
};

GroupTerms group_terms(const FittedSystem& system, std::size_t group);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

enum class CiMethod { normal, percentile };

struct GroupDecomposition {
  std::string comparison;
  double tau = 0.0;
  double delta = 0.0;
  double zeta = 0.0;
  double pct_reduction = 0.0;
  double se_tau = 0.0;
  double se_delta = 0.0;
  double se_zeta = 0.0;
  Interval ci_tau;
  Interval ci_delta;
  Interval ci_zeta;
};

struct DecompositionResult {
  std::vector<GroupDecomposition> groups;
  bool interaction = false;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::normal;
  std::size_t n = 0;
  std::size_t bootstrap_replicates = 0;
  std::optional<std::uint64_t> seed;

  const GroupDecomposition& group(std::string_view comparison) const;
};

/// delta * 100 / tau.
double percent_reduction(double delta, double tau);

struct BootstrapOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  /// 0 picks std::thread::hardware_concurrency().
  unsigned threads = 1;
  SystemOptions system;
  double max_drop_fraction = 0.05;
};

/// Per-replicate estimates for one comparison group.
struct GroupDraws {
  std::string comparison;
  std::vector<double> tau;
  std::vector<double> delta;
  std::vector<double> zeta;
  std::vector<double> alpha_r;
  std::vector<double> se_beta_m;
};

struct BootstrapDraws {
  std::vector<GroupDraws> groups;
  std::size_t requested = 0;
  std::size_t dropped = 0;
  std::uint64_t seed = 0;
  bool interaction = false;
};

/// Nonparametric row bootstrap. Replicate b draws from its own generator
/// seeded by (seed, b), so results do not depend on the thread count.
BootstrapDraws bootstrap_draws(const EncodedDataset& data, const BootstrapOptions& options);

/// Bootstrap moments feeding the zeta standard error under confounding.
struct GroupCov {
  std::string comparison;
  double var_tau = 0.0;
  double var_delta_res = 0.0;
  double var_zeta_res = 0.0;
  double cov_tau_tau = 0.0;
  double cov_tau_delta_res = 0.0;
  double cov_tau_alpha = 0.0;
  double cov_tau_se_beta_m = 0.0;
};

struct CovBundle {
  std::vector<GroupCov> groups;
  std::size_t replicates = 0;
  std::size_t dropped = 0;
  std::uint64_t seed = 0;

  const GroupCov& group(std::string_view comparison) const;
};

CovBundle summarize_cov(const BootstrapDraws& draws);
CovBundle bootstrap_cov(const EncodedDataset& data, const BootstrapOptions& options);

struct DecomposeOptions {
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::normal;
};

/// Point estimates with delta-method se for delta; se for tau and zeta come
/// from `draws` (tau falls back to its OLS se and zeta to NaN without them).
DecompositionResult decompose(const FittedSystem& system, const TauFit& tau_fit,
                              const BootstrapDraws* draws = nullptr,
                              const DecomposeOptions& options = {});

}  // namespace decompsens
