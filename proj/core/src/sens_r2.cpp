#include "decompsens/sens_r2.hpp"

#include "decompsens/error.hpp"
#include "decompsens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace decompsens {

namespace {

double sgn(double x) { return x < 0.0 ? -1.0 : 1.0; }

double quantity_estimate(const R2Inputs& in, Quantity q) {
  return q == Quantity::delta ? in.delta_res : in.zeta_res;
}

// Sign c with bias(delta) = c * |alpha_r| * se * k for the chosen adjustment.
double delta_bias_sign(const R2Inputs& in, Direction direction, Quantity q) {
  const double dir = direction == Direction::toward_zero ? 1.0 : -1.0;
  if (q == Quantity::delta) return dir * sgn(in.delta_res);
  return -dir * sgn(in.zeta_res);
}

}  // namespace

void R2Params::check() const {
  if (!(r2_yu >= 0.0 && r2_yu < 1.0)) throw DomainError("r2_yu must lie in [0, 1)");
  if (!(r2_mu >= 0.0 && r2_mu < 1.0)) throw DomainError("r2_mu must lie in [0, 1)");
}

void R2Inputs::check() const {
  if (!std::isfinite(alpha_r) || !std::isfinite(beta_res_m) || !std::isfinite(delta_res) ||
      !std::isfinite(zeta_res) || !std::isfinite(tau)) {
    throw DomainError("R2 inputs must be finite");
  }
  if (!(se_beta_res_m >= 0.0) || !(se_alpha_r >= 0.0)) throw DomainError("standard errors must be nonnegative");
  if (!(df >= 2.0)) throw DomainError("outcome-model df must be at least 2");
}

R2Inputs r2_inputs(const FittedSystem& system, const TauFit& tau_fit, std::size_t group, const CovBundle* cov) {
  if (tau_fit.fit.data_fingerprint != system.data_fingerprint) {
    throw MismatchError("reduced model and fitted system come from different data");
  }
  if (group >= system.comparison_groups.size() || tau_fit.comparison_groups.size() != system.comparison_groups.size() ||
      tau_fit.comparison_groups[group] != system.comparison_groups[group]) {
    throw MismatchError("reduced model and fitted system disagree on comparison groups");
  }
  const auto terms = group_terms(system, group);
  R2Inputs in;
  in.comparison = terms.comparison;
  in.alpha_r = terms.alpha_r;
  in.se_alpha_r = std::sqrt(terms.var_alpha_r);
  in.beta_res_m = terms.beta_m;
  in.se_beta_res_m = std::sqrt(terms.var_beta_m);
  in.df = static_cast<double>(terms.outcome_df);
  in.delta_res = terms.delta;
  in.zeta_res = terms.zeta;
  in.tau = tau_fit.tau[group].estimate;
  if (cov) in.cov = cov->group(terms.comparison);
  return in;
}

std::string_view to_string(Quantity q) { return q == Quantity::delta ? "delta" : "zeta"; }

Quantity parse_quantity(std::string_view text) {
  if (text == "delta") return Quantity::delta;
  if (text == "zeta") return Quantity::zeta;
  throw DomainError("quantity must be 'delta' or 'zeta', got '" + std::string(text) + "'");
}

double k_factor(double df, const R2Params& params) {
  params.check();
  if (!(df > 0.0)) throw DomainError("df must be positive");
  return std::sqrt(df * params.r2_yu * params.r2_mu / (1.0 - params.r2_mu));
}

double bias_r2(const R2Inputs& inputs, const R2Params& params) {
  return std::abs(inputs.alpha_r) * inputs.se_beta_res_m * k_factor(inputs.df, params);
}

AdjustedR2 adjust_point_r2(const R2Inputs& inputs, const R2Params& params, Direction direction,
                           Quantity quantity) {
  const double b = bias_r2(inputs, params);
  const double bias_delta = delta_bias_sign(inputs, direction, quantity) * b;
  AdjustedR2 out;
  if (quantity == Quantity::delta) {
    out.delta = inputs.delta_res - bias_delta;
    out.zeta = inputs.tau - out.delta;
  } else {
    out.zeta = inputs.zeta_res + bias_delta;
    out.delta = inputs.tau - out.zeta;
  }
  out.beta_m = inputs.alpha_r != 0.0 ? inputs.beta_res_m - bias_delta / inputs.alpha_r : inputs.beta_res_m;
  return out;
}

double adjusted_var_beta_m(const R2Inputs& inputs, const R2Params& params) {
  params.check();
  if (!(inputs.df >= 2.0)) throw DomainError("outcome-model df must be at least 2");
  const double se2 = inputs.se_beta_res_m * inputs.se_beta_res_m;
  return se2 * (1.0 - params.r2_yu) / (1.0 - params.r2_mu) * inputs.df / (inputs.df - 1.0);
}

double adjusted_var_delta(const R2Inputs& inputs, const R2Params& params, Direction direction,
                          Quantity quantity) {
  const double beta_m = adjust_point_r2(inputs, params, direction, quantity).beta_m;
  const double var_alpha = inputs.se_alpha_r * inputs.se_alpha_r;
  return inputs.alpha_r * inputs.alpha_r * adjusted_var_beta_m(inputs, params) + beta_m * beta_m * var_alpha;
}

VarianceResult adjusted_var_zeta(const R2Inputs& inputs, const R2Params& params, Direction direction,
                                 Quantity quantity) {
  if (!inputs.cov) {
    throw DependencyError("zeta variance needs bootstrap covariances; run the bootstrap first");
  }
  const auto& c = *inputs.cov;
  const double k = k_factor(inputs.df, params);
  const double s = delta_bias_sign(inputs, direction, quantity) * sgn(inputs.alpha_r);
  const double raw = c.var_tau + adjusted_var_delta(inputs, params, direction, quantity) -
                     2.0 * c.cov_tau_delta_res +
                     2.0 * s * k * inputs.se_beta_res_m * c.cov_tau_alpha +
                     2.0 * s * k * inputs.alpha_r * c.cov_tau_se_beta_m;
  VarianceResult out;
  out.raw = raw;
  out.clamped = raw < 0.0;
  out.value = out.clamped ? 0.0 : raw;
  return out;
}

AdjustedInterval adjusted_interval(const R2Inputs& inputs, const R2Params& params, Quantity quantity,
                                   double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const auto point = adjust_point_r2(inputs, params, Direction::toward_zero, quantity);
  AdjustedInterval out;
  if (quantity == Quantity::delta) {
    out.estimate = point.delta;
    out.se = std::sqrt(adjusted_var_delta(inputs, params, Direction::toward_zero, quantity));
  } else {
    out.estimate = point.zeta;
    const auto v = adjusted_var_zeta(inputs, params, Direction::toward_zero, quantity);
    out.se = std::sqrt(v.value);
    out.variance_clamped = v.clamped;
  }
  const double t = stats::t_quantile(1.0 - alpha / 2.0, inputs.df - 1.0);
  out.ci = {out.estimate - t * out.se, out.estimate + t * out.se};
  return out;
}

double rv(double g) {
  if (std::isnan(g) || g < 0.0) throw DomainError("rv: g must be nonnegative");
  if (g == 0.0) return 0.0;
  // Same root as (sqrt(g^4 + 4 g^2) - g^2) / 2 without cancellation at large g.
  return 2.0 / (std::sqrt(1.0 + 4.0 / (g * g)) + 1.0);
}

double g_statistic(const R2Inputs& inputs, Quantity quantity) {
  const double num = std::abs(quantity_estimate(inputs, quantity));
  const double den = std::abs(inputs.alpha_r) * inputs.se_beta_res_m * std::sqrt(inputs.df);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

double rv_alpha(const R2Inputs& inputs, Quantity quantity, const RvAlphaOptions& options) {
  inputs.check();
  const double sign = sgn(quantity_estimate(inputs, quantity));
  // Signed distance of the interval bound nearest zero; positive while the
  // interval excludes zero.
  auto bound = [&](double v) {
    const auto iv = adjusted_interval(inputs, {v, v}, quantity, options.alpha);
    return sign > 0.0 ? iv.ci.lo : -iv.ci.hi;
  };
  const double h0 = bound(0.0);
  if (h0 <= 0.0) return 0.0;

  const double hi_v = rv(g_statistic(inputs, quantity));
  if (!(hi_v < 1.0)) throw SearchError("rv_alpha: no equal-strength confounder in [0, 1) reaches the estimate");
  const double h1 = bound(hi_v);

  const std::size_t samples = std::max<std::size_t>(options.monotone_samples, 2);
  std::vector<double> trace(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    trace[i] = bound(hi_v * static_cast<double>(i) / static_cast<double>(samples - 1));
  }
  const double slack = 1e-12 * (std::abs(h0) + std::abs(h1));
  for (std::size_t i = 1; i < samples; ++i) {
    if (trace[i] > trace[i - 1] + slack) {
      std::ostringstream os;
      os.precision(10);
      os << "rv_alpha: interval bound is not monotone over [0, " << hi_v << "]: bound(0) = " << h0
         << ", bound(" << hi_v << ") = " << h1;
      throw SearchError(os.str());
    }
  }
  if (h1 > 0.0) {
    std::ostringstream os;
    os << "rv_alpha: bracket [0, " << hi_v << "] does not change sign: " << h0 << ", " << h1;
    throw SearchError(os.str());
  }

  double lo = 0.0, hi = hi_v;
  double mid = hi;
  if (std::abs(h1) < options.tol) return hi_v;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    mid = 0.5 * (lo + hi);
    const double h = bound(mid);
    if (std::abs(h) < options.tol) return mid;
    if (h > 0.0) lo = mid; else hi = mid;
  }
  return mid;
}

RobustnessEntry robustness(const R2Inputs& inputs, Quantity quantity, const RvAlphaOptions& options) {
  RobustnessEntry e;
  e.quantity = quantity;
  e.g = g_statistic(inputs, quantity);
  e.rv = rv(e.g);
  e.alpha = options.alpha;
  e.df = inputs.df;
  e.tol = options.tol;
  if (quantity == Quantity::delta || inputs.cov) e.rv_alpha = rv_alpha(inputs, quantity, options);
  return e;
}

CoefEstimate reference_switch(const EncodedDataset& data, std::string_view level, bool interaction) {
  const auto switched = data.with_reference(level);
  DesignSpec spec;
  spec.confounders = true;
  spec.mediator = true;
  spec.indicator_mediator = interaction;
  const auto design = build_design(switched, spec);
  const auto fit = ols_fit(switched.outcome(), design);
  return coef(fit, columns::kMediator);
}

SensitivityGrid grid_r2(const R2Inputs& inputs, Quantity quantity, const R2GridOptions& options) {
  inputs.check();
  if (options.resolution < 2) throw DomainError("grid resolution must be at least 2");
  if (!(options.max_r2 > 0.0 && options.max_r2 < 1.0)) throw DomainError("max_r2 must lie in (0, 1)");

  SensitivityGrid grid;
  grid.x_name = "r2_yu";
  grid.y_name = "r2_mu";
  grid.xs = linspace(0.0, options.max_r2, options.resolution);
  grid.ys = grid.xs;
  grid.value_names = {"estimate_adj", "se_adj", "ci_lo", "ci_hi"};

  const auto n = static_cast<Eigen::Index>(options.resolution);
  Eigen::MatrixXd est(n, n), se(n, n), lo(n, n), hi(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto iv = adjusted_interval(inputs, {grid.xs[i], grid.ys[j]}, quantity, options.alpha);
      est(i, j) = iv.estimate;
      se(i, j) = iv.se;
      lo(i, j) = iv.ci.lo;
      hi(i, j) = iv.ci.hi;
    }
  }
  grid.values = {est, se, lo, hi};

  const double alpha = options.alpha;
  auto surface = [&](int which) -> SurfaceFn {
    return [&inputs, quantity, alpha, which](double yu, double mu) {
      const auto iv = adjusted_interval(inputs, {yu, mu}, quantity, alpha);
      return which == 0 ? iv.estimate : which == 1 ? iv.ci.lo : iv.ci.hi;
    };
  };
  const struct {
    const char* name;
    const Eigen::MatrixXd* values;
    int which;
  } traced[] = {{"estimate=0", &est, 0}, {"ci_lo=0", &lo, 1}, {"ci_hi=0", &hi, 2}};
  for (const auto& t : traced) {
    std::size_t piece = 0;
    for (auto& line : extract_contours(grid.xs, grid.ys, *t.values, 0.0, surface(t.which))) {
      grid.curves.push_back({std::string(t.name) + "#" + std::to_string(piece++), std::move(line)});
    }
  }

  const double point_rv = rv(g_statistic(inputs, quantity));
  grid.curves.push_back({"rv", {{point_rv, point_rv}}});
  auto search = options.rv_alpha;
  search.alpha = options.alpha;
  const double point_alpha = rv_alpha(inputs, quantity, search);
  grid.curves.push_back({"rv_alpha", {{point_alpha, point_alpha}}});
  return grid;
}

}  // namespace decompsens
