#include "decompsens/decomp.hpp"

#include "decompsens/error.hpp"
#include "decompsens/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace decompsens {

namespace columns {
std::string indicator(std::string_view level) { return "R[" + std::string(level) + "]"; }
std::string indicator_mediator(std::string_view level) { return "R[" + std::string(level) + "]:M"; }
std::string indicator_unobserved(std::string_view level) { return "R[" + std::string(level) + "]:U"; }
std::string confounder(std::string_view name) { return "X[" + std::string(name) + "]"; }
std::string covariate(std::string_view name) { return "C[" + std::string(name) + "]"; }
}  // namespace columns

Design build_design(const EncodedDataset& data, const DesignSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto g = static_cast<Eigen::Index>(data.indicators().cols());
  const auto px = data.confounders().cols();
  const auto pc = data.covariates().cols();
  const bool need_u = spec.unobserved || spec.indicator_unobserved;
  if (need_u && !data.unobserved()) {
    throw DependencyError("design requests the unobserved column but the dataset has none");
  }

  Eigen::Index p = 1;
  if (spec.indicators) p += g;
  if (spec.confounders) p += px;
  if (spec.mediator) p += 1;
  if (spec.indicator_mediator) p += g;
  if (spec.unobserved) p += 1;
  if (spec.indicator_unobserved) p += g;
  if (spec.covariates) p += pc;

  Design d;
  d.matrix.resize(n, p);
  d.names.reserve(static_cast<std::size_t>(p));
  Eigen::Index col = 0;
  auto add = [&](std::string name, const auto& values) {
    d.matrix.col(col++) = values;
    d.names.push_back(std::move(name));
  };

  const auto& levels = data.group_levels();
  add(std::string(columns::kIntercept), Eigen::VectorXd::Ones(n));
  if (spec.indicators) {
    for (Eigen::Index j = 0; j < g; ++j) {
      add(columns::indicator(levels[static_cast<std::size_t>(j + 1)]), data.indicators().col(j));
    }
  }
  if (spec.confounders) {
    for (Eigen::Index j = 0; j < px; ++j) {
      add(columns::confounder(data.names().confounders[static_cast<std::size_t>(j)]),
          data.confounders().col(j));
    }
  }
  if (spec.mediator) add(std::string(columns::kMediator), data.mediator());
  if (spec.indicator_mediator) {
    for (Eigen::Index j = 0; j < g; ++j) {
      add(columns::indicator_mediator(levels[static_cast<std::size_t>(j + 1)]),
          data.indicators().col(j).cwiseProduct(data.mediator()));
    }
  }
  if (spec.unobserved) add(std::string(columns::kUnobserved), *data.unobserved());
  if (spec.indicator_unobserved) {
    for (Eigen::Index j = 0; j < g; ++j) {
      add(columns::indicator_unobserved(levels[static_cast<std::size_t>(j + 1)]),
          data.indicators().col(j).cwiseProduct(*data.unobserved()));
    }
  }
  if (spec.covariates) {
    for (Eigen::Index j = 0; j < pc; ++j) {
      add(columns::covariate(data.names().covariates[static_cast<std::size_t>(j)]),
          data.covariates().col(j));
    }
  }
  return d;
}

namespace {

ModelFit fit_named(const Eigen::VectorXd& response, const Design& design, std::string_view model,
                   std::uint64_t fingerprint) {
  try {
    ModelFit fit = ols_fit(response, design);
    fit.data_fingerprint = fingerprint;
    return fit;
  } catch (const CollinearityError& e) {
    throw CollinearityError(std::string(model) + " model: " + e.what());
  }
}

std::vector<std::string> comparison_levels(const EncodedDataset& data) {
  if (data.group_count() < 2) {
    throw SchemaError("analysis needs at least one comparison group besides the reference");
  }
  return {data.group_levels().begin() + 1, data.group_levels().end()};
}

}  // namespace

std::size_t FittedSystem::group_position(std::string_view level) const {
  for (std::size_t i = 0; i < comparison_groups.size(); ++i) {
    if (comparison_groups[i] == level) return i;
  }
  throw LookupError("unknown comparison group '" + std::string(level) + "'");
}

FittedSystem fit_system(const EncodedDataset& data, const SystemOptions& options) {
  FittedSystem s;
  s.comparison_groups = comparison_levels(data);
  s.interaction = options.interaction;
  s.covariate_scope = options.covariate_means;
  s.n = data.n();
  s.data_fingerprint = data.fingerprint();
  s.confounder_names = data.names().confounders;

  const Design base = build_design(data, {});
  s.mediator_fit = fit_named(data.mediator(), base, "mediator", s.data_fingerprint);
  for (Eigen::Index j = 0; j < data.confounders().cols(); ++j) {
    s.confounder_fits.push_back(
        fit_named(data.confounders().col(j), base,
                  "confounder '" + data.names().confounders[static_cast<std::size_t>(j)] + "'",
                  s.data_fingerprint));
  }

  DesignSpec outcome;
  outcome.confounders = true;
  outcome.mediator = true;
  outcome.indicator_mediator = options.interaction;
  outcome.unobserved = options.outcome_unobserved || options.outcome_unobserved_interaction;
  outcome.indicator_unobserved = options.outcome_unobserved_interaction;
  s.outcome_fit = fit_named(data.outcome(), build_design(data, outcome), "outcome",
                            s.data_fingerprint);

  const auto& c = data.covariates();
  const Eigen::VectorXd full = c.cols() > 0 ? Eigen::VectorXd(c.colwise().mean().transpose())
                                            : Eigen::VectorXd(0);
  for (std::size_t r = 0; r < s.comparison_groups.size(); ++r) {
    if (options.covariate_means == CovariateMeanScope::full_sample || c.cols() == 0) {
      s.covariate_means.push_back(full);
      continue;
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(c.cols());
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (data.group_index()[i] == r + 1) {
        sum += c.row(static_cast<Eigen::Index>(i)).transpose();
        ++count;
      }
    }
    if (count == 0) {
      throw PositivityError("comparison group '" + s.comparison_groups[r] + "' has no rows");
    }
    s.covariate_means.push_back(sum / static_cast<double>(count));
  }
  return s;
}

TauFit initial_disparity(const EncodedDataset& data) {
  TauFit t;
  t.comparison_groups = comparison_levels(data);
  t.fit = fit_named(data.outcome(), build_design(data, {}), "initial disparity",
                    data.fingerprint());
  for (const auto& level : t.comparison_groups) {
    t.tau.push_back(coef(t.fit, columns::indicator(level)));
  }
  return t;
}

GroupTerms group_terms(const FittedSystem& s, std::size_t group) {
  if (group >= s.comparison_groups.size()) throw LookupError("group_terms: group index out of range");
  const auto& level = s.comparison_groups[group];
  const auto ind = columns::indicator(level);

  GroupTerms t;
  t.comparison = level;
  const auto ia = static_cast<Eigen::Index>(s.mediator_fit.index_of(ind));
  t.alpha_r = s.mediator_fit.coefficients(ia);
  t.var_alpha_r = s.mediator_fit.coefficient_covariance(ia, ia);

  const auto& y = s.outcome_fit;
  const auto im = y.index_of(columns::kMediator);
  const auto ibr = static_cast<Eigen::Index>(y.index_of(ind));
  t.beta_m = y.coefficients(static_cast<Eigen::Index>(im));
  t.var_beta_m = y.coefficient_covariance(static_cast<Eigen::Index>(im), static_cast<Eigen::Index>(im));
  double beta_rm = 0.0;
  if (s.interaction) {
    const auto irm = y.index_of(columns::indicator_mediator(level));
    beta_rm = y.coefficients(static_cast<Eigen::Index>(irm));
    t.var_beta_m = combined_variance(y, im, irm);
    t.beta_m += beta_rm;
  }
  t.outcome_df = y.df;

  t.delta = t.alpha_r * t.beta_m;

  double zeta = y.coefficients(ibr);
  for (std::size_t j = 0; j < s.confounder_fits.size(); ++j) {
    const double beta_x = y.coefficients(
        static_cast<Eigen::Index>(y.index_of(columns::confounder(s.confounder_names[j]))));
    const auto& xf = s.confounder_fits[j];
    const double gamma_r = xf.coefficients(static_cast<Eigen::Index>(xf.index_of(ind)));
    zeta += beta_x * gamma_r;
  }
  if (s.interaction) {
    // beta_rm * (alpha + alpha_c E[C]): the reference-group mediator mean at E[C].
    const auto& m = s.mediator_fit;
    double ref_mean = m.coefficients(static_cast<Eigen::Index>(m.index_of(columns::kIntercept)));
    const auto& cm = s.covariate_means[group];
    const auto first_c = m.coefficients.size() - cm.size();
    for (Eigen::Index j = 0; j < cm.size(); ++j) ref_mean += m.coefficients(first_c + j) * cm(j);
    zeta += beta_rm * ref_mean;
  }
  t.zeta = zeta;
  return t;
}

double percent_reduction(double delta, double tau) {
  if (tau == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * delta / tau;
}

const GroupDecomposition& DecompositionResult::group(std::string_view comparison) const {
  for (const auto& g : groups) {
    if (g.comparison == comparison) return g;
  }
  throw LookupError("no decomposition for comparison group '" + std::string(comparison) + "'");
}

const GroupCov& CovBundle::group(std::string_view comparison) const {
  for (const auto& g : groups) {
    if (g.comparison == comparison) return g;
  }
  throw LookupError("no bootstrap covariances for comparison group '" +
                    std::string(comparison) + "'");
}

// --- bootstrap --------------------------------------------------------------

namespace {

struct Replicate {
  std::vector<double> tau, delta, zeta, alpha, se_beta_m;
};

std::optional<Replicate> run_replicate(const EncodedDataset& data, const SystemOptions& opts,
                                       std::uint64_t seed, std::size_t b) {
  std::mt19937_64 rng(stats::stream_seed(seed, b));
  std::uniform_int_distribution<std::size_t> pick(0, data.n() - 1);
  std::vector<std::size_t> rows(data.n());
  for (auto& r : rows) r = pick(rng);
  const auto sample = data.select_rows(rows);
  try {
    const auto tau = initial_disparity(sample);
    const auto sys = fit_system(sample, opts);
    Replicate rep;
    for (std::size_t g = 0; g < sys.comparison_groups.size(); ++g) {
      const auto terms = group_terms(sys, g);
      rep.tau.push_back(tau.tau[g].estimate);
      rep.delta.push_back(terms.delta);
      rep.zeta.push_back(terms.zeta);
      rep.alpha.push_back(terms.alpha_r);
      rep.se_beta_m.push_back(std::sqrt(std::max(0.0, terms.var_beta_m)));
    }
    return rep;
  } catch (const CollinearityError&) {
    return std::nullopt;
  } catch (const PositivityError&) {
    return std::nullopt;
  }
}

}  // namespace

BootstrapDraws bootstrap_draws(const EncodedDataset& data, const BootstrapOptions& options) {
  if (options.replicates < 200) {
    throw DomainError("bootstrap needs at least 200 replicates, got " +
                      std::to_string(options.replicates));
  }
  const auto levels = comparison_levels(data);
  const std::size_t b_total = options.replicates;
  std::vector<std::optional<Replicate>> results(b_total);

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, b_total));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < b_total; b = next++) {
      results[b] = run_replicate(data, options.system, options.seed, b);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  BootstrapDraws draws;
  draws.requested = b_total;
  draws.seed = options.seed;
  draws.interaction = options.system.interaction;
  for (const auto& level : levels) {
    GroupDraws d;
    d.comparison = level;
    draws.groups.push_back(std::move(d));
  }
  for (const auto& rep : results) {
    if (!rep) {
      ++draws.dropped;
      continue;
    }
    for (std::size_t g = 0; g < levels.size(); ++g) {
      auto& d = draws.groups[g];
      d.tau.push_back(rep->tau[g]);
      d.delta.push_back(rep->delta[g]);
      d.zeta.push_back(rep->zeta[g]);
      d.alpha_r.push_back(rep->alpha[g]);
      d.se_beta_m.push_back(rep->se_beta_m[g]);
    }
  }
  if (static_cast<double>(draws.dropped) > options.max_drop_fraction * static_cast<double>(b_total)) {
    throw BootstrapError(std::to_string(draws.dropped) + " of " + std::to_string(b_total) +
                         " bootstrap replicates had rank-deficient designs");
  }
  return draws;
}

CovBundle summarize_cov(const BootstrapDraws& draws) {
  CovBundle bundle;
  bundle.replicates = draws.requested - draws.dropped;
  bundle.dropped = draws.dropped;
  bundle.seed = draws.seed;
  for (const auto& d : draws.groups) {
    GroupCov c;
    c.comparison = d.comparison;
    c.var_tau = stats::variance(d.tau);
    c.cov_tau_tau = stats::covariance(d.tau, d.tau);
    c.var_delta_res = stats::variance(d.delta);
    c.var_zeta_res = stats::variance(d.zeta);
    c.cov_tau_delta_res = stats::covariance(d.tau, d.delta);
    c.cov_tau_alpha = stats::covariance(d.tau, d.alpha_r);
    c.cov_tau_se_beta_m = stats::covariance(d.tau, d.se_beta_m);
    bundle.groups.push_back(std::move(c));
  }
  return bundle;
}

CovBundle bootstrap_cov(const EncodedDataset& data, const BootstrapOptions& options) {
  return summarize_cov(bootstrap_draws(data, options));
}

// --- decompose --------------------------------------------------------------

DecompositionResult decompose(const FittedSystem& system, const TauFit& tau_fit,
                              const BootstrapDraws* draws, const DecomposeOptions& options) {
  if (tau_fit.fit.data_fingerprint != system.data_fingerprint ||
      tau_fit.fit.n != system.n || tau_fit.comparison_groups != system.comparison_groups) {
    throw MismatchError("initial-disparity fit and fitted system come from different data");
  }
  if (!(options.ci_level > 0.0 && options.ci_level < 1.0)) {
    throw DomainError("confidence level must lie in (0, 1)");
  }
  if (options.ci_method == CiMethod::percentile && draws == nullptr) {
    throw DependencyError("percentile intervals need bootstrap draws");
  }
  if (draws != nullptr && draws->groups.size() != system.comparison_groups.size()) {
    throw MismatchError("bootstrap draws do not match the fitted system's comparison groups");
  }

  DecompositionResult out;
  out.interaction = system.interaction;
  out.ci_level = options.ci_level;
  out.ci_method = options.ci_method;
  out.n = system.n;
  if (draws != nullptr) {
    out.bootstrap_replicates = draws->requested;
    out.seed = draws->seed;
  }

  const double tail = 0.5 * (1.0 - options.ci_level);
  const double z = stats::normal_quantile(1.0 - tail);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t g = 0; g < system.comparison_groups.size(); ++g) {
    const auto t = group_terms(system, g);
    GroupDecomposition r;
    r.comparison = t.comparison;
    r.tau = tau_fit.tau[g].estimate;
    r.delta = t.delta;
    r.zeta = t.zeta;
    r.pct_reduction = percent_reduction(r.delta, r.tau);
    r.se_delta = std::sqrt(t.alpha_r * t.alpha_r * t.var_beta_m + t.beta_m * t.beta_m * t.var_alpha_r);

    const GroupDraws* d = draws != nullptr ? &draws->groups[g] : nullptr;
    r.se_tau = d ? std::sqrt(stats::variance(d->tau)) : tau_fit.tau[g].std_error;
    r.se_zeta = d ? std::sqrt(stats::variance(d->zeta)) : nan;

    if (options.ci_method == CiMethod::normal) {
      r.ci_tau = {r.tau - z * r.se_tau, r.tau + z * r.se_tau};
      r.ci_delta = {r.delta - z * r.se_delta, r.delta + z * r.se_delta};
      r.ci_zeta = {r.zeta - z * r.se_zeta, r.zeta + z * r.se_zeta};
    } else {
      auto pct = [&](const std::vector<double>& v) -> Interval {
        return {stats::quantile(v, tail), stats::quantile(v, 1.0 - tail)};
      };
      r.ci_tau = pct(d->tau);
      r.ci_delta = pct(d->delta);
      r.ci_zeta = pct(d->zeta);
    }
    out.groups.push_back(std::move(r));
  }
  return out;
}

}  // namespace decompsens
