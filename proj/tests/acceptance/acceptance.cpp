// Acceptance suite. Usage: decompsens_acceptance [criterion ...]
// With no arguments every criterion runs. Exit status is 0 only when every
// selected criterion passes.

#include "decompsens/decomp.hpp"
#include "decompsens/regress.hpp"
#include "decompsens/sens_coef.hpp"
#include "decompsens/sens_r2.hpp"
#include "decompsens/simulate.hpp"
#include "decompsens/stats.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace decompsens;
namespace oracle = decompsens::testing;

namespace {

// ---- pinned tolerances -------------------------------------------------------

constexpr double kArithmeticTol = 5e-6;       // printed-digit agreement of formula values
constexpr double kGoldenGapTol = 2e-3;     // formula value vs the golden estimate
constexpr double kPercentTol = 0.1;           // percentage points
constexpr double kRvGoldenTol = 1e-6;
constexpr double kFixedPointTol = 1e-10;
constexpr double kIdentityTol = 1e-10;
constexpr double kIdentityInteractionTol = 1e-8;
constexpr double kMcseMultiple = 3.0;
constexpr double kEnumerationTol = 1e-10;
constexpr double kInvarianceTol = 1e-12;
constexpr double kSaturatedTol = 1e-8;
constexpr double kRvAlphaReplayTol = 1e-3;
constexpr double kSwitchCoefTol = 1e-10;
constexpr double kSwitchSeTol = 1e-8;

struct Outcome {
  bool passed = true;
  std::string detail;
  std::vector<std::string> info;
};

struct Criterion {
  std::string id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

SemSpec seeded(SemSpec s, std::uint64_t seed) {
  s.seed = seed;
  return s;
}

// ---- criteria -----------------------------------------------------------------

Outcome golden_coefficient_arithmetic() {
  Outcome o;
  struct Case {
    double delta_m, expected, golden;
  } cases[] = {{0.208, -0.358560, -0.360}, {0.350, -0.603347, -0.604}};
  std::ostringstream d;
  for (const auto& c : cases) {
    CoefParams p;
    p.beta_u = 0.993;
    p.delta_m = c.delta_m;
    const double b = bias_coef(-1.736, p).delta;
    const bool ok = std::abs(b - c.expected) < kArithmeticTol && std::abs(b - c.golden) < kGoldenGapTol;
    o.passed = o.passed && ok;
    d << "delta_m=" << c.delta_m << " bias=" << fixed(b, 5) << " (golden " << c.golden << ") ";
  }
  o.detail = d.str();
  return o;
}

Outcome golden_percent_reduction() {
  Outcome o;
  struct Case {
    double delta, percent;
  } cases[] = {{-0.360, 37.3}, {-0.401, 41.6}, {-0.485, 50.2}};
  std::ostringstream d;
  double worst = 0.0;
  for (const auto& c : cases) {
    const double p = percent_reduction(c.delta, -0.965);
    worst = std::max(worst, std::abs(p - c.percent));
    d << fixed(p, 2) << "% ";
  }
  o.passed = worst <= kPercentTol;
  d << "worst gap " << fixed(worst, 3) << " pp (tol " << kPercentTol << ")";
  o.detail = d.str();
  return o;
}

Outcome rv_algebra() {
  Outcome o;
  const bool zero = rv(0.0) == 0.0;
  const double golden = std::abs(rv(1.0) - 0.6180340);
  std::mt19937_64 eng(20240601);
  std::uniform_real_distribution<double> g_dist(0.0, 5.0), alpha_dist(0.2, 3.0), se_dist(0.01, 0.5),
      df_dist(20.0, 5000.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    double g = 0.0;
    while (g == 0.0) g = 5.0 - g_dist(eng);  // (0, 5]
    R2Inputs in;
    in.alpha_r = alpha_dist(eng);
    in.se_beta_res_m = se_dist(eng);
    in.df = std::floor(df_dist(eng));
    const double target = g * in.alpha_r * in.se_beta_res_m * std::sqrt(in.df);
    const double v = rv(g);
    worst = std::max(worst, std::abs(bias_r2(in, {v, v}) - target));
  }
  o.passed = zero && golden <= kRvGoldenTol && worst <= kFixedPointTol;
  o.detail = "rv(0)=" + fixed(rv(0.0), 1) + " rv(1)=" + fixed(rv(1.0), 7) + " fixed-point worst " + fmt(worst) +
             " (tol " + fmt(kFixedPointTol) + ")";
  return o;
}

Outcome decomposition_identity() {
  Outcome o;
  double worst_plain = 0.0, worst_inter = 0.0;
  SystemOptions inter;
  inter.interaction = true;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto sim = generate(seeded(default_verification_spec(), 9000 + k), 5000);
    const auto tau = initial_disparity(sim.data);
    for (const auto& g : decompose(fit_system(sim.data), tau).groups) {
      worst_plain = std::max(worst_plain, std::abs(g.tau - g.delta - g.zeta));
    }
    for (const auto& g : decompose(fit_system(sim.data, inter), tau).groups) {
      worst_inter = std::max(worst_inter, std::abs(g.tau - g.delta - g.zeta));
    }
  }
  const bool plain_ok = worst_plain <= kIdentityTol;
  const bool inter_ok = worst_inter <= kIdentityInteractionTol;
  o.passed = plain_ok && inter_ok;
  o.detail = "no interaction worst " + fmt(worst_plain) + " (tol " + fmt(kIdentityTol) + ", " +
             (plain_ok ? "ok" : "exceeded") + "); interaction worst " + fmt(worst_inter) + " (tol " +
             fmt(kIdentityInteractionTol) + ", " + (inter_ok ? "ok" : "exceeded") + ")";
  if (!inter_ok) {
    o.info.push_back("with group-by-mediator terms and covariates the reduced-model disparity is not an exact sum "
                     "of the two estimators; the gap is reported, not hidden");
  }
  return o;
}

struct BiasSeries {
  std::vector<double> empirical;
  std::vector<double> formula;
};

Outcome bias_formula_oracle() {
  constexpr std::size_t kReps = 20;
  Outcome o;
  std::ostringstream d;
  auto pre = default_verification_spec();
  pre.u_timing = UTiming::pre_exposure;
  pre.r_to_u = {0.0, 0.0, 0.0};
  const std::pair<const char*, SemSpec> timings[] = {{"intermediate", default_verification_spec()},
                                                     {"pre-exposure", pre}};
  for (const auto& [label, spec] : timings) {
    std::vector<BiasSeries> groups(spec.comparison_count());
    for (std::size_t k = 0; k < kReps; ++k) {
      const auto res = oracle_bias(generate(seeded(spec, 7000 + k), 20000), false);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        groups[g].empirical.push_back(res.groups[g].bias_delta);
        groups[g].formula.push_back(res.groups[g].formula_bias());
      }
    }
    double worst_ratio = 0.0, worst_abs = 0.0;
    for (const auto& s : groups) {
      const double mcse = std::sqrt(stats::variance(s.empirical));
      for (std::size_t k = 0; k < kReps; ++k) {
        const double gap = std::abs(s.empirical[k] - s.formula[k]);
        worst_abs = std::max(worst_abs, gap);
        worst_ratio = std::max(worst_ratio, mcse > 0.0 ? gap / mcse : (gap == 0.0 ? 0.0 : INFINITY));
      }
    }
    o.passed = o.passed && worst_ratio < kMcseMultiple;
    d << label << ": worst gap " << fmt(worst_abs) << " = " << fmt(worst_ratio) << " MCSE; ";
  }
  d << "limit " << kMcseMultiple << " MCSE";
  o.detail = d.str();
  o.info.push_back("the refit-with-U gap is an in-sample identity, so it sits at rounding level");
  return o;
}

Outcome discrete_bias_enumeration() {
  Outcome o;
  std::mt19937_64 eng(8675309);
  std::uniform_int_distribution<std::size_t> nx_d(1, 3), nm_d(2, 3), nu_d(2, 4);
  double worst_enum = 0.0, worst_invariance = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto w = oracle::random_world(eng, nx_d(eng), nm_d(eng), nu_d(eng));
    const double reference = oracle::enumerate_discrete_bias(w);
    w.u_reference = 0;
    const double first = general_bias_discrete(w);
    worst_enum = std::max(worst_enum, std::abs(first - reference));
    for (std::size_t u = 1; u < w.nu; ++u) {
      w.u_reference = u;
      worst_invariance = std::max(worst_invariance, std::abs(general_bias_discrete(w) - first));
    }
  }
  o.passed = worst_enum <= kEnumerationTol && worst_invariance <= kInvarianceTol;
  o.detail = "enumeration worst " + fmt(worst_enum) + " (tol " + fmt(kEnumerationTol) + "), reference-U worst " +
             fmt(worst_invariance) + " (tol " + fmt(kInvarianceTol) + ")";
  return o;
}

Outcome saturated_equivalence() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const auto sim = generate(seeded(all_binary_spec(), 6000 + k), 20000);
    const auto np = oracle_np_identify(sim.data);
    const auto sat = saturated_regression_decomposition(sim.data);
    for (std::size_t g = 0; g < np.size(); ++g) {
      worst = std::max({worst, std::abs(np[g].delta - sat[g].delta), std::abs(np[g].zeta - sat[g].zeta)});
    }
  }
  o.passed = worst <= kSaturatedTol;
  o.detail = "worst " + fmt(worst) + " over 3 datasets (tol " + fmt(kSaturatedTol) + ")";
  return o;
}

Outcome r2_bridge() {
  constexpr std::size_t kReps = 20;
  Outcome o;
  const auto spec = default_verification_spec();
  const std::size_t groups = spec.comparison_count();
  std::vector<std::vector<double>> coef_side(groups), pooled_side(groups), within_side(groups);
  for (std::size_t k = 0; k < kReps; ++k) {
    const auto sim = generate(seeded(spec, 8000 + k), 20000);
    const auto res = oracle_bias(sim, false);
    const auto sys = fit_system(sim.data);
    const auto tau = initial_disparity(sim.data);
    for (std::size_t g = 0; g < groups; ++g) {
      const auto& r = res.groups[g];
      const auto in = r2_inputs(sys, tau, g);
      coef_side[g].push_back(std::abs(r.formula_bias()));
      // Partial R2 from the outcome and mediator regressions that supply se and df.
      pooled_side[g].push_back(bias_r2(in, {r.r2_yu_pooled, r.r2_mu_pooled}));
      within_side[g].push_back(bias_r2(in, {r.r2_yu_group, r.r2_mu_group}));
    }
  }
  auto worst_in_mcse = [&](const std::vector<std::vector<double>>& side, std::size_t g) {
    const double mcse = std::sqrt(stats::variance(coef_side[g]));
    double worst = 0.0;
    for (std::size_t k = 0; k < kReps; ++k) worst = std::max(worst, std::abs(side[g][k] - coef_side[g][k]) / mcse);
    return worst;
  };
  double worst_ratio = 0.0;
  std::ostringstream d, within;
  for (std::size_t g = 0; g < groups; ++g) {
    const double pooled = worst_in_mcse(pooled_side, g);
    worst_ratio = std::max(worst_ratio, pooled);
    d << spec.group_levels[g + 1] << " " << fmt(pooled) << " ";
    within << spec.group_levels[g + 1] << " " << fixed(worst_in_mcse(within_side, g), 2) << " ";
  }
  o.passed = worst_ratio < kMcseMultiple;
  o.detail = "worst gap in MCSE units: " + d.str() + "(limit " + fixed(kMcseMultiple, 1) + ")";
  o.info.push_back("R2 computed inside each comparison group's rows instead land at " + within.str() +
                   "MCSE; they do not belong with the pooled se and df");
  return o;
}

Outcome rv_alpha_search() {
  constexpr std::size_t kSeeds = 50;
  constexpr std::size_t kZetaSeeds = 5;
  Outcome o;
  double worst_replay = 0.0, worst_excess = -INFINITY;
  std::size_t searched = 0, zero_returns = 0;
  auto check = [&](const R2Inputs& in, Quantity q) {
    const auto e = robustness(in, q);
    if (!e.rv_alpha) return;
    ++searched;
    worst_excess = std::max(worst_excess, *e.rv_alpha - e.rv);
    if (*e.rv_alpha == 0.0) {
      ++zero_returns;
      return;
    }
    const auto iv = adjusted_interval(in, {*e.rv_alpha, *e.rv_alpha}, q, e.alpha);
    const double est = q == Quantity::delta ? in.delta_res : in.zeta_res;
    worst_replay = std::max(worst_replay, std::abs(est > 0 ? iv.ci.lo : iv.ci.hi));
  };
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const auto sim = generate(seeded(default_verification_spec(), 4000 + s), 3000);
    const auto observed = sim.data.without_unobserved();
    const auto sys = fit_system(observed);
    const auto tau = initial_disparity(observed);
    std::optional<CovBundle> cov;
    if (s < kZetaSeeds) {
      BootstrapOptions b;
      b.replicates = 200;
      b.seed = s + 1;
      b.threads = 0;
      cov = bootstrap_cov(observed, b);
    }
    for (std::size_t g = 0; g < sys.comparison_groups.size(); ++g) {
      const auto in = r2_inputs(sys, tau, g, cov ? &*cov : nullptr);
      check(in, Quantity::delta);
      if (cov) check(in, Quantity::zeta);
    }
  }
  o.passed = worst_replay < kRvAlphaReplayTol && worst_excess <= 0.0;
  o.detail = std::to_string(searched) + " searches (" + std::to_string(zero_returns) +
             " already covering zero): worst replayed bound " + fmt(worst_replay) + " (tol " + fmt(kRvAlphaReplayTol) +
             "), max rv_alpha - rv " + fmt(worst_excess);
  return o;
}

Outcome reference_switch_identity() {
  Outcome o;
  double worst_coef = 0.0, worst_se = 0.0;
  SystemOptions inter;
  inter.interaction = true;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto sim = generate(seeded(default_verification_spec(), 3100 + k), 5000);
    const auto sys = fit_system(sim.data, inter);
    const auto& fit = sys.outcome_fit;
    const auto m = fit.index_of(columns::kMediator);
    for (const auto& level : sys.comparison_groups) {
      const auto rm = fit.index_of(columns::indicator_mediator(level));
      const auto sw = reference_switch(sim.data, level, true);
      const double combined = fit.coefficients(static_cast<Eigen::Index>(m)) + fit.coefficients(static_cast<Eigen::Index>(rm));
      worst_coef = std::max(worst_coef, std::abs(sw.estimate - combined));
      worst_se = std::max(worst_se, std::abs(sw.std_error - std::sqrt(combined_variance(fit, m, rm))));
    }
  }
  o.passed = worst_coef <= kSwitchCoefTol && worst_se <= kSwitchSeTol;
  o.detail = "coefficient worst " + fmt(worst_coef) + " (tol " + fmt(kSwitchCoefTol) + "), se worst " +
             fmt(worst_se) + " (tol " + fmt(kSwitchSeTol) + ")";
  return o;
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"1", "coefficient bias arithmetic on golden values", 1.0, golden_coefficient_arithmetic},
      {"2", "percent-reduction arithmetic", 1.0, golden_percent_reduction},
      {"3", "robustness value algebra", 1.0, rv_algebra},
      {"4", "decomposition identity on 20 simulated datasets", 30.0, decomposition_identity},
      {"5", "refit-with-U bias vs product formula, both U timings", 60.0, bias_formula_oracle},
      {"6", "general discrete bias vs enumeration on 100 random worlds", 5.0, discrete_bias_enumeration},
      {"7", "stratified oracle vs saturated regression", 10.0, saturated_equivalence},
      {"8", "partial R2 bridge to the coefficient bias", 60.0, r2_bridge},
      {"9", "significance robustness search", 60.0, rv_alpha_search},
      {"10", "reference-switch identity", 5.0, reference_switch_identity},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    const auto& all = criteria();
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return c.id == w; })) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  }
  bool all_passed = true;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.passed = false;
      out.detail = std::string("threw: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = seconds <= c.budget_seconds;
    const bool passed = out.passed && in_budget;
    all_passed = all_passed && passed;
    std::cout << "criterion " << c.id << (c.id.size() == 1 ? "  " : " ") << (passed ? "PASS" : "FAIL") << "  "
              << c.title << ": " << out.detail << " [" << fixed(seconds, 2) << " s, budget "
              << fixed(c.budget_seconds, 0) << " s" << (in_budget ? "" : ", exceeded") << "]\n";
    for (const auto& line : out.info) std::cout << "    note: " << line << '\n';
  }
  return all_passed ? 0 : 1;
}
