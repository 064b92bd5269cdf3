#include "decompsens/verify.hpp"

#include "decompsens/decomp.hpp"
#include "decompsens/error.hpp"
#include "decompsens/sens_coef.hpp"
#include "decompsens/sens_r2.hpp"
#include "decompsens/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace decompsens {

namespace {

struct CheckDef {
  const char* name;
  const char* description;
  double tolerance;
};

const CheckDef kChecks[] = {
    {"general_bias", "general discrete bias equals direct enumeration, for every reference U value", 1e-10},
    {"refit_bias", "refit-with-U bias equals alpha_r * delta_m * beta_u", 1e-8},
    {"r2_bridge", "R-squared bias at realized pooled partial R2 equals the coefficient bias", 1e-8},
    {"saturated_equivalence", "stratified estimator equals saturated-regression g-computation", 1e-8},
    {"rv_fixed_point", "R-squared bias at (rv, rv) reproduces the estimate", 1e-10},
};

double factor(const VerifyOptions& o, const char* name) {
  const auto it = o.perturb.find(name);
  return it == o.perturb.end() ? 1.0 : it->second;
}

// Largest deviation of each check for one replication.
std::vector<double> run_once(const VerifyOptions& o, std::uint64_t seed) {
  std::vector<double> worst(std::size(kChecks), 0.0);
  auto note = [&](std::size_t k, double dev) { worst[k] = std::max(worst[k], std::isnan(dev) ? INFINITY : dev); };

  SemSpec discrete = all_binary_spec();
  discrete.seed = seed;
  const auto bin = generate(discrete, o.n);
  const double f0 = factor(o, kChecks[0].name);
  for (std::size_t g = 1; g < bin.data.group_count(); ++g) {
    const auto& level = bin.data.group_levels()[g];
    for (const auto& stratum : covariate_strata(bin.data)) {
      auto world = extract_world(bin.data, level, stratum);
      const double direct = enumerated_bias(bin.data, level, stratum);
      for (std::size_t u0 = 0; u0 < world.nu; ++u0) {
        world.u_reference = u0;
        note(0, std::abs(f0 * general_bias_discrete(world) - direct));
      }
    }
  }

  const double f3 = factor(o, kChecks[3].name);
  const auto np = oracle_np_identify(bin.data);
  const auto sat = saturated_regression_decomposition(bin.data);
  for (std::size_t g = 0; g < np.size(); ++g) {
    note(3, std::abs(np[g].delta - f3 * sat[g].delta));
    note(3, std::abs(np[g].zeta - f3 * sat[g].zeta));
  }

  SemSpec cont = default_verification_spec();
  cont.seed = seed;
  const auto data = generate(cont, o.n);
  const auto oracle = oracle_bias(data, false);
  const auto system = fit_system(data.data);
  const auto tau = initial_disparity(data.data);
  const double f1 = factor(o, kChecks[1].name);
  const double f2 = factor(o, kChecks[2].name);
  const double f4 = factor(o, kChecks[4].name);
  for (std::size_t g = 0; g < oracle.groups.size(); ++g) {
    const auto& r = oracle.groups[g];
    note(1, std::abs(r.bias_delta - f1 * r.formula_bias()));
    const auto in = r2_inputs(system, tau, g);
    note(2, std::abs(f2 * bias_r2(in, {r.r2_yu_pooled, r.r2_mu_pooled}) - std::abs(r.formula_bias())));
    for (auto q : {Quantity::delta, Quantity::zeta}) {
      const double v = rv(g_statistic(in, q));
      const double target = std::abs(q == Quantity::delta ? in.delta_res : in.zeta_res);
      note(4, std::abs(f4 * bias_r2(in, {v, v}) - target));
    }
  }
  return worst;
}

}  // namespace

bool VerifyReport::all_passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.passed(); });
}

const std::vector<std::string>& verify_check_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : kChecks) v.emplace_back(c.name);
    return v;
  }();
  return names;
}

VerifyReport verify(const VerifyOptions& options) {
  if (options.seeds == 0) throw DomainError("verify needs at least one seed");
  for (const auto& [name, f] : options.perturb) {
    const auto& names = verify_check_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw LookupError("unknown verify check '" + name + "'");
    }
  }
  std::vector<std::vector<double>> results(options.seeds);
  std::vector<std::exception_ptr> errors(options.seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < options.seeds; k = next++) {
      try {
        results[k] = run_once(options, options.seed + k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, options.seeds));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  VerifyReport report;
  report.seed = options.seed;
  report.seeds = options.seeds;
  report.n = options.n;
  for (std::size_t c = 0; c < std::size(kChecks); ++c) {
    CheckOutcome out;
    out.name = kChecks[c].name;
    out.description = kChecks[c].description;
    out.tolerance = kChecks[c].tolerance;
    out.seeds_total = options.seeds;
    for (const auto& r : results) {
      out.worst = std::max(out.worst, r[c]);
      if (r[c] <= out.tolerance) ++out.seeds_passed;
    }
    report.checks.push_back(out);
  }
  return report;
}

}  // namespace decompsens
