#include "decompsens/decomp.hpp"
#include "decompsens/error.hpp"
#include "decompsens/regress.hpp"
#include "decompsens/sens_coef.hpp"
#include "decompsens/simulate.hpp"
#include "decompsens/stats.hpp"
#include "decompsens/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace decompsens;

namespace {

double mean_within(const std::vector<double>& v) {
  return std::abs(stats::mean(v)) / (std::sqrt(stats::variance(v) / static_cast<double>(v.size())));
}

}  // namespace

TEST(Generate, Deterministic) {
  const auto a = generate(default_verification_spec(), 500);
  const auto b = generate(default_verification_spec(), 500);
  EXPECT_EQ(a.data.fingerprint(), b.data.fingerprint());
  EXPECT_EQ(a.data.outcome(), b.data.outcome());
  EXPECT_EQ(*a.data.unobserved(), *b.data.unobserved());
  auto other = default_verification_spec();
  other.seed += 1;
  EXPECT_NE(generate(other, 500).data.fingerprint(), a.data.fingerprint());
}

TEST(Generate, RejectsTinySamplesAndBadSpecs) {
  EXPECT_THROW(generate(default_verification_spec(), 10), ValidationError);
  auto s = default_verification_spec();
  s.u_timing = UTiming::pre_exposure;
  EXPECT_THROW(generate(s, 500), ValidationError);
  s.r_to_u = {0, 0, 0};
  EXPECT_NO_THROW(generate(s, 500));
  auto t = default_verification_spec();
  t.r_to_m = {1.0};
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(Generate, BinaryKindsAreZeroOne) {
  const auto sim = generate(all_binary_spec(), 1000);
  for (Eigen::Index i = 0; i < 1000; ++i) {
    EXPECT_TRUE(sim.data.mediator()(i) == 0.0 || sim.data.mediator()(i) == 1.0);
    EXPECT_TRUE((*sim.data.unobserved())(i) == 0.0 || (*sim.data.unobserved())(i) == 1.0);
  }
}

TEST(SemSpec, JsonRoundTrip) {
  auto s = default_verification_spec();
  s.rm_to_y = {0.1, -0.2, 0.3};
  const auto back = sem_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_THROW(sem_spec_from_json("{not json"), Error);
}

TEST(PathTracing, MediatorCoefficientOfU) {
  const auto spec = gaussian_spec();
  const auto sim = generate(spec, 20000);
  DesignSpec d;
  d.confounders = true;
  d.mediator = true;
  const auto fit = ols_fit(*sim.data.unobserved(), build_design(sim.data, d));
  const auto est = coef(fit, columns::kMediator);
  const auto pop = population_terms(spec);
  ASSERT_FALSE(pop.empty());
  EXPECT_GT(std::abs(pop[0].delta_m), 0.1);
  EXPECT_LE(std::abs(est.estimate - pop[0].delta_m), 3.0 * est.std_error)
      << est.estimate << " vs " << pop[0].delta_m;
  EXPECT_THROW(population_terms(default_verification_spec()), ValidationError);
}

TEST(OracleIdentify, ConstantOutcomeGivesZero) {
  auto sim = generate(all_binary_spec(), 20000);
  const auto& d = sim.data;
  const auto n = static_cast<Eigen::Index>(d.n());
  const auto flat = EncodedDataset::from_columns(d.decode_labels(), d.reference_level(), d.mediator(),
                                                 Eigen::VectorXd::Constant(n, 2.5), d.confounders(), d.covariates(),
                                                 d.names(), d.unobserved(), d.group_levels());
  for (const auto& g : oracle_np_identify(flat)) {
    EXPECT_NEAR(g.delta, 0.0, 1e-12);
    EXPECT_NEAR(g.zeta, 0.0, 1e-12);
  }
}

TEST(OracleIdentify, SaturatedRegressionAgrees) {
  const auto sim = generate(all_binary_spec(), 20000);
  const auto np = oracle_np_identify(sim.data);
  const auto sat = saturated_regression_decomposition(sim.data);
  ASSERT_EQ(np.size(), sat.size());
  for (std::size_t g = 0; g < np.size(); ++g) {
    EXPECT_NEAR(np[g].delta, sat[g].delta, 1e-8);
    EXPECT_NEAR(np[g].zeta, sat[g].zeta, 1e-8);
    EXPECT_NEAR(np[g].tau, sat[g].tau, 1e-8);
  }
}

TEST(OracleIdentify, NoMediatorGapMeansNoReduction) {
  auto spec = all_binary_spec();
  spec.r_to_m = {0, 0, 0};
  spec.r_to_x = {{0, 0}, {0, 0}, {0, 0}};
  spec.r_to_u = {0, 0, 0};
  std::vector<std::vector<double>> deltas(3);
  for (std::uint64_t s = 0; s < 20; ++s) {
    spec.seed = 300 + s;
    const auto np = oracle_np_identify(generate(spec, 20000).data);
    for (std::size_t g = 0; g < 3; ++g) deltas[g].push_back(np[g].delta);
  }
  for (std::size_t g = 0; g < 3; ++g) EXPECT_LT(mean_within(deltas[g]), 3.0) << stats::mean(deltas[g]);
}

TEST(OracleIdentify, NonDiscreteColumnsRejected) {
  EXPECT_THROW(oracle_np_identify(generate(default_verification_spec(), 500).data), ValidationError);
}

TEST(OracleBias, NoOutcomeEffectMeansNoBias) {
  auto spec = default_verification_spec();
  spec.u_to_y = 0.0;
  std::vector<std::vector<double>> bias(3);
  for (std::uint64_t s = 0; s < 20; ++s) {
    spec.seed = 400 + s;
    const auto o = oracle_bias(generate(spec, 20000), false);
    for (std::size_t g = 0; g < 3; ++g) bias[g].push_back(o.groups[g].bias_delta);
  }
  for (std::size_t g = 0; g < 3; ++g) EXPECT_LT(mean_within(bias[g]), 3.0) << stats::mean(bias[g]);
}

TEST(OracleBias, MatchesProductFormula) {
  const auto o = oracle_bias(generate(default_verification_spec(), 20000), false);
  for (const auto& g : o.groups) {
    EXPECT_NEAR(g.bias_delta, g.formula_bias(), 1e-10);
    EXPECT_NEAR(g.bias_zeta, -g.bias_delta, 1e-10);
    EXPECT_GT(g.r2_yu_pooled, 0.0);
    EXPECT_GT(g.r2_mu_pooled, 0.0);
  }
}

TEST(OracleBias, PreExposureTimingAlsoMatches) {
  auto spec = default_verification_spec();
  spec.u_timing = UTiming::pre_exposure;
  spec.r_to_u = {0, 0, 0};
  const auto o = oracle_bias(generate(spec, 20000), false);
  for (const auto& g : o.groups) EXPECT_NEAR(g.bias_delta, g.formula_bias(), 1e-10);
}

TEST(DiscreteWorlds, ExtractedWorldsAreConsistent) {
  const auto sim = generate(all_binary_spec(), 20000);
  for (const auto& stratum : covariate_strata(sim.data)) {
    for (std::size_t g = 1; g < sim.data.group_count(); ++g) {
      const auto& level = sim.data.group_levels()[g];
      const auto w = extract_world(sim.data, level, stratum);
      EXPECT_NO_THROW(w.validate());
      EXPECT_NEAR(general_bias_discrete(w), enumerated_bias(sim.data, level, stratum), 1e-12);
    }
  }
}

TEST(Verify, DefaultSeedPasses) {
  const auto report = verify();
  for (const auto& c : report.checks) EXPECT_TRUE(c.passed()) << c.name << " worst " << c.worst;
  EXPECT_EQ(report.checks.size(), verify_check_names().size());
}

TEST(Verify, PerturbedFormulaFails) {
  for (const auto& name : verify_check_names()) {
    VerifyOptions o;
    o.perturb[name] = 1.01;
    const auto report = verify(o);
    for (const auto& c : report.checks) EXPECT_EQ(c.passed(), c.name != name) << name << " / " << c.name;
  }
  VerifyOptions bad;
  bad.perturb["nope"] = 2.0;
  EXPECT_THROW(verify(bad), LookupError);
}

TEST(Verify, SeedsAggregate) {
  VerifyOptions o;
  o.seeds = 3;
  o.threads = 3;
  const auto report = verify(o);
  for (const auto& c : report.checks) EXPECT_EQ(c.seeds_total, 3u);
}
