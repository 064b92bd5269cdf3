#include "decompsens/contour.hpp"
#include "decompsens/error.hpp"
#include "decompsens/sens_coef.hpp"
#include "decompsens/simulate.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace decompsens;

namespace {

CoefParams params(double beta_u, double delta_m) {
  CoefParams p;
  p.beta_u = beta_u;
  p.delta_m = delta_m;
  return p;
}

}  // namespace

TEST(BiasCoef, GoldenArithmetic) {
  EXPECT_NEAR(bias_coef(-1.736, params(0.993, 0.208)).delta, -0.358560, 1e-6);
  EXPECT_NEAR(bias_coef(-1.736, params(0.993, 0.350)).delta, -0.603347, 1e-6);
  // Each nearly cancels the golden estimate it is meant to explain away.
  EXPECT_NEAR(bias_coef(-1.736, params(0.993, 0.208)).delta, -0.360, 2e-3);
  EXPECT_NEAR(bias_coef(-1.736, params(0.993, 0.350)).delta, -0.604, 2e-3);
}

TEST(BiasCoef, ZeroWhenEitherPathVanishes) {
  const auto a = bias_coef(-1.736, params(0.0, 0.4));
  EXPECT_EQ(a.delta, 0.0);
  EXPECT_EQ(a.zeta, 0.0);
  EXPECT_EQ(bias_coef(-1.736, params(0.7, 0.0)).delta, 0.0);
}

TEST(BiasCoef, GroupSpecificOutcomeEffect) {
  auto p = params(0.5, 0.4);
  p.beta_ru = 0.25;
  const auto b = bias_coef(2.0, p);
  EXPECT_DOUBLE_EQ(b.delta, 2.0 * 0.4 * 0.75);
  EXPECT_DOUBLE_EQ(b.zeta, -b.delta);
}

TEST(AdjustCoef, ZeroParamsLeaveEstimatesAlone) {
  const auto a = adjust_coef(-0.965, -0.360, -0.605, -1.736, params(0, 0));
  EXPECT_EQ(a.delta, -0.360);
  EXPECT_EQ(a.zeta, -0.605);
}

TEST(AdjustCoef, TotalIsPreserved) {
  std::mt19937_64 eng(4);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    const double delta = u(eng), zeta = u(eng), tau = delta + zeta;
    const auto a = adjust_coef(tau, delta, zeta, u(eng), params(u(eng), u(eng)));
    EXPECT_NEAR(a.delta + a.zeta - tau, 0.0, 1e-12);
  }
}

TEST(AdjustCoef, RealizedParametersRecoverAdjustedEstimate) {
  // With U observed, the refit estimate differs from the adjusted one only
  // through floating-point error (the identity holds in-sample).
  const auto sim = generate(default_verification_spec(), 20000);
  const auto oracle = oracle_bias(sim, false);
  for (const auto& g : oracle.groups) {
    const auto adj = adjust_coef(g.delta_res + g.zeta_res, g.delta_res, g.zeta_res, g.alpha_r,
                                 params(g.beta_u, g.delta_m));
    EXPECT_NEAR(adj.delta, g.delta_true, 1e-8) << g.comparison;
    EXPECT_NEAR(adj.zeta, g.zeta_true, 1e-8) << g.comparison;
  }
}

TEST(ExplainAway, GoldenValues) {
  // Hand-computed quotients 0.360 / (1.736 * 0.993) and 0.604 / (1.736 * 0.993).
  EXPECT_NEAR(explain_away_coef(-0.360, -1.736, 0.993), 0.208835, 1e-6);
  EXPECT_NEAR(explain_away_coef(-0.604, -1.736, 0.993), 0.350379, 1e-6);
  // Golden rounded values: about 0.208 and 0.350.
  EXPECT_NEAR(explain_away_coef(-0.360, -1.736, 0.993), 0.208, 1e-3);
  EXPECT_NEAR(explain_away_coef(-0.604, -1.736, 0.993), 0.350, 1e-3);
  EXPECT_EQ(explain_away_coef(0.0, -1.736, 0.993), 0.0);
  EXPECT_THROW(explain_away_coef(-0.3, 0.0, 0.993), NoSolutionError);
  EXPECT_THROW(explain_away_coef(-0.3, -1.7, 0.0), NoSolutionError);
}

TEST(GridCoef, CornerAndZeroContour) {
  CoefGridOptions o;
  o.beta_u_hi = 1.5;
  o.delta_m_hi = 0.5;
  o.resolution = 151;
  const double tau = -0.965, delta = -0.360, zeta = -0.605, alpha = -1.736;
  const auto grid = grid_coef(tau, delta, zeta, alpha, o);
  EXPECT_EQ(grid.rows(), 151u * 151u);
  EXPECT_DOUBLE_EQ(grid.surface("delta_adj")(0, 0), delta);
  EXPECT_DOUBLE_EQ(grid.surface("zeta_adj")(0, 0), zeta);

  bool near_golden = false;
  const double cell_x = (o.beta_u_hi - o.beta_u_lo) / 150.0, cell_y = (o.delta_m_hi - o.delta_m_lo) / 150.0;
  std::size_t traced = 0;
  for (const auto& c : grid.curves) {
    if (c.id.rfind("delta_adj=0", 0) != 0) continue;
    for (const auto& p : c.points) {
      ++traced;
      EXPECT_LT(std::abs(delta - alpha * p.y * p.x), 1e-9);
      if (std::abs(p.x - 0.993) <= cell_x && std::abs(p.y - 0.209) <= cell_y) near_golden = true;
    }
  }
  EXPECT_GT(traced, 10u);
  EXPECT_TRUE(near_golden);
}

TEST(GridCoef, RejectsBadResolution) {
  CoefGridOptions o;
  o.resolution = 1;
  EXPECT_THROW(grid_coef(-1, -0.5, -0.5, 1, o), DomainError);
}

TEST(GeneralBias, ConstantOutcomeInUIsZero) {
  std::mt19937_64 eng(1);
  auto w = decompsens::testing::random_world(eng, 2, 2, 3);
  for (std::size_t x = 0; x < w.nx; ++x)
    for (std::size_t m = 0; m < w.nm; ++m)
      for (std::size_t u = 1; u < w.nu; ++u) w.mean_y[(x * w.nm + m) * w.nu + u] = w.y(x, m, 0);
  EXPECT_NEAR(general_bias_discrete(w), 0.0, 1e-15);
}

TEST(GeneralBias, MediatorIndependentOfUIsZero) {
  std::mt19937_64 eng(2);
  auto w = decompsens::testing::random_world(eng, 2, 3, 2);
  for (std::size_t x = 0; x < w.nx; ++x)
    for (std::size_t m = 0; m < w.nm; ++m)
      for (std::size_t u = 0; u < w.nu; ++u) w.p_u_given_xm[(x * w.nm + m) * w.nu + u] = w.pu_x(x, u);
  w.p_m_given_x.clear();
  EXPECT_NEAR(general_bias_discrete(w), 0.0, 1e-15);
}

TEST(GeneralBias, MatchesEnumerationOnSmallWorld) {
  std::mt19937_64 eng(3);
  for (int i = 0; i < 20; ++i) {
    auto w = decompsens::testing::random_world(eng, 2, 2, 2);
    EXPECT_NEAR(general_bias_discrete(w), decompsens::testing::enumerate_discrete_bias(w), 1e-12);
  }
}

TEST(GeneralBias, InconsistentTablesRejected) {
  std::mt19937_64 eng(5);
  auto w = decompsens::testing::random_world(eng, 2, 2, 2);
  w.p_u_given_x[0] += 0.1;
  w.p_u_given_x[1] -= 0.1;
  EXPECT_THROW(general_bias_discrete(w), ValidationError);
  auto v = decompsens::testing::random_world(eng, 2, 2, 2);
  v.p_x[0] = -0.1;
  EXPECT_THROW(general_bias_discrete(v), ValidationError);
}

TEST(Contour, LinearSurfaceExactLine) {
  const auto xs = linspace(0, 1, 11), ys = linspace(0, 1, 11);
  Eigen::MatrixXd v(11, 11);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) v(i, j) = xs[static_cast<std::size_t>(i)] + ys[static_cast<std::size_t>(j)] - 1.05;
  const auto lines = extract_contours(xs, ys, v, 0.0);
  ASSERT_EQ(lines.size(), 1u);
  for (const auto& p : lines[0]) EXPECT_NEAR(p.x + p.y, 1.05, 1e-12);
}

TEST(Contour, CircleIsClosedLoop) {
  const auto xs = linspace(-1, 1, 41), ys = linspace(-1, 1, 41);
  Eigen::MatrixXd v(41, 41);
  for (int i = 0; i < 41; ++i)
    for (int j = 0; j < 41; ++j) {
      const double x = xs[static_cast<std::size_t>(i)], y = ys[static_cast<std::size_t>(j)];
      v(i, j) = x * x + y * y;
    }
  const auto lines = extract_contours(xs, ys, v, 0.25, [](double x, double y) { return x * x + y * y; });
  ASSERT_EQ(lines.size(), 1u);
  const auto& loop = lines[0];
  EXPECT_NEAR(loop.front().x, loop.back().x, 1e-12);
  EXPECT_NEAR(loop.front().y, loop.back().y, 1e-12);
  for (const auto& p : loop) EXPECT_NEAR(std::hypot(p.x, p.y), 0.5, 1e-9);
}

TEST(Contour, CsvLayout) {
  CoefGridOptions o;
  o.resolution = 3;
  const auto grid = grid_coef(-1.0, -0.4, -0.6, -1.0, o);
  std::ostringstream g, c;
  write_grid_csv(grid, g);
  write_curves_csv(grid, c);
  std::istringstream in(g.str());
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "beta_u,delta_m,delta_adj,zeta_adj");
  EXPECT_EQ(first.substr(0, 4), "0,0,");
  EXPECT_EQ(c.str().substr(0, c.str().find('\n')), "curve_id,beta_u,delta_m");
}
