#include "decompsens/error.hpp"
#include "decompsens/regress.hpp"
#include "decompsens/stats.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace decompsens;

namespace {

Design line_design(const std::vector<double>& x) {
  Design d;
  d.matrix.resize(static_cast<Eigen::Index>(x.size()), 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    d.matrix(static_cast<Eigen::Index>(i), 0) = 1.0;
    d.matrix(static_cast<Eigen::Index>(i), 1) = x[i];
  }
  d.names = {"(Intercept)", "x"};
  return d;
}

}  // namespace

TEST(Ols, ExactLinearDataRecoversCoefficients) {
  std::mt19937_64 eng(3);
  std::normal_distribution<double> normal;
  Design d;
  d.matrix.resize(50, 4);
  d.names = {"(Intercept)", "a", "b", "c"};
  for (Eigen::Index i = 0; i < 50; ++i) {
    d.matrix(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < 4; ++j) d.matrix(i, j) = normal(eng);
  }
  const Eigen::Vector4d b(0.5, -1.25, 2.0, 3.5);
  const auto fit = ols_fit(d.matrix * b, d);
  EXPECT_LE((fit.coefficients - b).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fit.residual_variance, 0.0, 1e-20);
  const auto intercept = coef(fit, "(Intercept)");
  EXPECT_NEAR(intercept.estimate, 0.5, 1e-10);
  EXPECT_NEAR(intercept.std_error, 0.0, 1e-10);
}

TEST(Ols, ThreePointClosedForm) {
  const std::vector<double> x{0, 1, 2}, y{0, 2, 2};
  const auto fit = ols_fit(Eigen::Vector3d(0, 2, 2), line_design(x));
  const auto line = decompsens::testing::simple_regression(x, y);
  EXPECT_NEAR(line.intercept, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(coef(fit, "(Intercept)").estimate, line.intercept, 1e-12);
  EXPECT_NEAR(coef(fit, "x").estimate, 1.0, 1e-12);
  EXPECT_EQ(fit.df, 1u);
}

TEST(Ols, MatchesNormalEquationsOnNoisyData) {
  std::mt19937_64 eng(11);
  std::normal_distribution<double> normal;
  Design d;
  d.matrix.resize(400, 3);
  d.names = {"(Intercept)", "a", "b"};
  Eigen::VectorXd y(400);
  for (Eigen::Index i = 0; i < 400; ++i) {
    d.matrix(i, 0) = 1.0;
    d.matrix(i, 1) = normal(eng);
    d.matrix(i, 2) = 0.5 * d.matrix(i, 1) + normal(eng);
    y(i) = 1.0 + 2.0 * d.matrix(i, 1) - d.matrix(i, 2) + normal(eng);
  }
  const auto fit = ols_fit(y, d);
  const auto ne = decompsens::testing::normal_equations(y, d.matrix);
  EXPECT_LE((fit.coefficients - ne.coefficients).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((fit.coefficient_covariance - ne.covariance).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fit.residual_variance, ne.residual_variance, 1e-12);
  const double combined = combined_variance(fit, 1, 2);
  EXPECT_NEAR(combined, ne.covariance(1, 1) + ne.covariance(2, 2) + 2 * ne.covariance(1, 2), 1e-12);
}

TEST(Ols, DuplicatedColumnIsCollinear) {
  auto d = line_design({0, 1, 2, 3});
  d.matrix.conservativeResize(Eigen::NoChange, 3);
  d.matrix.col(2) = d.matrix.col(1);
  d.names.push_back("x_copy");
  try {
    ols_fit(Eigen::Vector4d(1, 2, 3, 5), d);
    FAIL() << "expected collinearity";
  } catch (const CollinearityError& e) {
    EXPECT_NE(std::string(e.what()).find("x_copy"), std::string::npos) << e.what();
  }
}

TEST(Ols, MisspelledNameIsLookupError) {
  const auto fit = ols_fit(Eigen::Vector3d(0, 2, 2), line_design({0, 1, 2}));
  EXPECT_THROW(coef(fit, "slope"), LookupError);
}

TEST(Ols, TooFewRowsIsRejected) {
  EXPECT_THROW(ols_fit(Eigen::Vector2d(0, 2), line_design({0, 1})), Error);
}

TEST(Stats, QuantilesAndMoments) {
  EXPECT_NEAR(stats::normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(stats::t_quantile(0.975, 10), 2.228138851986274, 1e-10);
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(stats::mean(v), 2.5);
  EXPECT_DOUBLE_EQ(stats::variance(v), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 0.5), 2.5);
  EXPECT_NE(stats::stream_seed(1, 0), stats::stream_seed(1, 1));
}
