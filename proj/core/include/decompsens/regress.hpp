#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace decompsens {

/// Numeric design matrix with one label per column.
struct Design {
  Eigen::MatrixXd matrix;
  std::vector<std::string> names;

  Eigen::Index cols() const noexcept { return matrix.cols(); }
  Eigen::Index rows() const noexcept { return matrix.rows(); }
  std::size_t index_of(std::string_view name) const;
};

/// Homoskedastic OLS fit.
struct ModelFit {
  std::vector<std::string> coefficient_names;
  Eigen::VectorXd coefficients;
  /// residual_variance * (X'X)^{-1}
  Eigen::MatrixXd coefficient_covariance;
  Eigen::VectorXd residuals;
  double residual_variance = 0.0;
  std::size_t df = 0;
  std::size_t n = 0;
  double r_squared = 0.0;
  /// Fingerprint of the dataset the design was built from; 0 when unknown.
  std::uint64_t data_fingerprint = 0;

  std::size_t index_of(std::string_view name) const;
};

struct CoefEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Relative rank tolerance: the fit is refused when the ratio of the
/// smallest to the largest singular value of the design falls below this.
inline constexpr double kRankTolerance = 1e-10;

/// Least squares through a Householder QR of the design. Throws
/// CollinearityError naming the columns involved in the near null space.
ModelFit ols_fit(const Eigen::VectorXd& response, const Design& design);

CoefEstimate coef(const ModelFit& fit, std::string_view name);

/// Var(a + b) for two coefficients of the same fit.
double combined_variance(const ModelFit& fit, std::size_t a, std::size_t b);

}  // namespace decompsens
