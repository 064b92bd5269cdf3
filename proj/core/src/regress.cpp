#include "decompsens/regress.hpp"

#include "decompsens/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace decompsens {

namespace {

std::size_t find_name(const std::vector<std::string>& names, std::string_view name,
                      std::string_view what) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw LookupError("no " + std::string(what) + " named '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

std::size_t Design::index_of(std::string_view name) const {
  return find_name(names, name, "design column");
}

std::size_t ModelFit::index_of(std::string_view name) const {
  return find_name(coefficient_names, name, "coefficient");
}

ModelFit ols_fit(const Eigen::VectorXd& response, const Design& design) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (response.size() != n) {
    throw DomainError("ols_fit: response has " + std::to_string(response.size()) +
                      " rows but design has " + std::to_string(n));
  }
  if (static_cast<Eigen::Index>(design.names.size()) != p) {
    throw DomainError("ols_fit: design column names do not match column count");
  }
  if (p == 0) throw DomainError("ols_fit: empty design");
  if (n <= p) {
    throw CollinearityError("ols_fit: " + std::to_string(n) + " rows cannot identify " +
                            std::to_string(p) + " coefficients");
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design.matrix);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();

  // Singular values of R equal those of the design.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(p - 1);
  if (!(smax > 0.0) || smin / smax < kRankTolerance) {
    const Eigen::VectorXd null_dir = svd.matrixV().col(p - 1);
    const double peak = null_dir.cwiseAbs().maxCoeff();
    std::ostringstream msg;
    msg << "collinear design columns:";
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::abs(null_dir(j)) > 1e-3 * peak) msg << " '" << design.names[static_cast<std::size_t>(j)] << "'";
    }
    msg << " (condition ratio " << (smax > 0.0 ? smin / smax : 0.0) << ")";
    throw CollinearityError(msg.str());
  }

  ModelFit fit;
  fit.coefficient_names = design.names;
  fit.n = static_cast<std::size_t>(n);
  fit.df = static_cast<std::size_t>(n - p);

  const Eigen::VectorXd qty = qr.householderQ().adjoint() * response;
  const auto rt = r.triangularView<Eigen::Upper>();
  fit.coefficients = rt.solve(qty.head(p));
  fit.residuals = response - design.matrix * fit.coefficients;

  const double rss = fit.residuals.squaredNorm();
  fit.residual_variance = rss / static_cast<double>(fit.df);

  const Eigen::MatrixXd r_inv = rt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd cov = fit.residual_variance * (r_inv * r_inv.transpose());
  fit.coefficient_covariance = 0.5 * (cov + cov.transpose());

  const double mean = response.mean();
  const double tss = (response.array() - mean).square().sum();
  fit.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 0.0;
  return fit;
}

CoefEstimate coef(const ModelFit& fit, std::string_view name) {
  const auto j = static_cast<Eigen::Index>(fit.index_of(name));
  return {fit.coefficients(j), std::sqrt(std::max(0.0, fit.coefficient_covariance(j, j)))};
}

double combined_variance(const ModelFit& fit, std::size_t a, std::size_t b) {
  const auto i = static_cast<Eigen::Index>(a);
  const auto j = static_cast<Eigen::Index>(b);
  const auto& v = fit.coefficient_covariance;
  return v(i, i) + v(j, j) + 2.0 * v(i, j);
}

}  // namespace decompsens
