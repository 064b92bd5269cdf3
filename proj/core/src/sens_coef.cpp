#include "decompsens/sens_coef.hpp"

#include "decompsens/error.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace decompsens {

void CoefParams::check() const {
  if (!std::isfinite(beta_u) || !std::isfinite(delta_m) ||
      (beta_ru && !std::isfinite(*beta_ru))) {
    throw DomainError("sensitivity parameters must be finite");
  }
}

CoefBias bias_coef(double alpha_r, const CoefParams& params) {
  params.check();
  const double b = alpha_r * params.delta_m * params.beta_u_total();
  return {b, -b};
}

Adjusted adjust_coef(double tau, double delta, double zeta, double alpha_r, const CoefParams& params) {
  (void)tau;
  const auto bias = bias_coef(alpha_r, params);
  return {delta - bias.delta, zeta - bias.zeta};
}

Adjusted adjust_coef(const GroupDecomposition& estimate, double alpha_r, const CoefParams& params) {
  return adjust_coef(estimate.tau, estimate.delta, estimate.zeta, alpha_r, params);
}

double explain_away_coef(double target, double alpha_r, double beta_u_total) {
  if (alpha_r == 0.0) {
    throw NoSolutionError("no delta_m can produce bias: the mediator does not differ by group (alpha_r = 0)");
  }
  if (beta_u_total == 0.0) {
    throw NoSolutionError("no delta_m can produce bias: U has no effect on the outcome");
  }
  return target / (alpha_r * beta_u_total);
}

namespace {

std::string level_label(const std::string& surface, double level, std::size_t piece) {
  std::ostringstream os;
  os << surface << '=' << level << '#' << piece;
  return os.str();
}

}  // namespace

SensitivityGrid grid_coef(double tau, double delta, double zeta, double alpha_r,
                          const CoefGridOptions& options) {
  if (options.resolution < 2) throw DomainError("grid resolution must be at least 2");
  const double ru = options.beta_ru.value_or(0.0);
  if (!std::isfinite(ru)) throw DomainError("beta_ru must be finite");
  (void)tau;

  SensitivityGrid grid;
  grid.x_name = "beta_u";
  grid.y_name = "delta_m";
  grid.xs = linspace(options.beta_u_lo, options.beta_u_hi, options.resolution);
  grid.ys = linspace(options.delta_m_lo, options.delta_m_hi, options.resolution);
  grid.value_names = {"delta_adj", "zeta_adj"};

  const auto n = static_cast<Eigen::Index>(options.resolution);
  Eigen::MatrixXd d_adj(n, n), z_adj(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double bias = alpha_r * grid.ys[j] * (grid.xs[i] + ru);
      d_adj(i, j) = delta - bias;
      z_adj(i, j) = zeta + bias;
    }
  }
  grid.values = {d_adj, z_adj};

  const SurfaceFn exact_delta = [=](double bu, double dm) { return delta - alpha_r * dm * (bu + ru); };
  const SurfaceFn exact_zeta = [=](double bu, double dm) { return zeta + alpha_r * dm * (bu + ru); };
  for (double level : options.levels) {
    std::size_t piece = 0;
    for (auto& line : extract_contours(grid.xs, grid.ys, d_adj, level, exact_delta)) {
      grid.curves.push_back({level_label("delta_adj", level, piece++), std::move(line)});
    }
    piece = 0;
    for (auto& line : extract_contours(grid.xs, grid.ys, z_adj, level, exact_zeta)) {
      grid.curves.push_back({level_label("zeta_adj", level, piece++), std::move(line)});
    }
  }
  return grid;
}

SensitivityGrid grid_coef(const GroupDecomposition& estimate, double alpha_r,
                          const CoefGridOptions& options) {
  return grid_coef(estimate.tau, estimate.delta, estimate.zeta, alpha_r, options);
}

void DiscreteWorld::validate(double tol) const {
  if (nx == 0 || nm == 0 || nu == 0) throw ValidationError("discrete world: empty support");
  if (mean_y.size() != nx * nm * nu) throw ValidationError("discrete world: E[Y] table has wrong size");
  if (p_u_given_x.size() != nx * nu) throw ValidationError("discrete world: P(u|x) table has wrong size");
  if (p_u_given_xm.size() != nx * nm * nu) {
    throw ValidationError("discrete world: P(u|x,m) table has wrong size");
  }
  if (p_x.size() != nx) throw ValidationError("discrete world: P(x) table has wrong size");
  if (p_m_reference.size() != nm) throw ValidationError("discrete world: P(m|reference) table has wrong size");
  if (!p_m_given_x.empty() && p_m_given_x.size() != nx * nm) {
    throw ValidationError("discrete world: P(m|x) table has wrong size");
  }
  if (u_reference >= nu) throw ValidationError("discrete world: reference u outside the support");

  for (double v : mean_y) {
    if (!std::isfinite(v)) throw ValidationError("discrete world: E[Y] entries must be finite");
  }
  auto check_dist = [&](const std::vector<double>& table, std::size_t stride, const char* what) {
    for (std::size_t start = 0; start < table.size(); start += stride) {
      double total = 0.0;
      for (std::size_t k = 0; k < stride; ++k) {
        const double p = table[start + k];
        if (!std::isfinite(p) || p < 0.0) {
          throw ValidationError(std::string("discrete world: negative or non-finite entry in ") + what);
        }
        total += p;
      }
      if (std::abs(total - 1.0) > tol) {
        throw ValidationError(std::string("discrete world: ") + what + " does not sum to 1");
      }
    }
  };
  check_dist(p_u_given_x, nu, "P(u|x)");
  check_dist(p_u_given_xm, nu, "P(u|x,m)");
  check_dist(p_x, nx, "P(x)");
  check_dist(p_m_reference, nm, "P(m|reference)");
  if (!p_m_given_x.empty()) {
    check_dist(p_m_given_x, nm, "P(m|x)");
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t u = 0; u < nu; ++u) {
        double mixed = 0.0;
        for (std::size_t m = 0; m < nm; ++m) mixed += p_m_given_x[x * nm + m] * pu_xm(x, m, u);
        if (std::abs(mixed - pu_x(x, u)) > tol) {
          throw ValidationError("discrete world: P(u|x) disagrees with sum over m of P(m|x) P(u|x,m)");
        }
      }
    }
  }
}

double general_bias_discrete(const DiscreteWorld& world) {
  world.validate();
  const std::size_t u0 = world.u_reference;
  double bias = 0.0;
  for (std::size_t x = 0; x < world.nx; ++x) {
    for (std::size_t m = 0; m < world.nm; ++m) {
      const double weight = world.p_x[x] * world.p_m_reference[m];
      for (std::size_t u = 0; u < world.nu; ++u) {
        const double contrast = world.y(x, m, u) - world.y(x, m, u0);
        bias += contrast * (world.pu_x(x, u) - world.pu_xm(x, m, u)) * weight;
      }
    }
  }
  return bias;
}

}  // namespace decompsens
