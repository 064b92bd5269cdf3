#pragma once

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace decompsens {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// `n` evenly spaced values from `lo` to `hi` inclusive (n >= 2).
std::vector<double> linspace(double lo, double hi, std::size_t n);

/// Exact surface used to sharpen crossings found on grid edges.
using SurfaceFn = std::function<double(double x, double y)>;

/// Level-set polylines of values(i, j) sampled at (xs[i], ys[j]) by marching
/// squares. Crossings are located by linear interpolation along cell edges,
/// then refined by bisection on `exact` when given. Values equal to the level
/// count as above it.
std::vector<std::vector<Point2>> extract_contours(const std::vector<double>& xs,
                                                  const std::vector<double>& ys,
                                                  const Eigen::MatrixXd& values, double level,
                                                  const SurfaceFn& exact = {});

struct Curve {
  std::string id;
  std::vector<Point2> points;
};

/// A sweep over two sensitivity parameters with one or more value surfaces.
struct SensitivityGrid {
  std::string x_name;
  std::string y_name;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<std::string> value_names;
  /// One xs.size() x ys.size() matrix per value name.
  std::vector<Eigen::MatrixXd> values;
  std::vector<Curve> curves;

  const Eigen::MatrixXd& surface(const std::string& name) const;
  std::size_t rows() const noexcept { return xs.size() * ys.size(); }
};

/// One row per grid cell, x varying slowest: x_name, y_name, value_names...
void write_grid_csv(const SensitivityGrid& grid, std::ostream& out);
/// curve_id, x_name, y_name; one row per polyline vertex.
void write_curves_csv(const SensitivityGrid& grid, std::ostream& out);

}  // namespace decompsens
