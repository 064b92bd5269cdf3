#include "decompsens/contour.hpp"

#include "decompsens/error.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <utility>

namespace decompsens {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw DomainError("linspace: need at least two points");
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw DomainError("linspace: range must be finite");
  std::vector<double> v(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + step * static_cast<double>(i);
  v.back() = hi;
  return v;
}

namespace {

// Edge key: horizontal edges join (i, j)-(i+1, j), vertical edges (i, j)-(i, j+1).
std::uint64_t edge_key(bool vertical, std::size_t i, std::size_t j) {
  return (static_cast<std::uint64_t>(i) << 33) | (static_cast<std::uint64_t>(j) << 1) |
         (vertical ? 1u : 0u);
}

double refine(const SurfaceFn& f, double level, Point2 a, Point2 b, double fa) {
  // Bisection along the segment a-b; f(a) - level and f(b) - level differ in sign.
  double lo = 0.0, hi = 1.0;
  const bool a_above = fa >= level;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = f(a.x + mid * (b.x - a.x), a.y + mid * (b.y - a.y));
    if ((v >= level) == a_above) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<std::vector<Point2>> extract_contours(const std::vector<double>& xs,
                                                  const std::vector<double>& ys,
                                                  const Eigen::MatrixXd& values, double level,
                                                  const SurfaceFn& exact) {
  const std::size_t nx = xs.size();
  const std::size_t ny = ys.size();
  if (static_cast<std::size_t>(values.rows()) != nx || static_cast<std::size_t>(values.cols()) != ny) {
    throw DomainError("extract_contours: value surface does not match the axes");
  }
  if (nx < 2 || ny < 2) return {};

  auto v = [&](std::size_t i, std::size_t j) {
    return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };
  auto above = [&](std::size_t i, std::size_t j) { return v(i, j) >= level; };

  std::map<std::uint64_t, Point2> crossing;
  auto point_on = [&](bool vertical, std::size_t i, std::size_t j) -> std::uint64_t {
    const auto key = edge_key(vertical, i, j);
    if (crossing.count(key)) return key;
    const Point2 a{xs[i], ys[j]};
    const Point2 b = vertical ? Point2{xs[i], ys[j + 1]} : Point2{xs[i + 1], ys[j]};
    const double va = v(i, j);
    const double vb = vertical ? v(i, j + 1) : v(i + 1, j);
    double t = (level - va) / (vb - va);
    if (exact) t = refine(exact, level, a, b, va);
    crossing[key] = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
    return key;
  };

  std::map<std::uint64_t, std::vector<std::uint64_t>> links;
  auto link = [&](std::uint64_t p, std::uint64_t q) {
    links[p].push_back(q);
    links[q].push_back(p);
  };

  for (std::size_t i = 0; i + 1 < nx; ++i) {
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      // Corners counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
      const bool c0 = above(i, j), c1 = above(i + 1, j), c2 = above(i + 1, j + 1), c3 = above(i, j + 1);
      std::vector<std::uint64_t> pts;
      if (c0 != c1) pts.push_back(point_on(false, i, j));      // bottom
      if (c1 != c2) pts.push_back(point_on(true, i + 1, j));   // right
      if (c2 != c3) pts.push_back(point_on(false, i, j + 1));  // top
      if (c3 != c0) pts.push_back(point_on(true, i, j));       // left
      if (pts.size() == 2) {
        link(pts[0], pts[1]);
      } else if (pts.size() == 4) {
        const double centre = 0.25 * (v(i, j) + v(i + 1, j) + v(i + 1, j + 1) + v(i, j + 1));
        // Saddle: join the crossings that keep the centre's side connected.
        if ((centre >= level) == c0) {
          link(pts[0], pts[1]);
          link(pts[2], pts[3]);
        } else {
          link(pts[0], pts[3]);
          link(pts[1], pts[2]);
        }
      }
    }
  }

  std::vector<std::vector<Point2>> lines;
  std::map<std::uint64_t, bool> used;
  auto walk = [&](std::uint64_t start) {
    std::vector<Point2> line;
    std::uint64_t prev = start, cur = start;
    line.push_back(crossing[start]);
    used[start] = true;
    for (;;) {
      std::uint64_t next = cur;
      for (auto cand : links[cur]) {
        if (cand != prev && !used[cand]) {
          next = cand;
          break;
        }
      }
      if (next == cur) {
        // Close loops back onto the start point.
        for (auto cand : links[cur]) {
          if (cand == start && cur != start && line.size() > 2) line.push_back(crossing[start]);
        }
        break;
      }
      used[next] = true;
      line.push_back(crossing[next]);
      prev = cur;
      cur = next;
    }
    lines.push_back(std::move(line));
  };
  for (const auto& [key, nbrs] : links) {
    if (nbrs.size() == 1 && !used[key]) walk(key);
  }
  for (const auto& [key, nbrs] : links) {
    if (!used[key]) walk(key);
  }
  return lines;
}

const Eigen::MatrixXd& SensitivityGrid::surface(const std::string& name) const {
  for (std::size_t k = 0; k < value_names.size(); ++k) {
    if (value_names[k] == name) return values[k];
  }
  throw LookupError("grid has no surface named '" + name + "'");
}

void write_grid_csv(const SensitivityGrid& grid, std::ostream& out) {
  const auto old = out.precision(17);
  out << grid.x_name << ',' << grid.y_name;
  for (const auto& n : grid.value_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    for (std::size_t j = 0; j < grid.ys.size(); ++j) {
      out << grid.xs[i] << ',' << grid.ys[j];
      for (const auto& m : grid.values) {
        out << ',' << m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
      out << '\n';
    }
  }
  out.precision(old);
}

void write_curves_csv(const SensitivityGrid& grid, std::ostream& out) {
  const auto old = out.precision(17);
  out << "curve_id," << grid.x_name << ',' << grid.y_name << '\n';
  for (const auto& c : grid.curves) {
    for (const auto& p : c.points) out << c.id << ',' << p.x << ',' << p.y << '\n';
  }
  out.precision(old);
}

}  // namespace decompsens
