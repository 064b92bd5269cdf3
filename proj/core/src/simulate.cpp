#include "decompsens/simulate.hpp"

#include "decompsens/decomp.hpp"
#include "decompsens/error.hpp"
#include "decompsens/regress.hpp"
#include "decompsens/stats.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace decompsens {

using json = nlohmann::json;

std::string_view to_string(VariableKind k) { return k == VariableKind::binary ? "binary" : "continuous"; }
std::string_view to_string(UTiming t) { return t == UTiming::pre_exposure ? "pre_exposure" : "intermediate"; }

namespace {

VariableKind parse_kind(const std::string& s) {
  if (s == "continuous") return VariableKind::continuous;
  if (s == "binary") return VariableKind::binary;
  throw ValidationError("unknown variable kind '" + s + "'");
}

UTiming parse_timing(const std::string& s) {
  if (s == "pre_exposure") return UTiming::pre_exposure;
  if (s == "intermediate") return UTiming::intermediate;
  throw ValidationError("unknown u_timing '" + s + "'");
}

void need_size(const std::vector<double>& v, std::size_t n, const char* block, bool allow_empty = false) {
  if (allow_empty && v.empty()) return;
  if (v.size() != n) {
    throw ValidationError(std::string("sem spec: block '") + block + "' needs " + std::to_string(n) +
                          " entries, has " + std::to_string(v.size()));
  }
}

void need_matrix(const std::vector<std::vector<double>>& m, std::size_t rows, std::size_t cols,
                 const char* block) {
  if (m.size() != rows) {
    throw ValidationError(std::string("sem spec: block '") + block + "' needs " + std::to_string(rows) + " rows");
  }
  for (const auto& r : m) need_size(r, cols, block);
}

void need_finite(const std::vector<double>& v, const char* block) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError(std::string("sem spec: non-finite entry in '") + block + "'");
  }
}

double dot(const std::vector<double>& a, const Eigen::MatrixXd& m, Eigen::Index row) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * m(row, static_cast<Eigen::Index>(j));
  return s;
}

double at_or_zero(const std::vector<double>& v, std::size_t i) { return v.empty() ? 0.0 : v[i]; }

void threshold_at_median(Eigen::Ref<Eigen::VectorXd> v) {
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = v(i) > median ? 1.0 : 0.0;
}

}  // namespace

void SemSpec::validate() const {
  const std::size_t g = group_levels.size();
  if (g < 2) throw ValidationError("sem spec: need a reference and at least one comparison group");
  {
    std::set<std::string> seen(group_levels.begin(), group_levels.end());
    if (seen.size() != g) throw ValidationError("sem spec: group levels must be distinct");
  }
  need_size(group_probs, g, "group_probs");
  double total = 0.0;
  for (double p : group_probs) {
    if (!(p > 0.0)) throw ValidationError("sem spec: group probabilities must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("sem spec: group probabilities must sum to 1");

  const std::size_t gc = g - 1, nx = n_confounders, nc = n_covariates;
  need_matrix(c_to_r, gc, nc, "c_to_r");
  need_size(r_to_u, gc, "r_to_u");
  need_size(c_to_u, nc, "c_to_u");
  need_size(x_intercept, nx, "x_intercept");
  need_matrix(r_to_x, gc, nx, "r_to_x");
  need_matrix(c_to_x, nx, nc, "c_to_x");
  need_size(r_to_m, gc, "r_to_m");
  need_size(x_to_m, nx, "x_to_m");
  need_size(c_to_m, nc, "c_to_m");
  need_size(r_to_y, gc, "r_to_y");
  need_size(x_to_y, nx, "x_to_y");
  need_size(rm_to_y, gc, "rm_to_y", true);
  need_size(c_to_y, nc, "c_to_y");
  need_size(ru_to_y, gc, "ru_to_y", true);
  need_size(sd_x, nx, "sd_x");
  if (c_kind.size() != nc) throw ValidationError("sem spec: c_kind needs one entry per covariate");
  if (x_kind.size() != nx) throw ValidationError("sem spec: x_kind needs one entry per confounder");

  for (const auto* v : {&r_to_u, &c_to_u, &x_intercept, &r_to_m, &x_to_m, &c_to_m, &r_to_y, &x_to_y,
                        &rm_to_y, &c_to_y, &ru_to_y, &sd_x}) {
    need_finite(*v, "coefficients");
  }
  for (const auto* m : {&c_to_r, &r_to_x, &c_to_x}) {
    for (const auto& r : *m) need_finite(r, "coefficients");
  }
  for (double s : {u_intercept, u_to_m, m_intercept, y_intercept, m_to_y, u_to_y, sd_u, sd_m, sd_y}) {
    if (!std::isfinite(s)) throw ValidationError("sem spec: non-finite scalar coefficient");
  }
  for (double s : sd_x) {
    if (s < 0.0) throw ValidationError("sem spec: noise sd must be nonnegative");
  }
  if (sd_u < 0.0 || sd_m < 0.0 || sd_y < 0.0) throw ValidationError("sem spec: noise sd must be nonnegative");
  if (u_timing == UTiming::pre_exposure) {
    for (double v : r_to_u) {
      if (v != 0.0) throw ValidationError("sem spec: pre-exposure U cannot depend on group; set r_to_u to zero");
    }
  }
}

SemSpec sem_spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("sem spec: ") + e.what(), 0);
  }
  SemSpec s;
  try {
    s.group_levels = j.at("group_levels").get<std::vector<std::string>>();
    s.group_probs = j.at("group_probs").get<std::vector<double>>();
    s.n_confounders = j.value("n_confounders", std::size_t{0});
    s.n_covariates = j.value("n_covariates", std::size_t{0});
    const std::size_t gc = s.group_levels.empty() ? 0 : s.group_levels.size() - 1;
    auto vec = [&](const char* key, std::size_t n) {
      return j.contains(key) ? j[key].get<std::vector<double>>() : std::vector<double>(n, 0.0);
    };
    auto mat = [&](const char* key, std::size_t r, std::size_t c) {
      return j.contains(key) ? j[key].get<std::vector<std::vector<double>>>()
                             : std::vector<std::vector<double>>(r, std::vector<double>(c, 0.0));
    };
    const std::size_t nx = s.n_confounders, nc = s.n_covariates;
    s.c_to_r = mat("c_to_r", gc, nc);
    s.u_timing = parse_timing(j.value("u_timing", std::string("intermediate")));
    s.u_intercept = j.value("u_intercept", 0.0);
    s.r_to_u = vec("r_to_u", gc);
    s.c_to_u = vec("c_to_u", nc);
    s.x_intercept = vec("x_intercept", nx);
    s.r_to_x = mat("r_to_x", gc, nx);
    s.c_to_x = mat("c_to_x", nx, nc);
    s.m_intercept = j.value("m_intercept", 0.0);
    s.r_to_m = vec("r_to_m", gc);
    s.x_to_m = vec("x_to_m", nx);
    s.c_to_m = vec("c_to_m", nc);
    s.u_to_m = j.value("u_to_m", 0.0);
    s.y_intercept = j.value("y_intercept", 0.0);
    s.r_to_y = vec("r_to_y", gc);
    s.x_to_y = vec("x_to_y", nx);
    s.m_to_y = j.value("m_to_y", 0.0);
    s.rm_to_y = vec("rm_to_y", 0);
    s.c_to_y = vec("c_to_y", nc);
    s.u_to_y = j.value("u_to_y", 0.0);
    s.ru_to_y = vec("ru_to_y", 0);
    s.sd_u = j.value("sd_u", 1.0);
    s.sd_x = j.contains("sd_x") ? j["sd_x"].get<std::vector<double>>() : std::vector<double>(nx, 1.0);
    s.sd_m = j.value("sd_m", 1.0);
    s.sd_y = j.value("sd_y", 1.0);
    auto kinds = [&](const char* key, std::size_t n) {
      std::vector<VariableKind> out(n, VariableKind::continuous);
      if (j.contains(key)) {
        out.clear();
        for (const auto& k : j[key]) out.push_back(parse_kind(k.get<std::string>()));
      }
      return out;
    };
    s.c_kind = kinds("c_kind", nc);
    s.x_kind = kinds("x_kind", nx);
    s.m_kind = parse_kind(j.value("m_kind", std::string("continuous")));
    s.u_kind = parse_kind(j.value("u_kind", std::string("continuous")));
    s.seed = j.value("seed", std::uint64_t{1});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("sem spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string to_json(const SemSpec& s) {
  auto kinds = [](const std::vector<VariableKind>& v) {
    std::vector<std::string> out;
    for (auto k : v) out.emplace_back(to_string(k));
    return out;
  };
  json j;
  j["group_levels"] = s.group_levels;
  j["group_probs"] = s.group_probs;
  j["n_confounders"] = s.n_confounders;
  j["n_covariates"] = s.n_covariates;
  j["c_to_r"] = s.c_to_r;
  j["u_timing"] = std::string(to_string(s.u_timing));
  j["u_intercept"] = s.u_intercept;
  j["r_to_u"] = s.r_to_u;
  j["c_to_u"] = s.c_to_u;
  j["x_intercept"] = s.x_intercept;
  j["r_to_x"] = s.r_to_x;
  j["c_to_x"] = s.c_to_x;
  j["m_intercept"] = s.m_intercept;
  j["r_to_m"] = s.r_to_m;
  j["x_to_m"] = s.x_to_m;
  j["c_to_m"] = s.c_to_m;
  j["u_to_m"] = s.u_to_m;
  j["y_intercept"] = s.y_intercept;
  j["r_to_y"] = s.r_to_y;
  j["x_to_y"] = s.x_to_y;
  j["m_to_y"] = s.m_to_y;
  j["rm_to_y"] = s.rm_to_y;
  j["c_to_y"] = s.c_to_y;
  j["u_to_y"] = s.u_to_y;
  j["ru_to_y"] = s.ru_to_y;
  j["sd_u"] = s.sd_u;
  j["sd_x"] = s.sd_x;
  j["sd_m"] = s.sd_m;
  j["sd_y"] = s.sd_y;
  j["c_kind"] = kinds(s.c_kind);
  j["x_kind"] = kinds(s.x_kind);
  j["m_kind"] = std::string(to_string(s.m_kind));
  j["u_kind"] = std::string(to_string(s.u_kind));
  j["seed"] = s.seed;
  return j.dump(2);
}

SemSpec default_verification_spec() {
  SemSpec s;
  s.group_levels = {"ref", "g1", "g2", "g3"};
  s.group_probs = {0.4, 0.2, 0.2, 0.2};
  s.n_confounders = 2;
  s.n_covariates = 2;
  s.c_to_r = {{0.2, -0.1}, {0.0, 0.2}, {-0.2, 0.1}};
  s.u_timing = UTiming::intermediate;
  s.r_to_u = {0.5, 0.8, -0.3};
  s.c_to_u = {0.3, 0.2};
  s.x_intercept = {0.0, 0.0};
  s.r_to_x = {{-0.4, 0.3}, {-0.6, 0.2}, {0.3, -0.2}};
  s.c_to_x = {{0.3, 0.1}, {0.2, 0.2}};
  s.r_to_m = {-0.8, -1.2, 0.5};
  s.x_to_m = {0.4, 0.3};
  s.c_to_m = {0.2, 0.1};
  s.u_to_m = 0.6;
  s.r_to_y = {-0.3, -0.5, 0.2};
  s.x_to_y = {0.3, 0.2};
  s.m_to_y = 0.5;
  s.c_to_y = {0.2, 0.3};
  s.u_to_y = 0.7;
  s.sd_x = {1.0, 1.0};
  s.c_kind = {VariableKind::continuous, VariableKind::continuous};
  s.x_kind = {VariableKind::continuous, VariableKind::continuous};
  s.m_kind = VariableKind::continuous;
  s.u_kind = VariableKind::binary;
  s.seed = 20240601;
  return s;
}

SemSpec all_binary_spec() {
  SemSpec s = default_verification_spec();
  s.c_kind = {VariableKind::binary, VariableKind::binary};
  s.x_kind = {VariableKind::binary, VariableKind::binary};
  s.m_kind = VariableKind::binary;
  s.u_kind = VariableKind::binary;
  // Milder group effects keep every (X, M, U) cell populated within each group.
  s.r_to_u = {0.3, 0.4, -0.2};
  s.r_to_x = {{-0.2, 0.2}, {-0.3, 0.1}, {0.2, -0.1}};
  s.r_to_m = {-0.4, -0.5, 0.3};
  return s;
}

SemSpec gaussian_spec() {
  SemSpec s = default_verification_spec();
  s.u_kind = VariableKind::continuous;
  return s;
}

CompleteDataset generate(const SemSpec& spec, std::size_t n) {
  spec.validate();
  if (n < 50) throw ValidationError("simulation needs n >= 50");
  std::mt19937_64 eng(stats::stream_seed(spec.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto rows = static_cast<Eigen::Index>(n);
  const auto nx = static_cast<Eigen::Index>(spec.n_confounders);
  const auto nc = static_cast<Eigen::Index>(spec.n_covariates);

  Eigen::MatrixXd c(rows, nc);
  for (Eigen::Index j = 0; j < nc; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) c(i, j) = normal(eng);
    if (spec.c_kind[static_cast<std::size_t>(j)] == VariableKind::binary) threshold_at_median(c.col(j));
  }

  const std::size_t g_count = spec.group_levels.size();
  std::vector<std::size_t> group(n);
  std::vector<double> weight(g_count);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t g = 0; g < g_count; ++g) {
      double score = std::log(spec.group_probs[g]);
      if (g > 0) score += dot(spec.c_to_r[g - 1], c, static_cast<Eigen::Index>(i));
      weight[g] = std::exp(score);
      total += weight[g];
    }
    double draw = unif(eng) * total;
    std::size_t pick = g_count - 1;
    for (std::size_t g = 0; g < g_count; ++g) {
      if (draw < weight[g]) {
        pick = g;
        break;
      }
      draw -= weight[g];
    }
    group[i] = pick;
  }
  auto grp = [&](const std::vector<double>& block, std::size_t i) {
    return group[i] == 0 ? 0.0 : block[group[i] - 1];
  };
  auto grp_opt = [&](const std::vector<double>& block, std::size_t i) {
    return group[i] == 0 || block.empty() ? 0.0 : block[group[i] - 1];
  };

  Eigen::VectorXd u(rows);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    u(r) = spec.u_intercept + grp(spec.r_to_u, i) + dot(spec.c_to_u, c, r) + spec.sd_u * normal(eng);
  }
  if (spec.u_kind == VariableKind::binary) threshold_at_median(u);

  Eigen::MatrixXd x(rows, nx);
  for (Eigen::Index j = 0; j < nx; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double shift = group[i] == 0 ? 0.0 : spec.r_to_x[group[i] - 1][jj];
      x(r, j) = spec.x_intercept[jj] + shift + dot(spec.c_to_x[jj], c, r) + spec.sd_x[jj] * normal(eng);
    }
    if (spec.x_kind[jj] == VariableKind::binary) threshold_at_median(x.col(j));
  }

  Eigen::VectorXd m(rows);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r) = spec.m_intercept + grp(spec.r_to_m, i) + dot(spec.x_to_m, x, r) + dot(spec.c_to_m, c, r) +
           spec.u_to_m * u(r) + spec.sd_m * normal(eng);
  }
  if (spec.m_kind == VariableKind::binary) threshold_at_median(m);

  Eigen::VectorXd y(rows);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    y(r) = spec.y_intercept + grp(spec.r_to_y, i) + dot(spec.x_to_y, x, r) + spec.m_to_y * m(r) +
           grp_opt(spec.rm_to_y, i) * m(r) + dot(spec.c_to_y, c, r) + spec.u_to_y * u(r) +
           grp_opt(spec.ru_to_y, i) * u(r) + spec.sd_y * normal(eng);
  }

  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = spec.group_levels[group[i]];
  EncodedDataset::Names names;
  for (std::size_t j = 0; j < spec.n_confounders; ++j) names.confounders.push_back("X" + std::to_string(j + 1));
  for (std::size_t j = 0; j < spec.n_covariates; ++j) names.covariates.push_back("C" + std::to_string(j + 1));

  CompleteDataset out{EncodedDataset::from_columns(labels, spec.group_levels.front(), std::move(m), std::move(y),
                                                   std::move(x), std::move(c), std::move(names), std::move(u),
                                                   spec.group_levels),
                      spec, n};
  return out;
}

namespace {

using Key = std::vector<double>;

struct Acc {
  double sum = 0.0;
  std::size_t count = 0;
  double mean() const { return sum / static_cast<double>(count); }
};

void require_discrete(const Eigen::MatrixXd& m, const std::vector<std::string>& names, const char* role) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    std::set<double> distinct;
    for (Eigen::Index i = 0; i < m.rows() && distinct.size() <= 64; ++i) distinct.insert(m(i, j));
    if (distinct.size() > 64) {
      throw ValidationError(std::string(role) + " column '" + names[static_cast<std::size_t>(j)] +
                            "' is not discrete (more than 64 distinct values)");
    }
  }
}

Key row_key(const Eigen::MatrixXd& m, std::size_t i) {
  Key k(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) k[static_cast<std::size_t>(j)] = m(static_cast<Eigen::Index>(i), j);
  return k;
}

std::string describe(const Key& k) {
  std::ostringstream os;
  os << '(';
  for (std::size_t j = 0; j < k.size(); ++j) os << (j ? ", " : "") << k[j];
  os << ')';
  return os.str();
}

Key join(std::initializer_list<Key> parts) {
  Key out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void check_np_inputs(const EncodedDataset& data) {
  if (data.group_count() < 2) throw SchemaError("analysis needs at least one comparison group");
  require_discrete(data.confounders(), data.names().confounders, "confounder");
  require_discrete(data.covariates(), data.names().covariates, "covariate");
  require_discrete(data.mediator(), {data.names().mediator}, "mediator");
}

// Cell means and frequencies behind the stratified estimator, from counts or
// from saturated regressions.
struct CellSource {
  std::map<Key, Acc> y_gc;        // (g, c)
  std::map<Key, double> p_x;      // (g, c, x) -> P(x | g, c)
  std::map<Key, double> p_m;      // (g, c, m) -> P(m | g, c)
  std::map<Key, double> mean_y;   // (g, c, x, m)
  std::map<Key, double> p_c;      // (g, c) -> P(c | g)
};

std::vector<GroupEffects> combine(const EncodedDataset& data, const CellSource& s) {
  std::vector<GroupEffects> out;
  const auto& levels = data.group_levels();
  for (std::size_t g = 1; g < levels.size(); ++g) {
    GroupEffects e;
    e.comparison = levels[g];
    const double gd = static_cast<double>(g);
    bool any = false;
    for (const auto& [gc, acc] : s.y_gc) {
      if (gc[0] != gd) continue;
      any = true;
      const Key c(gc.begin() + 1, gc.end());
      const Key ref_key = join({{0.0}, c});
      const auto ref = s.y_gc.find(ref_key);
      if (ref == s.y_gc.end()) {
        throw PositivityError("reference group has no rows at covariates " + describe(c));
      }
      double sum = 0.0;
      for (const auto& [gcx, px] : s.p_x) {
        if (gcx[0] != gd || !std::equal(c.begin(), c.end(), gcx.begin() + 1)) continue;
        const Key x(gcx.begin() + 1 + static_cast<std::ptrdiff_t>(c.size()), gcx.end());
        for (const auto& [gcm, pm] : s.p_m) {
          if (gcm[0] != 0.0 || !std::equal(c.begin(), c.end(), gcm.begin() + 1)) continue;
          const double m = gcm.back();
          const Key cell = join({{gd}, c, x, {m}});
          const auto it = s.mean_y.find(cell);
          if (it == s.mean_y.end()) {
            throw PositivityError("no rows in group '" + levels[g] + "' at covariates " + describe(c) +
                                  ", confounders " + describe(x) + ", mediator " + describe({m}));
          }
          sum += it->second * px * pm;
        }
      }
      const double w = s.p_c.at(gc);
      e.delta += w * (acc.mean() - sum);
      e.zeta += w * (sum - ref->second.mean());
      e.tau += w * (acc.mean() - ref->second.mean());
    }
    if (!any) throw PositivityError("comparison group '" + levels[g] + "' has no rows");
    out.push_back(e);
  }
  return out;
}

}  // namespace

std::vector<GroupEffects> oracle_np_identify(const EncodedDataset& data) {
  check_np_inputs(data);
  const auto& gi = data.group_index();
  std::map<Key, std::size_t> n_gcx, n_gcm, n_g;
  std::map<Key, Acc> y_cell;
  CellSource s;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double g = static_cast<double>(gi[i]);
    const Key c = row_key(data.covariates(), i);
    const Key x = row_key(data.confounders(), i);
    const double m = data.mediator()(static_cast<Eigen::Index>(i));
    const double y = data.outcome()(static_cast<Eigen::Index>(i));
    auto& a = s.y_gc[join({{g}, c})];
    a.sum += y;
    ++a.count;
    ++n_gcx[join({{g}, c, x})];
    ++n_gcm[join({{g}, c, {m}})];
    ++n_g[{g}];
    auto& b = y_cell[join({{g}, c, x, {m}})];
    b.sum += y;
    ++b.count;
  }
  for (const auto& [k, cnt] : n_gcx) {
    const Key gc(k.begin(), k.begin() + 1 + data.covariates().cols());
    s.p_x[k] = static_cast<double>(cnt) / static_cast<double>(s.y_gc.at(gc).count);
  }
  for (const auto& [k, cnt] : n_gcm) {
    const Key gc(k.begin(), k.end() - 1);
    s.p_m[k] = static_cast<double>(cnt) / static_cast<double>(s.y_gc.at(gc).count);
  }
  for (const auto& [k, acc] : y_cell) s.mean_y[k] = acc.mean();
  for (const auto& [gc, acc] : s.y_gc) {
    s.p_c[gc] = static_cast<double>(acc.count) / static_cast<double>(n_g.at({gc[0]}));
  }
  return combine(data, s);
}

std::vector<GroupEffects> saturated_regression_decomposition(const EncodedDataset& data) {
  check_np_inputs(data);
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto& gi = data.group_index();

  // Cell index per row for a given key function.
  auto cells = [&](auto key_of) {
    std::map<Key, Eigen::Index> index;
    std::vector<Key> keys(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
      keys[i] = key_of(i);
      index.emplace(keys[i], 0);
    }
    Eigen::Index next = 0;
    for (auto& [k, v] : index) v = next++;
    Design d;
    d.matrix = Eigen::MatrixXd::Zero(n, next);
    for (const auto& [k, v] : index) d.names.push_back("cell" + describe(k));
    for (std::size_t i = 0; i < data.n(); ++i) d.matrix(static_cast<Eigen::Index>(i), index.at(keys[i])) = 1.0;
    return std::pair{d, index};
  };
  auto indicator = [&](auto pred) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = pred(static_cast<std::size_t>(i)) ? 1.0 : 0.0;
    return v;
  };

  const auto [d_gc, idx_gc] = cells([&](std::size_t i) {
    return join({{static_cast<double>(gi[i])}, row_key(data.covariates(), i)});
  });
  const auto [d_full, idx_full] = cells([&](std::size_t i) {
    return join({{static_cast<double>(gi[i])}, row_key(data.covariates(), i), row_key(data.confounders(), i),
                 {data.mediator()(static_cast<Eigen::Index>(i))}});
  });
  const auto [d_g, idx_g] = cells([&](std::size_t i) { return Key{static_cast<double>(gi[i])}; });

  CellSource s;
  const auto y_fit = ols_fit(data.outcome(), d_gc);
  for (const auto& [k, col] : idx_gc) {
    // Only the mean is read from the accumulator downstream.
    s.y_gc[k] = Acc{y_fit.coefficients(col), 1};
  }

  std::set<Key> x_patterns, c_patterns;
  std::set<double> m_values;
  for (std::size_t i = 0; i < data.n(); ++i) {
    x_patterns.insert(row_key(data.confounders(), i));
    c_patterns.insert(row_key(data.covariates(), i));
    m_values.insert(data.mediator()(static_cast<Eigen::Index>(i)));
  }
  for (const auto& x : x_patterns) {
    const auto fit = ols_fit(indicator([&](std::size_t i) { return row_key(data.confounders(), i) == x; }), d_gc);
    for (const auto& [gc, col] : idx_gc) {
      if (fit.coefficients(col) > 1e-12) s.p_x[join({gc, x})] = fit.coefficients(col);
    }
  }
  for (double m : m_values) {
    const auto fit = ols_fit(indicator([&](std::size_t i) { return data.mediator()(static_cast<Eigen::Index>(i)) == m; }), d_gc);
    for (const auto& [gc, col] : idx_gc) {
      if (fit.coefficients(col) > 1e-12) s.p_m[join({gc, {m}})] = fit.coefficients(col);
    }
  }
  const auto full_fit = ols_fit(data.outcome(), d_full);
  for (const auto& [k, col] : idx_full) s.mean_y[k] = full_fit.coefficients(col);
  for (const auto& c : c_patterns) {
    const auto fit = ols_fit(indicator([&](std::size_t i) { return row_key(data.covariates(), i) == c; }), d_g);
    for (const auto& [g, col] : idx_g) {
      if (idx_gc.count(join({g, c}))) s.p_c[join({g, c})] = fit.coefficients(col);
    }
  }
  return combine(data, s);
}

namespace {

double partial_r2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ab = a.dot(b);
  const double denom = a.squaredNorm() * b.squaredNorm();
  return denom > 0.0 ? ab * ab / denom : 0.0;
}

Eigen::VectorXd residualize(const Eigen::VectorXd& v, const Design& d) { return ols_fit(v, d).residuals; }

}  // namespace

OracleBias oracle_bias(const CompleteDataset& cd, bool interaction) {
  const auto& data = cd.data;
  if (!data.unobserved()) throw DependencyError("refit-with-U oracle needs the unobserved column");
  const Eigen::VectorXd& u = *data.unobserved();

  SystemOptions plain;
  plain.interaction = interaction;
  SystemOptions with_u = plain;
  with_u.outcome_unobserved = true;
  const auto res = fit_system(data, plain);
  const auto adj = fit_system(data, with_u);

  DesignSpec y_spec;
  y_spec.confounders = true;
  y_spec.mediator = true;
  y_spec.indicator_mediator = interaction;
  const Design y_design = build_design(data, y_spec);
  const auto u_fit = ols_fit(u, y_design);

  DesignSpec m_spec;
  m_spec.confounders = true;
  const Design m_design = build_design(data, m_spec);

  // U ~ R + C: with U observed it joins the intermediate confounders in zeta.
  const auto u_on_group = ols_fit(u, build_design(data, DesignSpec{}));

  const double beta_u = coef(adj.outcome_fit, columns::kUnobserved).estimate;
  const double r2_yu_pooled = partial_r2(res.outcome_fit.residuals, u_fit.residuals);
  const double r2_mu_pooled = partial_r2(residualize(data.mediator(), m_design), residualize(u, m_design));

  OracleBias out;
  out.interaction = interaction;
  for (std::size_t g = 0; g < res.comparison_groups.size(); ++g) {
    const auto tr = group_terms(res, g);
    const auto ta = group_terms(adj, g);
    RealizedGroup r;
    r.comparison = tr.comparison;
    r.delta_res = tr.delta;
    r.zeta_res = tr.zeta;
    r.delta_true = ta.delta;
    r.zeta_true = ta.zeta + beta_u * coef(u_on_group, columns::indicator(tr.comparison)).estimate;
    r.bias_delta = tr.delta - r.delta_true;
    r.bias_zeta = tr.zeta - r.zeta_true;
    r.alpha_r = tr.alpha_r;
    r.beta_u = beta_u;
    r.delta_m = coef(u_fit, columns::kMediator).estimate;
    if (interaction) r.delta_m += coef(u_fit, columns::indicator_mediator(tr.comparison)).estimate;
    r.se_beta_res_m = std::sqrt(tr.var_beta_m);
    r.df = static_cast<double>(tr.outcome_df);
    r.r2_yu_pooled = r2_yu_pooled;
    r.r2_mu_pooled = r2_mu_pooled;

    std::vector<std::size_t> rows;
    const std::size_t level = g + 1;
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (data.group_index()[i] == level) rows.push_back(i);
    }
    const auto sub = data.select_rows(rows);
    const auto& su = *sub.unobserved();
    DesignSpec yg;
    yg.indicators = false;
    yg.confounders = true;
    yg.mediator = true;
    DesignSpec mg;
    mg.indicators = false;
    mg.confounders = true;
    const Design yd = build_design(sub, yg);
    const Design md = build_design(sub, mg);
    r.r2_yu_group = partial_r2(residualize(sub.outcome(), yd), residualize(su, yd));
    r.r2_mu_group = partial_r2(residualize(sub.mediator(), md), residualize(su, md));
    out.groups.push_back(r);
  }
  return out;
}

std::vector<PopulationTerms> population_terms(const SemSpec& spec) {
  spec.validate();
  if (spec.u_kind != VariableKind::continuous || spec.m_kind != VariableKind::continuous) {
    throw ValidationError("path tracing needs continuous U and M");
  }
  for (auto k : spec.x_kind) {
    if (k != VariableKind::continuous) throw ValidationError("path tracing needs continuous confounders");
  }
  // Within-group structural system over (U, X..., M); R and C only shift means.
  const auto nx = static_cast<Eigen::Index>(spec.n_confounders);
  const Eigen::Index p = nx + 2;
  const Eigen::Index im = p - 1;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < nx; ++j) b(im, 1 + j) = spec.x_to_m[static_cast<std::size_t>(j)];
  b(im, 0) = spec.u_to_m;
  Eigen::VectorXd omega(p);
  omega(0) = spec.sd_u * spec.sd_u;
  for (Eigen::Index j = 0; j < nx; ++j) {
    omega(1 + j) = spec.sd_x[static_cast<std::size_t>(j)] * spec.sd_x[static_cast<std::size_t>(j)];
  }
  omega(im) = spec.sd_m * spec.sd_m;
  const Eigen::MatrixXd a = (Eigen::MatrixXd::Identity(p, p) - b).inverse();
  const Eigen::MatrixXd sigma = a * omega.asDiagonal() * a.transpose();
  const Eigen::MatrixXd szz = sigma.bottomRightCorner(p - 1, p - 1);
  const Eigen::VectorXd szu = sigma.col(0).tail(p - 1);
  const Eigen::VectorXd slope = szz.ldlt().solve(szu);
  const double delta_m = slope(p - 2);

  std::vector<PopulationTerms> out;
  for (std::size_t g = 0; g < spec.comparison_count(); ++g) {
    PopulationTerms t;
    t.comparison = spec.group_levels[g + 1];
    t.alpha_r = spec.r_to_m[g] + spec.u_to_m * spec.r_to_u[g];
    for (std::size_t j = 0; j < spec.n_confounders; ++j) t.alpha_r += spec.x_to_m[j] * spec.r_to_x[g][j];
    t.delta_m = delta_m;
    t.beta_u = spec.u_to_y + at_or_zero(spec.ru_to_y, g);
    out.push_back(t);
  }
  return out;
}

std::vector<std::vector<double>> covariate_strata(const EncodedDataset& data) {
  std::set<Key> seen;
  for (std::size_t i = 0; i < data.n(); ++i) seen.insert(row_key(data.covariates(), i));
  return {seen.begin(), seen.end()};
}

namespace {

struct StratumRows {
  std::vector<std::size_t> group;
  std::vector<std::size_t> reference;
};

StratumRows stratum_rows(const EncodedDataset& data, std::string_view level, const Key& stratum) {
  if (!data.unobserved()) throw DependencyError("discrete world needs the unobserved column");
  if (stratum.size() != static_cast<std::size_t>(data.covariates().cols())) {
    throw DomainError("stratum length does not match the covariate count");
  }
  require_discrete(data.confounders(), data.names().confounders, "confounder");
  require_discrete(data.mediator(), {data.names().mediator}, "mediator");
  require_discrete(*data.unobserved(), {data.names().unobserved}, "unobserved");
  const std::size_t g = data.level_index(level);
  StratumRows out;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (row_key(data.covariates(), i) != stratum) continue;
    if (data.group_index()[i] == g) out.group.push_back(i);
    if (data.group_index()[i] == 0) out.reference.push_back(i);
  }
  if (out.group.empty()) throw PositivityError("no rows in group '" + std::string(level) + "' at covariates " + describe(stratum));
  if (out.reference.empty()) throw PositivityError("reference group has no rows at covariates " + describe(stratum));
  return out;
}

}  // namespace

DiscreteWorld extract_world(const EncodedDataset& data, std::string_view level, const std::vector<double>& stratum) {
  const auto rows = stratum_rows(data, level, stratum);
  const auto& u = *data.unobserved();
  std::map<Key, std::size_t> x_index;
  std::map<double, std::size_t> m_index, u_index;
  for (auto i : rows.group) {
    x_index.emplace(row_key(data.confounders(), i), 0);
    m_index.emplace(data.mediator()(static_cast<Eigen::Index>(i)), 0);
    u_index.emplace(u(static_cast<Eigen::Index>(i)), 0);
  }
  for (auto i : rows.reference) m_index.emplace(data.mediator()(static_cast<Eigen::Index>(i)), 0);
  std::size_t k = 0;
  for (auto& [key, v] : x_index) v = k++;
  k = 0;
  for (auto& [key, v] : m_index) v = k++;
  k = 0;
  for (auto& [key, v] : u_index) v = k++;

  DiscreteWorld w;
  w.nx = x_index.size();
  w.nm = m_index.size();
  w.nu = u_index.size();
  std::vector<double> n_x(w.nx, 0.0), n_xm(w.nx * w.nm, 0.0), n_xu(w.nx * w.nu, 0.0), n_xmu(w.nx * w.nm * w.nu, 0.0),
      y_xmu(w.nx * w.nm * w.nu, 0.0), n_ref(w.nm, 0.0);
  for (auto i : rows.group) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto x = x_index.at(row_key(data.confounders(), i));
    const auto m = m_index.at(data.mediator()(r));
    const auto uu = u_index.at(u(r));
    n_x[x] += 1.0;
    n_xm[x * w.nm + m] += 1.0;
    n_xu[x * w.nu + uu] += 1.0;
    n_xmu[(x * w.nm + m) * w.nu + uu] += 1.0;
    y_xmu[(x * w.nm + m) * w.nu + uu] += data.outcome()(r);
  }
  for (auto i : rows.reference) n_ref[m_index.at(data.mediator()(static_cast<Eigen::Index>(i)))] += 1.0;

  const double total = static_cast<double>(rows.group.size());
  w.p_x.resize(w.nx);
  w.p_u_given_x.resize(w.nx * w.nu);
  w.p_u_given_xm.resize(w.nx * w.nm * w.nu);
  w.mean_y.resize(w.nx * w.nm * w.nu);
  w.p_m_given_x.resize(w.nx * w.nm);
  w.p_m_reference.resize(w.nm);
  for (std::size_t x = 0; x < w.nx; ++x) {
    w.p_x[x] = n_x[x] / total;
    for (std::size_t uu = 0; uu < w.nu; ++uu) w.p_u_given_x[x * w.nu + uu] = n_xu[x * w.nu + uu] / n_x[x];
    for (std::size_t m = 0; m < w.nm; ++m) {
      const double nxm = n_xm[x * w.nm + m];
      if (nxm == 0.0) {
        throw PositivityError("no rows in group '" + std::string(level) + "' at a (confounder, mediator) cell");
      }
      w.p_m_given_x[x * w.nm + m] = nxm / n_x[x];
      for (std::size_t uu = 0; uu < w.nu; ++uu) {
        const auto c = (x * w.nm + m) * w.nu + uu;
        if (n_xmu[c] == 0.0) {
          throw PositivityError("no rows in group '" + std::string(level) + "' at a (confounder, mediator, U) cell");
        }
        w.p_u_given_xm[c] = n_xmu[c] / nxm;
        w.mean_y[c] = y_xmu[c] / n_xmu[c];
      }
    }
  }
  for (std::size_t m = 0; m < w.nm; ++m) w.p_m_reference[m] = n_ref[m] / static_cast<double>(rows.reference.size());
  return w;
}

double enumerated_bias(const EncodedDataset& data, std::string_view level, const std::vector<double>& stratum) {
  const auto rows = stratum_rows(data, level, stratum);
  const auto& u = *data.unobserved();
  std::map<Key, Acc> y_xm, y_xmu;
  std::map<Key, double> n_x, n_xu;
  std::map<double, double> n_ref;
  for (auto i : rows.group) {
    const auto r = static_cast<Eigen::Index>(i);
    const Key x = row_key(data.confounders(), i);
    const double m = data.mediator()(r);
    const double y = data.outcome()(r);
    auto& a = y_xm[join({x, {m}})];
    a.sum += y;
    ++a.count;
    auto& b = y_xmu[join({x, {m, u(r)}})];
    b.sum += y;
    ++b.count;
    n_x[x] += 1.0;
    n_xu[join({x, {u(r)}})] += 1.0;
  }
  for (auto i : rows.reference) n_ref[data.mediator()(static_cast<Eigen::Index>(i))] += 1.0;
  const double ng = static_cast<double>(rows.group.size());
  const double nr = static_cast<double>(rows.reference.size());

  // Observed-data sum minus the sum that also conditions on U.
  double with_u = 0.0, without_u = 0.0;
  for (const auto& [x, cnt] : n_x) {
    for (const auto& [m, cm] : n_ref) {
      const auto it = y_xm.find(join({x, {m}}));
      if (it == y_xm.end()) throw PositivityError("no rows at a (confounder, mediator) cell");
      without_u += it->second.mean() * (cnt / ng) * (cm / nr);
      for (const auto& [xu, cxu] : n_xu) {
        if (!std::equal(x.begin(), x.end(), xu.begin())) continue;
        const auto jt = y_xmu.find(join({x, {m, xu.back()}}));
        if (jt == y_xmu.end()) throw PositivityError("no rows at a (confounder, mediator, U) cell");
        with_u += jt->second.mean() * (cxu / ng) * (cm / nr);
      }
    }
  }
  return with_u - without_u;
}

}  // namespace decompsens
