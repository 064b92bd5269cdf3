#include "decompsens_cli/commands.hpp"

#include "decompsens/dataset.hpp"
#include "decompsens/decomp.hpp"
#include "decompsens/sens_coef.hpp"
#include "decompsens/sens_r2.hpp"
#include "decompsens/simulate.hpp"
#include "decompsens/verify.hpp"
#include "decompsens/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace decompsens::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::schema:
    case ErrorKind::parse:
    case ErrorKind::lookup:
    case ErrorKind::validation:
    case ErrorKind::mismatch:
    case ErrorKind::dependency:
      return kExitUsage;
    case ErrorKind::collinearity:
    case ErrorKind::domain:
    case ErrorKind::no_solution:
    case ErrorKind::positivity:
    case ErrorKind::search:
    case ErrorKind::bootstrap:
      return kExitNumeric;
  }
  return kExitNumeric;
}

namespace {

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

// ---- shared options --------------------------------------------------------

struct DataArgs {
  std::string data;
  std::string schema_file;
  std::string group = "R";
  std::string reference;
  std::string mediator = "M";
  std::string outcome = "Y";
  std::vector<std::string> confounders;
  std::vector<std::string> covariates;
  std::vector<std::string> categorical;
  bool interaction = false;
  std::string covariate_means = "full";
};

void add_data_options(CLI::App* app, DataArgs& a) {
  app->add_option("--data", a.data, "Input CSV")->required();
  app->add_option("--schema", a.schema_file, "Schema JSON (overrides the column flags)");
  app->add_option("--group", a.group, "Group column");
  app->add_option("--reference", a.reference, "Reference group level");
  app->add_option("--mediator", a.mediator, "Mediator column");
  app->add_option("--outcome", a.outcome, "Outcome column");
  app->add_option("--confounders", a.confounders, "Intermediate confounder columns")->delimiter(',');
  app->add_option("--covariates", a.covariates, "Baseline covariate columns")->delimiter(',');
  app->add_option("--categorical", a.categorical, "Confounder or covariate columns holding labels")->delimiter(',');
  app->add_flag("--interaction", a.interaction, "Add group-by-mediator terms to the outcome model");
  app->add_option("--covariate-means", a.covariate_means, "Where covariate means are taken under interaction")
      ->check(CLI::IsMember({"full", "group"}));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Schema resolve_schema(const DataArgs& a) {
  Schema s;
  if (!a.schema_file.empty()) {
    json j;
    try {
      j = json::parse(read_file(a.schema_file));
      s.group_column = j.value("group", std::string("R"));
      s.reference_level = j.value("reference", std::string());
      s.mediator_column = j.value("mediator", std::string("M"));
      s.outcome_column = j.value("outcome", std::string("Y"));
      s.confounder_columns = j.value("confounders", std::vector<std::string>{});
      s.covariate_columns = j.value("covariates", std::vector<std::string>{});
      s.categorical_columns = j.value("categorical", std::vector<std::string>{});
      if (j.contains("unobserved")) s.unobserved_column = j["unobserved"].get<std::string>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("schema file: ") + e.what());
    }
  } else {
    s.group_column = a.group;
    s.reference_level = a.reference;
    s.mediator_column = a.mediator;
    s.outcome_column = a.outcome;
    s.confounder_columns = a.confounders;
    s.covariate_columns = a.covariates;
    s.categorical_columns = a.categorical;
  }
  s.check();
  return s;
}

SystemOptions system_options(const DataArgs& a) {
  SystemOptions o;
  o.interaction = a.interaction;
  o.covariate_means = a.covariate_means == "group" ? CovariateMeanScope::comparison_group
                                                   : CovariateMeanScope::full_sample;
  return o;
}

unsigned env_threads() {
  const char* raw = std::getenv(kThreadsEnv);
  if (!raw || !*raw) return 0;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 0 || v > 4096) {
    throw ValidationError(std::string(kThreadsEnv) + " must be a nonnegative integer");
  }
  return static_cast<unsigned>(v);
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  return f;
}

void write_json(const fs::path& p, const json& j) {
  auto f = open_out(p);
  f << j.dump(2) << '\n';
}

std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

void write_manifest(const Context& ctx, const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<fs::path>& outputs) {
  json m;
  m["tool"] = "decompsens";
  m["version"] = kVersion;
  m["command"] = command;
  m["argv"] = ctx.args;
  m["config"] = config;
  json files = json::array();
  for (const auto& p : outputs) files.push_back(p.string());
  m["outputs"] = files;
  write_json(dir / (command + ".manifest.json"), m);
}

json interval_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::size_t> pick_groups(const std::vector<std::string>& levels, const std::vector<std::string>& wanted) {
  std::vector<std::size_t> out;
  if (wanted.empty()) {
    for (std::size_t g = 0; g < levels.size(); ++g) out.push_back(g);
    return out;
  }
  for (const auto& w : wanted) {
    const auto it = std::find(levels.begin(), levels.end(), w);
    if (it == levels.end()) throw LookupError("'" + w + "' is not a comparison group");
    out.push_back(static_cast<std::size_t>(it - levels.begin()));
  }
  return out;
}

json data_config(const DataArgs& a, const Schema& s, const EncodedDataset& d) {
  json j;
  j["data"] = a.data;
  j["schema"] = {{"group", s.group_column},         {"reference", s.reference_level},
                 {"mediator", s.mediator_column},   {"outcome", s.outcome_column},
                 {"confounders", s.confounder_columns}, {"covariates", s.covariate_columns},
                 {"categorical", s.categorical_columns}};
  j["interaction"] = a.interaction;
  j["covariate_means"] = a.covariate_means;
  j["rows"] = d.n();
  j["missing_rows_dropped"] = d.missing_rows_dropped();
  std::ostringstream fp;
  fp << std::hex << std::setw(16) << std::setfill('0') << d.fingerprint();
  j["data_fingerprint"] = fp.str();
  return j;
}

void print_findings(const Context& ctx, const EncodedDataset& d) {
  for (const auto& f : validate(d)) ctx.err << "warning: " << f.message << '\n';
}

// ---- decompose ---------------------------------------------------------------

struct DecomposeArgs {
  DataArgs data;
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  std::string ci_method = "normal";
  std::string out_dir = ".";
};

int run_decompose(const Context& ctx, const DecomposeArgs& a) {
  const auto schema = resolve_schema(a.data);
  const auto data = load_csv(a.data.data, schema);
  print_findings(ctx, data);
  const auto opts = system_options(a.data);
  const auto system = fit_system(data, opts);
  const auto tau = initial_disparity(data);

  std::optional<BootstrapDraws> draws;
  if (a.bootstrap > 0) {
    BootstrapOptions b;
    b.replicates = a.bootstrap;
    b.seed = a.seed;
    b.threads = env_threads();
    b.system = opts;
    draws = bootstrap_draws(data, b);
  }
  DecomposeOptions d;
  d.ci_level = a.ci_level;
  d.ci_method = a.ci_method == "percentile" ? CiMethod::percentile : CiMethod::normal;
  const auto result = decompose(system, tau, draws ? &*draws : nullptr, d);

  json report;
  report["interaction"] = result.interaction;
  report["n"] = result.n;
  report["ci_level"] = result.ci_level;
  report["ci_method"] = a.ci_method;
  report["bootstrap_replicates"] = result.bootstrap_replicates;
  report["bootstrap_dropped"] = draws ? draws->dropped : 0;
  report["seed"] = result.seed ? json(*result.seed) : json(nullptr);
  report["missing_rows_dropped"] = data.missing_rows_dropped();
  json groups = json::array();
  for (const auto& g : result.groups) {
    groups.push_back({{"comparison", g.comparison},
                      {"tau", g.tau},
                      {"delta", g.delta},
                      {"zeta", g.zeta},
                      {"pct_reduction", nullable(g.pct_reduction)},
                      {"se_tau", nullable(g.se_tau)},
                      {"se_delta", nullable(g.se_delta)},
                      {"se_zeta", nullable(g.se_zeta)},
                      {"ci_tau", interval_json(g.ci_tau)},
                      {"ci_delta", interval_json(g.ci_delta)},
                      {"ci_zeta", interval_json(g.ci_zeta)}});
  }
  report["groups"] = groups;
  json coefs = json::object();
  for (std::size_t k = 0; k < system.outcome_fit.coefficient_names.size(); ++k) {
    coefs[system.outcome_fit.coefficient_names[k]] = system.outcome_fit.coefficients(static_cast<Eigen::Index>(k));
  }
  report["outcome_coefficients"] = coefs;

  const auto dir = prepare_dir(a.out_dir);
  const auto path = dir / "decompose.json";
  write_json(path, report);

  auto cfg = data_config(a.data, schema, data);
  cfg["bootstrap"] = a.bootstrap;
  cfg["seed"] = a.seed;
  cfg["ci_level"] = a.ci_level;
  cfg["ci_method"] = a.ci_method;
  write_manifest(ctx, dir, "decompose", cfg, {path});

  ctx.out << std::fixed << std::setprecision(4);
  ctx.out << "comparison        tau      delta       zeta   %reduced\n";
  for (const auto& g : result.groups) {
    ctx.out << std::left << std::setw(12) << g.comparison << std::right << std::setw(11) << g.tau << std::setw(11)
            << g.delta << std::setw(11) << g.zeta << std::setw(11) << std::setprecision(1) << g.pct_reduction
            << std::setprecision(4) << '\n';
  }
  ctx.out << "report: " << path.string() << '\n';
  return kExitOk;
}

// ---- sens-coef ----------------------------------------------------------------

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range parse_range(const std::string& text, const char* what) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ValidationError(std::string(what) + " must look like lo:hi");
  try {
    std::size_t used = 0;
    Range r;
    const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
    r.lo = std::stod(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    r.hi = std::stod(b, &used);
    if (used != b.size()) throw std::invalid_argument(b);
    if (!(r.lo < r.hi)) throw ValidationError(std::string(what) + " needs lo < hi");
    return r;
  } catch (const std::logic_error&) {
    throw ValidationError(std::string(what) + " must look like lo:hi with numbers");
  }
}

struct SensCoefArgs {
  std::optional<DataArgs> data_mode;
  DataArgs data;
  std::vector<std::string> groups;
  std::optional<double> alpha_r, delta, zeta, tau;
  std::string beta_u_range = "0:1";
  std::string delta_m_range = "0:1";
  std::size_t resolution = 201;
  std::optional<double> beta_ru;
  std::optional<double> beta_u;
  std::string out_dir = ".";
};

struct CoefCase {
  std::string comparison;
  double tau, delta, zeta, alpha_r;
};

int run_sens_coef(const Context& ctx, SensCoefArgs& a) {
  const auto bu = parse_range(a.beta_u_range, "--beta-u-range");
  const auto dm = parse_range(a.delta_m_range, "--delta-m-range");
  std::vector<CoefCase> cases;
  json cfg;
  if (a.alpha_r) {
    if (!a.data.data.empty()) throw ValidationError("use either --data or --alpha-r summary input, not both");
    if (!a.delta || !a.zeta) throw ValidationError("summary input needs --alpha-r, --delta and --zeta");
    const double tau = a.tau.value_or(*a.delta + *a.zeta);
    cases.push_back({a.groups.empty() ? "summary" : a.groups.front(), tau, *a.delta, *a.zeta, *a.alpha_r});
    cfg["summary"] = {{"alpha_r", *a.alpha_r}, {"delta", *a.delta}, {"zeta", *a.zeta}, {"tau", tau}};
  } else {
    if (a.data.data.empty()) throw ValidationError("sens-coef needs --data or summary input (--alpha-r ...)");
    const auto schema = resolve_schema(a.data);
    const auto data = load_csv(a.data.data, schema);
    print_findings(ctx, data);
    const auto system = fit_system(data, system_options(a.data));
    const auto tau = initial_disparity(data);
    for (auto g : pick_groups(system.comparison_groups, a.groups)) {
      const auto t = group_terms(system, g);
      cases.push_back({t.comparison, tau.tau[g].estimate, t.delta, t.zeta, t.alpha_r});
    }
    cfg = data_config(a.data, schema, data);
  }

  const auto dir = prepare_dir(a.out_dir);
  std::vector<fs::path> outputs;
  json summaries = json::array();
  ctx.out << std::setprecision(6);
  for (const auto& c : cases) {
    CoefGridOptions o;
    o.beta_u_lo = bu.lo;
    o.beta_u_hi = bu.hi;
    o.delta_m_lo = dm.lo;
    o.delta_m_hi = dm.hi;
    o.resolution = a.resolution;
    o.beta_ru = a.beta_ru;
    const auto grid = grid_coef(c.tau, c.delta, c.zeta, c.alpha_r, o);
    const auto stem = "sens_coef_" + safe_name(c.comparison);
    const auto grid_path = dir / (stem + "_grid.csv");
    const auto curve_path = dir / (stem + "_curves.csv");
    {
      auto f = open_out(grid_path);
      write_grid_csv(grid, f);
    }
    {
      auto f = open_out(curve_path);
      write_curves_csv(grid, f);
    }
    outputs.push_back(grid_path);
    outputs.push_back(curve_path);

    json s = {{"comparison", c.comparison}, {"tau", c.tau},     {"delta", c.delta},
              {"zeta", c.zeta},             {"alpha_r", c.alpha_r}, {"grid", grid_path.string()},
              {"curves", curve_path.string()}};
    ctx.out << c.comparison << ": delta=" << c.delta << " zeta=" << c.zeta << " alpha_r=" << c.alpha_r << '\n';
    if (a.beta_u) {
      const double total = *a.beta_u + a.beta_ru.value_or(0.0);
      // The zeta bias is the negated delta bias, so nullifying zeta needs target -zeta.
      const double for_delta = explain_away_coef(c.delta, c.alpha_r, total);
      const double for_zeta = explain_away_coef(-c.zeta, c.alpha_r, total);
      s["explain_away"] = {{"beta_u", *a.beta_u},
                           {"beta_u_total", total},
                           {"delta_m_for_delta", for_delta},
                           {"delta_m_for_zeta", for_zeta}};
      ctx.out << "  with beta_u=" << total << ": delta_m=" << for_delta << " nullifies delta, delta_m=" << for_zeta
              << " nullifies zeta\n";
    }
    summaries.push_back(s);
  }
  const auto report_path = dir / "sens_coef.json";
  write_json(report_path, {{"groups", summaries},
                           {"beta_u_range", {bu.lo, bu.hi}},
                           {"delta_m_range", {dm.lo, dm.hi}},
                           {"resolution", a.resolution},
                           {"beta_ru", a.beta_ru ? json(*a.beta_ru) : json(nullptr)}});
  outputs.push_back(report_path);
  cfg["beta_u_range"] = a.beta_u_range;
  cfg["delta_m_range"] = a.delta_m_range;
  cfg["resolution"] = a.resolution;
  if (a.beta_ru) cfg["beta_ru"] = *a.beta_ru;
  if (a.beta_u) cfg["beta_u"] = *a.beta_u;
  write_manifest(ctx, dir, "sens-coef", cfg, outputs);
  return kExitOk;
}

// ---- sens-r2 and rv -------------------------------------------------------------

struct R2Args {
  DataArgs data;
  std::vector<std::string> groups;
  std::string quantity = "delta";
  double max_r2 = 0.3;
  std::size_t resolution = 201;
  double alpha = 0.05;
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

struct Fitted {
  Schema schema;
  EncodedDataset data;
  FittedSystem system;
  TauFit tau;
  std::optional<CovBundle> cov;
};

Fitted fit_for_r2(const Context& ctx, const R2Args& a, bool need_cov) {
  auto schema = resolve_schema(a.data);
  auto data = load_csv(a.data.data, schema);
  print_findings(ctx, data);
  const auto opts = system_options(a.data);
  auto system = fit_system(data, opts);
  auto tau = initial_disparity(data);
  std::optional<CovBundle> cov;
  if (need_cov) {
    BootstrapOptions b;
    b.replicates = a.bootstrap;
    b.seed = a.seed;
    b.threads = env_threads();
    b.system = opts;
    cov = bootstrap_cov(data, b);
  }
  return {std::move(schema), std::move(data), std::move(system), std::move(tau), std::move(cov)};
}

json entry_json(const RobustnessEntry& e) {
  return {{"quantity", std::string(to_string(e.quantity))},
          {"g", nullable(e.g)},
          {"rv", e.rv},
          {"rv_alpha", e.rv_alpha ? json(*e.rv_alpha) : json(nullptr)},
          {"alpha", e.alpha},
          {"df", e.df}};
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v << '%';
  return os.str();
}

void print_sentence(std::ostream& out, const std::string& comparison, const RobustnessEntry& e) {
  out << comparison << ' ' << to_string(e.quantity) << ": a confounder explaining " << pct(e.rv)
      << " of the residual variance of both mediator and outcome would move the estimate to zero";
  if (e.rv_alpha) {
    if (*e.rv_alpha == 0.0) {
      out << "; the unadjusted interval already covers zero at alpha = " << e.alpha;
    } else {
      out << "; " << pct(*e.rv_alpha) << " would make it insignificant at alpha = " << e.alpha;
    }
  }
  out << ".\n";
}

int run_sens_r2(const Context& ctx, const R2Args& a) {
  const auto q = parse_quantity(a.quantity);
  const bool need_cov = q == Quantity::zeta;
  if (need_cov && a.bootstrap == 0) throw DependencyError("zeta standard errors need --bootstrap > 0");
  const auto f = fit_for_r2(ctx, a, need_cov);
  const auto dir = prepare_dir(a.out_dir);
  std::vector<fs::path> outputs;
  json reports = json::array();
  for (auto g : pick_groups(f.system.comparison_groups, a.groups)) {
    const auto in = r2_inputs(f.system, f.tau, g, f.cov ? &*f.cov : nullptr);
    R2GridOptions o;
    o.max_r2 = a.max_r2;
    o.resolution = a.resolution;
    o.alpha = a.alpha;
    const auto grid = grid_r2(in, q, o);
    const auto stem = "sens_r2_" + std::string(to_string(q)) + "_" + safe_name(in.comparison);
    const auto grid_path = dir / (stem + "_grid.csv");
    const auto curve_path = dir / (stem + "_curves.csv");
    {
      auto out = open_out(grid_path);
      write_grid_csv(grid, out);
    }
    {
      auto out = open_out(curve_path);
      write_curves_csv(grid, out);
    }
    outputs.push_back(grid_path);
    outputs.push_back(curve_path);
    RvAlphaOptions ro;
    ro.alpha = a.alpha;
    const auto e = robustness(in, q, ro);
    auto j = entry_json(e);
    j["comparison"] = in.comparison;
    j["grid"] = grid_path.string();
    j["curves"] = curve_path.string();
    reports.push_back(j);
    print_sentence(ctx.out, in.comparison, e);
  }
  const auto report_path = dir / ("sens_r2_" + std::string(to_string(q)) + ".json");
  write_json(report_path, {{"reports", reports}});
  outputs.push_back(report_path);
  auto cfg = data_config(a.data, f.schema, f.data);
  cfg["quantity"] = a.quantity;
  cfg["max_r2"] = a.max_r2;
  cfg["resolution"] = a.resolution;
  cfg["alpha"] = a.alpha;
  if (need_cov) {
    cfg["bootstrap"] = a.bootstrap;
    cfg["seed"] = a.seed;
  }
  write_manifest(ctx, dir, "sens-r2", cfg, outputs);
  return kExitOk;
}

int run_rv(const Context& ctx, const R2Args& a) {
  const bool need_cov = a.bootstrap > 0;
  const auto f = fit_for_r2(ctx, a, need_cov);
  const auto dir = prepare_dir(a.out_dir);
  json groups = json::array();
  RvAlphaOptions ro;
  ro.alpha = a.alpha;
  for (auto g : pick_groups(f.system.comparison_groups, a.groups)) {
    const auto in = r2_inputs(f.system, f.tau, g, f.cov ? &*f.cov : nullptr);
    json entries = json::array();
    for (auto q : {Quantity::delta, Quantity::zeta}) {
      const auto e = robustness(in, q, ro);
      auto j = entry_json(e);
      if (e.rv_alpha && *e.rv_alpha == 0.0) j["note"] = "unadjusted interval already covers zero";
      if (!e.rv_alpha) j["note"] = "zeta interval needs bootstrap covariances; rerun with --bootstrap > 0";
      entries.push_back(j);
      print_sentence(ctx.out, in.comparison, e);
    }
    groups.push_back({{"comparison", in.comparison}, {"entries", entries}});
  }
  const auto path = dir / "rv.json";
  write_json(path, {{"alpha", a.alpha}, {"groups", groups}});
  auto cfg = data_config(a.data, f.schema, f.data);
  cfg["alpha"] = a.alpha;
  cfg["bootstrap"] = a.bootstrap;
  if (need_cov) cfg["seed"] = a.seed;
  write_manifest(ctx, dir, "rv", cfg, {path});
  return kExitOk;
}

// ---- simulate ---------------------------------------------------------------------

struct SimulateArgs {
  std::string spec_file;
  std::string preset = "default";
  std::size_t n = 20000;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool drop_u = false;
};

int run_simulate(const Context& ctx, const SimulateArgs& a) {
  SemSpec spec;
  if (!a.spec_file.empty()) {
    spec = sem_spec_from_json(read_file(a.spec_file));
  } else if (a.preset == "binary") {
    spec = all_binary_spec();
  } else if (a.preset == "gaussian") {
    spec = gaussian_spec();
  } else {
    spec = default_verification_spec();
  }
  if (a.seed) spec.seed = *a.seed;
  const auto data = generate(spec, a.n);
  const fs::path out(a.out);
  const auto dir = prepare_dir(out.has_parent_path() ? out.parent_path().string() : ".");
  {
    auto f = open_out(out);
    write_csv(data.data, f, !a.drop_u);
  }
  json cfg;
  cfg["n"] = a.n;
  cfg["seed"] = spec.seed;
  cfg["with_u"] = !a.drop_u;
  cfg["spec"] = json::parse(to_json(spec));
  write_manifest(ctx, dir, "simulate", cfg, {out});
  ctx.out << "wrote " << a.n << " rows to " << out.string() << " (seed " << spec.seed << ")\n";
  return kExitOk;
}

// ---- verify -------------------------------------------------------------------------

struct VerifyArgs {
  std::uint64_t seed = 20240601;
  std::size_t seeds = 1;
  std::size_t n = 20000;
  std::vector<std::string> perturb;
  std::string out_dir;
};

int run_verify(const Context& ctx, const VerifyArgs& a) {
  VerifyOptions o;
  o.seed = a.seed;
  o.seeds = a.seeds;
  o.n = a.n;
  o.threads = env_threads();
  for (const auto& p : a.perturb) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ValidationError("--perturb expects check=factor");
    try {
      o.perturb[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw ValidationError("--perturb factor must be a number");
    }
  }
  const auto report = verify(o);
  json checks = json::array();
  for (const auto& c : report.checks) {
    ctx.out << (c.passed() ? "PASS " : "FAIL ") << std::left << std::setw(22) << c.name << std::right
            << " worst=" << std::scientific << std::setprecision(3) << c.worst << " tol=" << c.tolerance
            << std::defaultfloat << "  seeds " << c.seeds_passed << "/" << c.seeds_total << "  (" << c.description
            << ")\n";
    checks.push_back({{"name", c.name},
                      {"description", c.description},
                      {"passed", c.passed()},
                      {"worst", c.worst},
                      {"tolerance", c.tolerance},
                      {"seeds_passed", c.seeds_passed},
                      {"seeds_total", c.seeds_total}});
  }
  if (!a.out_dir.empty()) {
    const auto dir = prepare_dir(a.out_dir);
    const auto path = dir / "verify.json";
    write_json(path, {{"seed", a.seed}, {"seeds", a.seeds}, {"n", a.n}, {"checks", checks},
                      {"all_passed", report.all_passed()}});
    json cfg = {{"seed", a.seed}, {"seeds", a.seeds}, {"n", a.n}, {"perturb", a.perturb}};
    write_manifest(ctx, dir, "verify", cfg, {path});
  }
  return report.all_passed() ? kExitOk : kExitCheckFailed;
}

void emit_error(std::ostream& err, std::string_view kind, const std::string& message, int code,
                std::optional<std::size_t> row = std::nullopt) {
  json j = {{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  if (row) j["row"] = *row;
  err << j.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{args, out, err};
  CLI::App app{"Causal decomposition with sensitivity analysis for an omitted mediator-outcome confounder",
               "decompsens"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  DecomposeArgs dec;
  auto* c_dec = app.add_subcommand("decompose", "Estimate initial disparity, reduction and remaining disparity");
  add_data_options(c_dec, dec.data);
  c_dec->add_option("--bootstrap", dec.bootstrap, "Bootstrap replicates (0 disables; otherwise at least 200)");
  c_dec->add_option("--seed", dec.seed, "Bootstrap seed");
  c_dec->add_option("--ci-level", dec.ci_level, "Confidence level")->check(CLI::Range(0.5, 0.9999));
  c_dec->add_option("--ci-method", dec.ci_method, "normal or percentile")
      ->check(CLI::IsMember({"normal", "percentile"}));
  c_dec->add_option("--out-dir", dec.out_dir, "Output directory");

  SensCoefArgs sc;
  auto* c_sc = app.add_subcommand("sens-coef", "Coefficient-scale sensitivity grid and explain-away values");
  c_sc->add_option("--data", sc.data.data, "Input CSV");
  c_sc->add_option("--schema", sc.data.schema_file, "Schema JSON");
  c_sc->add_option("--group", sc.data.group, "Group column");
  c_sc->add_option("--reference", sc.data.reference, "Reference group level");
  c_sc->add_option("--mediator", sc.data.mediator, "Mediator column");
  c_sc->add_option("--outcome", sc.data.outcome, "Outcome column");
  c_sc->add_option("--confounders", sc.data.confounders, "Intermediate confounder columns")->delimiter(',');
  c_sc->add_option("--covariates", sc.data.covariates, "Baseline covariate columns")->delimiter(',');
  c_sc->add_option("--categorical", sc.data.categorical, "Label columns")->delimiter(',');
  c_sc->add_flag("--interaction", sc.data.interaction, "Group-by-mediator terms");
  c_sc->add_option("--comparison", sc.groups, "Comparison group(s); default all")->delimiter(',');
  c_sc->add_option("--alpha-r", sc.alpha_r, "Summary input: mediator gap for the comparison group");
  c_sc->add_option("--delta", sc.delta, "Summary input: disparity reduction");
  c_sc->add_option("--zeta", sc.zeta, "Summary input: disparity remaining");
  c_sc->add_option("--tau", sc.tau, "Summary input: initial disparity (default delta + zeta)");
  c_sc->add_option("--beta-u-range", sc.beta_u_range, "lo:hi");
  c_sc->add_option("--delta-m-range", sc.delta_m_range, "lo:hi");
  c_sc->add_option("--res", sc.resolution, "Grid points per axis")->check(CLI::Range(2, 5001));
  c_sc->add_option("--beta-ru", sc.beta_ru, "Extra U effect on Y in the comparison group");
  c_sc->add_option("--beta-u", sc.beta_u, "Report the delta_m that nullifies each estimate at this beta_u");
  c_sc->add_option("--out-dir", sc.out_dir, "Output directory");

  R2Args r2;
  auto* c_r2 = app.add_subcommand("sens-r2", "Partial R-squared sensitivity grid with interval boundaries");
  add_data_options(c_r2, r2.data);
  c_r2->add_option("--comparison", r2.groups, "Comparison group(s); default all")->delimiter(',');
  c_r2->add_option("--quantity", r2.quantity, "delta or zeta")->check(CLI::IsMember({"delta", "zeta"}));
  c_r2->add_option("--max-r2", r2.max_r2, "Upper end of both axes")->check(CLI::Range(1e-6, 0.999));
  c_r2->add_option("--res", r2.resolution, "Grid points per axis")->check(CLI::Range(2, 5001));
  c_r2->add_option("--alpha", r2.alpha, "Significance level")->check(CLI::Range(1e-6, 0.5));
  c_r2->add_option("--bootstrap", r2.bootstrap, "Bootstrap replicates for zeta covariances");
  c_r2->add_option("--seed", r2.seed, "Bootstrap seed");
  c_r2->add_option("--out-dir", r2.out_dir, "Output directory");

  R2Args rva;
  auto* c_rv = app.add_subcommand("rv", "Robustness values for delta and zeta");
  add_data_options(c_rv, rva.data);
  c_rv->add_option("--comparison", rva.groups, "Comparison group(s); default all")->delimiter(',');
  c_rv->add_option("--alpha", rva.alpha, "Significance level")->check(CLI::Range(1e-6, 0.5));
  c_rv->add_option("--bootstrap", rva.bootstrap, "Bootstrap replicates for zeta (0 skips zeta rv_alpha)");
  c_rv->add_option("--seed", rva.seed, "Bootstrap seed");
  c_rv->add_option("--out-dir", rva.out_dir, "Output directory");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate data with a known unobserved confounder");
  c_sim->add_option("--spec", sim.spec_file, "Structural model JSON");
  c_sim->add_option("--preset", sim.preset, "Built-in model when no --spec")
      ->check(CLI::IsMember({"default", "binary", "gaussian"}));
  c_sim->add_option("--n", sim.n, "Rows")->check(CLI::Range(std::size_t{50}, std::size_t{100000000}));
  c_sim->add_option("--seed", sim.seed, "Overrides the model seed");
  c_sim->add_option("--out", sim.out, "Output CSV")->required();
  c_sim->add_flag("--drop-u", sim.drop_u, "Omit the unobserved column");

  VerifyArgs ver;
  auto* c_ver = app.add_subcommand("verify", "Run the oracle battery on simulated data");
  c_ver->add_option("--seed", ver.seed, "First seed");
  c_ver->add_option("--seeds", ver.seeds, "Replications")->check(CLI::Range(std::size_t{1}, std::size_t{10000}));
  c_ver->add_option("--n", ver.n, "Rows per simulated dataset")->check(CLI::Range(std::size_t{200}, std::size_t{10000000}));
  c_ver->add_option("--perturb", ver.perturb, "check=factor; scales one formula (harness hook)")->group("");
  c_ver->add_option("--out-dir", ver.out_dir, "Write verify.json and a manifest here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what(), kExitUsage);
    return kExitUsage;
  }

  try {
    if (c_dec->parsed()) return run_decompose(ctx, dec);
    if (c_sc->parsed()) return run_sens_coef(ctx, sc);
    if (c_r2->parsed()) return run_sens_r2(ctx, r2);
    if (c_rv->parsed()) return run_rv(ctx, rva);
    if (c_sim->parsed()) return run_simulate(ctx, sim);
    if (c_ver->parsed()) return run_verify(ctx, ver);
  } catch (const ParseError& e) {
    const int code = exit_code_for(e.kind());
    emit_error(err, to_string(e.kind()), e.what(), code, e.row());
    return code;
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    emit_error(err, to_string(e.kind()), e.what(), code);
    return code;
  } catch (const std::bad_alloc&) {
    emit_error(err, "resource", "out of memory", kExitNumeric);
    return kExitNumeric;
  }
  emit_error(err, "usage", "no subcommand given", kExitUsage);
  return kExitUsage;
}

}  // namespace decompsens::cli
