#include "decompsens/dataset.hpp"

#include "decompsens/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace decompsens {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void hash_values(std::uint64_t& h, const double* v, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    hash_bytes(h, &bits, sizeof bits);
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing(std::string_view cell) {
  cell = trim(cell);
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" ||
         cell == "null";
}

double parse_number(std::string_view cell, std::size_t row, std::string_view column) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "row " << row << ": column '" << column << "' has non-numeric value '"
        << cell << "'";
    throw ParseError(msg.str(), row);
  }
  return value;
}

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

void Schema::check() const {
  if (group_column.empty()) throw SchemaError("schema: group column is not set");
  if (reference_level.empty()) throw SchemaError("schema: reference level is not set");
  if (mediator_column.empty()) throw SchemaError("schema: mediator column is not set");
  if (outcome_column.empty()) throw SchemaError("schema: outcome column is not set");

  std::set<std::string> seen;
  auto claim = [&seen](const std::string& name) {
    if (!seen.insert(name).second) {
      throw SchemaError("schema: column '" + name + "' is assigned to more than one role");
    }
  };
  claim(group_column);
  claim(mediator_column);
  claim(outcome_column);
  for (const auto& c : confounder_columns) claim(c);
  for (const auto& c : covariate_columns) claim(c);
  if (unobserved_column) claim(*unobserved_column);

  for (const auto& c : categorical_columns) {
    if (!contains(confounder_columns, c) && !contains(covariate_columns, c)) {
      throw SchemaError("schema: categorical column '" + c +
                        "' must be a confounder or covariate column");
    }
  }
}

// --- EncodedDataset ---------------------------------------------------------

EncodedDataset EncodedDataset::from_columns(
    std::span<const std::string> group_labels, std::string_view reference,
    Eigen::VectorXd mediator, Eigen::VectorXd outcome, Eigen::MatrixXd confounders,
    Eigen::MatrixXd covariates, Names names, std::optional<Eigen::VectorXd> unobserved,
    std::vector<std::string> level_order) {
  const auto n = static_cast<Eigen::Index>(group_labels.size());
  auto require_rows = [n](Eigen::Index rows, const char* what) {
    if (rows != n) {
      throw SchemaError(std::string("dataset: ") + what + " has " + std::to_string(rows) +
                        " rows, expected " + std::to_string(n));
    }
  };
  require_rows(mediator.size(), "mediator");
  require_rows(outcome.size(), "outcome");
  if (confounders.cols() > 0 || confounders.rows() > 0) require_rows(confounders.rows(), "confounders");
  if (covariates.cols() > 0 || covariates.rows() > 0) require_rows(covariates.rows(), "covariates");
  if (unobserved) require_rows(unobserved->size(), "unobserved");
  if (names.confounders.size() != static_cast<std::size_t>(confounders.cols())) {
    throw SchemaError("dataset: confounder names do not match confounder columns");
  }
  if (names.covariates.size() != static_cast<std::size_t>(covariates.cols())) {
    throw SchemaError("dataset: covariate names do not match covariate columns");
  }

  EncodedDataset d;
  if (level_order.empty()) {
    if (std::find(group_labels.begin(), group_labels.end(), reference) == group_labels.end()) {
      throw SchemaError("dataset: reference level '" + std::string(reference) +
                        "' does not occur in the group column");
    }
    level_order.emplace_back(reference);
    for (const auto& label : group_labels) {
      if (!contains(level_order, label)) level_order.push_back(label);
    }
  } else if (level_order.front() != reference) {
    throw SchemaError("dataset: level order must start with the reference level");
  }
  d.levels_ = std::move(level_order);

  std::map<std::string, std::size_t, std::less<>> lookup;
  for (std::size_t i = 0; i < d.levels_.size(); ++i) {
    if (!lookup.emplace(d.levels_[i], i).second) {
      throw SchemaError("dataset: duplicate group level '" + d.levels_[i] + "'");
    }
  }
  d.group_index_.reserve(group_labels.size());
  for (const auto& label : group_labels) {
    auto it = lookup.find(label);
    if (it == lookup.end()) {
      throw SchemaError("dataset: group label '" + label + "' is not a declared level");
    }
    d.group_index_.push_back(it->second);
  }

  d.mediator_ = std::move(mediator);
  d.outcome_ = std::move(outcome);
  d.confounders_ = confounders.rows() == n ? std::move(confounders) : Eigen::MatrixXd(n, 0);
  d.covariates_ = covariates.rows() == n ? std::move(covariates) : Eigen::MatrixXd(n, 0);
  d.unobserved_ = std::move(unobserved);
  d.names_ = std::move(names);
  d.finalize();
  return d;
}

void EncodedDataset::finalize() {
  const auto n = static_cast<Eigen::Index>(group_index_.size());
  const auto g = static_cast<Eigen::Index>(levels_.size());
  indicators_ = Eigen::MatrixXd::Zero(n, std::max<Eigen::Index>(g - 1, 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto level = static_cast<Eigen::Index>(group_index_[static_cast<std::size_t>(i)]);
    if (level > 0) indicators_(i, level - 1) = 1.0;
  }

  auto check_finite = [](const auto& m, const std::string& what) {
    if (!m.allFinite()) throw ValidationError("dataset: non-finite value in " + what);
  };
  check_finite(mediator_, "mediator");
  check_finite(outcome_, "outcome");
  check_finite(confounders_, "confounders");
  check_finite(covariates_, "covariates");
  if (unobserved_) check_finite(*unobserved_, "unobserved");

  std::uint64_t h = kFnvOffset;
  for (const auto& level : levels_) hash_bytes(h, level.data(), level.size() + 1);
  for (auto idx : group_index_) hash_bytes(h, &idx, sizeof idx);
  hash_values(h, mediator_.data(), static_cast<std::size_t>(mediator_.size()));
  hash_values(h, outcome_.data(), static_cast<std::size_t>(outcome_.size()));
  hash_values(h, confounders_.data(), static_cast<std::size_t>(confounders_.size()));
  hash_values(h, covariates_.data(), static_cast<std::size_t>(covariates_.size()));
  fingerprint_ = h;
}

std::size_t EncodedDataset::level_index(std::string_view level) const {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i] == level) return i;
  }
  throw LookupError("unknown group level '" + std::string(level) + "'");
}

std::vector<std::string> EncodedDataset::decode_labels() const {
  std::vector<std::string> labels;
  labels.reserve(group_index_.size());
  for (auto idx : group_index_) labels.push_back(levels_[idx]);
  return labels;
}

EncodedDataset EncodedDataset::with_reference(std::string_view level) const {
  const auto pivot = level_index(level);
  EncodedDataset d = *this;
  std::vector<std::size_t> remap(levels_.size());
  d.levels_.clear();
  d.levels_.push_back(levels_[pivot]);
  remap[pivot] = 0;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (i == pivot) continue;
    remap[i] = d.levels_.size();
    d.levels_.push_back(levels_[i]);
  }
  for (auto& idx : d.group_index_) idx = remap[idx];
  d.finalize();
  return d;
}

EncodedDataset EncodedDataset::select_rows(std::span<const std::size_t> rows) const {
  EncodedDataset d;
  d.levels_ = levels_;
  d.names_ = names_;
  const auto m = static_cast<Eigen::Index>(rows.size());
  d.group_index_.resize(rows.size());
  d.mediator_.resize(m);
  d.outcome_.resize(m);
  d.confounders_.resize(m, confounders_.cols());
  d.covariates_.resize(m, covariates_.cols());
  if (unobserved_) d.unobserved_ = Eigen::VectorXd(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto src = rows[static_cast<std::size_t>(i)];
    if (src >= group_index_.size()) throw LookupError("select_rows: row index out of range");
    const auto s = static_cast<Eigen::Index>(src);
    d.group_index_[static_cast<std::size_t>(i)] = group_index_[src];
    d.mediator_(i) = mediator_(s);
    d.outcome_(i) = outcome_(s);
    d.confounders_.row(i) = confounders_.row(s);
    d.covariates_.row(i) = covariates_.row(s);
    if (unobserved_) (*d.unobserved_)(i) = (*unobserved_)(s);
  }
  d.finalize();
  return d;
}

EncodedDataset EncodedDataset::without_unobserved() const {
  EncodedDataset d = *this;
  d.unobserved_.reset();
  return d;
}

EncodedDataset EncodedDataset::with_missing_count(std::size_t dropped) const {
  EncodedDataset d = *this;
  d.missing_rows_dropped_ = dropped;
  return d;
}

// --- CSV --------------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw SchemaError("missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started) {
          throw ParseError("line " + std::to_string(line) + ": stray quote inside field",
                           records.empty() ? 0 : records.size());
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", records.size());
  if (field_started || !field.empty() || !record.empty()) end_record();

  if (records.empty()) throw SchemaError("csv: missing header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (auto& h : table.header) h = std::string(trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw ParseError("row " + std::to_string(r) + ": expected " +
                           std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(records[r].size()),
                       r);
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

namespace {

struct ExpandedBlock {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};

ExpandedBlock expand_columns(const CsvTable& table, const std::vector<std::size_t>& keep,
                             const std::vector<std::string>& columns,
                             const std::vector<std::string>& categorical) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  std::vector<Eigen::VectorXd> cols;
  ExpandedBlock block;
  for (const auto& name : columns) {
    const auto c = table.column(name);
    if (contains(categorical, name)) {
      std::set<std::string> levels;
      for (auto r : keep) levels.insert(std::string(trim(table.rows[r][c])));
      std::vector<std::string> ordered(levels.begin(), levels.end());
      for (std::size_t l = 1; l < ordered.size(); ++l) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          v(i) = trim(table.rows[keep[static_cast<std::size_t>(i)]][c]) == ordered[l] ? 1.0 : 0.0;
        }
        cols.push_back(std::move(v));
        block.names.push_back(name + "=" + ordered[l]);
      }
    } else {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = keep[static_cast<std::size_t>(i)];
        v(i) = parse_number(table.rows[r][c], r + 1, name);
      }
      cols.push_back(std::move(v));
      block.names.push_back(name);
    }
  }
  block.values.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) block.values.col(static_cast<Eigen::Index>(j)) = cols[j];
  return block;
}

Eigen::VectorXd numeric_column(const CsvTable& table, const std::vector<std::size_t>& keep,
                               const std::string& name) {
  const auto c = table.column(name);
  Eigen::VectorXd v(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = parse_number(table.rows[keep[i]][c], keep[i] + 1, name);
  }
  return v;
}

}  // namespace

EncodedDataset encode_table(const CsvTable& table, const Schema& schema) {
  schema.check();

  std::vector<std::size_t> role_columns;
  role_columns.push_back(table.column(schema.group_column));
  role_columns.push_back(table.column(schema.mediator_column));
  role_columns.push_back(table.column(schema.outcome_column));
  for (const auto& c : schema.confounder_columns) role_columns.push_back(table.column(c));
  for (const auto& c : schema.covariate_columns) role_columns.push_back(table.column(c));
  if (schema.unobserved_column) role_columns.push_back(table.column(*schema.unobserved_column));

  std::vector<std::size_t> keep;
  keep.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const bool complete = std::none_of(role_columns.begin(), role_columns.end(),
                                       [&](std::size_t c) { return is_missing(table.rows[r][c]); });
    if (complete) keep.push_back(r);
  }
  const std::size_t dropped = table.rows.size() - keep.size();

  std::vector<std::string> labels;
  labels.reserve(keep.size());
  const auto gcol = table.column(schema.group_column);
  for (auto r : keep) labels.emplace_back(trim(table.rows[r][gcol]));

  EncodedDataset::Names names;
  names.group = schema.group_column;
  names.mediator = schema.mediator_column;
  names.outcome = schema.outcome_column;

  auto mediator = numeric_column(table, keep, schema.mediator_column);
  auto outcome = numeric_column(table, keep, schema.outcome_column);
  auto x = expand_columns(table, keep, schema.confounder_columns, schema.categorical_columns);
  auto c = expand_columns(table, keep, schema.covariate_columns, schema.categorical_columns);
  names.confounders = std::move(x.names);
  names.covariates = std::move(c.names);

  std::optional<Eigen::VectorXd> u;
  if (schema.unobserved_column) {
    u = numeric_column(table, keep, *schema.unobserved_column);
    names.unobserved = *schema.unobserved_column;
  }

  return EncodedDataset::from_columns(labels, schema.reference_level, std::move(mediator),
                                      std::move(outcome), std::move(x.values),
                                      std::move(c.values), std::move(names), std::move(u))
      .with_missing_count(dropped);
}

EncodedDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  return encode_table(read_csv(path), schema);
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_csv(const EncodedDataset& data, std::ostream& out, bool include_unobserved) {
  const auto& nm = data.names();
  const bool with_u = include_unobserved && data.unobserved().has_value();
  out << quote_if_needed(nm.group) << ',' << quote_if_needed(nm.mediator) << ','
      << quote_if_needed(nm.outcome);
  for (const auto& c : nm.confounders) out << ',' << quote_if_needed(c);
  for (const auto& c : nm.covariates) out << ',' << quote_if_needed(c);
  if (with_u) out << ',' << quote_if_needed(nm.unobserved);
  out << '\n';

  const auto old_precision = out.precision(17);
  const auto labels = data.decode_labels();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.n()); ++i) {
    out << quote_if_needed(labels[static_cast<std::size_t>(i)]) << ',' << data.mediator()(i)
        << ',' << data.outcome()(i);
    for (Eigen::Index j = 0; j < data.confounders().cols(); ++j) out << ',' << data.confounders()(i, j);
    for (Eigen::Index j = 0; j < data.covariates().cols(); ++j) out << ',' << data.covariates()(i, j);
    if (with_u) out << ',' << (*data.unobserved())(i);
    out << '\n';
  }
  out.precision(old_precision);
}

void write_csv(const EncodedDataset& data, const std::filesystem::path& path,
               bool include_unobserved) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_csv(data, out, include_unobserved);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Schema schema_for(const EncodedDataset& data, bool include_unobserved) {
  Schema s;
  const auto& nm = data.names();
  s.group_column = nm.group;
  s.reference_level = data.reference_level();
  s.mediator_column = nm.mediator;
  s.outcome_column = nm.outcome;
  s.confounder_columns = nm.confounders;
  s.covariate_columns = nm.covariates;
  if (include_unobserved && data.unobserved()) s.unobserved_column = nm.unobserved;
  return s;
}

// --- validation -------------------------------------------------------------

std::string_view to_string(Finding::Kind kind) noexcept {
  switch (kind) {
    case Finding::Kind::empty_group: return "empty_group";
    case Finding::Kind::constant_column: return "constant_column";
    case Finding::Kind::positivity: return "positivity";
    case Finding::Kind::too_few_rows: return "too_few_rows";
  }
  return "unknown";
}

std::vector<Finding> validate(const EncodedDataset& data) {
  std::vector<Finding> findings;
  const auto g = data.group_count();
  std::vector<std::size_t> counts(g, 0);
  std::vector<double> mmin(g, std::numeric_limits<double>::infinity());
  std::vector<double> mmax(g, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto level = data.group_index()[i];
    ++counts[level];
    const double m = data.mediator()(static_cast<Eigen::Index>(i));
    mmin[level] = std::min(mmin[level], m);
    mmax[level] = std::max(mmax[level], m);
  }
  for (std::size_t l = 0; l < g; ++l) {
    const auto& name = data.group_levels()[l];
    if (counts[l] == 0) {
      findings.push_back({Finding::Kind::empty_group, name, "group '" + name + "' has no rows"});
    } else if (mmin[l] == mmax[l]) {
      findings.push_back({Finding::Kind::positivity, name,
                          "mediator takes a single value in group '" + name + "'"});
    }
  }

  auto constant = [](const auto& v) {
    return v.size() > 0 && v.maxCoeff() == v.minCoeff();
  };
  const auto& nm = data.names();
  if (constant(data.mediator())) {
    findings.push_back({Finding::Kind::constant_column, nm.mediator, "mediator column is constant"});
  }
  if (constant(data.outcome())) {
    findings.push_back({Finding::Kind::constant_column, nm.outcome, "outcome column is constant"});
  }
  for (Eigen::Index j = 0; j < data.confounders().cols(); ++j) {
    if (constant(data.confounders().col(j))) {
      const auto& name = nm.confounders[static_cast<std::size_t>(j)];
      findings.push_back({Finding::Kind::constant_column, name,
                          "confounder column '" + name + "' is constant"});
    }
  }
  for (Eigen::Index j = 0; j < data.covariates().cols(); ++j) {
    if (constant(data.covariates().col(j))) {
      const auto& name = nm.covariates[static_cast<std::size_t>(j)];
      findings.push_back({Finding::Kind::constant_column, name,
                          "covariate column '" + name + "' is constant"});
    }
  }

  // Outcome model with interaction: intercept, G-1 indicators, X, M, G-1 products, C.
  const auto params = 2 * (g - 1) + 2 + static_cast<std::size_t>(data.confounders().cols()) +
                      static_cast<std::size_t>(data.covariates().cols());
  if (data.n() <= params) {
    findings.push_back({Finding::Kind::too_few_rows, "n",
                        "n = " + std::to_string(data.n()) +
                            " does not exceed the outcome-model parameter count " +
                            std::to_string(params)});
  }
  return findings;
}

}  // namespace decompsens
