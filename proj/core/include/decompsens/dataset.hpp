#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace decompsens {

/// Column roles of an analysis: group status R, mediator M, outcome Y,
/// intermediate confounders X, baseline covariates C and (simulation only)
/// the unobserved confounder U.
struct Schema {
  std::string group_column;
  std::string reference_level;
  std::string mediator_column;
  std::string outcome_column;
  std::vector<std::string> confounder_columns;
  std::vector<std::string> covariate_columns;
  std::optional<std::string> unobserved_column;
  /// X or C columns holding labels rather than numbers. These are expanded
  /// into reference-coded dummies (levels sorted, first level dropped).
  std::vector<std::string> categorical_columns;

  /// Throws SchemaError when a role is empty or columns overlap.
  void check() const;
};

/// Validated, immutable analysis data. Group levels are ordered with the
/// reference level first; indicator column j corresponds to level j + 1.
class EncodedDataset {
 public:
  struct Names {
    std::string group = "R";
    std::string mediator = "M";
    std::string outcome = "Y";
    std::vector<std::string> confounders;
    std::vector<std::string> covariates;
    std::string unobserved = "U";
  };

  /// Builds from decoded columns. `level_order` fixes the level order
  /// (reference must come first); when empty, the reference comes first and
  /// the remaining levels follow in order of first appearance.
  static EncodedDataset from_columns(
      std::span<const std::string> group_labels, std::string_view reference,
      Eigen::VectorXd mediator, Eigen::VectorXd outcome,
      Eigen::MatrixXd confounders, Eigen::MatrixXd covariates, Names names,
      std::optional<Eigen::VectorXd> unobserved = std::nullopt,
      std::vector<std::string> level_order = {});

  std::size_t n() const noexcept { return group_index_.size(); }
  std::size_t group_count() const noexcept { return levels_.size(); }
  const std::vector<std::string>& group_levels() const noexcept { return levels_; }
  const std::string& reference_level() const noexcept { return levels_.front(); }

  /// Index into group_levels() for every row.
  const std::vector<std::size_t>& group_index() const noexcept { return group_index_; }
  const Eigen::MatrixXd& indicators() const noexcept { return indicators_; }
  const Eigen::VectorXd& mediator() const noexcept { return mediator_; }
  const Eigen::VectorXd& outcome() const noexcept { return outcome_; }
  const Eigen::MatrixXd& confounders() const noexcept { return confounders_; }
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  const std::optional<Eigen::VectorXd>& unobserved() const noexcept { return unobserved_; }
  const Names& names() const noexcept { return names_; }

  /// Rows removed by listwise deletion while loading.
  std::size_t missing_rows_dropped() const noexcept { return missing_rows_dropped_; }

  /// Content hash used to detect fits that come from different data.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  std::size_t level_index(std::string_view level) const;
  std::vector<std::string> decode_labels() const;

  /// Same rows, re-encoded so that `level` is the reference.
  EncodedDataset with_reference(std::string_view level) const;
  /// Row selection with repetition allowed (bootstrap resampling). The level
  /// list is kept even if a level no longer occurs.
  EncodedDataset select_rows(std::span<const std::size_t> rows) const;
  EncodedDataset without_unobserved() const;

  EncodedDataset with_missing_count(std::size_t dropped) const;

 private:
  EncodedDataset() = default;
  void finalize();

  std::vector<std::string> levels_;
  std::vector<std::size_t> group_index_;
  Eigen::MatrixXd indicators_;
  Eigen::VectorXd mediator_;
  Eigen::VectorXd outcome_;
  Eigen::MatrixXd confounders_;
  Eigen::MatrixXd covariates_;
  std::optional<Eigen::VectorXd> unobserved_;
  Names names_;
  std::size_t missing_rows_dropped_ = 0;
  std::uint64_t fingerprint_ = 0;
};

/// Raw RFC 4180 table: header plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

EncodedDataset encode_table(const CsvTable& table, const Schema& schema);
EncodedDataset load_csv(const std::filesystem::path& path, const Schema& schema);

/// Writes group label, mediator, outcome, X, C (and U when requested) with
/// round-trip precision. Column names come from the dataset's Names.
void write_csv(const EncodedDataset& data, std::ostream& out,
               bool include_unobserved = false);
void write_csv(const EncodedDataset& data, const std::filesystem::path& path,
               bool include_unobserved = false);

/// Schema matching the columns written by write_csv.
Schema schema_for(const EncodedDataset& data, bool include_unobserved = false);

struct Finding {
  enum class Kind { empty_group, constant_column, positivity, too_few_rows };
  Kind kind;
  std::string subject;
  std::string message;
};

std::string_view to_string(Finding::Kind kind) noexcept;

/// Data problems that do not stop an analysis but deserve a look: empty
/// group levels, constant columns and groups without mediator variation.
std::vector<Finding> validate(const EncodedDataset& data);

}  // namespace decompsens
