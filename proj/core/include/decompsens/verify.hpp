#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace decompsens {

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  /// Replications; replication k uses seed + k.
  std::size_t seeds = 1;
  std::size_t n = 20000;
  unsigned threads = 1;
  /// Test hook: multiplies the formula side of the named check by the factor.
  std::map<std::string, double> perturb;
};

struct CheckOutcome {
  std::string name;
  std::string description;
  double tolerance = 0.0;
  /// Largest deviation over all replications.
  double worst = 0.0;
  std::size_t seeds_passed = 0;
  std::size_t seeds_total = 0;

  bool passed() const noexcept { return seeds_total > 0 && seeds_passed == seeds_total; }
};

struct VerifyReport {
  std::vector<CheckOutcome> checks;
  std::uint64_t seed = 0;
  std::size_t seeds = 0;
  std::size_t n = 0;

  bool all_passed() const noexcept;
};

/// Names of the checks run by `verify`, in report order.
const std::vector<std::string>& verify_check_names();

/// Runs every oracle comparison on freshly simulated data.
VerifyReport verify(const VerifyOptions& options = {});

}  // namespace decompsens
