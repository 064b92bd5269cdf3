#pragma once

#include <cstdint>
#include <span>

namespace decompsens::stats {

double normal_quantile(double p);
/// Student-t quantile; df must be positive.
double t_quantile(double p, double df);

double mean(std::span<const double> x);
/// Unbiased (n - 1) sample variance.
double variance(std::span<const double> x);
double covariance(std::span<const double> x, std::span<const double> y);
/// Linear-interpolation sample quantile (type 7).
double quantile(std::span<const double> x, double p);

/// SplitMix64 finalizer; used to derive independent per-stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace decompsens::stats
