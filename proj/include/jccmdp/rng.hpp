// Seedable randomness used by the generators and Monte Carlo validation.
// Every stochastic routine takes an explicit seed; derived streams come from
// split_seed so parallel shards stay reproducible.
#pragma once

#include <cstdint>
#include <random>

namespace jccmdp {

/// Named cross-platform generator: the 64-bit Mersenne twister. Its output
/// sequence is pinned by the C++ standard, so (config, seed) pairs are
/// bit-reproducible across platforms.
using Rng = std::mt19937_64;

/// Derives an independent stream seed from (master, stream_id) by
/// splitmix64 finalization of the combined word.
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream_id);

double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF; |err| < 1e-13 on (0,1). Halley-refined
/// rational approximation.
double normal_quantile(double p);

/// Inverse CDF of a Gaussian(mean, sd) truncated to [lo, hi], evaluated at
/// u in [0,1]. sd == 0 returns mean.
double truncated_normal_quantile(double u, double mean, double sd, double lo, double hi);

/// One draw from the positive stable distribution S(alpha) with Laplace
/// transform E e^{-t S} = exp(-t^alpha), 0 < alpha < 1 (Kanter's method).
double positive_stable(Rng& rng, double alpha);

} // namespace jccmdp
