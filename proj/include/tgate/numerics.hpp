#ifndef TGATE_NUMERICS_HPP
#define TGATE_NUMERICS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace tgate {

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1). Weights sum to one.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};

GaussHermite gauss_hermite(int order);

/// Independent stream for item `index` of a run seeded with `seed`.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0);

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
/// must be written by index; the first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

/// Linear interpolation on a strictly increasing grid, clamped at the ends.
double interp_linear(const std::vector<double> &x, const std::vector<double> &y, double xq);

/// Stable 64-bit FNV-1a hash, used for config fingerprints.
std::uint64_t fnv1a64(const std::string &data);

}  // namespace tgate

#endif  // TGATE_NUMERICS_HPP
