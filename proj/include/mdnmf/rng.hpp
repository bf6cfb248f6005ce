#pragma once

// Deterministic randomness helpers. All sampling routes through
// std::mt19937_64 (whose output sequence the standard pins down) and
// hand-written transforms, so that identical seeds reproduce identical
// draws on every platform and thread count.

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace mdnmf {

/// Mixes a seed with a stream index (per source, per trial, ...) so derived
/// generators are decorrelated but reproducible.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform draw in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Unbiased uniform draw in {0, ..., n - 1} by rejection.
inline std::uint64_t uniform_below(std::mt19937_64& g, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = g();
  while (x >= limit) x = g();
  return x % n;
}

/// Fisher-Yates permutation of {0, ..., n - 1}.
inline std::vector<Eigen::Index> random_permutation(Eigen::Index n,
                                                    std::mt19937_64& g) {
  std::vector<Eigen::Index> p(static_cast<size_t>(n));
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(
        uniform_below(g, static_cast<std::uint64_t>(i) + 1));
    std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
  }
  return p;
}

/// Draws k indices from {0, ..., n - 1}: distinct while k <= n, uniform
/// with replacement otherwise.
inline std::vector<Eigen::Index> sample_indices(Eigen::Index n, Eigen::Index k,
                                                std::mt19937_64& g) {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<size_t>(k));
  if (k <= n) {
    std::vector<Eigen::Index> pool(static_cast<size_t>(n));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto j = i + static_cast<Eigen::Index>(uniform_below(
                             g, static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      out.push_back(pool[static_cast<size_t>(i)]);
    }
  } else {
    for (Eigen::Index i = 0; i < k; ++i) {
      out.push_back(static_cast<Eigen::Index>(
          uniform_below(g, static_cast<std::uint64_t>(n))));
    }
  }
  return out;
}

}  // namespace mdnmf
