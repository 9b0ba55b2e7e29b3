#pragma once

// Index arithmetic for multiresolution feature grids: level resolutions,
// enclosing-cell corners with d-linear weights, spatial hashes and the
// probed index composition. Everything here is a pure function.

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cngp/error.hpp"

namespace cngp {

template <std::size_t Dim>
using Vertex = std::array<std::int32_t, Dim>;

template <class Scalar, std::size_t Dim>
using Point = std::array<Scalar, Dim>;

enum class IndexMode : std::uint8_t { Dense, Hashed };

struct LevelSpec {
  std::uint32_t level = 0;
  std::uint32_t resolution = 0;
  IndexMode mode = IndexMode::Hashed;
};

using PrimeSet = std::array<std::uint32_t, 3>;

/// Primary primes index the feature codebook, auxiliary primes the index codebook.
struct HashPrimes {
  PrimeSet primary{1u, 2654435761u, 805459861u};
  PrimeSet auxiliary{1u, 3674653429u, 2097192037u};
};

inline constexpr HashPrimes kHashPrimes{};

constexpr bool is_power_of_two(std::uint64_t n) noexcept { return std::has_single_bit(n); }

constexpr std::uint32_t log2_exact(std::uint64_t n) noexcept {
  return static_cast<std::uint32_t>(std::countr_zero(n));
}

/// floor(n_min * b^level) with b = exp((ln n_max - ln n_min) / (n_levels - 1)).
/// Endpoints are returned exactly; interior values absorb a 1e-9 relative
/// rounding slack so that exact integers (16 * 2^(3/3) = 32) do not floor down.
inline std::uint32_t level_resolution(std::uint32_t level, std::uint32_t n_min, std::uint32_t n_max,
                                      std::uint32_t n_levels) {
  require(n_levels >= 1, ErrorCode::invalid_hyperparameter, "level count must be at least 1");
  require(n_min >= 1, ErrorCode::invalid_hyperparameter, "coarsest resolution must be at least 1");
  require(n_max >= n_min, ErrorCode::invalid_hyperparameter,
          "finest resolution " + std::to_string(n_max) + " is below coarsest " + std::to_string(n_min));
  require(level < n_levels, ErrorCode::out_of_range,
          "level " + std::to_string(level) + " outside [0, " + std::to_string(n_levels) + ")");
  if (n_levels == 1 || level == 0) return n_min;
  if (level == n_levels - 1) return n_max;
  const double log_growth =
      (std::log(static_cast<double>(n_max)) - std::log(static_cast<double>(n_min))) / (n_levels - 1);
  const double value = static_cast<double>(n_min) * std::exp(log_growth * level);
  return static_cast<std::uint32_t>(std::floor(value * (1.0 + 1e-9)));
}

/// Number of vertices of a grid with `resolution` cells per axis.
constexpr std::uint64_t dense_vertex_count(std::uint32_t resolution, std::size_t dims) noexcept {
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < dims; ++i) {
    count *= static_cast<std::uint64_t>(resolution) + 1;
    if (count > (std::uint64_t{1} << 40)) return count;  // saturate, only compared against table sizes
  }
  return count;
}

inline std::vector<LevelSpec> make_level_specs(std::uint32_t n_levels, std::uint32_t n_min,
                                               std::uint32_t n_max, std::uint32_t n_features,
                                               std::size_t dims) {
  std::vector<LevelSpec> specs;
  specs.reserve(n_levels);
  for (std::uint32_t l = 0; l < n_levels; ++l) {
    const std::uint32_t res = level_resolution(l, n_min, n_max, n_levels);
    const bool dense = dense_vertex_count(res, dims) <= n_features;
    specs.push_back({l, res, dense ? IndexMode::Dense : IndexMode::Hashed});
  }
  return specs;
}

template <class Scalar, std::size_t Dim>
struct CornerSet {
  static constexpr std::size_t kCount = std::size_t{1} << Dim;
  std::array<Vertex<Dim>, kCount> corners{};
  std::array<Scalar, kCount> weights{};
};

/// Corner c sits at offset bit i of c along axis i. A coordinate of exactly 1
/// falls in the last cell with fractional position 1 so every corner stays on
/// the grid.
template <class Scalar, std::size_t Dim>
inline CornerSet<Scalar, Dim> enclosing_corners_unchecked(const Point<Scalar, Dim>& x,
                                                          std::uint32_t resolution) noexcept {
  CornerSet<Scalar, Dim> out;
  std::array<std::int32_t, Dim> cell{};
  std::array<Scalar, Dim> frac{};
  const Scalar res = static_cast<Scalar>(resolution);
  for (std::size_t i = 0; i < Dim; ++i) {
    const Scalar pos = x[i] * res;
    Scalar base = std::floor(pos);
    if (base >= res) base = res - Scalar(1);
    cell[i] = static_cast<std::int32_t>(base);
    frac[i] = pos - base;
  }
  for (std::size_t c = 0; c < CornerSet<Scalar, Dim>::kCount; ++c) {
    Scalar w = Scalar(1);
    for (std::size_t i = 0; i < Dim; ++i) {
      const bool upper = (c >> i) & 1u;
      out.corners[c][i] = cell[i] + (upper ? 1 : 0);
      w *= upper ? frac[i] : Scalar(1) - frac[i];
    }
    out.weights[c] = w;
  }
  return out;
}

template <class Scalar, std::size_t Dim>
inline void check_unit_point(const Point<Scalar, Dim>& x) {
  for (std::size_t i = 0; i < Dim; ++i) {
    if (!(x[i] >= Scalar(0) && x[i] <= Scalar(1))) {
      fail(ErrorCode::domain_violation,
           "coordinate " + std::to_string(i) + " = " + std::to_string(static_cast<double>(x[i])) +
               " outside [0, 1]");
    }
  }
}

template <class Scalar, std::size_t Dim>
inline CornerSet<Scalar, Dim> enclosing_corners(const Point<Scalar, Dim>& x, std::uint32_t resolution) {
  check_unit_point(x);
  require(resolution >= 1, ErrorCode::invalid_hyperparameter, "resolution must be at least 1");
  return enclosing_corners_unchecked(x, resolution);
}

/// XOR of coordinate-times-prime products in wrapping 32-bit arithmetic.
template <std::size_t Dim>
constexpr std::uint32_t spatial_hash(const Vertex<Dim>& v, const PrimeSet& primes) noexcept {
  static_assert(Dim >= 1 && Dim <= 3);
  std::uint32_t h = 0;
  for (std::size_t i = 0; i < Dim; ++i) h ^= static_cast<std::uint32_t>(v[i]) * primes[i];
  return h;
}

template <std::size_t Dim>
constexpr std::uint32_t dense_index_unchecked(const Vertex<Dim>& v, std::uint32_t resolution) noexcept {
  const std::uint32_t stride = resolution + 1;
  std::uint32_t index = 0;
  for (std::size_t i = Dim; i-- > 0;) index = index * stride + static_cast<std::uint32_t>(v[i]);
  return index;
}

/// Row-major index v_0 + s * (v_1 + s * v_2) with s = resolution + 1.
template <std::size_t Dim>
inline std::uint32_t dense_index(const Vertex<Dim>& v, std::uint32_t resolution) {
  for (std::size_t i = 0; i < Dim; ++i) {
    if (v[i] < 0 || static_cast<std::uint32_t>(v[i]) > resolution) {
      fail(ErrorCode::out_of_range, "vertex component " + std::to_string(i) + " = " +
                                        std::to_string(v[i]) + " outside [0, " +
                                        std::to_string(resolution) + "]");
    }
  }
  require(dense_vertex_count(resolution, Dim) <= (std::uint64_t{1} << 32), ErrorCode::out_of_range,
          "dense grid too large for 32-bit indices");
  return dense_index_unchecked(v, resolution);
}

constexpr std::uint32_t compose_probed_index_unchecked(std::uint32_t hash, std::uint32_t probe,
                                                       std::uint32_t n_probes,
                                                       std::uint32_t n_features) noexcept {
  const std::uint64_t scaled = static_cast<std::uint64_t>(n_probes) * hash;
  return static_cast<std::uint32_t>(scaled & (n_features - 1)) + probe;
}

inline void validate_probing(std::uint32_t n_probes, std::uint32_t n_features) {
  require(is_power_of_two(n_features), ErrorCode::invalid_hyperparameter,
          "feature codebook size " + std::to_string(n_features) + " is not a power of two");
  require(is_power_of_two(n_probes), ErrorCode::invalid_hyperparameter,
          "probing range " + std::to_string(n_probes) + " is not a power of two");
  require(n_probes <= n_features, ErrorCode::invalid_hyperparameter,
          "probing range " + std::to_string(n_probes) + " does not divide feature codebook size " +
              std::to_string(n_features));
}

/// ((n_probes * hash) mod n_features) + probe: the hash picks the high bits,
/// the probe offset the low log2(n_probes) bits.
inline std::uint32_t compose_probed_index(std::uint32_t hash, std::uint32_t probe, std::uint32_t n_probes,
                                          std::uint32_t n_features) {
  validate_probing(n_probes, n_features);
  require(probe < n_probes, ErrorCode::probe_out_of_range,
          "probe " + std::to_string(probe) + " outside [0, " + std::to_string(n_probes) + ")");
  return compose_probed_index_unchecked(hash, probe, n_probes, n_features);
}

}  // namespace cngp
