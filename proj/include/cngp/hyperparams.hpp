#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cngp/codebooks.hpp"
#include "cngp/error.hpp"
#include "cngp/grid.hpp"

namespace cngp {

enum class Probing : std::uint8_t {
  Learned,   ///< hash picks the high index bits, the index codebook the low ones
  Disabled,  ///< plain spatial hashing, f(v) = D_f[hash(v) mod N_f]
};

/// Model shape. Defaults are the recommended Table-1 style values for
/// image fitting: L = 16, F = 2, N_min = 16, N_max = 512, 64 hidden neurons.
struct HyperParams {
  std::uint32_t n_f = 1u << 8;
  std::uint32_t n_c = 1u << 16;
  std::uint32_t n_p = 1u << 2;
  std::uint32_t features = 2;
  std::uint32_t levels = 16;
  std::uint32_t n_min = 16;
  std::uint32_t n_max = 512;
  std::uint32_t neurons = 64;
  std::uint32_t hidden_layers = 2;
  Probing probing = Probing::Learned;

  bool probing_active() const noexcept { return probing == Probing::Learned; }
  std::uint32_t encoded_width() const noexcept { return levels * features; }

  bool operator==(const HyperParams&) const = default;

  void validate() const {
    auto pow2 = [](std::uint32_t v, const char* name) {
      require(is_power_of_two(v), ErrorCode::invalid_hyperparameter,
              std::string(name) + " = " + std::to_string(v) + " is not a power of two");
    };
    pow2(n_f, "n_f");
    pow2(n_c, "n_c");
    pow2(n_p, "n_p");
    require(n_p <= kMaxProbes, ErrorCode::invalid_hyperparameter,
            "n_p = " + std::to_string(n_p) + " exceeds the maximum probing range 16");
    require(n_p <= n_f, ErrorCode::invalid_hyperparameter,
            "n_p = " + std::to_string(n_p) + " does not divide n_f = " + std::to_string(n_f));
    require(n_f <= (1u << 24) && n_c <= (1u << 24), ErrorCode::invalid_hyperparameter,
            "codebook sizes are limited to 2^24 entries");
    require(features >= 1 && features <= 8, ErrorCode::invalid_hyperparameter, "features per level must be in [1, 8]");
    require(levels >= 1 && levels <= 32, ErrorCode::invalid_hyperparameter, "levels must be in [1, 32]");
    require(n_min >= 1 && n_max >= n_min, ErrorCode::invalid_hyperparameter,
            "resolutions must satisfy 1 <= n_min <= n_max");
    require(n_max <= (1u << 20), ErrorCode::invalid_hyperparameter, "n_max is limited to 2^20");
    require(neurons >= 1 && neurons <= 1024, ErrorCode::invalid_hyperparameter, "neurons must be in [1, 1024]");
    require(hidden_layers <= 8, ErrorCode::invalid_hyperparameter, "at most 8 hidden layers");
    require(probing_active() || n_p == 1, ErrorCode::invalid_hyperparameter,
            "n_p must be 1 when probing is disabled");
  }

  /// Human-readable notes for values outside the recommended ranges.
  std::vector<std::string> range_notes() const {
    std::vector<std::string> notes;
    if (n_f < (1u << 6) || n_f > (1u << 12)) notes.push_back("n_f outside recommended [2^6, 2^12]");
    if (probing_active() && n_p > 1 && (n_c < (1u << 10) || n_c > (1u << 24)))
      notes.push_back("n_c outside recommended [2^10, 2^24]");
    if (features != 2 || levels != 16 || n_min != 16) notes.push_back("inherited grid parameters differ from L=16, F=2, N_min=16");
    return notes;
  }
};

inline std::vector<std::uint32_t> layer_widths(const HyperParams& hp, std::uint32_t outputs = 3) {
  std::vector<std::uint32_t> widths{hp.encoded_width()};
  for (std::uint32_t i = 0; i < hp.hidden_layers; ++i) widths.push_back(hp.neurons);
  widths.push_back(outputs);
  return widths;
}

inline std::uint64_t mlp_param_count(const std::vector<std::uint32_t>& widths) {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    n += static_cast<std::uint64_t>(widths[i]) * widths[i + 1] + widths[i + 1];
  return n;
}

}  // namespace cngp
