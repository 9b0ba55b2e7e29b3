#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "cngp/encoding.hpp"
#include "cngp/error.hpp"
#include "cngp/hyperparams.hpp"
#include "cngp/image.hpp"
#include "cngp/mlp.hpp"
#include "cngp/parallel.hpp"

namespace cngp {

inline std::uint16_t float_to_half_bits(float v) noexcept { return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v)); }

inline float half_bits_to_float(std::uint16_t bits) noexcept {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

/// Rounds to the nearest half-precision value (ties to even).
inline float round_to_half(float v) noexcept { return half_bits_to_float(float_to_half_bits(v)); }

/// A fitted 2D image model: grid encoding plus decoder, and the pixel
/// dimensions of the image it represents.
template <class Scalar>
struct Model {
  HyperParams hp;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  HashGridEncoding<Scalar, 2> encoding;
  MlpParams<Scalar> mlp;

  static constexpr std::uint32_t kOutputs = 3;

  Point<Scalar, 2> pixel_center(std::uint32_t x, std::uint32_t y) const noexcept {
    return {(static_cast<Scalar>(x) + Scalar(0.5)) / static_cast<Scalar>(width),
            (static_cast<Scalar>(y) + Scalar(0.5)) / static_cast<Scalar>(height)};
  }

  /// Random-access query at a continuous coordinate in [0, 1]^2.
  std::array<Scalar, kOutputs> decode_at(const Point<Scalar, 2>& x, AccessCounter* counter = nullptr) const {
    check_unit_point(x);
    std::vector<Scalar> encoded(encoding.output_width());
    MlpScratch<Scalar> scratch(mlp);
    std::array<Scalar, kOutputs> out{};
    decode_into(x, encoded.data(), out.data(), scratch, counter);
    return out;
  }

  void decode_into(const Point<Scalar, 2>& x, Scalar* encoded, Scalar* out, MlpScratch<Scalar>& scratch,
                   AccessCounter* counter = nullptr) const {
    encoding.infer(x, encoded, counter);
    mlp_forward_into(encoded, mlp, out, scratch);
  }

  /// Decodes the pixel rectangle [x0, x1) x [y0, y1) of the represented image.
  Image decode_rect(std::uint32_t x0, std::uint32_t y0, std::uint32_t x1, std::uint32_t y1,
                    const Executor& exec = Executor(1)) const {
    require(x0 < x1 && y0 < y1, ErrorCode::invalid_argument,
            "rectangle [" + std::to_string(x0) + "," + std::to_string(x1) + ")x[" + std::to_string(y0) + "," +
                std::to_string(y1) + ") has zero area");
    require(x1 <= width && y1 <= height, ErrorCode::invalid_argument,
            "rectangle exceeds the " + std::to_string(width) + "x" + std::to_string(height) + " image");
    Image out(x1 - x0, y1 - y0);
    exec.parallel_for(out.height, [&](std::size_t row) {
      std::vector<Scalar> encoded(encoding.output_width());
      MlpScratch<Scalar> scratch(mlp);
      std::array<Scalar, kOutputs> rgb{};
      const std::uint32_t y = y0 + static_cast<std::uint32_t>(row);
      for (std::uint32_t x = x0; x < x1; ++x) {
        decode_into(pixel_center(x, y), encoded.data(), rgb.data(), scratch);
        for (std::uint32_t c = 0; c < kOutputs; ++c) out.at(x - x0, static_cast<std::uint32_t>(row), c) = static_cast<float>(rgb[c]);
      }
    });
    return out;
  }

  Image decode_image(const Executor& exec = Executor(1)) const { return decode_rect(0, 0, width, height, exec); }

  /// Replaces every stored parameter by its half-precision value.
  void quantize_to_half() {
    static_assert(std::is_same_v<Scalar, float>, "half quantization is defined for float models");
    for (auto& level : encoding.levels()) {
      for (Scalar& v : level.features.table.values()) v = round_to_half(v);
    }
    mlp.for_each_block([](std::span<Scalar> block) {
      for (Scalar& v : block) v = round_to_half(v);
    });
  }
};

}  // namespace cngp
