#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cngp/error.hpp"
#include "cngp/image.hpp"

namespace cngp {

/// Mean squared error over all pixels and channels.
inline double mse(const Image& reference, const Image& test) {
  require(reference.width == test.width && reference.height == test.height, ErrorCode::dimension_mismatch,
          std::to_string(reference.width) + "x" + std::to_string(reference.height) + " vs " +
              std::to_string(test.width) + "x" + std::to_string(test.height));
  require(!reference.rgb.empty(), ErrorCode::dimension_mismatch, "empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.rgb.size(); ++i) {
    const double d = static_cast<double>(reference.rgb[i]) - static_cast<double>(test.rgb[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(reference.rgb.size());
}

/// 20 log10(1 / sqrt(mse)) on normalized values; identical images give +inf.
inline double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse_value);
}

inline double psnr(const Image& reference, const Image& test) { return psnr_from_mse(mse(reference, test)); }

/// A (size, quality) measurement.
struct ParetoPoint {
  double size = 0.0;
  double quality = 0.0;
};

/// a dominates b when it is no larger, no worse, and strictly better in one.
inline bool dominates(const ParetoPoint& a, const ParetoPoint& b) noexcept {
  return a.size <= b.size && a.quality >= b.quality && (a.size < b.size || a.quality > b.quality);
}

/// Indices of the non-dominated points, in input order. Sort by size, then
/// sweep keeping points that beat the best quality seen at strictly smaller
/// sizes; equal-size groups keep only their best quality.
inline std::vector<std::size_t> pareto_front_indices(const std::vector<ParetoPoint>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].size != points[b].size) return points[a].size < points[b].size;
    return points[a].quality > points[b].quality;
  });
  std::vector<std::size_t> keep;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < order.size()) {
    const double size = points[order[i]].size;
    const double group_best = points[order[i]].quality;
    std::size_t j = i;
    for (; j < order.size() && points[order[j]].size == size; ++j) {
      if (points[order[j]].quality == group_best && group_best > best) keep.push_back(order[j]);
    }
    best = std::max(best, group_best);
    i = j;
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

template <class T, class Projection>
std::vector<T> pareto_front(const std::vector<T>& items, Projection&& project) {
  std::vector<ParetoPoint> pts;
  pts.reserve(items.size());
  for (const T& item : items) pts.push_back(project(item));
  std::vector<T> out;
  for (const std::size_t i : pareto_front_indices(pts)) out.push_back(items[i]);
  return out;
}

}  // namespace cngp
