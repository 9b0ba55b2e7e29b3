#pragma once

// Trainable feature codebook D_f, training-time confidence codebook and its
// baked integer form, plus the straight-through lookup that ties them
// together: argmax in the forward pass, softmax-weighted gradients backward.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cngp/error.hpp"
#include "cngp/grid.hpp"

namespace cngp {

inline constexpr std::uint32_t kMaxProbes = 16;

namespace detail {
inline std::uint64_t next_shape_tag() noexcept {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// rows x cols parameter matrix with a gradient accumulator that remembers
/// which rows received contributions since the last clear.
template <class Scalar>
class ParamTable {
 public:
  ParamTable() = default;
  ParamTable(std::uint32_t rows, std::uint32_t cols) { resize(rows, cols); }

  void resize(std::uint32_t rows, std::uint32_t cols) {
    rows_ = rows;
    cols_ = cols;
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    values_.assign(n, Scalar(0));
    grads_.assign(n, Scalar(0));
    touched_.assign(rows, 0);
    touched_rows_.clear();
    shape_tag_ = detail::next_shape_tag();
  }

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }
  std::uint64_t shape_tag() const noexcept { return shape_tag_; }

  std::span<Scalar> values() noexcept { return values_; }
  std::span<const Scalar> values() const noexcept { return values_; }
  std::span<Scalar> grads() noexcept { return grads_; }
  std::span<const Scalar> grads() const noexcept { return grads_; }

  Scalar* row(std::uint32_t r) noexcept { return values_.data() + static_cast<std::size_t>(r) * cols_; }
  const Scalar* row(std::uint32_t r) const noexcept {
    return values_.data() + static_cast<std::size_t>(r) * cols_;
  }
  Scalar* grad_row(std::uint32_t r) noexcept {
    mark(r);
    return grads_.data() + static_cast<std::size_t>(r) * cols_;
  }
  const Scalar* grad_row_view(std::uint32_t r) const noexcept {
    return grads_.data() + static_cast<std::size_t>(r) * cols_;
  }

  void mark(std::uint32_t r) {
    if (!touched_[r]) {
      touched_[r] = 1;
      touched_rows_.push_back(r);
    }
  }

  /// Marks rows [first, first + count) and returns their gradient block.
  Scalar* grad_rows(std::uint32_t first, std::uint32_t count) noexcept {
    if (!touched_[first] || !touched_[first + count - 1])
      for (std::uint32_t r = first; r < first + count; ++r) mark(r);
    return grads_.data() + static_cast<std::size_t>(first) * cols_;
  }

  const std::vector<std::uint32_t>& touched_rows() const noexcept { return touched_rows_; }

  /// Calls fn(r) for every touched row, then zeroes its gradient and forgets
  /// it. Rows are visited in ascending order when most of the table was
  /// touched (a sequential scan) and in first-touch order otherwise.
  template <class Fn>
  void drain_touched(Fn&& fn) {
    auto finish = [&](std::uint32_t r) {
      fn(r);
      std::fill_n(grads_.data() + static_cast<std::size_t>(r) * cols_, cols_, Scalar(0));
      touched_[r] = 0;
    };
    if (touched_rows_.size() * 8 > rows_) {
      for (std::uint32_t r = 0; r < rows_; ++r)
        if (touched_[r]) finish(r);
    } else {
      for (const std::uint32_t r : touched_rows_) finish(r);
    }
    touched_rows_.clear();
  }

  /// Zeroes the gradients of every touched row and forgets the touched set.
  void clear_grads() {
    drain_touched([](std::uint32_t) {});
  }

  void fill_uniform(std::mt19937_64& rng, Scalar lo, Scalar hi) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (Scalar& v : values_) v = static_cast<Scalar>(dist(rng));
  }

 private:
  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<Scalar> values_;
  std::vector<Scalar> grads_;
  std::vector<std::uint8_t> touched_;
  std::vector<std::uint32_t> touched_rows_;
  std::uint64_t shape_tag_ = 0;
};

/// N_f x F feature vectors.
template <class Scalar>
struct FeatureCodebook {
  ParamTable<Scalar> table;

  FeatureCodebook() = default;
  FeatureCodebook(std::uint32_t entries, std::uint32_t width) : table(entries, width) {
    require(entries >= 1 && width >= 1, ErrorCode::invalid_hyperparameter, "empty feature codebook");
  }
  std::uint32_t size() const noexcept { return table.rows(); }
  std::uint32_t width() const noexcept { return table.cols(); }
  std::span<const Scalar> feature(std::uint32_t i) const noexcept { return {table.row(i), width()}; }
};

/// N_c x N_p confidence values used during training.
template <class Scalar>
struct ConfidenceCodebook {
  ParamTable<Scalar> table;

  ConfidenceCodebook() = default;
  ConfidenceCodebook(std::uint32_t rows, std::uint32_t probes) : table(rows, probes) {
    require(probes >= 1 && probes <= kMaxProbes && is_power_of_two(probes),
            ErrorCode::invalid_hyperparameter,
            "probing range " + std::to_string(probes) + " must be a power of two in [1, 16]");
    require(rows >= 1 && is_power_of_two(rows), ErrorCode::invalid_hyperparameter,
            "index codebook size " + std::to_string(rows) + " is not a power of two");
  }
  std::uint32_t rows() const noexcept { return table.rows(); }
  std::uint32_t probes() const noexcept { return table.cols(); }
  std::span<const Scalar> confidences(std::uint32_t r) const noexcept { return {table.row(r), probes()}; }
  Scalar& at(std::uint32_t r, std::uint32_t j) noexcept { return table.row(r)[j]; }
};

/// N_c probe offsets of log2(N_p) bits each.
struct BakedIndexCodebook {
  std::uint32_t probes = 1;
  std::vector<std::uint8_t> entries;

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(entries.size()); }
  std::uint32_t bits_per_entry() const noexcept { return log2_exact(probes); }
  bool operator==(const BakedIndexCodebook&) const = default;
};

/// Index of the largest value; ties resolve to the smallest index.
template <class Scalar>
inline std::uint32_t argmax_first(const Scalar* values, std::uint32_t n) noexcept {
  std::uint32_t best = 0;
  for (std::uint32_t j = 1; j < n; ++j) {
    if (values[j] > values[best]) best = j;
  }
  return best;
}

template <class Scalar>
using ProbeArray = Eigen::Array<Scalar, kMaxProbes, 1>;

/// Numerically stable softmax at temperature 1 over n <= 16 values.
template <class Scalar>
inline void softmax(const Scalar* values, std::uint32_t n, Scalar* out) noexcept {
  ProbeArray<Scalar> a;
  a.setConstant(std::numeric_limits<Scalar>::lowest());
  for (std::uint32_t j = 0; j < n; ++j) a[j] = values[j];
  ProbeArray<Scalar> e = (a - a.maxCoeff()).exp();
  for (std::uint32_t j = n; j < kMaxProbes; ++j) e[j] = Scalar(0);
  e *= Scalar(1) / e.sum();
  for (std::uint32_t j = 0; j < n; ++j) out[j] = e[j];
}

template <class Scalar>
inline void bake_rows(const ConfidenceCodebook<Scalar>& conf, std::span<const std::uint32_t> rows,
                      BakedIndexCodebook& baked) {
  for (const std::uint32_t r : rows) {
    baked.entries[r] = static_cast<std::uint8_t>(argmax_first(conf.table.row(r), conf.probes()));
  }
}

template <class Scalar>
inline BakedIndexCodebook bake(const ConfidenceCodebook<Scalar>& conf) {
  BakedIndexCodebook baked;
  baked.probes = conf.probes();
  baked.entries.resize(conf.rows());
  for (std::uint32_t r = 0; r < conf.rows(); ++r) {
    baked.entries[r] = static_cast<std::uint8_t>(argmax_first(conf.table.row(r), conf.probes()));
  }
  return baked;
}

/// Record of one probed lookup, consumed by probe_backward.
template <class Scalar>
struct ProbeTrace {
  std::uint32_t base = 0;
  std::uint32_t row = 0;
  std::uint32_t probe = 0;
  std::uint32_t probes = 1;
  std::array<Scalar, kMaxProbes> softmax{};
  std::uint64_t feature_tag = 0;
  std::uint64_t confidence_tag = 0;
};

template <class Scalar>
struct ProbeResult {
  std::span<const Scalar> feature;
  ProbeTrace<Scalar> trace;
};

template <class Scalar>
inline void check_probe_shapes(const FeatureCodebook<Scalar>& features,
                               const ConfidenceCodebook<Scalar>& conf) {
  validate_probing(conf.probes(), features.size());
}

template <class Scalar, std::size_t Dim>
inline ProbeResult<Scalar> probe_forward(const Vertex<Dim>& v, const FeatureCodebook<Scalar>& features,
                                         const ConfidenceCodebook<Scalar>& conf,
                                         const HashPrimes& primes = kHashPrimes) {
  check_probe_shapes(features, conf);
  ProbeTrace<Scalar> trace;
  trace.probes = conf.probes();
  trace.base = compose_probed_index_unchecked(spatial_hash(v, primes.primary), 0, trace.probes, features.size());
  trace.row = spatial_hash(v, primes.auxiliary) & (conf.rows() - 1);
  const Scalar* row = conf.table.row(trace.row);
  trace.probe = argmax_first(row, trace.probes);
  softmax(row, trace.probes, trace.softmax.data());
  trace.feature_tag = features.table.shape_tag();
  trace.confidence_tag = conf.table.shape_tag();
  return {features.feature(trace.base + trace.probe), trace};
}

/// Softmax-weighted feature sum over the probing range. This is the smooth
/// surrogate whose gradient probe_backward computes.
template <class Scalar, std::size_t Dim>
inline std::vector<Scalar> probe_surrogate(const Vertex<Dim>& v, const FeatureCodebook<Scalar>& features,
                                           const ConfidenceCodebook<Scalar>& conf,
                                           const HashPrimes& primes = kHashPrimes) {
  const ProbeResult<Scalar> r = probe_forward(v, features, conf, primes);
  std::vector<Scalar> out(features.width(), Scalar(0));
  for (std::uint32_t j = 0; j < r.trace.probes; ++j) {
    const auto f = features.feature(r.trace.base + j);
    for (std::uint32_t k = 0; k < features.width(); ++k) out[k] += r.trace.softmax[j] * f[k];
  }
  return out;
}

namespace detail {

template <std::uint32_t Width, std::uint32_t Probes, class Scalar>
inline void accumulate_probe_gradient_fixed(const Scalar* features, Scalar* feature_grads, Scalar* conf_grads,
                                            const Scalar* softmax, const Scalar* upstream) {
  constexpr std::uint32_t probes = Probes;
  std::array<Scalar, kMaxProbes> dots{};
  for (std::uint32_t j = 0; j < probes; ++j) {
    Scalar dot = Scalar(0);
    for (std::uint32_t k = 0; k < Width; ++k) dot += features[j * Width + k] * upstream[k];
    dots[j] = dot;
  }
  Scalar mean_dot = Scalar(0);
  for (std::uint32_t j = 0; j < probes; ++j) mean_dot += softmax[j] * dots[j];
  for (std::uint32_t j = 0; j < probes; ++j)
    for (std::uint32_t k = 0; k < Width; ++k) feature_grads[j * Width + k] += softmax[j] * upstream[k];
  for (std::uint32_t j = 0; j < probes; ++j) conf_grads[j] += softmax[j] * (dots[j] - mean_dot);
}

template <class Fn>
inline void dispatch_width(std::uint32_t width, Fn&& fn) {
  switch (width) {
    case 1: fn.template operator()<1>(); break;
    case 2: fn.template operator()<2>(); break;
    case 3: fn.template operator()<3>(); break;
    case 4: fn.template operator()<4>(); break;
    case 5: fn.template operator()<5>(); break;
    case 6: fn.template operator()<6>(); break;
    case 7: fn.template operator()<7>(); break;
    case 8: fn.template operator()<8>(); break;
    default: fail(ErrorCode::invalid_hyperparameter, "feature width " + std::to_string(width) + " unsupported");
  }
}

}  // namespace detail

/// Accumulates one corner's gradient into the probing range. `softmax` holds
/// the weights of the confidence row; `upstream` has F entries.
///   dL/dD_f[base + j] += s_j g
///   dL/dc[row][j]     += s_j (<D_f[base + j], g> - sum_k s_k <D_f[base + k], g>)
template <class Scalar>
inline void accumulate_probe_gradient(std::uint32_t base, std::uint32_t row, std::uint32_t probes,
                                      const Scalar* softmax, const Scalar* upstream,
                                      FeatureCodebook<Scalar>& features, ConfidenceCodebook<Scalar>& conf) {
  const Scalar* f = features.table.row(base);
  Scalar* fg = features.table.grad_rows(base, probes);
  Scalar* cg = conf.table.grad_row(row);
  detail::dispatch_width(features.width(), [&]<std::uint32_t W>() {
    switch (probes) {
      case 1: detail::accumulate_probe_gradient_fixed<W, 1>(f, fg, cg, softmax, upstream); break;
      case 2: detail::accumulate_probe_gradient_fixed<W, 2>(f, fg, cg, softmax, upstream); break;
      case 4: detail::accumulate_probe_gradient_fixed<W, 4>(f, fg, cg, softmax, upstream); break;
      case 8: detail::accumulate_probe_gradient_fixed<W, 8>(f, fg, cg, softmax, upstream); break;
      case 16: detail::accumulate_probe_gradient_fixed<W, 16>(f, fg, cg, softmax, upstream); break;
      default: fail(ErrorCode::invalid_hyperparameter, "probing range " + std::to_string(probes) + " unsupported");
    }
  });
}

template <class Scalar>
inline void probe_backward(const ProbeTrace<Scalar>& trace, std::span<const Scalar> upstream,
                           FeatureCodebook<Scalar>& features, ConfidenceCodebook<Scalar>& conf) {
  require(trace.feature_tag == features.table.shape_tag() && trace.confidence_tag == conf.table.shape_tag(),
          ErrorCode::stale_trace, "codebooks were reshaped after the forward lookup");
  require(upstream.size() == features.width(), ErrorCode::shape_mismatch,
          "upstream gradient has " + std::to_string(upstream.size()) + " entries, expected " +
              std::to_string(features.width()));
  accumulate_probe_gradient(trace.base, trace.row, trace.probes, trace.softmax.data(), upstream.data(),
                            features, conf);
}

template <class Scalar, std::size_t Dim>
inline std::span<const Scalar> infer_lookup(const Vertex<Dim>& v, const FeatureCodebook<Scalar>& features,
                                            const BakedIndexCodebook& baked,
                                            const HashPrimes& primes = kHashPrimes) {
  const std::uint32_t base =
      compose_probed_index_unchecked(spatial_hash(v, primes.primary), 0, baked.probes, features.size());
  const std::uint32_t row = spatial_hash(v, primes.auxiliary) & (baked.size() - 1);
  return features.feature(base + baked.entries[row]);
}

/// Plain spatial-hash lookup f(v) = D_f[hash(v) mod N_f] with no probing.
template <class Scalar, std::size_t Dim>
inline std::span<const Scalar> hash_lookup(const Vertex<Dim>& v, const FeatureCodebook<Scalar>& features,
                                           const HashPrimes& primes = kHashPrimes) {
  return features.feature(spatial_hash(v, primes.primary) & (features.size() - 1));
}

}  // namespace cngp
