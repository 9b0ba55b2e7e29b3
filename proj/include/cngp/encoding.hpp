#pragma once

// Multiresolution grid encoding psi(x; theta). Each level owns its feature
// codebook and, when hashed with learned probing, a confidence codebook and
// the baked index codebook derived from it. Per level, the 2^d enclosing
// corners are looked up, blended d-linearly and written to slot l of the
// L*F output vector.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cngp/codebooks.hpp"
#include "cngp/error.hpp"
#include "cngp/grid.hpp"
#include "cngp/hyperparams.hpp"
#include "cngp/parallel.hpp"

namespace cngp {

/// Hard uses the argmax probe (the real model). Soft uses the
/// softmax-weighted surrogate, only meaningful for gradient checking.
enum class LookupMode : std::uint8_t { Hard, Soft };

/// Table rows read by inference lookups: one baked index entry and one
/// feature row per hashed corner, one feature row per dense corner.
struct AccessCounter {
  std::uint64_t index_rows = 0;
  std::uint64_t feature_rows = 0;
  std::uint64_t total() const noexcept { return index_rows + feature_rows; }
};

template <class Scalar>
struct CornerTrace {
  std::uint32_t base = 0;  // feature row (dense, plain hash) or start of the probing range
  std::uint32_t row = 0;   // confidence row, probed levels only
  Scalar weight = Scalar(0);
};

template <class Scalar>
struct BatchTrace {
  std::size_t batch = 0;
  std::size_t corners = 0;
  std::vector<std::vector<CornerTrace<Scalar>>> levels;
  std::vector<std::uint64_t> feature_tags;
  std::vector<std::uint64_t> confidence_tags;
};

template <class Scalar>
struct EncodedVector {
  std::vector<Scalar> values;
  BatchTrace<Scalar> trace;
};

/// Per-level scratch for the backward pass. Corner hits are grouped by their
/// (probing range, confidence row) pair, which fixes every parameter the hit
/// touches, so upstream gradients are summed per group first. Groups are
/// chained per confidence row and visited in ascending row order, which keeps
/// table access close to sequential and computes each row's softmax once.
template <class Scalar>
struct ProbeAccumulator {
  static constexpr std::uint32_t kNone = 0xffffffffu;

  std::vector<std::uint64_t> heads;  // per row: epoch << 32 | first group
  std::vector<std::uint32_t> next;
  std::vector<std::uint32_t> base;
  std::vector<std::uint32_t> rows;   // rows with at least one group, first-touch order
  std::vector<Scalar> upstream;
  std::uint32_t width = 0;
  std::uint32_t epoch = 0;

  void begin(std::uint32_t n_rows, std::uint32_t w) {
    if (heads.size() != n_rows) {
      heads.assign(n_rows, 0);
      epoch = 0;
    }
    if (++epoch == 0) {
      std::fill(heads.begin(), heads.end(), 0);
      epoch = 1;
    }
    width = w;
    next.clear();
    base.clear();
    rows.clear();
    upstream.clear();
  }

  std::uint32_t head(std::uint32_t r) const noexcept {
    const std::uint64_t h = heads[r];
    return (h >> 32) == epoch ? static_cast<std::uint32_t>(h) : kNone;
  }

  /// Adds `g` (width entries) to the group of (b, r).
  void add(std::uint32_t b, std::uint32_t r, const Scalar* g) {
    const std::uint32_t first = head(r);
    for (std::uint32_t i = first; i != kNone; i = next[i]) {
      if (base[i] == b) {
        Scalar* sum = upstream.data() + static_cast<std::size_t>(i) * width;
        for (std::uint32_t k = 0; k < width; ++k) sum[k] += g[k];
        return;
      }
    }
    if (first == kNone) rows.push_back(r);
    const auto id = static_cast<std::uint32_t>(base.size());
    next.push_back(first);
    base.push_back(b);
    upstream.insert(upstream.end(), g, g + width);
    heads[r] = (static_cast<std::uint64_t>(epoch) << 32) | id;
  }

  /// Calls fn(row, group) for every group, rows ascending.
  template <class Fn>
  void visit(Fn&& fn) {
    auto chain = [&](std::uint32_t r) {
      for (std::uint32_t i = head(r); i != kNone; i = next[i]) fn(r, i);
    };
    if (rows.size() * 8 > heads.size()) {
      for (std::uint32_t r = 0; r < heads.size(); ++r)
        if ((heads[r] >> 32) == epoch) chain(r);
    } else {
      std::sort(rows.begin(), rows.end());
      for (const std::uint32_t r : rows) chain(r);
    }
  }
};

template <class Scalar>
struct EncodingLevel {
  LevelSpec spec;
  FeatureCodebook<Scalar> features;
  ConfidenceCodebook<Scalar> confidence;  // empty unless probed
  BakedIndexCodebook baked;               // empty unless probed
  bool probed = false;
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Independent generator per (seed, stream, index) so that adding or removing
/// one table never shifts the random numbers of another.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return std::mt19937_64(splitmix64(splitmix64(seed ^ splitmix64(stream)) + index));
}

enum RngStream : std::uint64_t {
  kFeatureStream = 0x66656174,
  kConfidenceStream = 0x636f6e66,
  kMlpStream = 0x6d6c70,
  kBatchStream = 0x62617463,
};

template <class Scalar, std::size_t Dim = 2>
class HashGridEncoding {
 public:
  using PointType = Point<Scalar, Dim>;
  static constexpr std::size_t kCorners = std::size_t{1} << Dim;

  HashGridEncoding() = default;

  /// Allocates every table. With `initialize`, features are drawn from
  /// U[-1e-4, 1e-4] and confidences from U[0, 1e-2]; otherwise all zero
  /// and confidence tables are left empty (inference-only models).
  HashGridEncoding(const HyperParams& hp, std::uint64_t seed, bool initialize = true) : hp_(hp) {
    hp_.validate();
    const auto specs = make_level_specs(hp_.levels, hp_.n_min, hp_.n_max, hp_.n_f, Dim);
    levels_.resize(specs.size());
    for (std::size_t l = 0; l < specs.size(); ++l) {
      EncodingLevel<Scalar>& level = levels_[l];
      level.spec = specs[l];
      level.features = FeatureCodebook<Scalar>(hp_.n_f, hp_.features);
      level.probed = hp_.probing_active() && level.spec.mode == IndexMode::Hashed;
      if (initialize) {
        auto rng = stream_rng(seed, kFeatureStream, l);
        level.features.table.fill_uniform(rng, Scalar(-1e-4), Scalar(1e-4));
      }
      if (level.probed) {
        level.baked.probes = hp_.n_p;
        level.baked.entries.assign(hp_.n_c, 0);
        if (initialize) {
          level.confidence = ConfidenceCodebook<Scalar>(hp_.n_c, hp_.n_p);
          auto rng = stream_rng(seed, kConfidenceStream, l);
          level.confidence.table.fill_uniform(rng, Scalar(0), Scalar(1e-2));
          level.baked = bake(level.confidence);
        }
      }
    }
  }

  const HyperParams& hyperparams() const noexcept { return hp_; }
  std::size_t output_width() const noexcept { return static_cast<std::size_t>(hp_.levels) * hp_.features; }
  std::span<EncodingLevel<Scalar>> levels() noexcept { return levels_; }
  std::span<const EncodingLevel<Scalar>> levels() const noexcept { return levels_; }

  bool has_confidences() const noexcept {
    for (const auto& level : levels_)
      if (level.probed && level.confidence.rows() == 0) return false;
    return true;
  }

  void rebake() {
    for (auto& level : levels_)
      if (level.probed && level.confidence.rows() > 0) level.baked = bake(level.confidence);
  }

  /// True when every baked index codebook equals the argmax of its confidences.
  bool baked_consistent() const {
    for (const auto& level : levels_) {
      if (!level.probed || level.confidence.rows() == 0) continue;
      if (bake(level.confidence) != level.baked) return false;
    }
    return true;
  }

  void clear_grads() {
    for (auto& level : levels_) {
      level.features.table.clear_grads();
      level.confidence.table.clear_grads();
    }
  }

  /// Forward pass over a batch. `out` is column-major (L*F) x batch.
  void forward(std::span<const PointType> xs, Scalar* out, BatchTrace<Scalar>& trace, const Executor& exec,
               LookupMode mode = LookupMode::Hard) const {
    const std::size_t batch = xs.size();
    trace.batch = batch;
    trace.corners = kCorners;
    trace.levels.resize(levels_.size());
    trace.feature_tags.resize(levels_.size());
    trace.confidence_tags.resize(levels_.size());
    if (mode == LookupMode::Soft) {
      require(has_confidences(), ErrorCode::invalid_argument, "soft lookups need confidence codebooks");
    }
    exec.parallel_for(levels_.size(), [&](std::size_t l) {
      const EncodingLevel<Scalar>& level = levels_[l];
      auto& corner_traces = trace.levels[l];
      corner_traces.resize(batch * kCorners);
      trace.feature_tags[l] = level.features.table.shape_tag();
      trace.confidence_tags[l] = level.confidence.table.shape_tag();
      const std::size_t stride = output_width();
      const std::size_t offset = l * hp_.features;
      for (std::size_t b = 0; b < batch; ++b) {
        gather_level(level, xs[b], out + b * stride + offset, corner_traces.data() + b * kCorners, mode,
                     nullptr);
      }
    });
  }

  /// Straight-through backward pass; accumulates into the codebook gradients.
  void backward(const BatchTrace<Scalar>& trace, const Scalar* upstream, const Executor& exec) {
    require(trace.levels.size() == levels_.size(), ErrorCode::stale_trace, "trace level count mismatch");
    require(has_confidences(), ErrorCode::invalid_argument, "inference-only encodings cannot be trained");
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      require(trace.feature_tags[l] == levels_[l].features.table.shape_tag() &&
                  trace.confidence_tags[l] == levels_[l].confidence.table.shape_tag(),
              ErrorCode::stale_trace, "codebooks of level " + std::to_string(l) + " changed since forward");
    }
    accumulators_.resize(levels_.size());
    exec.parallel_for(levels_.size(), [&](std::size_t l) {
      EncodingLevel<Scalar>& level = levels_[l];
      const auto& corner_traces = trace.levels[l];
      const std::size_t stride = output_width();
      const std::size_t offset = l * hp_.features;
      const std::uint32_t width = hp_.features;
      // With a single probe the softmax weight is exactly 1 and the
      // confidence gradient exactly 0, so it reduces to plain accumulation.
      const std::uint32_t probes = level.probed ? level.confidence.probes() : 1;
      const bool grouped = probes > 1;
      ProbeAccumulator<Scalar>& acc = accumulators_[l];
      if (grouped) acc.begin(level.confidence.rows(), width);
      std::array<Scalar, 8> scaled{};
      for (std::size_t b = 0; b < trace.batch; ++b) {
        const Scalar* g = upstream + b * stride + offset;
        bool any = false;
        for (std::uint32_t k = 0; k < width; ++k) any |= g[k] != Scalar(0);
        if (!any) continue;
        for (std::size_t c = 0; c < kCorners; ++c) {
          const CornerTrace<Scalar>& ct = corner_traces[b * kCorners + c];
          for (std::uint32_t k = 0; k < width; ++k) scaled[k] = ct.weight * g[k];
          if (grouped) {
            acc.add(ct.base, ct.row, scaled.data());
            continue;
          }
          Scalar* fg = level.features.table.grad_row(ct.base);
          for (std::uint32_t k = 0; k < width; ++k) fg[k] += scaled[k];
        }
      }
      if (!grouped) return;
      std::array<Scalar, kMaxProbes> weights{};
      std::uint32_t current = ProbeAccumulator<Scalar>::kNone;
      acc.visit([&](std::uint32_t row, std::uint32_t i) {
        if (row != current) {
          softmax(level.confidence.table.row(row), probes, weights.data());
          current = row;
        }
        accumulate_probe_gradient(acc.base[i], row, probes, weights.data(),
                                  acc.upstream.data() + static_cast<std::size_t>(i) * width, level.features,
                                  level.confidence);
      });
    });
  }

  EncodedVector<Scalar> encode_forward(const PointType& x, LookupMode mode = LookupMode::Hard) const {
    check_unit_point(x);
    EncodedVector<Scalar> encoded;
    encoded.values.assign(output_width(), Scalar(0));
    forward(std::span<const PointType>(&x, 1), encoded.values.data(), encoded.trace, Executor(1), mode);
    return encoded;
  }

  void encode_backward(const EncodedVector<Scalar>& encoded, std::span<const Scalar> upstream) {
    require(upstream.size() == output_width(), ErrorCode::shape_mismatch,
            "upstream gradient has " + std::to_string(upstream.size()) + " entries, expected " +
                std::to_string(output_width()));
    require(encoded.trace.batch == 1, ErrorCode::stale_trace, "trace does not hold a single sample");
    backward(encoded.trace, upstream.data(), Executor(1));
  }

  /// Inference lookup through the baked index codebooks. Touches only the
  /// table rows reachable from the corners of x.
  void infer(const PointType& x, Scalar* out, AccessCounter* counter = nullptr) const {
    std::array<CornerTrace<Scalar>, kCorners> scratch;
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      gather_level(levels_[l], x, out + l * hp_.features, scratch.data(), LookupMode::Hard, counter);
    }
  }

 private:
  void gather_level(const EncodingLevel<Scalar>& level, const PointType& x, Scalar* out,
                    CornerTrace<Scalar>* traces, LookupMode mode, AccessCounter* counter) const {
    const std::uint32_t width = hp_.features;
    for (std::uint32_t k = 0; k < width; ++k) out[k] = Scalar(0);
    const auto cs = enclosing_corners_unchecked<Scalar, Dim>(x, level.spec.resolution);
    const std::uint32_t feature_mask = level.features.size() - 1;
    for (std::size_t c = 0; c < kCorners; ++c) {
      const Vertex<Dim>& v = cs.corners[c];
      const Scalar w = cs.weights[c];
      CornerTrace<Scalar>& ct = traces[c];
      ct.weight = w;
      ct.row = 0;
      if (level.spec.mode == IndexMode::Dense) {
        ct.base = dense_index_unchecked(v, level.spec.resolution);
      } else if (!level.probed) {
        ct.base = spatial_hash(v, kHashPrimes.primary) & feature_mask;
      } else {
        ct.base = compose_probed_index_unchecked(spatial_hash(v, kHashPrimes.primary), 0, level.baked.probes,
                                                 level.features.size());
        ct.row = spatial_hash(v, kHashPrimes.auxiliary) & (level.baked.size() - 1);
        if (mode == LookupMode::Soft) {
          const std::uint32_t probes = level.confidence.probes();
          std::array<Scalar, kMaxProbes> weights{};
          softmax(level.confidence.table.row(ct.row), probes, weights.data());
          for (std::uint32_t j = 0; j < probes; ++j) {
            const Scalar* f = level.features.table.row(ct.base + j);
            for (std::uint32_t k = 0; k < width; ++k) out[k] += w * (weights[j] * f[k]);
          }
          continue;
        }
        if (counter) ++counter->index_rows;
        const Scalar* f = level.features.table.row(ct.base + level.baked.entries[ct.row]);
        if (counter) ++counter->feature_rows;
        for (std::uint32_t k = 0; k < width; ++k) out[k] += w * f[k];
        continue;
      }
      const Scalar* f = level.features.table.row(ct.base);
      if (counter) ++counter->feature_rows;
      for (std::uint32_t k = 0; k < width; ++k) out[k] += w * f[k];
    }
  }

  HyperParams hp_;
  std::vector<EncodingLevel<Scalar>> levels_;
  std::vector<ProbeAccumulator<Scalar>> accumulators_;
};

}  // namespace cngp
