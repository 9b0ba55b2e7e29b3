#pragma once

// End-to-end fitting of an image. One training step samples a batch of
// pixel centers, runs encoding and decoder forward, takes the mean squared
// error against the target colors, back-propagates through the decoder and
// the straight-through lookups, applies Adam to every parameter that
// received gradient, and re-bakes the index codebook rows that changed.
//
// Determinism: the decoder runs in fixed 1024-sample chunks whose parameter
// gradients are reduced in chunk order, and each grid level is owned by one
// worker during the backward pass, so results are bit-identical for any
// thread count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cngp/adam.hpp"
#include "cngp/encoding.hpp"
#include "cngp/error.hpp"
#include "cngp/hyperparams.hpp"
#include "cngp/image.hpp"
#include "cngp/metrics.hpp"
#include "cngp/mlp.hpp"
#include "cngp/model.hpp"
#include "cngp/model_io.hpp"
#include "cngp/parallel.hpp"

namespace cngp {

struct TrainConfig {
  std::uint32_t batch_size = 1u << 14;
  std::uint32_t steps = 10000;
  AdamConfig adam;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::uint32_t log_every = 100;
  /// Verify baked == bake(confidences) every N steps (0 disables).
  std::uint32_t bake_check_every = 0;
  bool sigmoid_output = false;

  void validate() const {
    require(batch_size >= 1, ErrorCode::invalid_argument, "batch size must be at least 1");
    require(adam.learning_rate >= 0.0 && std::isfinite(adam.learning_rate), ErrorCode::invalid_argument,
            "learning rate must be finite and non-negative");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
            ErrorCode::invalid_argument, "Adam betas must lie in [0, 1)");
    require(adam.epsilon >= 0.0, ErrorCode::invalid_argument, "Adam epsilon must be non-negative");
  }
};

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double ms_per_step = 0.0;
  bool final = false;
};

inline constexpr std::size_t kMlpChunk = 1024;

template <class Scalar>
class Trainer {
 public:
  Trainer(const HyperParams& hp, const TrainConfig& cfg, std::uint32_t width, std::uint32_t height)
      : cfg_(cfg), exec_(cfg.threads), rng_(stream_rng(cfg.seed, kBatchStream)) {
    cfg_.validate();
    hp.validate();
    require(width >= 1 && height >= 1, ErrorCode::invalid_argument, "image must not be empty");
    model_.hp = hp;
    model_.width = width;
    model_.height = height;
    model_.encoding = HashGridEncoding<Scalar, 2>(hp, cfg.seed);
    model_.mlp = mlp_init<Scalar>(cfg.seed, layer_widths(hp));
    model_.mlp.sigmoid_output = cfg.sigmoid_output;

    for (std::size_t i = 0; i < model_.mlp.layers(); ++i) {
      mlp_moments_.emplace_back(static_cast<std::size_t>(model_.mlp.weights[i].size()));
      mlp_moments_.emplace_back(static_cast<std::size_t>(model_.mlp.biases[i].size()));
    }
    for (const auto& level : model_.encoding.levels()) {
      feature_moments_.emplace_back(level.features.table.values().size());
      confidence_moments_.emplace_back(level.confidence.table.values().size());
    }
    mlp_grads_ = MlpGradients<Scalar>::zeros_like(model_.mlp);
  }

  Model<Scalar>& model() noexcept { return model_; }
  const Model<Scalar>& model() const noexcept { return model_; }
  std::uint64_t step() const noexcept { return step_; }
  const TrainConfig& config() const noexcept { return cfg_; }

  /// One optimization step; returns the batch loss measured before the update.
  double train_step(const Image& image) {
    require(image.width == model_.width && image.height == model_.height, ErrorCode::dimension_mismatch,
            "image size differs from the model");
    const std::size_t batch = cfg_.batch_size;
    const std::size_t width = model_.encoding.output_width();
    sample_batch(image, batch);

    encoded_.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(batch));
    encoded_grad_.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(batch));
    model_.encoding.forward(points_, encoded_.data(), trace_, exec_);

    const std::size_t chunks = (batch + kMlpChunk - 1) / kMlpChunk;
    if (chunk_states_.size() < chunks) {
      chunk_states_.resize(chunks);
      chunk_grads_.resize(chunks, MlpGradients<Scalar>::zeros_like(model_.mlp));
      chunk_loss_.resize(chunks);
      chunk_out_grad_.resize(chunks);
    }
    const Scalar grad_scale = static_cast<Scalar>(2.0 / (static_cast<double>(batch) * Model<Scalar>::kOutputs));
    exec_.parallel_for(chunks, [&](std::size_t c) {
      const auto begin = static_cast<Eigen::Index>(c * kMlpChunk);
      const auto count = static_cast<Eigen::Index>(std::min(kMlpChunk, batch - c * kMlpChunk));
      const auto input = encoded_.middleCols(begin, count);
      MlpBatchState<Scalar>& state = chunk_states_[c];
      mlp_forward_batch(model_.mlp, input, state);
      Matrix<Scalar>& out_grad = chunk_out_grad_[c];
      out_grad = state.outputs.back() - targets_.middleCols(begin, count);
      chunk_loss_[c] = out_grad.template cast<double>().squaredNorm();
      out_grad *= grad_scale;
      chunk_grads_[c].set_zero();
      mlp_backward_batch(model_.mlp, input, state, out_grad, chunk_grads_[c], encoded_grad_.middleCols(begin, count));
    });

    double loss = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) loss += chunk_loss_[c];
    loss /= static_cast<double>(batch) * Model<Scalar>::kOutputs;
    if (!std::isfinite(loss)) {
      model_.encoding.clear_grads();
      fail(ErrorCode::non_finite_loss, "loss became non-finite at step " + std::to_string(step_ + 1));
    }

    mlp_grads_.set_zero();
    for (std::size_t c = 0; c < chunks; ++c) mlp_grads_.add(chunk_grads_[c]);
    model_.encoding.backward(trace_, encoded_grad_.data(), exec_);

    ++step_;
    apply_adam();

    if (cfg_.bake_check_every != 0 && step_ % cfg_.bake_check_every == 0) {
      require(model_.encoding.baked_consistent(), ErrorCode::invariant_violation,
              "baked index codebook diverged from confidences at step " + std::to_string(step_));
    }
    return loss;
  }

 private:
  void sample_batch(const Image& image, std::size_t batch) {
    points_.resize(batch);
    targets_.resize(Model<Scalar>::kOutputs, static_cast<Eigen::Index>(batch));
    std::uniform_int_distribution<std::uint64_t> pick(0, image.pixel_count() - 1);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::uint64_t p = pick(rng_);
      const auto x = static_cast<std::uint32_t>(p % image.width);
      const auto y = static_cast<std::uint32_t>(p / image.width);
      points_[b] = model_.pixel_center(x, y);
      for (std::uint32_t c = 0; c < Model<Scalar>::kOutputs; ++c)
        targets_(c, static_cast<Eigen::Index>(b)) = static_cast<Scalar>(image.rgb[p * 3 + c]);
    }
  }

  void apply_adam() {
    std::size_t block = 0;
    model_.mlp.for_each_block([&](std::span<Scalar> params) {
      const std::size_t layer = block / 2;
      const Scalar* g = block % 2 == 0 ? mlp_grads_.weights[layer].data() : mlp_grads_.biases[layer].data();
      adam_update(params, std::span<const Scalar>(g, params.size()), mlp_moments_[block], cfg_.adam, step_);
      ++block;
    });

    auto levels = model_.encoding.levels();
    exec_.parallel_for(levels.size(), [&](std::size_t l) {
      auto& level = levels[l];
      adam_update_sparse(level.features.table, feature_moments_[l], cfg_.adam, step_);
      if (level.probed) {
        const std::uint32_t probes = level.confidence.probes();
        adam_update_sparse(level.confidence.table, confidence_moments_[l], cfg_.adam, step_, [&](std::uint32_t r) {
          level.baked.entries[r] = static_cast<std::uint8_t>(argmax_first(level.confidence.table.row(r), probes));
        });
      }
      level.confidence.table.clear_grads();
    });
  }

  TrainConfig cfg_;
  Executor exec_;
  std::mt19937_64 rng_;
  Model<Scalar> model_;
  std::uint64_t step_ = 0;

  std::vector<Point<Scalar, 2>> points_;
  Matrix<Scalar> targets_;
  Matrix<Scalar> encoded_;
  Matrix<Scalar> encoded_grad_;
  BatchTrace<Scalar> trace_;
  std::vector<MlpBatchState<Scalar>> chunk_states_;
  std::vector<MlpGradients<Scalar>> chunk_grads_;
  std::vector<Matrix<Scalar>> chunk_out_grad_;
  std::vector<double> chunk_loss_;
  MlpGradients<Scalar> mlp_grads_;

  std::vector<AdamMoments<Scalar>> mlp_moments_;
  std::vector<AdamMoments<Scalar>> feature_moments_;
  std::vector<AdamMoments<Scalar>> confidence_moments_;
};

struct FitResult {
  Model<float> model;  // parameters rounded to half precision, as stored on disk
  double final_psnr = 0.0;
  double final_loss = 0.0;
  std::uint32_t steps = 0;
  double train_ms = 0.0;
  double ms_per_step = 0.0;
  SizeReport size;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

/// Trains for cfg.steps steps, rounds the parameters to half precision and
/// reports PSNR of the full decoded image against `image`.
inline FitResult fit(const Image& image, const HyperParams& hp, const TrainConfig& cfg,
                     const MetricsSink& sink = {}) {
  Trainer<float> trainer(hp, cfg, image.width, image.height);
  FitResult result;
  result.size = size_report(hp);
  using clock = std::chrono::steady_clock;
  double total_ms = 0.0;
  double window_ms = 0.0;
  std::uint32_t window_steps = 0;
  double loss = 0.0;
  for (std::uint32_t s = 0; s < cfg.steps; ++s) {
    const auto start = clock::now();
    loss = trainer.train_step(image);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    total_ms += ms;
    window_ms += ms;
    ++window_steps;
    if (sink && cfg.log_every != 0 && (trainer.step() % cfg.log_every == 0 || s + 1 == cfg.steps)) {
      sink({trainer.step(), loss, psnr_from_mse(loss), window_ms / window_steps, false});
      window_ms = 0.0;
      window_steps = 0;
    }
  }
  result.model = std::move(trainer.model());
  result.model.quantize_to_half();
  result.steps = cfg.steps;
  result.final_loss = loss;
  result.train_ms = total_ms;
  result.ms_per_step = cfg.steps ? total_ms / cfg.steps : 0.0;
  const Image decoded = result.model.decode_image(Executor(cfg.threads));
  result.final_psnr = psnr(image, decoded);
  if (sink) sink({result.steps, mse(image, decoded), result.final_psnr, result.ms_per_step, true});
  return result;
}

inline constexpr std::uint32_t kSelectMinFeatures = 1u << 6;
inline constexpr std::uint32_t kSelectMinIndex = 1u << 10;
inline constexpr std::uint32_t kSelectMaxIndex = 1u << 16;
inline constexpr std::uint32_t kSelectMaxFeatures = 1u << 24;

/// Shape used by select_hyperparams when the caller gives none: the
/// inherited grid parameters with the smallest probing range.
inline HyperParams selection_defaults() {
  HyperParams hp;
  hp.n_p = 2;
  return hp;
}

/// Picks N_f and N_c for a byte budget (total file size). Starting from the
/// smallest legal configuration, N_f is set so that the feature codebooks
/// take roughly a third of the grid budget, N_c is doubled up to 2^16, and
/// only then is N_f doubled further. N_p and the inherited parameters come
/// from `shape`. `history`, when given, receives every accepted configuration.
inline HyperParams select_hyperparams(std::uint64_t target_bytes, const HyperParams& shape = selection_defaults(),
                                      std::vector<HyperParams>* history = nullptr) {
  HyperParams hp = shape;
  hp.probing = Probing::Learned;
  hp.n_f = std::max(kSelectMinFeatures, hp.n_p);
  hp.n_c = kSelectMinIndex;
  hp.validate();
  const std::uint64_t floor_bytes = size_report(hp).total();
  if (floor_bytes > target_bytes) {
    fail(ErrorCode::target_too_small, "target of " + std::to_string(target_bytes) +
                                          " bytes is below the smallest model (" + std::to_string(floor_bytes) +
                                          " bytes)");
  }
  auto total = [](const HyperParams& p) { return size_report(p).total(); };
  auto record = [&](const HyperParams& p) {
    if (history) history->push_back(p);
  };
  record(hp);

  auto fill_index = [&](HyperParams p) {
    while (p.n_c < kSelectMaxIndex) {
      HyperParams next = p;
      next.n_c *= 2;
      if (total(next) > target_bytes) break;
      p = next;
    }
    return p;
  };
  auto split_error = [](const HyperParams& p) {
    const SizeReport s = size_report(p);
    if (s.indices == 0) return std::numeric_limits<double>::infinity();
    return std::abs(std::log2(static_cast<double>(s.features) / static_cast<double>(s.indices) / 0.5));
  };

  // Feature codebook from the budget: a third of what the grid may use.
  const SizeReport floor_sizes = size_report(hp);
  const std::uint64_t grid_budget = target_bytes - floor_sizes.header - floor_sizes.mlp;
  HyperParams lower = hp;
  while (lower.n_f < kSelectMaxFeatures) {
    HyperParams next = lower;
    next.n_f *= 2;
    if (size_report(next).features * 3 > grid_budget || total(next) > target_bytes) break;
    lower = next;
  }
  HyperParams best = fill_index(lower);
  HyperParams upper = lower;
  upper.n_f *= 2;
  if (upper.n_f <= kSelectMaxFeatures && total(upper) <= target_bytes) {
    const HyperParams candidate = fill_index(upper);
    if (split_error(candidate) < split_error(best)) best = candidate;
  }
  HyperParams chosen = best;
  chosen.n_c = hp.n_c;
  if (chosen.n_f != hp.n_f) record(chosen);
  while (chosen.n_c < best.n_c) {
    chosen.n_c *= 2;
    record(chosen);
  }

  // Past the index codebook cap, spend the rest on features.
  if (chosen.n_c == kSelectMaxIndex) {
    while (chosen.n_f < kSelectMaxFeatures) {
      HyperParams next = chosen;
      next.n_f *= 2;
      if (total(next) > target_bytes) break;
      chosen = next;
      record(chosen);
    }
  }
  return chosen;
}

}  // namespace cngp
