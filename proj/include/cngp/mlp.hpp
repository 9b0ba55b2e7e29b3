#pragma once

// Small fully connected decoder m(y; Phi): ReLU hidden layers, linear (or
// optionally sigmoid) output. Batched passes run on Eigen matrices with one
// sample per column; the single-sample forward uses fixed-order loops so that
// every inference query rounds identically regardless of batching.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cngp/encoding.hpp"
#include "cngp/error.hpp"

namespace cngp {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct MlpParams {
  std::vector<Matrix<Scalar>> weights;  // layer i maps widths[i] -> widths[i + 1]
  std::vector<ColVector<Scalar>> biases;
  bool sigmoid_output = false;

  std::size_t layers() const noexcept { return weights.size(); }
  std::uint32_t input_width() const noexcept { return weights.empty() ? 0 : static_cast<std::uint32_t>(weights.front().cols()); }
  std::uint32_t output_width() const noexcept { return weights.empty() ? 0 : static_cast<std::uint32_t>(weights.back().rows()); }
  std::uint32_t max_width() const noexcept {
    std::uint32_t w = input_width();
    for (const auto& m : weights) w = std::max(w, static_cast<std::uint32_t>(m.rows()));
    return w;
  }

  std::vector<std::uint32_t> widths() const {
    std::vector<std::uint32_t> out;
    if (weights.empty()) return out;
    out.push_back(input_width());
    for (const auto& m : weights) out.push_back(static_cast<std::uint32_t>(m.rows()));
    return out;
  }

  std::size_t param_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (!weights[i].allFinite() || !biases[i].allFinite()) return false;
    return true;
  }

  /// Visits (weights, biases) of each layer as flat spans, in serialization order.
  template <class Fn>
  void for_each_block(Fn&& fn) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      fn(std::span<Scalar>(weights[i].data(), static_cast<std::size_t>(weights[i].size())));
      fn(std::span<Scalar>(biases[i].data(), static_cast<std::size_t>(biases[i].size())));
    }
  }
};

template <class Scalar>
MlpParams<Scalar> mlp_zeros(const std::vector<std::uint32_t>& widths) {
  require(widths.size() >= 2, ErrorCode::invalid_argument, "an MLP needs at least an input and an output width");
  MlpParams<Scalar> p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    require(widths[i] >= 1 && widths[i + 1] >= 1, ErrorCode::invalid_argument, "layer widths must be positive");
    p.weights.push_back(Matrix<Scalar>::Zero(widths[i + 1], widths[i]));
    p.biases.push_back(ColVector<Scalar>::Zero(widths[i + 1]));
  }
  return p;
}

/// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
template <class Scalar>
MlpParams<Scalar> mlp_init(std::uint64_t seed, const std::vector<std::uint32_t>& widths) {
  MlpParams<Scalar> p = mlp_zeros<Scalar>(widths);
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    auto rng = stream_rng(seed, kMlpStream, i);
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[i]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix<Scalar>& w = p.weights[i];
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(dist(rng));
  }
  return p;
}

template <class Scalar>
inline Scalar sigmoid(Scalar z) noexcept {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

/// Scratch space for allocation-free single-sample evaluation.
template <class Scalar>
struct MlpScratch {
  std::vector<Scalar> a, b;
  explicit MlpScratch(const MlpParams<Scalar>& p) : a(p.max_width()), b(p.max_width()) {}
};

template <class Scalar>
inline void mlp_forward_into(const Scalar* y, const MlpParams<Scalar>& params, Scalar* out,
                             MlpScratch<Scalar>& scratch) noexcept {
  const Scalar* in = y;
  Scalar* cur = scratch.a.data();
  Scalar* next = scratch.b.data();
  const std::size_t n_layers = params.layers();
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    const Matrix<Scalar>& w = params.weights[layer];
    const ColVector<Scalar>& bias = params.biases[layer];
    const bool last = layer + 1 == n_layers;
    Scalar* dst = last ? out : cur;
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      Scalar acc = bias(o);
      for (Eigen::Index i = 0; i < w.cols(); ++i) acc += w(o, i) * in[i];
      if (!last) {
        acc = acc > Scalar(0) ? acc : Scalar(0);
      } else if (params.sigmoid_output) {
        acc = sigmoid(acc);
      }
      dst[o] = acc;
    }
    in = dst;
    std::swap(cur, next);
  }
}

template <class Scalar>
std::vector<Scalar> mlp_forward(std::span<const Scalar> y, const MlpParams<Scalar>& params) {
  require(!params.weights.empty(), ErrorCode::shape_mismatch, "MLP has no layers");
  require(y.size() == params.input_width(), ErrorCode::shape_mismatch,
          "input has " + std::to_string(y.size()) + " entries, first layer expects " +
              std::to_string(params.input_width()));
  std::vector<Scalar> out(params.output_width());
  MlpScratch<Scalar> scratch(params);
  mlp_forward_into(y.data(), params, out.data(), scratch);
  return out;
}

template <class Scalar>
struct MlpGradients {
  std::vector<Matrix<Scalar>> weights;
  std::vector<ColVector<Scalar>> biases;
  std::vector<Scalar> input;

  static MlpGradients zeros_like(const MlpParams<Scalar>& p) {
    MlpGradients g;
    for (std::size_t i = 0; i < p.layers(); ++i) {
      g.weights.push_back(Matrix<Scalar>::Zero(p.weights[i].rows(), p.weights[i].cols()));
      g.biases.push_back(ColVector<Scalar>::Zero(p.biases[i].size()));
    }
    return g;
  }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }

  void add(const MlpGradients& other) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] += other.weights[i];
      biases[i] += other.biases[i];
    }
  }
};

/// Activations retained by a batched forward pass. outputs[i] is the result
/// of layer i (post ReLU for hidden layers, final output for the last).
template <class Scalar>
struct MlpBatchState {
  std::vector<Matrix<Scalar>> outputs;
  Matrix<Scalar> delta, delta_prev;
};

template <class Scalar, class InputExpr>
void mlp_forward_batch(const MlpParams<Scalar>& params, const InputExpr& input, MlpBatchState<Scalar>& state) {
  const std::size_t n_layers = params.layers();
  state.outputs.resize(n_layers);
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    Matrix<Scalar>& out = state.outputs[layer];
    if (layer == 0) {
      out.noalias() = params.weights[0] * input;
    } else {
      out.noalias() = params.weights[layer] * state.outputs[layer - 1];
    }
    out.colwise() += params.biases[layer];
    if (layer + 1 < n_layers) {
      out = out.cwiseMax(Scalar(0));
    } else if (params.sigmoid_output) {
      out = out.unaryExpr([](Scalar z) { return sigmoid(z); });
    }
  }
}

/// Backward pass for a batch. Parameter gradients are added into `grads`;
/// the gradient with respect to the input is written into `input_grad`.
template <class Scalar, class InputExpr, class InputGradExpr>
void mlp_backward_batch(const MlpParams<Scalar>& params, const InputExpr& input, MlpBatchState<Scalar>& state,
                        const Matrix<Scalar>& output_grad, MlpGradients<Scalar>& grads, InputGradExpr&& input_grad) {
  const std::size_t n_layers = params.layers();
  state.delta = output_grad;
  if (params.sigmoid_output) {
    const Matrix<Scalar>& y = state.outputs.back();
    state.delta.array() *= y.array() * (Scalar(1) - y.array());
  }
  for (std::size_t layer = n_layers; layer-- > 0;) {
    if (layer == 0) {
      grads.weights[0].noalias() += state.delta * input.transpose();
    } else {
      grads.weights[layer].noalias() += state.delta * state.outputs[layer - 1].transpose();
    }
    grads.biases[layer] += state.delta.rowwise().sum();
    if (layer == 0) {
      input_grad.noalias() = params.weights[0].transpose() * state.delta;
    } else {
      state.delta_prev.noalias() = params.weights[layer].transpose() * state.delta;
      state.delta_prev.array() *= (state.outputs[layer - 1].array() > Scalar(0)).template cast<Scalar>();
      std::swap(state.delta, state.delta_prev);
    }
  }
}

template <class Scalar>
MlpGradients<Scalar> mlp_backward(std::span<const Scalar> y, const MlpParams<Scalar>& params,
                                  std::span<const Scalar> upstream) {
  require(!params.weights.empty(), ErrorCode::shape_mismatch, "MLP has no layers");
  require(y.size() == params.input_width(), ErrorCode::shape_mismatch,
          "input has " + std::to_string(y.size()) + " entries, first layer expects " +
              std::to_string(params.input_width()));
  require(upstream.size() == params.output_width(), ErrorCode::shape_mismatch,
          "upstream gradient has " + std::to_string(upstream.size()) + " entries, output has " +
              std::to_string(params.output_width()));
  const Eigen::Map<const Matrix<Scalar>> input(y.data(), y.size(), 1);
  MlpBatchState<Scalar> state;
  mlp_forward_batch(params, input, state);
  MlpGradients<Scalar> grads = MlpGradients<Scalar>::zeros_like(params);
  const Matrix<Scalar> out_grad = Eigen::Map<const Matrix<Scalar>>(upstream.data(), upstream.size(), 1);
  Matrix<Scalar> in_grad(y.size(), 1);
  mlp_backward_batch(params, input, state, out_grad, grads, in_grad);
  grads.input.assign(in_grad.data(), in_grad.data() + in_grad.size());
  return grads;
}

}  // namespace cngp
