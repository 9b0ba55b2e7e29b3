#pragma once

// Helpers shared by the unit suites and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cngp/cngp.hpp"

namespace cngp::testing {

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

template <class Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(-1);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cngp_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Image random_image(std::uint32_t w, std::uint32_t h, std::uint64_t seed) {
  Image img(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.rgb) v = u(rng);
  return img;
}

/// Smooth synthetic test card: gradients, rings and a few hard edges.
inline Image test_card(std::uint32_t w, std::uint32_t h) {
  Image img(w, h);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const float u = (x + 0.5f) / w, v = (y + 0.5f) / h;
      const float r = std::sqrt((u - 0.5f) * (u - 0.5f) + (v - 0.5f) * (v - 0.5f));
      img.at(x, y, 0) = 0.5f + 0.5f * std::sin(12.0f * r);
      img.at(x, y, 1) = u;
      img.at(x, y, 2) = (u > 0.6f && v < 0.4f) ? 0.9f : 0.2f * v;
    }
  }
  return img;
}

/// Independent scalar re-implementation of the encoding, straight from the
/// lookup definitions; shares no code with HashGridEncoding beyond the tables.
inline std::vector<double> oracle_encode(const HashGridEncoding<double, 2>& enc, double x0, double x1) {
  const HyperParams& hp = enc.hyperparams();
  std::vector<double> out;
  auto hash = [](std::int64_t a, std::int64_t b, std::uint64_t p1) {
    const std::uint64_t m = 1ull << 32;
    return static_cast<std::uint32_t>(((static_cast<std::uint64_t>(a) * 1u) % m) ^ ((static_cast<std::uint64_t>(b) * p1) % m));
  };
  for (const auto& level : enc.levels()) {
    const double res = level.spec.resolution;
    double cx = std::floor(x0 * res), cy = std::floor(x1 * res);
    if (cx >= res) cx = res - 1;
    if (cy >= res) cy = res - 1;
    const double tx = x0 * res - cx, ty = x1 * res - cy;
    std::vector<double> acc(hp.features, 0.0);
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const auto vx = static_cast<std::int64_t>(cx) + dx, vy = static_cast<std::int64_t>(cy) + dy;
        const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty);
        std::uint64_t idx;
        if ((level.spec.resolution + 1.0) * (level.spec.resolution + 1.0) <= hp.n_f) {
          idx = static_cast<std::uint64_t>(vx + vy * (level.spec.resolution + 1));
        } else if (!level.probed) {
          idx = hash(vx, vy, 2654435761u) % hp.n_f;
        } else {
          const std::uint64_t base = (static_cast<std::uint64_t>(hp.n_p) * hash(vx, vy, 2654435761u)) % hp.n_f;
          const std::uint64_t row = hash(vx, vy, 3674653429u) % hp.n_c;
          std::uint32_t best = 0;
          for (std::uint32_t j = 1; j < hp.n_p; ++j)
            if (level.confidence.table.row(static_cast<std::uint32_t>(row))[j] >
                level.confidence.table.row(static_cast<std::uint32_t>(row))[best])
              best = j;
          idx = base + best;
        }
        for (std::uint32_t k = 0; k < hp.features; ++k)
          acc[k] += w * level.features.table.row(static_cast<std::uint32_t>(idx))[k];
      }
    }
    out.insert(out.end(), acc.begin(), acc.end());
  }
  return out;
}

/// Random legal shape, seeded; exercises dense, hashed, probed and
/// probing-disabled levels, odd image sizes and both output activations.
inline Model<float> random_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::uint32_t lo, std::uint32_t hi) { return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng); };
  HyperParams hp;
  hp.n_f = 1u << pick(4, 10);
  hp.n_p = std::min(1u << pick(0, 4), hp.n_f);
  hp.n_c = 1u << pick(0, 12);
  hp.probing = (hp.n_p == 1 && pick(0, 1) == 0) ? Probing::Disabled : Probing::Learned;
  hp.features = pick(1, 4);
  hp.levels = pick(1, 6);
  hp.n_min = pick(1, 16);
  hp.n_max = hp.n_min + pick(0, 200);
  hp.neurons = pick(1, 32);
  hp.hidden_layers = pick(0, 3);
  Model<float> m;
  m.hp = hp;
  m.width = pick(1, 90);
  m.height = pick(1, 90);
  m.encoding = HashGridEncoding<float, 2>(hp, seed);
  for (auto& level : m.encoding.levels()) {
    auto r = stream_rng(seed, 99, level.spec.level);
    level.features.table.fill_uniform(r, -1.0f, 1.0f);
  }
  m.mlp = mlp_init<float>(seed, layer_widths(hp));
  m.mlp.sigmoid_output = pick(0, 1) == 1;
  return m;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
  std::string worst;
};

/// Full pipeline (grid features, confidences, decoder) on an 8x8 image with
/// L=2, N_f=16, N_p=4, N_c=8, in double precision. The surrogate replaces
/// each argmax lookup by its softmax-weighted probe range; analytic
/// gradients come from the regular backward passes.
inline GradCheckResult full_pipeline_gradcheck(std::uint64_t seed) {
  HyperParams hp;
  hp.n_f = 16;
  hp.n_c = 8;
  hp.n_p = 4;
  hp.features = 2;
  hp.levels = 2;
  hp.n_min = 2;  // level 0 dense (3x3 vertices), level 1 hashed and probed
  hp.n_max = 8;
  hp.neurons = 16;
  hp.hidden_layers = 2;

  const Image image = random_image(8, 8, seed + 100);
  HashGridEncoding<double, 2> enc(hp, seed);
  std::mt19937_64 rng(seed);
  for (auto& level : enc.levels()) {
    level.features.table.fill_uniform(rng, -0.5, 0.5);
    if (level.probed) level.confidence.table.fill_uniform(rng, -1.0, 1.0);
  }
  enc.rebake();
  MlpParams<double> mlp = mlp_init<double>(seed, layer_widths(hp));
  for (auto& b : mlp.biases) b.setConstant(0.05);

  std::vector<Point<double, 2>> points;
  Matrix<double> targets(3, static_cast<Eigen::Index>(image.pixel_count()));
  for (std::uint32_t y = 0; y < 8; ++y)
    for (std::uint32_t x = 0; x < 8; ++x) {
      points.push_back({(x + 0.5) / 8.0, (y + 0.5) / 8.0});
      for (std::uint32_t c = 0; c < 3; ++c) targets(c, static_cast<Eigen::Index>(points.size() - 1)) = image.at(x, y, c);
    }
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto width = static_cast<Eigen::Index>(enc.output_width());

  auto loss = [&]() {
    Matrix<double> encoded(width, n);
    BatchTrace<double> trace;
    enc.forward(points, encoded.data(), trace, Executor(1), LookupMode::Soft);
    MlpBatchState<double> state;
    mlp_forward_batch(mlp, encoded, state);
    return (state.outputs.back() - targets).squaredNorm() / static_cast<double>(n * 3);
  };

  Matrix<double> encoded(width, n), encoded_grad(width, n);
  BatchTrace<double> trace;
  enc.forward(points, encoded.data(), trace, Executor(1), LookupMode::Soft);
  MlpBatchState<double> state;
  mlp_forward_batch(mlp, encoded, state);
  const Matrix<double> out_grad = (state.outputs.back() - targets) * (2.0 / static_cast<double>(n * 3));
  MlpGradients<double> grads = MlpGradients<double>::zeros_like(mlp);
  mlp_backward_batch(mlp, encoded, state, out_grad, grads, encoded_grad);
  enc.backward(trace, encoded_grad.data(), Executor(1));

  GradCheckResult result;
  auto check = [&](double& param, double analytic, const std::string& name) {
    const double h = 1e-6;
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    const double err = relative_error(analytic, (up - down) / (2 * h));
    ++result.parameters;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst = name;
    }
  };
  for (std::size_t l = 0; l < enc.levels().size(); ++l) {
    auto& level = enc.levels()[l];
    auto values = level.features.table.values();
    auto g = level.features.table.grads();
    for (std::size_t i = 0; i < values.size(); ++i) check(values[i], g[i], "level " + std::to_string(l) + " feature " + std::to_string(i));
    if (!level.probed) continue;
    auto conf = level.confidence.table.values();
    auto cg = level.confidence.table.grads();
    for (std::size_t i = 0; i < conf.size(); ++i) check(conf[i], cg[i], "level " + std::to_string(l) + " confidence " + std::to_string(i));
  }
  for (std::size_t layer = 0; layer < mlp.layers(); ++layer) {
    for (Eigen::Index i = 0; i < mlp.weights[layer].size(); ++i)
      check(mlp.weights[layer].data()[i], grads.weights[layer].data()[i], "layer " + std::to_string(layer) + " weight");
    for (Eigen::Index i = 0; i < mlp.biases[layer].size(); ++i)
      check(mlp.biases[layer](i), grads.biases[layer](i), "layer " + std::to_string(layer) + " bias");
  }
  return result;
}

}  // namespace cngp::testing
