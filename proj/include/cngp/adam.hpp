#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cngp/codebooks.hpp"
#include "cngp/error.hpp"

namespace cngp {

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
};

template <class Scalar>
struct AdamMoments {
  std::vector<Scalar> m;
  std::vector<Scalar> v;

  AdamMoments() = default;
  explicit AdamMoments(std::size_t n) : m(n, Scalar(0)), v(n, Scalar(0)) {}
};

/// Bias-corrected step factors for step t (1-based).
struct AdamStepFactors {
  double step_size;   // lr / (1 - beta1^t)
  double v_correction;  // 1 / (1 - beta2^t)

  static AdamStepFactors at(const AdamConfig& cfg, std::uint64_t step) {
    const double t = static_cast<double>(step);
    return {cfg.learning_rate / (1.0 - std::pow(cfg.beta1, t)), 1.0 / (1.0 - std::pow(cfg.beta2, t))};
  }
};

namespace detail {

template <class Scalar, class Params, class Grads, class Moments>
inline void adam_block(Params&& p, const Grads& g, Moments&& m, Moments&& v, const AdamConfig& cfg,
                       const AdamStepFactors& f) {
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - cfg.beta1);
  const auto c2 = static_cast<Scalar>(1.0 - cfg.beta2);
  const auto step_size = static_cast<Scalar>(f.step_size);
  const auto v_corr = static_cast<Scalar>(f.v_correction);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  m = b1 * m + c1 * g;
  v = b2 * v + c2 * g.square();
  p -= step_size * m / ((v * v_corr).sqrt() + eps);
}

}  // namespace detail

/// Standard Adam with bias correction over a dense parameter block. `step`
/// is the 1-based step count shared by every block updated in this step.
template <class Scalar>
void adam_update(std::span<Scalar> param, std::span<const Scalar> grad, AdamMoments<Scalar>& state,
                 const AdamConfig& cfg, std::uint64_t step) {
  require(param.size() == grad.size() && state.m.size() == param.size() && state.v.size() == param.size(),
          ErrorCode::shape_mismatch, "Adam parameter, gradient and moment shapes differ");
  require(step >= 1, ErrorCode::invalid_argument, "Adam steps are 1-based");
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(param.size());
  detail::adam_block<Scalar>(Eigen::Map<Array>(param.data(), n), Eigen::Map<const Array>(grad.data(), n),
                             Eigen::Map<Array>(state.m.data(), n), Eigen::Map<Array>(state.v.data(), n), cfg,
                             AdamStepFactors::at(cfg, step));
}

namespace detail {

template <int Cols, class Scalar>
inline void adam_row_fixed(Scalar* p_ptr, Scalar* m_ptr, Scalar* v_ptr, const Scalar* g_ptr, const AdamConfig& cfg,
                           const AdamStepFactors& f) {
  using Row = Eigen::Array<Scalar, Cols, 1>;
  Eigen::Map<Row> p(p_ptr), m(m_ptr), v(v_ptr);
  Eigen::Map<const Row> g(g_ptr);
  Row pn = p, mn = m, vn = v;
  adam_block<Scalar>(pn, g, mn, vn, cfg, f);
  const auto keep = g != Scalar(0);
  p = keep.select(pn, p);
  m = keep.select(mn, m);
  v = keep.select(vn, v);
}

}  // namespace detail

/// Adam on one row of a grid table. Entries whose accumulated gradient is
/// exactly zero are skipped, moments included, as hash-grid trainers do.
template <class Scalar>
inline void adam_update_row(ParamTable<Scalar>& table, AdamMoments<Scalar>& state, std::uint32_t r,
                            const AdamConfig& cfg, const AdamStepFactors& f) {
  const std::size_t begin = static_cast<std::size_t>(r) * table.cols();
  Scalar* p = table.values().data() + begin;
  Scalar* m = state.m.data() + begin;
  Scalar* v = state.v.data() + begin;
  const Scalar* g = table.grads().data() + begin;
  switch (table.cols()) {
    case 1: detail::adam_row_fixed<1>(p, m, v, g, cfg, f); break;
    case 2: detail::adam_row_fixed<2>(p, m, v, g, cfg, f); break;
    case 3: detail::adam_row_fixed<3>(p, m, v, g, cfg, f); break;
    case 4: detail::adam_row_fixed<4>(p, m, v, g, cfg, f); break;
    case 5: detail::adam_row_fixed<5>(p, m, v, g, cfg, f); break;
    case 6: detail::adam_row_fixed<6>(p, m, v, g, cfg, f); break;
    case 7: detail::adam_row_fixed<7>(p, m, v, g, cfg, f); break;
    case 8: detail::adam_row_fixed<8>(p, m, v, g, cfg, f); break;
    case 16: detail::adam_row_fixed<16>(p, m, v, g, cfg, f); break;
    default:
      for (std::uint32_t i = 0; i < table.cols(); ++i) detail::adam_row_fixed<1>(p + i, m + i, v + i, g + i, cfg, f);
  }
}

/// Adam over every touched row of a grid table, then clears the gradients.
/// `on_row(r)` runs right after row r is updated.
template <class Scalar, class OnRow>
void adam_update_sparse(ParamTable<Scalar>& table, AdamMoments<Scalar>& state, const AdamConfig& cfg,
                        std::uint64_t step, OnRow&& on_row) {
  require(state.m.size() == table.values().size() && state.v.size() == table.values().size(),
          ErrorCode::shape_mismatch, "Adam moments do not match table");
  require(step >= 1, ErrorCode::invalid_argument, "Adam steps are 1-based");
  require(table.cols() <= kMaxProbes, ErrorCode::shape_mismatch, "table rows wider than 16 entries");
  const auto f = AdamStepFactors::at(cfg, step);
  table.drain_touched([&](std::uint32_t r) {
    adam_update_row(table, state, r, cfg, f);
    on_row(r);
  });
}

template <class Scalar>
void adam_update_sparse(ParamTable<Scalar>& table, AdamMoments<Scalar>& state, const AdamConfig& cfg,
                        std::uint64_t step) {
  adam_update_sparse(table, state, cfg, step, [](std::uint32_t) {});
}

}  // namespace cngp
