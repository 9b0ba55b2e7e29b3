#pragma once

// Size/quality sweeps over a grid of model shapes on one image.
//
// CSV columns: method,n_f,n_c,n_p,levels,neurons,seed,size_bytes,psnr_db,ms_per_step
//   method      "cngp" for probed models, "ingp_baseline" for N_p = 1 points
//               (plain spatial hashing); the column leaves room for external
//               codecs merged in later
//   size_bytes  payload bytes (file size minus the fixed 40-byte header)
//   psnr_db     after half-precision rounding; "inf" for exact reconstruction
//   ms_per_step mean training wall time per step

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cngp/error.hpp"
#include "cngp/hyperparams.hpp"
#include "cngp/image.hpp"
#include "cngp/kv_config.hpp"
#include "cngp/metrics.hpp"
#include "cngp/model_io.hpp"
#include "cngp/trainer.hpp"

namespace cngp {

inline constexpr const char* kMethodProbed = "cngp";
inline constexpr const char* kMethodBaseline = "ingp_baseline";

struct SweepPoint {
  std::string method = kMethodProbed;
  HyperParams hp;
  std::uint64_t seed = 0;
  std::uint64_t size_bytes = 0;
  double psnr_db = 0.0;
  double ms_per_step = 0.0;

  bool baseline() const noexcept { return method == kMethodBaseline; }
  bool exact() const noexcept { return std::isinf(psnr_db); }
};

struct SweepGrid {
  std::vector<std::uint32_t> n_f{1u << 8};
  std::vector<std::uint32_t> n_c{1u << 16};
  std::vector<std::uint32_t> n_p{1u << 2};
  std::vector<std::uint32_t> levels{16};
  std::vector<std::uint32_t> neurons{64};
  std::vector<std::uint64_t> seeds{0};
  HyperParams shape;  // features, n_min, n_max, hidden layers
  TrainConfig train;

  /// Builds a grid from key=value text. List keys: n_f, n_c, n_p, levels,
  /// neurons, seeds. Scalar keys: features, n_min, n_max, hidden_layers,
  /// steps, batch, lr, threads, sigmoid.
  static SweepGrid from_config(const KvConfig& cfg) {
    static const std::vector<std::string> known{"n_f",      "n_c",   "n_p",  "levels", "neurons", "seeds",
                                                "features", "n_min", "n_max", "hidden_layers", "steps", "batch",
                                                "lr",       "threads", "sigmoid"};
    for (const std::string& k : cfg.keys()) {
      require(std::find(known.begin(), known.end(), k) != known.end(), ErrorCode::invalid_argument,
              "unknown sweep config key '" + k + "'");
    }
    SweepGrid g;
    if (cfg.has("n_f")) g.n_f = cfg.list<std::uint32_t>("n_f");
    if (cfg.has("n_c")) g.n_c = cfg.list<std::uint32_t>("n_c");
    if (cfg.has("n_p")) g.n_p = cfg.list<std::uint32_t>("n_p");
    if (cfg.has("levels")) g.levels = cfg.list<std::uint32_t>("levels");
    if (cfg.has("neurons")) g.neurons = cfg.list<std::uint32_t>("neurons");
    if (cfg.has("seeds")) g.seeds = cfg.list<std::uint64_t>("seeds");
    g.shape.features = cfg.get_or<std::uint32_t>("features", g.shape.features);
    g.shape.n_min = cfg.get_or<std::uint32_t>("n_min", g.shape.n_min);
    g.shape.n_max = cfg.get_or<std::uint32_t>("n_max", g.shape.n_max);
    g.shape.hidden_layers = cfg.get_or<std::uint32_t>("hidden_layers", g.shape.hidden_layers);
    g.train.steps = cfg.get_or<std::uint32_t>("steps", g.train.steps);
    g.train.batch_size = cfg.get_or<std::uint32_t>("batch", g.train.batch_size);
    g.train.adam.learning_rate = cfg.get_or<double>("lr", g.train.adam.learning_rate);
    g.train.threads = cfg.get_or<unsigned>("threads", g.train.threads);
    g.train.sigmoid_output = cfg.get_or<bool>("sigmoid", g.train.sigmoid_output);
    return g;
  }

  /// Every (shape, seed) combination, validated. N_p = 1 points become
  /// plain-hashing baselines; their N_c is meaningless and collapses to 1,
  /// so duplicates that differ only in N_c are dropped.
  std::vector<std::pair<HyperParams, std::uint64_t>> expand() const {
    require(!n_f.empty() && !n_c.empty() && !n_p.empty() && !levels.empty() && !neurons.empty() && !seeds.empty(),
            ErrorCode::invalid_argument, "sweep grid is empty");
    std::vector<HyperParams> shapes;
    for (const auto nf : n_f)
      for (const auto nc : n_c)
        for (const auto np : n_p)
          for (const auto l : levels)
            for (const auto nn : neurons) {
              HyperParams hp = shape;
              hp.n_f = nf;
              hp.n_c = np == 1 ? 1 : nc;
              hp.n_p = np;
              hp.levels = l;
              hp.neurons = nn;
              hp.probing = np == 1 ? Probing::Disabled : Probing::Learned;
              hp.validate();
              if (std::find(shapes.begin(), shapes.end(), hp) == shapes.end()) shapes.push_back(hp);
            }
    std::vector<std::pair<HyperParams, std::uint64_t>> out;
    for (const HyperParams& hp : shapes)
      for (const auto seed : seeds) out.emplace_back(hp, seed);
    return out;
  }
};

using SweepProgress = std::function<void(std::size_t done, std::size_t total, const SweepPoint&)>;

/// One fit per grid point and seed, in grid order.
inline std::vector<SweepPoint> sweep(const Image& image, const SweepGrid& grid, const SweepProgress& progress = {}) {
  const auto jobs = grid.expand();
  std::vector<SweepPoint> points;
  points.reserve(jobs.size());
  for (const auto& [hp, seed] : jobs) {
    TrainConfig cfg = grid.train;
    cfg.seed = seed;
    const FitResult r = fit(image, hp, cfg);
    SweepPoint p;
    p.method = hp.probing_active() ? kMethodProbed : kMethodBaseline;
    p.hp = hp;
    p.seed = seed;
    p.size_bytes = r.size.payload();
    p.psnr_db = r.final_psnr;
    p.ms_per_step = r.ms_per_step;
    points.push_back(p);
    if (progress) progress(points.size(), jobs.size(), p);
  }
  return points;
}

inline constexpr const char* kSweepCsvHeader =
    "method,n_f,n_c,n_p,levels,neurons,seed,size_bytes,psnr_db,ms_per_step";

/// With `timing` false the ms_per_step column is left empty, which makes the
/// file a pure function of the grid, the seeds and the image.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points, bool timing = true) {
  out << kSweepCsvHeader << '\n';
  for (const SweepPoint& p : points) {
    std::ostringstream row;
    row << p.method << ',' << p.hp.n_f << ',' << p.hp.n_c << ',' << p.hp.n_p << ',' << p.hp.levels << ','
        << p.hp.neurons << ',' << p.seed << ',' << p.size_bytes << ',';
    if (p.exact()) {
      row << "inf";
    } else {
      row << std::fixed << std::setprecision(4) << p.psnr_db;
    }
    row << ',';
    if (timing) row << std::fixed << std::setprecision(3) << p.ms_per_step;
    out << row.str() << '\n';
  }
}

inline std::vector<SweepPoint> sweep_pareto_front(const std::vector<SweepPoint>& points) {
  return pareto_front(points, [](const SweepPoint& p) {
    return ParetoPoint{static_cast<double>(p.size_bytes), p.psnr_db};
  });
}

}  // namespace cngp
