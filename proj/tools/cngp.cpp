// cngp: fit, decode, inspect and sweep compact hash-grid image models.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cngp/cngp.hpp"

namespace {

using namespace cngp;

const CLI::Validator PowerOfTwo(
    [](std::string& s) -> std::string {
      std::uint64_t v = 0;
      try {
        std::size_t used = 0;
        v = std::stoull(s, &used);
        if (used != s.size()) return s + " is not an integer";
      } catch (const std::exception&) {
        return s + " is not an integer";
      }
      if (v == 0 || (v & (v - 1)) != 0) return s + " is not a power of two";
      return {};
    },
    "POW2", "PowerOfTwo");

std::string fmt_db(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << db;
  return s.str();
}

void print_sizes(std::ostream& out, const SizeReport& s) {
  out << "size: " << s.total() << " bytes (header " << s.header << ", features " << s.features << ", indices "
      << s.indices << ", mlp " << s.mlp << ")\n";
}

void print_hyperparams(std::ostream& out, const HyperParams& hp) {
  out << "hyperparameters: n_f=" << hp.n_f << " n_c=" << hp.n_c << " n_p=" << hp.n_p << " levels=" << hp.levels
      << " features=" << hp.features << " n_min=" << hp.n_min << " n_max=" << hp.n_max << " neurons=" << hp.neurons
      << " hidden_layers=" << hp.hidden_layers << " probing=" << (hp.probing_active() ? "learned" : "disabled")
      << "\n";
}

struct FitOptions {
  std::string input, output, metrics;
  HyperParams hp;
  TrainConfig train;
  std::uint64_t target_size = 0;
  bool plain = false;
};

int run_fit(FitOptions& o) {
  const Image image = load_png(o.input);
  HyperParams hp = o.hp;
  if (o.plain) {
    hp.n_p = 1;
    hp.n_c = 1;
    hp.probing = Probing::Disabled;
  }
  if (o.target_size > 0) hp = select_hyperparams(o.target_size, hp);
  hp.validate();
  for (const std::string& note : hp.range_notes()) std::cerr << "warning: " << note << "\n";
  std::cout << "fitting " << o.input << " (" << image.width << "x" << image.height << ")\n";
  print_hyperparams(std::cout, hp);

  std::ofstream metrics;
  const std::string metrics_path = o.metrics.empty() ? o.output + ".metrics.jsonl" : o.metrics;
  metrics.open(metrics_path);
  require(metrics.good(), ErrorCode::io_error, "cannot write metrics to '" + metrics_path + "'");
  const FitResult r = fit(image, hp, o.train, [&](const StepMetrics& m) {
    nlohmann::json rec{{"step", m.step}, {"loss", m.loss}, {"ms_per_step", m.ms_per_step}};
    rec["psnr"] = std::isinf(m.psnr) ? nlohmann::json("inf") : nlohmann::json(m.psnr);
    if (m.final) rec["final"] = true;
    metrics << rec.dump() << '\n';
  });
  write_model_file(o.output, r.model);
  std::cout << "final psnr: " << fmt_db(r.final_psnr) << " dB after " << r.steps << " steps (" << std::fixed
            << std::setprecision(2) << r.ms_per_step << " ms/step)\n";
  print_sizes(std::cout, r.size);
  std::cout << "wrote " << o.output << " and " << metrics_path << "\n";
  return 0;
}

struct DecodeOptions {
  std::string model, output;
  std::vector<std::uint32_t> rect;
  unsigned threads = 1;
};

int run_decode(const DecodeOptions& o) {
  const Model<float> model = read_model_file(o.model);
  Image out;
  if (o.rect.empty()) {
    out = model.decode_image(Executor(o.threads));
  } else {
    out = model.decode_rect(o.rect[0], o.rect[1], o.rect[2], o.rect[3], Executor(o.threads));
  }
  save_png(o.output, out);
  std::cout << "wrote " << o.output << " (" << out.width << "x" << out.height << ")\n";
  return 0;
}

int run_info(const std::string& path, bool json) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_error, "cannot open '" + path + "'");
  const ModelHeader h = read_header(in);
  const HyperParams hp = h.hyperparams();
  const SizeReport s = size_report(hp);
  if (json) {
    nlohmann::json j{{"version", h.version},
                     {"width", h.width},
                     {"height", h.height},
                     {"sigmoid_output", (h.flags & kFlagSigmoidOutput) != 0},
                     {"n_f", hp.n_f},
                     {"n_c", hp.n_c},
                     {"n_p", hp.n_p},
                     {"levels", hp.levels},
                     {"features", hp.features},
                     {"n_min", hp.n_min},
                     {"n_max", hp.n_max},
                     {"neurons", hp.neurons},
                     {"hidden_layers", hp.hidden_layers},
                     {"probing", hp.probing_active()},
                     {"header_bytes", s.header},
                     {"feature_bytes", s.features},
                     {"index_bytes", s.indices},
                     {"mlp_bytes", s.mlp},
                     {"payload_bytes", s.payload()},
                     {"total_bytes", s.total()}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << path << ": cngp format v" << h.version << ", " << h.width << "x" << h.height
            << (h.flags & kFlagSigmoidOutput ? ", sigmoid output" : "") << "\n";
  print_hyperparams(std::cout, hp);
  print_sizes(std::cout, s);
  for (const LevelSize& l : s.levels) {
    std::cout << "  level " << std::setw(2) << l.spec.level << "  res " << std::setw(6) << l.spec.resolution << "  "
              << (l.spec.mode == IndexMode::Dense ? "dense " : "hashed") << "  features " << l.feature_bytes
              << "  indices " << l.index_bytes << "\n";
  }
  return 0;
}

struct SweepOptions {
  std::string input, output, config;
  std::vector<std::uint32_t> n_f, n_c, n_p, levels, neurons;
  std::vector<std::uint64_t> seeds;
  std::uint32_t steps = 0, batch = 0;
  unsigned threads = 1;
  bool no_timing = false, quiet = false;
};

int run_sweep(const SweepOptions& o) {
  SweepGrid grid = o.config.empty() ? SweepGrid{} : SweepGrid::from_config(KvConfig::load(o.config));
  // Flags override the config file.
  auto take = [](auto& dst, const auto& src) {
    if (!src.empty()) dst = src;
  };
  take(grid.n_f, o.n_f);
  take(grid.n_c, o.n_c);
  take(grid.n_p, o.n_p);
  take(grid.levels, o.levels);
  take(grid.neurons, o.neurons);
  take(grid.seeds, o.seeds);
  if (o.steps) grid.train.steps = o.steps;
  if (o.batch) grid.train.batch_size = o.batch;
  grid.train.threads = o.threads;
  grid.expand();  // fail early on an empty or invalid grid

  const Image image = load_png(o.input);
  const auto points = sweep(image, grid, [&](std::size_t done, std::size_t total, const SweepPoint& p) {
    if (o.quiet) return;
    std::cerr << "[" << done << "/" << total << "] " << p.method << " n_f=" << p.hp.n_f << " n_c=" << p.hp.n_c
              << " n_p=" << p.hp.n_p << " seed=" << p.seed << ": " << p.size_bytes << " bytes, "
              << fmt_db(p.psnr_db) << " dB\n";
  });
  std::ofstream out(o.output);
  require(out.good(), ErrorCode::io_error, "cannot write '" + o.output + "'");
  write_sweep_csv(out, points, !o.no_timing);
  std::cout << "wrote " << points.size() << " rows to " << o.output << "\n";
  return 0;
}

int run_psnr(const std::string& a, const std::string& b) {
  std::cout << fmt_db(psnr(load_png(a), load_png(b))) << "\n";
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

// Exit codes: 0 ok, 1 runtime failure, 2 usage.
int main(int argc, char** argv) {
  CLI::App app{"Fit images with learned-probing hash grids and query the resulting .cngp models.", "cngp"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  app.get_formatter()->column_width(36);

  const unsigned cores = default_thread_count();

  FitOptions fo;
  fo.train.threads = cores;
  auto* fit_cmd = app.add_subcommand("fit", "Train a model on a PNG image");
  fit_cmd->add_option("-i,--input", fo.input, "Input PNG")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("-o,--output", fo.output, "Output model file")->required();
  fit_cmd->add_option("--metrics", fo.metrics, "Metrics JSONL path (default: <output>.metrics.jsonl)");
  fit_cmd->add_option("--nf", fo.hp.n_f, "Feature codebook size N_f")->check(PowerOfTwo)->capture_default_str();
  fit_cmd->add_option("--nc", fo.hp.n_c, "Index codebook size N_c")->check(PowerOfTwo)->capture_default_str();
  fit_cmd->add_option("--np", fo.hp.n_p, "Probing range N_p")->check(PowerOfTwo)->capture_default_str();
  fit_cmd->add_option("--levels", fo.hp.levels, "Grid levels L")->check(CLI::Range(1, 32))->capture_default_str();
  fit_cmd->add_option("--features", fo.hp.features, "Features per level F")->check(CLI::Range(1, 8))->capture_default_str();
  fit_cmd->add_option("--nmin", fo.hp.n_min, "Coarsest resolution")->capture_default_str();
  fit_cmd->add_option("--nmax", fo.hp.n_max, "Finest resolution")->capture_default_str();
  fit_cmd->add_option("--neurons", fo.hp.neurons, "Hidden layer width")->capture_default_str();
  fit_cmd->add_option("--hidden-layers", fo.hp.hidden_layers, "Hidden layer count")->capture_default_str();
  fit_cmd->add_flag("--plain", fo.plain, "Disable probing (plain spatial hashing, N_p = N_c = 1)");
  fit_cmd->add_option("--steps", fo.train.steps, "Training steps")->capture_default_str();
  fit_cmd->add_option("--batch", fo.train.batch_size, "Pixels per step")->capture_default_str();
  fit_cmd->add_option("--lr", fo.train.adam.learning_rate, "Adam learning rate")->capture_default_str();
  fit_cmd->add_option("--seed", fo.train.seed, "Seed for initialization and batch sampling")->capture_default_str();
  fit_cmd->add_option("--log-every", fo.train.log_every, "Metrics record interval in steps")->capture_default_str();
  fit_cmd->add_flag("--sigmoid", fo.train.sigmoid_output, "Sigmoid on the decoder output");
  fit_cmd->add_option("--target-size", fo.target_size, "Byte budget; picks n_f and n_c (keeps n_p)")
      ->capture_default_str();
  fit_cmd->add_option("--threads", fo.train.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  DecodeOptions dec;
  dec.threads = cores;
  auto* decode_cmd = app.add_subcommand("decode", "Decode a model to PNG, optionally only a rectangle");
  decode_cmd->add_option("-m,--model", dec.model, "Model file")->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("-o,--output", dec.output, "Output PNG")->required();
  decode_cmd->add_option("--rect", dec.rect, "Pixel rectangle x0 y0 x1 y1 (half-open)")->expected(4);
  decode_cmd->add_option("--threads", dec.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  std::string info_path;
  bool info_json = false;
  auto* info_cmd = app.add_subcommand("info", "Print header, hyperparameters and sizes (reads the header only)");
  info_cmd->add_option("model", info_path, "Model file")->required()->check(CLI::ExistingFile);
  info_cmd->add_flag("--json", info_json, "JSON output");

  SweepOptions so;
  so.threads = cores;
  auto* sweep_cmd = app.add_subcommand("sweep", "Fit a grid of shapes on one image and write a CSV");
  sweep_cmd->add_option("-i,--input", so.input, "Input PNG")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("-o,--output", so.output, "Output CSV")->required();
  sweep_cmd->add_option("--config", so.config, "key=value grid file; flags override its keys")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--nf", so.n_f, "N_f values (default 256)")->check(PowerOfTwo)->delimiter(',');
  sweep_cmd->add_option("--nc", so.n_c, "N_c values (default 65536)")->check(PowerOfTwo)->delimiter(',');
  sweep_cmd->add_option("--np", so.n_p, "N_p values, 1 = plain hashing baseline (default 4)")
      ->check(PowerOfTwo)
      ->delimiter(',');
  sweep_cmd->add_option("--levels", so.levels, "Level counts (default 16)")->delimiter(',');
  sweep_cmd->add_option("--neurons", so.neurons, "Hidden widths (default 64)")->delimiter(',');
  sweep_cmd->add_option("--seeds", so.seeds, "Seeds (default 0)")->delimiter(',');
  sweep_cmd->add_option("--steps", so.steps, "Training steps per point (default 10000)");
  sweep_cmd->add_option("--batch", so.batch, "Pixels per step (default 16384)");
  sweep_cmd->add_option("--threads", so.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_flag("--no-timing", so.no_timing, "Leave ms_per_step empty (byte-reproducible CSV)");
  sweep_cmd->add_flag("-q,--quiet", so.quiet, "No per-point progress");

  std::string psnr_a, psnr_b;
  auto* psnr_cmd = app.add_subcommand("psnr", "PSNR in dB between two PNG images");
  psnr_cmd->add_option("reference", psnr_a, "Reference PNG")->required()->check(CLI::ExistingFile);
  psnr_cmd->add_option("test", psnr_b, "Test PNG")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "cngp: usage error: " << one_line(e.what()) << " (see --help)\n";
    return 2;
  }

  try {
    if (*fit_cmd) return run_fit(fo);
    if (*decode_cmd) return run_decode(dec);
    if (*info_cmd) return run_info(info_path, info_json);
    if (*sweep_cmd) return run_sweep(so);
    if (*psnr_cmd) return run_psnr(psnr_a, psnr_b);
  } catch (const cngp::Error& e) {
    std::cerr << "cngp: error: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cngp: error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}
