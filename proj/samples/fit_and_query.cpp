// Fit a small model to a PNG, save it, reload it and query a few pixels
// straight from the file's codebooks, without decoding the whole image.
//
//   fit_and_query image.png [model.cngp]

#include <cstdio>
#include <iostream>

#include "cngp/cngp.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: fit_and_query image.png [model.cngp]\n";
    return 2;
  }
  const std::string out = argc > 2 ? argv[2] : "model.cngp";
  try {
    const cngp::Image image = cngp::load_png(argv[1]);

    cngp::HyperParams hp;  // recommended defaults, smaller feature tables
    hp.n_f = 1u << 8;
    hp.n_c = 1u << 14;
    hp.n_p = 4;
    cngp::TrainConfig cfg;
    cfg.steps = 500;
    cfg.batch_size = 1u << 13;
    cfg.threads = cngp::default_thread_count();

    const cngp::FitResult fitted = cngp::fit(image, hp, cfg, [](const cngp::StepMetrics& m) {
      if (!m.final) std::printf("step %5llu  loss %.6f  psnr %.2f dB\n", static_cast<unsigned long long>(m.step), m.loss, m.psnr);
    });
    cngp::write_model_file(out, fitted.model);
    std::printf("%s: %llu bytes, %.2f dB\n", out.c_str(), static_cast<unsigned long long>(fitted.size.total()),
                fitted.final_psnr);

    const cngp::Model<float> model = cngp::read_model_file(out);
    for (const auto [x, y] : {std::pair{0u, 0u}, std::pair{image.width / 2, image.height / 2},
                              std::pair{image.width - 1, image.height - 1}}) {
      cngp::AccessCounter reads;
      const auto rgb = model.decode_at(model.pixel_center(x, y), &reads);
      std::printf("pixel (%u, %u): decoded %.3f %.3f %.3f  original %.3f %.3f %.3f  (%llu table rows read)\n", x, y,
                  rgb[0], rgb[1], rgb[2], image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2),
                  static_cast<unsigned long long>(reads.total()));
    }
  } catch (const cngp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
