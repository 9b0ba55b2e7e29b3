#include <gtest/gtest.h>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "support.hpp"

using namespace cngp;
using cngp::testing::error_code_of;
using cngp::testing::random_image;
using cngp::testing::scratch_dir;

namespace {

// Minimal raw libpng writer for formats save_png never produces.
void write_raw_png(const std::string& path, std::uint32_t w, std::uint32_t h, int bit_depth, int color_type,
                   const std::vector<std::uint8_t>& data) {
  FILE* f = std::fopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row = data.size() / h;
  for (std::uint32_t y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(data.data() + y * row));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST(Psnr, IdenticalImagesAreInfinite) {
  const Image a = random_image(7, 5, 1);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0.0);
}

TEST(Psnr, KnownValues) {
  EXPECT_NEAR(psnr_from_mse(1e-5), 50.0, 1e-12);
  Image a(4, 4, 0.0f), b(4, 4, 0.5f);
  EXPECT_NEAR(psnr(a, b), 6.0206, 1e-4);
  const Image c(4, 4, 0.5f + 1.0f / 255.0f), d(4, 4, 0.5f);
  EXPECT_NEAR(psnr(d, c), 48.1308, 1e-3);
}

TEST(Psnr, SymmetricAndMonotoneInNoise) {
  const Image ref = random_image(16, 16, 2);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> noise(ref.rgb.size());
  for (float& v : noise) v = n(rng);
  double previous = std::numeric_limits<double>::infinity();
  for (const float amp : {0.001f, 0.01f, 0.05f, 0.2f}) {
    Image noisy = ref;
    for (std::size_t i = 0; i < noisy.rgb.size(); ++i) noisy.rgb[i] += amp * noise[i];
    const double p = psnr(ref, noisy);
    EXPECT_DOUBLE_EQ(p, psnr(noisy, ref));
    EXPECT_LT(p, previous);
    previous = p;
  }
}

TEST(Psnr, DimensionMismatch) {
  EXPECT_EQ(error_code_of([] { mse(Image(4, 4), Image(4, 5)); }), ErrorCode::dimension_mismatch);
}

TEST(Pareto, SinglePointAndDominatedPair) {
  EXPECT_EQ(pareto_front_indices({{10, 5}}), (std::vector<std::size_t>{0}));
  EXPECT_EQ(pareto_front_indices({{10, 5}, {12, 4}}), (std::vector<std::size_t>{0}));
  EXPECT_EQ(pareto_front_indices({{12, 6}, {10, 5}}), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(pareto_front_indices({{10, 5}, {10, 5}}), (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(pareto_front_indices({}).empty());
}

TEST(Pareto, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coarse(0, 20);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParetoPoint> pts(100);
    for (auto& p : pts) p = {static_cast<double>(coarse(rng)), static_cast<double>(coarse(rng))};
    std::vector<std::size_t> brute;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size() && !dominated; ++j) dominated = dominates(pts[j], pts[i]);
      if (!dominated) brute.push_back(i);
    }
    const auto front = pareto_front_indices(pts);
    ASSERT_EQ(front, brute) << "trial " << trial;
    for (const std::size_t i : front)
      for (const std::size_t j : front) ASSERT_FALSE(dominates(pts[i], pts[j]));
  }
}

TEST(Png, RoundTripIsExactAt8Bits) {
  const auto dir = scratch_dir("png");
  const Image img = quantize_8bit(random_image(13, 7, 4));
  save_png((dir / "a.png").string(), img);
  EXPECT_EQ(load_png((dir / "a.png").string()), img);
}

TEST(Png, GrayIsReplicated) {
  const auto dir = scratch_dir("png_gray");
  std::vector<std::uint8_t> gray{0, 64, 128, 255, 10, 20};
  write_raw_png((dir / "g.png").string(), 3, 2, 8, PNG_COLOR_TYPE_GRAY, gray);
  const Image img = load_png((dir / "g.png").string());
  ASSERT_EQ(img.width, 3u);
  ASSERT_EQ(img.height, 2u);
  for (std::uint32_t y = 0; y < 2; ++y)
    for (std::uint32_t x = 0; x < 3; ++x)
      for (std::uint32_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(img.at(x, y, c), gray[y * 3 + x] / 255.0f);
}

TEST(Png, SixteenBitRejected) {
  const auto dir = scratch_dir("png16");
  write_raw_png((dir / "d.png").string(), 2, 2, 16, PNG_COLOR_TYPE_RGB, std::vector<std::uint8_t>(2 * 2 * 6, 7));
  EXPECT_EQ(error_code_of([&] { load_png((dir / "d.png").string()); }), ErrorCode::unsupported_format);
}

TEST(Png, MissingAndNonPngFiles) {
  const auto dir = scratch_dir("png_bad");
  EXPECT_EQ(error_code_of([&] { load_png((dir / "nope.png").string()); }), ErrorCode::io_error);
  std::ofstream((dir / "text.png").string()) << "definitely not an image";
  EXPECT_EQ(error_code_of([&] { load_png((dir / "text.png").string()); }), ErrorCode::unsupported_format);
}
