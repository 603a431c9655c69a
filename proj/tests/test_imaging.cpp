#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "corrstruct/imaging.hpp"

using namespace corrstruct;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "corrstruct_imaging_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

RgbImage random_image(std::mt19937_64& rng, int w, int h) {
  RgbImage img(w, h);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

// Scalar bilinear reference with pixel-centre alignment, written out longhand.
double reference_bilinear(const RgbImage& src, int out_w, int out_h, int x, int y, int ch) {
  double fx = (x + 0.5) * src.width / out_w - 0.5;
  double fy = (y + 0.5) * src.height / out_h - 0.5;
  if (fx < 0) fx = 0;
  if (fy < 0) fy = 0;
  if (fx > src.width - 1) fx = src.width - 1;
  if (fy > src.height - 1) fy = src.height - 1;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const int x1 = x0 + 1 < src.width ? x0 + 1 : x0, y1 = y0 + 1 < src.height ? y0 + 1 : y0;
  const double ax = fx - x0, ay = fy - y0;
  return (1 - ax) * (1 - ay) * src.at(x0, y0, ch) + ax * (1 - ay) * src.at(x1, y0, ch) +
         (1 - ax) * ay * src.at(x0, y1, ch) + ax * ay * src.at(x1, y1, ch);
}

void fill(RgbImage& img, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
}

}  // namespace

TEST(Ppm, DecodesKnownBytes) {
  const std::string payload{'\x01', '\x02', '\x03', '\x04', '\x05', '\x06',
                            '\x07', '\x08', '\x09', '\x0a', '\x0b', '\xff'};
  const auto p = temp_file("known.ppm");
  write_bytes(p, "P6\n# comment\n2 2\n255\n" + payload);
  const auto img = load_image(p);
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 2);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(img.pixels[k], static_cast<std::uint8_t>(payload[k]));
}

TEST(Ppm, RoundTrip) {
  std::mt19937_64 rng(3);
  const auto img = random_image(rng, 7, 5);
  const auto p = temp_file("rt.ppm");
  save_image(img, p);
  EXPECT_EQ(load_image(p), img);
}

TEST(Ppm, ErrorKinds) {
  const auto p = temp_file("bad.ppm");
  write_bytes(p, "");
  EXPECT_THROW(load_image(p), MalformedHeaderError);
  write_bytes(p, "P6\n2 2\n65535\n");
  EXPECT_THROW(load_image(p), UnsupportedFormatError);
  write_bytes(p, "P3\n2 2\n255\n");
  EXPECT_THROW(load_image(p), UnsupportedFormatError);
  write_bytes(p, "P6\n2 2\n255\nabc");
  EXPECT_THROW(load_image(p), TruncatedError);
  write_bytes(p, "P6\n2 x\n255\n");
  EXPECT_THROW(load_image(p), MalformedHeaderError);
  EXPECT_THROW(load_image(temp_file("does_not_exist.ppm")), MissingFileError);
}

TEST(Resize, IdentityAtCanonicalSize) {
  std::mt19937_64 rng(5);
  const auto img = random_image(rng, 48, 128);
  EXPECT_EQ(scale_to_canonical(img, canonical_probe_grid()), img);
}

TEST(Resize, ConstantStaysConstant) {
  RgbImage img(37, 91);
  fill(img, 12, 200, 77);
  const auto out = scale_to_canonical(img, canonical_probe_grid());
  ASSERT_EQ(out.width, 48);
  ASSERT_EQ(out.height, 128);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      EXPECT_EQ(out.at(x, y, 0), 12);
      EXPECT_EQ(out.at(x, y, 1), 200);
      EXPECT_EQ(out.at(x, y, 2), 77);
    }
}

TEST(Resize, HalvingMatchesReference) {
  std::mt19937_64 rng(9);
  const auto img = random_image(rng, 96, 256);
  const auto out = scale_to_canonical(img, canonical_probe_grid());
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const double ref = reference_bilinear(img, 48, 128, x, y, ch);
        EXPECT_EQ(out.at(x, y, ch), static_cast<std::uint8_t>(std::lround(ref))) << x << "," << y;
      }
}

TEST(Resize, ArbitraryScaleMatchesReference) {
  std::mt19937_64 rng(10);
  const auto img = random_image(rng, 31, 77);
  const auto out = resize_bilinear(img, 48, 128);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const double ref = reference_bilinear(img, 48, 128, x, y, ch);
        EXPECT_NEAR(out.at(x, y, ch), ref, 0.5 + 1e-9);
      }
}

TEST(Descriptors, ShapeAndMismatch) {
  RgbImage img(48, 128);
  fill(img, 128, 128, 128);
  const auto d = extract_descriptors(img, canonical_probe_grid());
  EXPECT_EQ(d.rows(), 32);
  EXPECT_EQ(d.cols(), 84);
  EXPECT_THROW(extract_descriptors(RgbImage(40, 128), canonical_probe_grid()), ArgumentError);
}

TEST(Descriptors, UniformGrayPatch) {
  RgbImage img(48, 128);
  fill(img, 128, 128, 128);
  const auto d = extract_descriptors(img, canonical_probe_grid());
  for (Eigen::Index p = 0; p < d.cols(); ++p) {
    EXPECT_EQ(d.col(p).tail(8).sum(), 0.0);
    for (int ch = 0; ch < 3; ++ch) {
      const auto block = d.col(p).segment(ch * 8, 8);
      EXPECT_NEAR(block.maxCoeff(), 1.0 / 3.0, 1e-12);
      EXPECT_EQ((block.array() > 0).count(), 1);
    }
  }
}

TEST(Descriptors, VerticalStepEdgeIsHorizontalGradient) {
  RgbImage img(48, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 48; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = x < 24 ? 0 : 255;
  const auto g = canonical_probe_grid();
  const auto d = extract_descriptors(img, g);
  int checked = 0;
  for (const auto& p : patch_positions(g)) {
    if (p.x >= 24 || p.x + g.patch_width <= 23) continue;  // edge not inside
    const auto grad = d.col(p.ordinal).tail(8);
    EXPECT_NEAR(grad(0), 1.0, 1e-12) << "patch " << p.ordinal;  // dark to bright along +x
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Descriptors, LuminancePreservingRecolourKeepsGradientBlock) {
  // Find two distinct colours with identical integer luminance weights.
  std::array<int, 3> c1{200, 40, 40}, c2{};
  const int target = 299 * c1[0] + 587 * c1[1] + 114 * c1[2];
  bool found = false;
  for (int r = 0; r < 256 && !found; ++r)
    for (int b = 0; b < 256 && !found; ++b) {
      const int rest = target - 299 * r - 114 * b;
      if (rest >= 0 && rest % 587 == 0 && rest / 587 < 256 && r != c1[0]) {
        c2 = {r, rest / 587, b};
        found = true;
      }
    }
  ASSERT_TRUE(found);
  std::mt19937_64 rng(4);
  RgbImage a(48, 128), b(48, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 48; ++x) {
      const bool dark = (rng() % 3) == 0;
      for (int ch = 0; ch < 3; ++ch) {
        a.at(x, y, ch) = dark ? 10 : static_cast<std::uint8_t>(c1[static_cast<std::size_t>(ch)]);
        b.at(x, y, ch) = dark ? 10 : static_cast<std::uint8_t>(c2[static_cast<std::size_t>(ch)]);
      }
    }
  const auto da = extract_descriptors(a, canonical_probe_grid());
  const auto db = extract_descriptors(b, canonical_probe_grid());
  EXPECT_LT((da.bottomRows(8) - db.bottomRows(8)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_GT((da.topRows(24) - db.topRows(24)).cwiseAbs().maxCoeff(), 0.01);
}

TEST(DescriptorsProperty, BlocksNormalisedAndDeterministic) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto img = random_image(rng, 48, 128);
    for (const auto& grid : {canonical_probe_grid(), canonical_gallery_grid()}) {
      const auto d = extract_descriptors(img, grid);
      EXPECT_TRUE(d == extract_descriptors(img, grid));
      EXPECT_GE(d.minCoeff(), 0.0);
      EXPECT_LE(d.maxCoeff(), 1.0);
      for (Eigen::Index p = 0; p < d.cols(); ++p) {
        EXPECT_NEAR(d.col(p).head(24).sum(), 1.0, 1e-9);
        EXPECT_NEAR(d.col(p).tail(8).sum(), 1.0, 1e-9);
      }
    }
  }
}

TEST(Descriptors, IdenticalPatchesIdenticalDescriptors) {
  // A vertically periodic image with period = probe stride: rows of patches repeat.
  std::mt19937_64 rng(8);
  RgbImage img(48, 128);
  const auto tile = random_image(rng, 48, 8);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 48; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = tile.at(x, y % 8, ch);
  const auto g = canonical_probe_grid();
  const auto d = extract_descriptors(img, g);
  // Interior rows avoid the one-sided border gradients.
  for (int c = 0; c < g.n_cols(); ++c) EXPECT_TRUE(d.col(g.ordinal(3, c)) == d.col(g.ordinal(5, c)));
}

TEST(Lab, KnownValues) {
  const auto white = rgb_to_lab(255, 255, 255);
  EXPECT_NEAR(white[0], 100.0, 1e-3);
  EXPECT_NEAR(white[1], 0.0, 1e-3);
  EXPECT_NEAR(white[2], 0.0, 1e-3);
  const auto black = rgb_to_lab(0, 0, 0);
  EXPECT_NEAR(black[0], 0.0, 1e-9);
  const auto red = rgb_to_lab(255, 0, 0);  // reference sRGB red: L 53.24, a 80.09, b 67.20
  EXPECT_NEAR(red[0], 53.24, 0.05);
  EXPECT_NEAR(red[1], 80.09, 0.05);
  EXPECT_NEAR(red[2], 67.20, 0.05);
}
