#ifndef CORRSTRUCT_IMAGING_HPP_
#define CORRSTRUCT_IMAGING_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrstruct/error.hpp"
#include "corrstruct/geometry.hpp"

namespace corrstruct {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int ch) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  std::uint8_t at(int x, int y, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

namespace detail {

inline bool ppm_space(int c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Reads one unsigned header field, skipping whitespace and '#' comments.
inline bool ppm_header_int(const std::vector<char>& buf, std::size_t& pos, long& value) {
  while (pos < buf.size()) {
    if (ppm_space(buf[pos])) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9') return false;
  value = 0;
  while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
    value = value * 10 + (buf[pos] - '0');
    if (value > 1'000'000) return false;
    ++pos;
  }
  return true;
}

}  // namespace detail

/// Decodes a binary PPM (P6, maxval 255).
inline RgbImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open image " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 2 || buf[0] != 'P') throw MalformedHeaderError("not a PPM file: " + path.string());
  if (buf[1] != '6') throw UnsupportedFormatError("only binary P6 PPM is supported: " + path.string());
  std::size_t pos = 2;
  long w = 0, h = 0, maxval = 0;
  if (!detail::ppm_header_int(buf, pos, w) || !detail::ppm_header_int(buf, pos, h) ||
      !detail::ppm_header_int(buf, pos, maxval) || pos >= buf.size() || !detail::ppm_space(buf[pos]) ||
      w < 1 || h < 1) {
    throw MalformedHeaderError("malformed PPM header: " + path.string());
  }
  if (maxval != 255) throw UnsupportedFormatError("PPM maxval must be 255: " + path.string());
  ++pos;  // single whitespace before the raster

  RgbImage img(static_cast<int>(w), static_cast<int>(h));
  if (buf.size() - pos < img.pixels.size()) throw TruncatedError("truncated PPM payload: " + path.string());
  std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(),
              reinterpret_cast<char*>(img.pixels.data()));
  return img;
}

inline void save_image(const RgbImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

/// Bilinear resample with pixel-centre alignment.
inline RgbImage resize_bilinear(const RgbImage& img, int out_w, int out_h) {
  if (img.width < 1 || img.height < 1 || img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw ArgumentError("empty or inconsistent image");
  }
  if (out_w < 1 || out_h < 1) throw ArgumentError("target size must be positive");
  if (out_w == img.width && out_h == img.height) return img;

  RgbImage out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - wx) * img.at(x0, y0, ch) + wx * img.at(x1, y0, ch);
        const double bot = (1.0 - wx) * img.at(x0, y1, ch) + wx * img.at(x1, y1, ch);
        const double v = (1.0 - wy) * top + wy * bot;
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

inline RgbImage scale_to_canonical(const RgbImage& img, const GridSpec& grid) {
  return resize_bilinear(img, grid.image_width, grid.image_height);
}

struct DescriptorConfig {
  int color_bins = 8;     // per CIELAB channel
  int gradient_bins = 8;  // signed orientation over [0, 2pi)

  int dim() const noexcept { return 3 * color_bins + gradient_bins; }
};

/// sRGB (D65) to CIELAB.
inline std::array<double, 3> rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  auto lin = [](std::uint8_t v) {
    const double c = v / 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double r = lin(r8), g = lin(g8), b = lin(b8);
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double y = (0.2126729 * r + 0.7151522 * g + 0.0721750 * b);
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Histogram bin of v over [lo, hi), clamped to the end bins.
inline int bin_index(double v, double lo, double hi, int bins) {
  const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
  return std::clamp(b, 0, bins - 1);
}

/// Bin of a signed orientation, bins centred on multiples of 2pi/bins.
inline int orientation_bin(double gx, double gy, int bins) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double theta = std::atan2(gy, gx);
  if (theta < 0) theta += two_pi;
  const double width = two_pi / bins;
  return static_cast<int>(std::floor(theta / width + 0.5)) % bins;
}

inline double luminance(const RgbImage& img, int x, int y) {
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

/// Per-pixel luminance gradient: central differences inside, one-sided at
/// the image border. Returns (gx, gy) planes, row-major.
inline std::pair<std::vector<double>, std::vector<double>> luminance_gradient(const RgbImage& img) {
  const int w = img.width, h = img.height;
  std::vector<double> lum(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum[static_cast<std::size_t>(y) * w + x] = luminance(img, x, y);
  auto L = [&](int x, int y) { return lum[static_cast<std::size_t>(y) * w + x]; };

  std::vector<double> gx(lum.size(), 0.0), gy(lum.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx = 0.0, dy = 0.0;
      if (w > 1) {
        if (x == 0) dx = L(1, y) - L(0, y);
        else if (x == w - 1) dx = L(w - 1, y) - L(w - 2, y);
        else dx = 0.5 * (L(x + 1, y) - L(x - 1, y));
      }
      if (h > 1) {
        if (y == 0) dy = L(x, 1) - L(x, 0);
        else if (y == h - 1) dy = L(x, h - 1) - L(x, h - 2);
        else dy = 0.5 * (L(x, y + 1) - L(x, y - 1));
      }
      gx[static_cast<std::size_t>(y) * w + x] = dx;
      gy[static_cast<std::size_t>(y) * w + x] = dy;
    }
  }
  return {std::move(gx), std::move(gy)};
}

/// One column per patch (zig-zag ordinal order). Rows: L, a, b marginal
/// histograms (jointly L1-normalised), then the magnitude-weighted gradient
/// orientation histogram (L1-normalised, or all zero for a flat patch).
using DescriptorMatrix = Eigen::MatrixXd;

inline DescriptorMatrix extract_descriptors(const RgbImage& img, const GridSpec& grid,
                                            const DescriptorConfig& cfg = {}) {
  grid.validate();
  if (img.width != grid.image_width || img.height != grid.image_height) {
    throw ArgumentError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " does not match grid image size " + std::to_string(grid.image_width) + "x" +
                        std::to_string(grid.image_height));
  }
  if (cfg.color_bins < 1 || cfg.gradient_bins < 1) throw ConfigError("histogram bins must be positive");

  const int w = img.width;
  std::vector<std::array<int, 3>> lab_bins(static_cast<std::size_t>(w) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto lab = rgb_to_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      lab_bins[static_cast<std::size_t>(y) * w + x] = {bin_index(lab[0], 0.0, 100.0, cfg.color_bins),
                                                       bin_index(lab[1], -100.0, 100.0, cfg.color_bins),
                                                       bin_index(lab[2], -100.0, 100.0, cfg.color_bins)};
    }
  }
  const auto [gx, gy] = luminance_gradient(img);

  const auto patches = patch_positions(grid);
  DescriptorMatrix out = DescriptorMatrix::Zero(cfg.dim(), static_cast<Eigen::Index>(patches.size()));
  const int grad_offset = 3 * cfg.color_bins;
  for (const PatchRef& p : patches) {
    auto col = out.col(p.ordinal);
    for (int y = p.y; y < p.y + grid.patch_height; ++y) {
      for (int x = p.x; x < p.x + grid.patch_width; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * w + x;
        for (int ch = 0; ch < 3; ++ch) col(ch * cfg.color_bins + lab_bins[k][ch]) += 1.0;
        const double mag = std::hypot(gx[k], gy[k]);
        if (mag > 0.0) col(grad_offset + orientation_bin(gx[k], gy[k], cfg.gradient_bins)) += mag;
      }
    }
    auto color = col.head(grad_offset);
    color /= color.sum();
    auto grad = col.tail(cfg.gradient_bins);
    const double energy = grad.sum();
    if (energy > 0.0) grad /= energy;
  }
  return out;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_IMAGING_HPP_
