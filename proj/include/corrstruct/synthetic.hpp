#ifndef CORRSTRUCT_SYNTHETIC_HPP_
#define CORRSTRUCT_SYNTHETIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "corrstruct/dataset.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/geometry.hpp"
#include "corrstruct/imaging.hpp"
#include "corrstruct/learning.hpp"

namespace corrstruct {

struct SyntheticSpec {
  int identities = 60;
  int shift_rows = 2;   // camera B content moves down by shift_rows gallery strides
  double noise = 0.05;  // uniform per-pixel noise amplitude as a fraction of 255, camera B only
  std::uint64_t seed = 7;
  int outfits = 4;      // identities share clothing, differing in proportions
  GridSpec probe_grid = canonical_probe_grid();
  GridSpec gallery_grid = canonical_gallery_grid();

  int shift_pixels() const noexcept { return shift_rows * gallery_grid.stride_y; }

  void validate() const {
    probe_grid.validate();
    gallery_grid.validate();
    if (identities < 1) throw ConfigError("synthetic identity count must be positive");
    if (outfits < 1) throw ConfigError("synthetic outfit count must be positive");
    if (std::abs(shift_rows) >= gallery_grid.n_rows() || std::abs(shift_pixels()) >= gallery_grid.image_height) {
      throw ConfigError("shift of " + std::to_string(shift_rows) + " gallery rows leaves the grid");
    }
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise level must lie in [0, 1]");
  }
};

struct SyntheticPair {
  RgbImage probe;    // camera A
  RgbImage gallery;  // camera B
};

namespace detail {

inline constexpr std::array<std::array<std::uint8_t, 3>, 7> kPalette{{
    {200, 40, 40},
    {40, 150, 60},
    {50, 70, 190},
    {220, 200, 60},
    {235, 235, 235},
    {35, 35, 40},
    {140, 90, 50},
}};
inline constexpr std::array<std::uint8_t, 3> kBackground{110, 120, 115};

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline void fill_rect(RgbImage& img, int x0, int x1, int y0, int y1, const std::array<std::uint8_t, 3>& c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[static_cast<std::size_t>(ch)];
}

}  // namespace detail

/// Clothing shared by several identities: block colours, widths and stripes.
/// Body blocks are always striped so that vertical position shows up in the
/// patch histograms.
struct Outfit {
  int blocks = 3;
  std::vector<std::array<std::uint8_t, 3>> colours;
  std::vector<std::array<std::uint8_t, 3>> stripe_colours;
  std::vector<int> stripe_period;  // 0 for the plain head block
  std::vector<int> half_width;
};

inline Outfit random_outfit(int width, std::mt19937_64& rng) {
  using detail::uniform_int;
  Outfit o;
  o.blocks = uniform_int(rng, 3, 5);
  for (int b = 0; b < o.blocks; ++b) {
    o.colours.push_back(detail::kPalette[detail::uniform_below(rng, detail::kPalette.size())]);
    o.stripe_colours.push_back(detail::kPalette[detail::uniform_below(rng, detail::kPalette.size())]);
    o.stripe_period.push_back(b > 0 ? uniform_int(rng, 4, 8) : 0);
    o.half_width.push_back(b == 0 ? uniform_int(rng, width / 8, width / 5) : uniform_int(rng, width / 4, width / 2 - 2));
  }
  return o;
}

/// One identity wearing `outfit`: a narrow head over body blocks whose
/// boundaries and widths are jittered per identity.
inline RgbImage render_figure(int width, int height, const Outfit& outfit, std::mt19937_64& rng) {
  using detail::uniform_int;
  RgbImage img(width, height);
  detail::fill_rect(img, 0, width, 0, height, detail::kBackground);
  const int top = uniform_int(rng, height / 64, height / 16);
  const int bottom = height - uniform_int(rng, height / 64, height / 16);
  const int head = uniform_int(rng, height / 8, height / 6);
  std::vector<int> cuts{top, top + head};
  const int body_top = top + head, body = bottom - body_top;
  const int body_blocks = outfit.blocks - 1;
  const int jitter = height / 10;
  for (int b = 1; b < body_blocks; ++b) {
    const int nominal = body_top + body * b / body_blocks;
    cuts.push_back(std::clamp(nominal + uniform_int(rng, -jitter, jitter), cuts.back() + 4, bottom - 4));
  }
  cuts.push_back(bottom);
  const int centre = width / 2 + uniform_int(rng, -1, 1);
  for (std::size_t b = 0; b + 1 < cuts.size(); ++b) {
    const int half = outfit.half_width[b] + uniform_int(rng, -1, 1);
    detail::fill_rect(img, centre - half, centre + half, cuts[b], cuts[b + 1], outfit.colours[b]);
    if (const int period = outfit.stripe_period[b]; period > 0) {
      for (int y = cuts[b]; y < cuts[b + 1]; y += 2 * period)
        detail::fill_rect(img, centre - half, centre + half, y, std::min(y + period, cuts[b + 1]),
                          outfit.stripe_colours[b]);
    }
  }
  return img;
}

/// Camera B view: content moved down by `pixels` (up if negative), vacated
/// rows filled with background, then uniform noise.
inline RgbImage camera_b_view(const RgbImage& base, int pixels, double noise, std::mt19937_64& rng) {
  RgbImage out(base.width, base.height);
  detail::fill_rect(out, 0, out.width, 0, out.height, detail::kBackground);
  for (int y = 0; y < out.height; ++y) {
    const int src = y - pixels;
    if (src < 0 || src >= base.height) continue;
    for (int x = 0; x < out.width; ++x)
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = base.at(x, src, ch);
  }
  if (noise > 0.0) {
    const double amp = noise * 255.0;
    for (auto& p : out.pixels) {
      const double v = static_cast<double>(p) + (2.0 * detail::uniform_unit(rng) - 1.0) * amp;
      p = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

/// All identities in memory, in identity order.
inline std::vector<SyntheticPair> render_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Outfit> outfits;
  for (int o = 0; o < spec.outfits; ++o) outfits.push_back(random_outfit(spec.probe_grid.image_width, rng));
  std::vector<SyntheticPair> out;
  out.reserve(static_cast<std::size_t>(spec.identities));
  for (int k = 0; k < spec.identities; ++k) {
    const auto& outfit = outfits[detail::uniform_below(rng, outfits.size())];
    RgbImage a = render_figure(spec.probe_grid.image_width, spec.probe_grid.image_height, outfit, rng);
    RgbImage b = camera_b_view(a, spec.shift_pixels(), spec.noise, rng);
    out.push_back({std::move(a), std::move(b)});
  }
  return out;
}

inline std::string synthetic_identity_name(int k) {
  std::string digits = std::to_string(k);
  return "id" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

/// Writes PPMs, manifest.csv and ground_truth.txt under `dir`.
inline DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  const auto pairs = render_synthetic(spec);
  std::filesystem::create_directories(dir / "images");
  std::vector<ManifestEntry> entries;
  for (int k = 0; k < spec.identities; ++k) {
    const std::string id = synthetic_identity_name(k);
    const auto pa = dir / "images" / (id + "_A.ppm");
    const auto pb = dir / "images" / (id + "_B.ppm");
    save_image(pairs[static_cast<std::size_t>(k)].probe, pa);
    save_image(pairs[static_cast<std::size_t>(k)].gallery, pb);
    entries.push_back({id, Camera::A, pa});
    entries.push_back({id, Camera::B, pb});
  }
  auto manifest = validate_manifest("synthetic", std::move(entries));
  save_manifest(manifest, dir / "manifest.csv");
  std::ofstream gt(dir / "ground_truth.txt");
  gt << "shift_rows = " << spec.shift_rows << "\nshift_pixels = " << spec.shift_pixels() << "\nnoise = "
     << spec.noise << "\nseed = " << spec.seed << "\nidentities = " << spec.identities << '\n';
  if (!gt) throw IoError("cannot write ground truth in " + dir.string());
  return manifest;
}

/// Gallery ordinal that holds probe patch i's content after the shift, or -1
/// when it falls outside the gallery grid.
inline int displaced_patch(const GridSpec& probe_grid, const GridSpec& gallery_grid, int i, int shift_rows) {
  const PatchRef c = colocated_patch(probe_grid, gallery_grid, patch_at(probe_grid, i));
  const int row = c.row + shift_rows;
  if (row < 0 || row >= gallery_grid.n_rows()) return -1;
  return gallery_grid.ordinal(row, c.col);
}

/// Probe patches off the grid border whose displaced patch exists.
inline std::vector<int> interior_patches(const GridSpec& probe_grid, const GridSpec& gallery_grid, int shift_rows) {
  std::vector<int> out;
  for (int i = 0; i < probe_grid.size(); ++i) {
    const int r = probe_grid.row_of(i), c = probe_grid.col_of(i);
    if (r < 1 || r > probe_grid.n_rows() - 2 || c < 1 || c > probe_grid.n_cols() - 2) continue;
    if (displaced_patch(probe_grid, gallery_grid, i, shift_rows) >= 0) out.push_back(i);
  }
  return out;
}

/// Fraction of `rows` whose argmax lies within Chebyshev grid distance 1 of
/// the displaced patch.
inline double shift_recovery(const CorrespondenceStructure& s, int shift_rows, std::span<const int> rows) {
  if (rows.empty()) return 0.0;
  int hits = 0;
  for (int i : rows) {
    Eigen::Index arg = 0;
    s.probs.row(i).maxCoeff(&arg);
    const int want = displaced_patch(s.probe_grid, s.gallery_grid, i, shift_rows);
    const int j = static_cast<int>(arg);
    const int dr = std::abs(s.gallery_grid.row_of(j) - s.gallery_grid.row_of(want));
    const int dc = std::abs(s.gallery_grid.col_of(j) - s.gallery_grid.col_of(want));
    if (std::max(dr, dc) <= 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_SYNTHETIC_HPP_
