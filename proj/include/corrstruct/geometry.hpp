#ifndef CORRSTRUCT_GEOMETRY_HPP_
#define CORRSTRUCT_GEOMETRY_HPP_

#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "corrstruct/error.hpp"

namespace corrstruct {

/// Regular patch lattice over a fixed-size image. All lengths in pixels.
struct GridSpec {
  int image_width = 48;
  int image_height = 128;
  int patch_width = 18;
  int patch_height = 24;
  int stride_x = 6;
  int stride_y = 8;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

  bool valid() const noexcept {
    return image_width >= 1 && image_height >= 1 && patch_width >= 1 &&
           patch_height >= 1 && stride_x >= 1 && stride_y >= 1 &&
           patch_width <= image_width && patch_height <= image_height;
  }

  void validate() const {
    if (!valid()) {
      throw ConfigError("invalid grid: image " + std::to_string(image_width) + "x" +
                        std::to_string(image_height) + ", patch " +
                        std::to_string(patch_width) + "x" + std::to_string(patch_height) +
                        ", stride " + std::to_string(stride_x) + "/" +
                        std::to_string(stride_y));
    }
  }

  int n_cols() const noexcept { return (image_width - patch_width) / stride_x + 1; }
  int n_rows() const noexcept { return (image_height - patch_height) / stride_y + 1; }
  int size() const noexcept { return n_rows() * n_cols(); }

  /// Boustrophedon scan: even rows left to right, odd rows right to left.
  int ordinal(int row, int col) const noexcept {
    const int c = (row % 2 == 0) ? col : n_cols() - 1 - col;
    return row * n_cols() + c;
  }

  int row_of(int ordinal) const noexcept { return ordinal / n_cols(); }

  int col_of(int ordinal) const noexcept {
    const int row = ordinal / n_cols();
    const int c = ordinal % n_cols();
    return (row % 2 == 0) ? c : n_cols() - 1 - c;
  }
};

/// Probe lattice used throughout the experiments: 48x128 image, 18x24 patch,
/// strides 6/8.
inline GridSpec canonical_probe_grid() { return GridSpec{48, 128, 18, 24, 6, 8}; }

/// Gallery lattice: same image and patch, finer strides 3/4.
inline GridSpec canonical_gallery_grid() { return GridSpec{48, 128, 18, 24, 3, 4}; }

struct PatchRef {
  int row = 0;
  int col = 0;
  int ordinal = 0;
  int x = 0;  // pixel origin
  int y = 0;

  friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

inline PatchRef make_patch(const GridSpec& grid, int row, int col) {
  if (row < 0 || row >= grid.n_rows() || col < 0 || col >= grid.n_cols()) {
    throw ArgumentError("patch (" + std::to_string(row) + "," + std::to_string(col) +
                        ") outside grid");
  }
  return PatchRef{row, col, grid.ordinal(row, col), col * grid.stride_x, row * grid.stride_y};
}

inline PatchRef patch_at(const GridSpec& grid, int ordinal) {
  if (ordinal < 0 || ordinal >= grid.size()) {
    throw ArgumentError("patch ordinal " + std::to_string(ordinal) + " outside grid");
  }
  return make_patch(grid, grid.row_of(ordinal), grid.col_of(ordinal));
}

/// Every patch of the lattice, indexed by zig-zag ordinal.
inline std::vector<PatchRef> patch_positions(const GridSpec& grid) {
  grid.validate();
  std::vector<PatchRef> out(static_cast<std::size_t>(grid.size()));
  for (int r = 0; r < grid.n_rows(); ++r) {
    for (int c = 0; c < grid.n_cols(); ++c) {
      PatchRef p = make_patch(grid, r, c);
      out[static_cast<std::size_t>(p.ordinal)] = p;
    }
  }
  return out;
}

inline void check_member(const GridSpec& grid, const PatchRef& p) {
  if (p.row < 0 || p.row >= grid.n_rows() || p.col < 0 || p.col >= grid.n_cols() ||
      p.ordinal != grid.ordinal(p.row, p.col)) {
    throw ArgumentError("patch does not belong to grid");
  }
}

/// Number of scan-order strides separating two patches of the same grid.
inline int zigzag_distance(const GridSpec& grid, const PatchRef& a, const PatchRef& b) {
  check_member(grid, a);
  check_member(grid, b);
  return std::abs(a.ordinal - b.ordinal);
}

inline int zigzag_distance(const GridSpec& grid, int ordinal_a, int ordinal_b) {
  if (ordinal_a < 0 || ordinal_a >= grid.size() || ordinal_b < 0 || ordinal_b >= grid.size()) {
    throw ArgumentError("ordinal outside grid");
  }
  return std::abs(ordinal_a - ordinal_b);
}

/// Gallery patch whose pixel origin is nearest to p's origin; ties go to the
/// smaller ordinal.
inline PatchRef colocated_patch(const GridSpec& probe_grid, const GridSpec& gallery_grid,
                                const PatchRef& p) {
  if (probe_grid.image_width != gallery_grid.image_width ||
      probe_grid.image_height != gallery_grid.image_height) {
    throw ArgumentError("probe and gallery grids cover different image sizes");
  }
  check_member(probe_grid, p);
  PatchRef best{};
  std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
  for (int o = 0; o < gallery_grid.size(); ++o) {
    const PatchRef q = patch_at(gallery_grid, o);
    const std::int64_t dx = q.x - p.x;
    const std::int64_t dy = q.y - p.y;
    const std::int64_t d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {  // ascending ordinal, so strict < keeps the smaller one
      best_d2 = d2;
      best = q;
    }
  }
  return best;
}

/// colocated_patch for every probe ordinal, as gallery ordinals.
inline std::vector<int> colocation_table(const GridSpec& probe_grid, const GridSpec& gallery_grid) {
  std::vector<int> out(static_cast<std::size_t>(probe_grid.size()));
  for (int i = 0; i < probe_grid.size(); ++i) {
    out[static_cast<std::size_t>(i)] =
        colocated_patch(probe_grid, gallery_grid, patch_at(probe_grid, i)).ordinal;
  }
  return out;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_GEOMETRY_HPP_
