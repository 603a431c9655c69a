#ifndef CORRSTRUCT_STRUCTURE_HPP_
#define CORRSTRUCT_STRUCTURE_HPP_

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Dense>

#include "corrstruct/binary_io.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/geometry.hpp"

namespace corrstruct {

using ProbMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Camera-pair correspondence structure: row i is the matching distribution of
/// probe patch i over all gallery patches. Rows sum to one.
struct CorrespondenceStructure {
  GridSpec probe_grid;
  GridSpec gallery_grid;
  ProbMatrix probs;

  int probe_count() const noexcept { return static_cast<int>(probs.rows()); }
  int gallery_count() const noexcept { return static_cast<int>(probs.cols()); }

  friend bool operator==(const CorrespondenceStructure& a, const CorrespondenceStructure& b) {
    return a.probe_grid == b.probe_grid && a.gallery_grid == b.gallery_grid &&
           a.probs.rows() == b.probs.rows() && a.probs.cols() == b.probs.cols() && a.probs == b.probs;
  }
};

inline double row_sum(const ProbMatrix& m, Eigen::Index row) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(row, j);
  return s;
}

/// L1-normalises every row in place. An all-zero row is a numeric error.
inline void normalize_rows(ProbMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double s = row_sum(m, i);
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw NumericError("cannot normalise row " + std::to_string(i) + " (mass " + std::to_string(s) + ")");
    }
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) /= s;
  }
}

/// Number of rows that are negative somewhere, non-finite, or off unit mass
/// by more than tol.
inline int row_stochastic_violations(const ProbMatrix& m, double tol = 1e-9) {
  int bad = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    bool ok = std::abs(row_sum(m, i) - 1.0) <= tol;
    for (Eigen::Index j = 0; ok && j < m.cols(); ++j) ok = std::isfinite(m(i, j)) && m(i, j) >= 0.0;
    if (!ok) ++bad;
  }
  return bad;
}

/// Spatial prior: mass 1/(d+1) on gallery patches within zig-zag distance
/// d < max_distance of the co-located patch, zero beyond, rows normalised.
inline CorrespondenceStructure init_structure(const GridSpec& probe_grid, const GridSpec& gallery_grid,
                                              int max_distance) {
  probe_grid.validate();
  gallery_grid.validate();
  if (max_distance < 1) throw ConfigError("T_d must be at least 1");
  const auto coloc = colocation_table(probe_grid, gallery_grid);
  CorrespondenceStructure s{probe_grid, gallery_grid, ProbMatrix::Zero(probe_grid.size(), gallery_grid.size())};
  for (int i = 0; i < probe_grid.size(); ++i) {
    const int c = coloc[static_cast<std::size_t>(i)];
    for (int j = 0; j < gallery_grid.size(); ++j) {
      const int d = std::abs(c - j);
      if (d < max_distance) s.probs(i, j) = 1.0 / (d + 1.0);
    }
  }
  normalize_rows(s.probs);  // the d = 0 term keeps every row non-empty
  return s;
}

/// P(i, j) if it strictly exceeds the gate, else 0.
inline double thresholded(const CorrespondenceStructure& s, int i, int j, double gate) {
  if (i < 0 || i >= s.probe_count() || j < 0 || j >= s.gallery_count()) {
    throw ArgumentError("structure index out of range");
  }
  const double p = s.probs(i, j);
  return p > gate ? p : 0.0;
}

/// (1 - rate) * current + rate * update, rows renormalised.
inline CorrespondenceStructure blend_update(const CorrespondenceStructure& current, const ProbMatrix& update,
                                            double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("update rate must lie in (0, 1]");
  if (update.rows() != current.probs.rows() || update.cols() != current.probs.cols()) {
    throw ArgumentError("update shape does not match structure");
  }
  if (!update.allFinite() || (update.array() < 0.0).any()) throw ArgumentError("update must be finite and non-negative");
  CorrespondenceStructure next{current.probe_grid, current.gallery_grid,
                               (1.0 - rate) * current.probs + rate * update};
  normalize_rows(next.probs);
  return next;
}

// --- Serialisation ------------------------------------------------------------

inline constexpr std::array<char, 8> kStructureMagic{'C', 'S', 'T', 'R', '1', '\0', '\0', '\0'};

namespace detail {
inline void write_grid(std::ostream& os, const GridSpec& g) {
  for (int v : {g.image_width, g.image_height, g.patch_width, g.patch_height, g.stride_x, g.stride_y}) {
    binio::write_le<std::int32_t>(os, v);
  }
}
inline GridSpec read_grid(std::istream& is) {
  GridSpec g;
  for (int* v : {&g.image_width, &g.image_height, &g.patch_width, &g.patch_height, &g.stride_x, &g.stride_y}) {
    *v = binio::read_le<std::int32_t>(is, "grid spec");
  }
  if (!g.valid()) throw FormatError("invalid grid spec in structure file");
  return g;
}
}  // namespace detail

/// Layout: 8-byte magic "CSTR1", u32 N_A, u32 N_B, probe grid and gallery grid
/// (6 x i32 each), then N_A * N_B little-endian f64 in row-major order.
inline void save_structure(const CorrespondenceStructure& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write structure " + path.string());
  out.write(kStructureMagic.data(), kStructureMagic.size());
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.probe_count()));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.gallery_count()));
  detail::write_grid(out, s.probe_grid);
  detail::write_grid(out, s.gallery_grid);
  for (Eigen::Index i = 0; i < s.probs.rows(); ++i)
    for (Eigen::Index j = 0; j < s.probs.cols(); ++j) binio::write_le<double>(out, s.probs(i, j));
  if (!out) throw IoError("write failed: " + path.string());
}

inline CorrespondenceStructure load_structure(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open structure " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kStructureMagic) throw FormatError("bad structure magic");
  const auto n_a = binio::read_le<std::uint32_t>(in, "N_A");
  const auto n_b = binio::read_le<std::uint32_t>(in, "N_B");
  CorrespondenceStructure s;
  s.probe_grid = detail::read_grid(in);
  s.gallery_grid = detail::read_grid(in);
  if (static_cast<int>(n_a) != s.probe_grid.size() || static_cast<int>(n_b) != s.gallery_grid.size()) {
    throw FormatError("structure dims " + std::to_string(n_a) + "x" + std::to_string(n_b) +
                      " disagree with recorded grids");
  }
  s.probs.resize(n_a, n_b);
  for (std::uint32_t i = 0; i < n_a; ++i)
    for (std::uint32_t j = 0; j < n_b; ++j) s.probs(i, j) = binio::read_le<double>(in, "probabilities");
  binio::expect_eof(in, "structure payload");
  return s;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// N_A rows x N_B columns, for heat-map plotting.
inline void export_structure_csv(const CorrespondenceStructure& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < s.probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.probs.cols(); ++j) {
      if (j) out << ',';
      out << format_double(s.probs(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_STRUCTURE_HPP_
