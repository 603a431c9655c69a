#ifndef CORRSTRUCT_METRIC_HPP_
#define CORRSTRUCT_METRIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrstruct/binary_io.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/parallel.hpp"

namespace corrstruct {

/// Per-location KISSME metrics. Location i is the probe-patch ordinal.
struct MetricModel {
  int dim = 0;
  std::vector<Eigen::MatrixXd> matrices;  // symmetric dim x dim
  std::vector<double> sigma;              // > 0
  std::vector<std::uint8_t> fallback;     // 1 where the global metric stands in
  Eigen::MatrixXd global_matrix;
  double global_sigma = 1.0;

  int locations() const noexcept { return static_cast<int>(matrices.size()); }
};

/// Training differences (probe descriptor minus gallery descriptor) for one
/// location, one per column.
struct PairSamples {
  Eigen::MatrixXd similar;
  Eigen::MatrixXd dissimilar;
};

/// How the per-location similarity scale is chosen.
///  LikelihoodRatio: sigma = 2, so exp(-d/sigma) is the KISSME likelihood
///                   ratio of "similar" against "dissimilar", scaled to 1 at d = 0.
///  MeanSimilar:     sigma = mean clamped distance of the similar pairs.
enum class SigmaRule { LikelihoodRatio, MeanSimilar };

inline constexpr double kLikelihoodSigma = 2.0;

struct MetricTrainConfig {
  double ridge_scale = 1e-3;  // gamma = ridge_scale * trace / dim
  bool project_psd = true;    // clip negative eigenvalues of each M_i
  SigmaRule sigma_rule = SigmaRule::LikelihoodRatio;
  int threads = 1;
};

namespace detail {

inline Eigen::MatrixXd second_moment(const Eigen::MatrixXd& diffs) {
  return (diffs * diffs.transpose()) / static_cast<double>(diffs.cols());
}

inline Eigen::MatrixXd regularised_inverse(Eigen::MatrixXd cov, double ridge_scale) {
  const auto n = cov.rows();
  double gamma = ridge_scale * cov.trace() / static_cast<double>(n);
  if (!(gamma > 0.0) && ridge_scale > 0.0) gamma = ridge_scale;
  cov.diagonal().array() += gamma;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (ldlt.vectorD().array() <= 0.0).any()) {
    // Only reachable with ridge_scale == 0 on rank-deficient data.
    cov.diagonal().array() += 1e-9 * std::max(1.0, cov.trace() / static_cast<double>(n));
    ldlt.compute(cov);
  }
  return ldlt.solve(Eigen::MatrixXd::Identity(n, n));
}

// Plain loops with a fixed summation order: equal inputs give bit-equal
// outputs on every path. m is symmetric, so column r doubles as row r.
inline void mat_vec(const Eigen::MatrixXd& m, const double* v, double* out) {
  const auto n = m.rows();
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* col = m.col(r).data();
    double row = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) row += col[c] * v[c];
    out[r] = row;
  }
}

inline double dot(const double* a, const double* b, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

inline double quad_form(const Eigen::MatrixXd& m, const double* v) {
  Eigen::VectorXd mv(m.rows());
  mat_vec(m, v, mv.data());
  return dot(mv.data(), v, m.rows());
}

inline double kissme_sigma(const Eigen::MatrixXd& m, const Eigen::MatrixXd& similar, SigmaRule rule) {
  if (rule == SigmaRule::LikelihoodRatio) return kLikelihoodSigma;
  double total = 0.0;
  for (Eigen::Index k = 0; k < similar.cols(); ++k) {
    total += std::max(0.0, quad_form(m, similar.col(k).data()));
  }
  return std::max(1e-6, total / static_cast<double>(similar.cols()));
}

/// Symmetric part with negative eigenvalues set to zero.
inline Eigen::MatrixXd clip_to_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

inline Eigen::MatrixXd kissme_matrix(const Eigen::MatrixXd& similar, const Eigen::MatrixXd& dissimilar,
                                     double ridge_scale, bool psd = false) {
  Eigen::MatrixXd m = regularised_inverse(second_moment(similar), ridge_scale) -
                      regularised_inverse(second_moment(dissimilar), ridge_scale);
  m = 0.5 * (m + m.transpose());
  return psd ? clip_to_psd(m) : m;
}

}  // namespace detail

/// M_i = inv(Sigma_S) - inv(Sigma_D) per location; data-starved locations
/// (fewer than dim+1 pairs of either kind) use the pooled global metric.
inline MetricModel train_metric(std::span<const PairSamples> per_location, const MetricTrainConfig& cfg = {}) {
  if (per_location.empty()) throw ConfigError("metric training needs at least one location");
  const auto dim = per_location.front().similar.rows();
  Eigen::Index total_s = 0, total_d = 0;
  for (const auto& loc : per_location) {
    if (loc.similar.cols() > 0 && loc.similar.rows() != dim) throw ArgumentError("inconsistent descriptor dim");
    if (loc.dissimilar.cols() > 0 && loc.dissimilar.rows() != dim) throw ArgumentError("inconsistent descriptor dim");
    total_s += loc.similar.cols();
    total_d += loc.dissimilar.cols();
  }
  if (dim == 0 || total_s == 0 || total_d == 0) throw ConfigError("empty metric training set");

  Eigen::MatrixXd pooled_s(dim, total_s), pooled_d(dim, total_d);
  Eigen::Index off_s = 0, off_d = 0;
  for (const auto& loc : per_location) {
    pooled_s.middleCols(off_s, loc.similar.cols()) = loc.similar;
    pooled_d.middleCols(off_d, loc.dissimilar.cols()) = loc.dissimilar;
    off_s += loc.similar.cols();
    off_d += loc.dissimilar.cols();
  }

  MetricModel model;
  model.dim = static_cast<int>(dim);
  model.global_matrix = detail::kissme_matrix(pooled_s, pooled_d, cfg.ridge_scale, cfg.project_psd);
  model.global_sigma = detail::kissme_sigma(model.global_matrix, pooled_s, cfg.sigma_rule);

  const std::size_t n = per_location.size();
  model.matrices.resize(n);
  model.sigma.resize(n);
  model.fallback.assign(n, 0);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const auto& loc = per_location[i];
    if (loc.similar.cols() < dim + 1 || loc.dissimilar.cols() < dim + 1) {
      model.matrices[i] = model.global_matrix;
      model.sigma[i] = model.global_sigma;
      model.fallback[i] = 1;
      return;
    }
    model.matrices[i] = detail::kissme_matrix(loc.similar, loc.dissimilar, cfg.ridge_scale, cfg.project_psd);
    model.sigma[i] = detail::kissme_sigma(model.matrices[i], loc.similar, cfg.sigma_rule);
  });
  return model;
}

/// Unclamped KISSME distance at a location.
inline double metric_distance(const MetricModel& model, const Eigen::VectorXd& fa, const Eigen::VectorXd& fb,
                              int loc) {
  if (fa.size() != model.dim || fb.size() != model.dim) throw ArgumentError("descriptor dim mismatch");
  if (loc < 0 || loc >= model.locations()) throw ArgumentError("metric location out of range");
  const Eigen::VectorXd d = fa - fb;
  return detail::quad_form(model.matrices[static_cast<std::size_t>(loc)], d.data());
}

/// exp(-max(0, d^T M d) / sigma), in (0, 1]; exactly 1 for equal inputs.
inline double appearance_similarity(const MetricModel& model, const Eigen::VectorXd& fa, const Eigen::VectorXd& fb,
                                    int loc) {
  const double dist = std::max(0.0, metric_distance(model, fa, fb, loc));
  return std::exp(-dist / model.sigma[static_cast<std::size_t>(loc)]);
}

// --- Batched evaluation ------------------------------------------------------
//
// d^T M d = a^T M a - 2 (M a)^T b + b^T M b. Probe-side and gallery-side terms
// are precomputed once per image, leaving one dim-length dot per pair.

/// Probe image prepared against a metric: proj.col(i) = M_i f_i.
struct PreparedProbe {
  Eigen::MatrixXd descriptors;
  Eigen::MatrixXd proj;
  Eigen::VectorXd quad;
};

/// Gallery image prepared against a metric: quad(i, j) = f_j^T M_i f_j.
struct PreparedGallery {
  Eigen::MatrixXd descriptors;
  Eigen::MatrixXd quad;
};

inline PreparedProbe prepare_probe(const MetricModel& model, const Eigen::MatrixXd& descriptors) {
  if (descriptors.rows() != model.dim || descriptors.cols() != model.locations()) {
    throw ArgumentError("probe descriptors do not match metric locations");
  }
  PreparedProbe p{descriptors, Eigen::MatrixXd(model.dim, descriptors.cols()), Eigen::VectorXd(descriptors.cols())};
  for (Eigen::Index i = 0; i < descriptors.cols(); ++i) {
    detail::mat_vec(model.matrices[static_cast<std::size_t>(i)], descriptors.col(i).data(), p.proj.col(i).data());
    p.quad(i) = detail::dot(p.proj.col(i).data(), descriptors.col(i).data(), model.dim);
  }
  return p;
}

inline PreparedGallery prepare_gallery(const MetricModel& model, const Eigen::MatrixXd& descriptors) {
  if (descriptors.rows() != model.dim) throw ArgumentError("gallery descriptor dim mismatch");
  PreparedGallery g{descriptors, Eigen::MatrixXd(model.locations(), descriptors.cols())};
  Eigen::VectorXd tmp(model.dim);
  for (int i = 0; i < model.locations(); ++i) {
    for (Eigen::Index j = 0; j < descriptors.cols(); ++j) {
      detail::mat_vec(model.matrices[static_cast<std::size_t>(i)], descriptors.col(j).data(), tmp.data());
      g.quad(i, j) = detail::dot(tmp.data(), descriptors.col(j).data(), model.dim);
    }
  }
  return g;
}

/// log Phi_z between probe patch i and gallery patch j; finite even where
/// Phi_z itself underflows.
inline double pair_log_similarity(const MetricModel& model, const PreparedProbe& probe,
                                  const PreparedGallery& gallery, int i, int j) {
  const double cross = detail::dot(probe.proj.col(i).data(), gallery.descriptors.col(j).data(), model.dim);
  const double dist = probe.quad(i) - 2.0 * cross + gallery.quad(i, j);
  return -std::max(0.0, dist) / model.sigma[static_cast<std::size_t>(i)];
}

inline double pair_similarity(const MetricModel& model, const PreparedProbe& probe, const PreparedGallery& gallery,
                              int i, int j) {
  return std::exp(pair_log_similarity(model, probe, gallery, i, j));
}

/// Full N_A x N_B similarity table for one image pair.
inline Eigen::MatrixXd similarity_table(const MetricModel& model, const PreparedProbe& probe,
                                        const PreparedGallery& gallery) {
  Eigen::MatrixXd out(probe.descriptors.cols(), gallery.descriptors.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = pair_similarity(model, probe, gallery, static_cast<int>(i), static_cast<int>(j));
  return out;
}

/// Mean similarity over correct-match training pairs, entries in (0, 1].
using AvgSimilarityTable = Eigen::MatrixXd;

inline AvgSimilarityTable build_avg_similarity(const MetricModel& model, std::span<const PreparedProbe* const> probes,
                                               std::span<const PreparedGallery* const> galleries) {
  if (probes.empty() || probes.size() != galleries.size()) {
    throw ArgumentError("average similarity needs matching, non-empty probe/gallery lists");
  }
  AvgSimilarityTable sum = similarity_table(model, *probes[0], *galleries[0]);
  for (std::size_t k = 1; k < probes.size(); ++k) sum += similarity_table(model, *probes[k], *galleries[k]);
  sum /= static_cast<double>(probes.size());
  return sum.cwiseMax(std::numeric_limits<double>::min());  // keep entries strictly positive
}

// --- Serialisation -------------------------------------------------------------

inline constexpr std::array<char, 8> kMetricMagic{'C', 'S', 'M', 'E', 'T', 'R', 'I', 'C'};
inline constexpr std::uint32_t kMetricVersion = 1;

inline void save_metric(const MetricModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metric " + path.string());
  out.write(kMetricMagic.data(), kMetricMagic.size());
  binio::write_le<std::uint32_t>(out, kMetricVersion);
  binio::write_le<std::uint32_t>(out, 0);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.locations()));
  auto write_matrix = [&](const Eigen::MatrixXd& m) {
    for (int r = 0; r < model.dim; ++r)
      for (int c = 0; c < model.dim; ++c) binio::write_le<double>(out, m(r, c));
  };
  for (const auto& m : model.matrices) write_matrix(m);
  for (double s : model.sigma) binio::write_le<double>(out, s);
  for (auto f : model.fallback) binio::write_le<std::uint8_t>(out, f);
  write_matrix(model.global_matrix);
  binio::write_le<double>(out, model.global_sigma);
  if (!out) throw IoError("write failed: " + path.string());
}

inline MetricModel load_metric(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open metric " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMetricMagic) throw FormatError("bad metric magic");
  if (binio::read_le<std::uint32_t>(in, "version") != kMetricVersion) throw FormatError("unsupported metric version");
  binio::read_le<std::uint32_t>(in, "reserved");
  MetricModel model;
  const auto dim = binio::read_le<std::uint32_t>(in, "dim");
  const auto locations = binio::read_le<std::uint32_t>(in, "locations");
  if (dim == 0 || dim > 4096 || locations == 0 || locations > 1'000'000) throw FormatError("implausible metric dims");
  model.dim = static_cast<int>(dim);
  auto read_matrix = [&] {
    Eigen::MatrixXd m(dim, dim);
    for (std::uint32_t r = 0; r < dim; ++r)
      for (std::uint32_t c = 0; c < dim; ++c) m(r, c) = binio::read_le<double>(in, "metric matrix");
    return m;
  };
  model.matrices.reserve(locations);
  for (std::uint32_t i = 0; i < locations; ++i) model.matrices.push_back(read_matrix());
  model.sigma.resize(locations);
  for (auto& s : model.sigma) {
    s = binio::read_le<double>(in, "sigma");
    if (!(s > 0.0)) throw FormatError("non-positive sigma in metric file");
  }
  model.fallback.resize(locations);
  for (auto& f : model.fallback) f = binio::read_le<std::uint8_t>(in, "fallback flags");
  model.global_matrix = read_matrix();
  model.global_sigma = binio::read_le<double>(in, "global sigma");
  binio::expect_eof(in, "metric payload");
  return model;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_METRIC_HPP_
