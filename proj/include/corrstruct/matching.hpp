#ifndef CORRSTRUCT_MATCHING_HPP_
#define CORRSTRUCT_MATCHING_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "corrstruct/assignment.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/geometry.hpp"
#include "corrstruct/metric.hpp"
#include "corrstruct/parallel.hpp"
#include "corrstruct/structure.hpp"

namespace corrstruct {

/// Default gate on structure probabilities at match time.
inline constexpr double kDefaultGate = 0.05;

/// The (gallery patch, probability) entries each probe patch may match,
/// i.e. the structure after gating. Shared read-only by every image pair.
class MatchSupport {
 public:
  MatchSupport() = default;
  MatchSupport(int probe_count, int gallery_count) : probe_count_(probe_count), gallery_count_(gallery_count) {
    start_.reserve(static_cast<std::size_t>(probe_count) + 1);
  }

  void add(int j, double p) {
    if (j < 0 || j >= gallery_count_) throw ArgumentError("support column out of range");
    if (!(p > 0.0) || p > 1.0) throw ArgumentError("support probability must lie in (0, 1]");
    cols_.push_back(j);
    log_p_.push_back(std::log(p));
  }
  void end_row() { start_.push_back(static_cast<int>(cols_.size())); }

  int probe_count() const noexcept { return probe_count_; }
  int gallery_count() const noexcept { return gallery_count_; }
  std::size_t entries() const noexcept { return cols_.size(); }
  int row_begin(int i) const { return i == 0 ? 0 : start_[static_cast<std::size_t>(i) - 1]; }
  int row_end(int i) const { return start_[static_cast<std::size_t>(i)]; }
  int col_at(int k) const { return cols_[static_cast<std::size_t>(k)]; }
  double log_p_at(int k) const { return log_p_[static_cast<std::size_t>(k)]; }

 private:
  int probe_count_ = 0;
  int gallery_count_ = 0;
  std::vector<int> start_;  // end offset of each row
  std::vector<int> cols_;
  std::vector<double> log_p_;
};

/// Entries with P(i, j) strictly above the gate.
inline MatchSupport gated_support(const CorrespondenceStructure& s, double gate) {
  MatchSupport out(s.probe_count(), s.gallery_count());
  for (int i = 0; i < s.probe_count(); ++i) {
    for (int j = 0; j < s.gallery_count(); ++j) {
      const double p = s.probs(i, j);
      if (p > gate) out.add(j, p);
    }
    out.end_row();
  }
  return out;
}

/// 0/1 patch links (probe ordinal, gallery ordinal), sorted and unique.
struct BinaryMappingStructure {
  std::vector<std::pair<int, int>> links;
  int range = 0;  // search range it was built with, 0 if not applicable

  void normalize() {
    std::sort(links.begin(), links.end());
    links.erase(std::unique(links.begin(), links.end()), links.end());
  }
  friend bool operator==(const BinaryMappingStructure&, const BinaryMappingStructure&) = default;
};

/// Links used as a structure: probability 1/deg on each of a probe patch's
/// links, nothing elsewhere, no gate.
inline MatchSupport binary_support(const BinaryMappingStructure& m, int probe_count, int gallery_count) {
  MatchSupport out(probe_count, gallery_count);
  std::size_t k = 0;
  for (int i = 0; i < probe_count; ++i) {
    const std::size_t first = k;
    while (k < m.links.size() && m.links[k].first == i) ++k;
    const double p = 1.0 / static_cast<double>(std::max<std::size_t>(1, k - first));
    for (std::size_t t = first; t < k; ++t) out.add(m.links[t].second, p);
    out.end_row();
  }
  if (k != m.links.size()) throw ArgumentError("binary structure has unsorted or out-of-range links");
  return out;
}

/// Probability 1 at each probe patch's co-located gallery patch.
inline MatchSupport colocated_support(const GridSpec& probe_grid, const GridSpec& gallery_grid) {
  BinaryMappingStructure m;
  const auto coloc = colocation_table(probe_grid, gallery_grid);
  for (int i = 0; i < probe_grid.size(); ++i) m.links.emplace_back(i, coloc[static_cast<std::size_t>(i)]);
  return binary_support(m, probe_grid.size(), gallery_grid.size());
}

/// C(i, j) = log(Phi_z(i, j) * P(i, j)) on supported entries, EXCLUDED
/// elsewhere. Computed in the log domain so it stays finite.
inline CorrelationMatrix correlation_matrix(const PreparedProbe& probe, const PreparedGallery& gallery,
                                            const MatchSupport& support, const MetricModel& model) {
  if (probe.descriptors.cols() != support.probe_count() || gallery.descriptors.cols() != support.gallery_count()) {
    throw ArgumentError("descriptor counts do not match the structure grids");
  }
  CorrelationMatrix c(support.probe_count(), support.gallery_count());
  for (int i = 0; i < support.probe_count(); ++i) {
    for (int k = support.row_begin(i); k < support.row_end(i); ++k) {
      const int j = support.col_at(k);
      c.add(j, pair_log_similarity(model, probe, gallery, i, j) + support.log_p_at(k));
    }
    c.end_row();
  }
  return c;
}

struct MatchOptions {
  double penalty = kDefaultUnmatchedPenalty;  // kappa
  bool global = true;                         // false: per-row greedy argmax
};

inline Assignment match_images(const PreparedProbe& probe, const PreparedGallery& gallery, const MatchSupport& support,
                               const MetricModel& model, const MatchOptions& opt = {}) {
  const CorrelationMatrix c = correlation_matrix(probe, gallery, support, model);
  return opt.global ? solve_assignment(c, opt.penalty) : greedy_assignment(c, opt.penalty);
}

/// Image matching score psi.
inline double match_score(const PreparedProbe& probe, const PreparedGallery& gallery, const MatchSupport& support,
                          const MetricModel& model, const MatchOptions& opt = {}) {
  return match_images(probe, gallery, support, model, opt).score;
}

/// 1-based rank of `target` under descending score, ties to the earlier index.
inline int rank_of(std::span<const double> scores, std::size_t target) {
  int rank = 1;
  for (std::size_t g = 0; g < scores.size(); ++g) {
    if (scores[g] > scores[target] || (scores[g] == scores[target] && g < target)) ++rank;
  }
  return rank;
}

struct GalleryRanking {
  std::vector<int> order;       // gallery indices, best first
  std::vector<double> scores;   // indexed by gallery
  int correct_rank = 0;         // 1-based, 0 when no correct index given
};

inline GalleryRanking rank_gallery(const PreparedProbe& probe, std::span<const PreparedGallery* const> gallery,
                                   const MatchSupport& support, const MetricModel& model, const MatchOptions& opt = {},
                                   int correct_index = -1, int threads = 1) {
  if (gallery.empty()) throw ArgumentError("gallery is empty");
  GalleryRanking r;
  r.scores.resize(gallery.size());
  parallel_for(gallery.size(), threads,
               [&](std::size_t g) { r.scores[g] = match_score(probe, *gallery[g], support, model, opt); });
  r.order.resize(gallery.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    return r.scores[static_cast<std::size_t>(a)] > r.scores[static_cast<std::size_t>(b)];
  });
  if (correct_index >= 0) {
    if (static_cast<std::size_t>(correct_index) >= gallery.size()) throw ArgumentError("correct index outside gallery");
    r.correct_rank = rank_of(r.scores, static_cast<std::size_t>(correct_index));
  }
  return r;
}

/// Rank of gallery[a] for every probe[a] (aligned identity lists), in parallel
/// over probes.
inline std::vector<int> correct_match_ranks(std::span<const PreparedProbe* const> probes,
                                            std::span<const PreparedGallery* const> gallery, const MatchSupport& support,
                                            const MetricModel& model, const MatchOptions& opt = {}, int threads = 1) {
  if (probes.size() != gallery.size()) throw ArgumentError("probe and gallery lists must be aligned");
  std::vector<int> ranks(probes.size());
  parallel_for(probes.size(), threads, [&](std::size_t a) {
    std::vector<double> scores(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g) scores[g] = match_score(*probes[a], *gallery[g], support, model, opt);
    ranks[a] = rank_of(scores, a);
  });
  return ranks;
}

/// For each search range l: link every probe patch to the gallery patch of
/// highest appearance similarity whose grid row is within l rows of the
/// co-located row (all columns). Ties go to the smaller zig-zag distance from
/// the co-located patch, then the smaller ordinal.
inline std::vector<BinaryMappingStructure> adjacency_candidates(const PreparedProbe& probe,
                                                                const PreparedGallery& correct,
                                                                const MetricModel& model, const GridSpec& probe_grid,
                                                                const GridSpec& gallery_grid,
                                                                std::span<const int> ranges) {
  if (ranges.empty()) throw ArgumentError("adjacency search needs at least one range");
  const auto coloc = colocation_table(probe_grid, gallery_grid);
  std::vector<BinaryMappingStructure> out;
  out.reserve(ranges.size());
  for (int range : ranges) {
    if (range < 1) throw ArgumentError("adjacency range must be at least 1");
    BinaryMappingStructure m;
    m.range = range;
    for (int i = 0; i < probe_grid.size(); ++i) {
      const int c = coloc[static_cast<std::size_t>(i)];
      const int c_row = gallery_grid.row_of(c);
      int best = -1;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (int row = std::max(0, c_row - range); row <= std::min(gallery_grid.n_rows() - 1, c_row + range); ++row) {
        for (int col = 0; col < gallery_grid.n_cols(); ++col) {
          const int j = gallery_grid.ordinal(row, col);
          const double sim = pair_log_similarity(model, probe, correct, i, j);
          const bool better = sim > best_sim ||
                              (sim == best_sim && (std::abs(j - c) < std::abs(best - c) ||
                                                   (std::abs(j - c) == std::abs(best - c) && j < best)));
          if (better) {
            best_sim = sim;
            best = j;
          }
        }
      }
      m.links.emplace_back(i, best);
    }
    out.push_back(std::move(m));
  }
  return out;
}

struct BinaryChoice {
  std::size_t index = 0;  // into the candidate list
  int rank = 0;
  double margin = 0.0;    // correct score minus the best other score
};

/// Candidate under which probe `probe_index` ranks its correct match
/// (gallery[probe_index]) best. Equal ranks prefer the larger score margin,
/// then the earlier candidate.
inline BinaryChoice best_binary_structure(std::size_t probe_index, std::span<const PreparedProbe* const> probes,
                                          std::span<const PreparedGallery* const> gallery,
                                          std::span<const BinaryMappingStructure> candidates, const MetricModel& model,
                                          const MatchOptions& opt = {}) {
  if (candidates.empty()) throw ArgumentError("no candidate binary structures");
  if (probe_index >= probes.size() || probe_index >= gallery.size()) throw ArgumentError("probe index out of range");
  const int n_a = static_cast<int>(probes[probe_index]->descriptors.cols());
  const int n_b = static_cast<int>(gallery[probe_index]->descriptors.cols());
  BinaryChoice best{0, std::numeric_limits<int>::max(), -std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const MatchSupport support = binary_support(candidates[c], n_a, n_b);
    std::vector<double> scores(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g) scores[g] = match_score(*probes[probe_index], *gallery[g], support, model, opt);
    double rival = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gallery.size(); ++g)
      if (g != probe_index) rival = std::max(rival, scores[g]);
    const double margin = gallery.size() > 1 ? scores[probe_index] - rival : 0.0;
    const int rank = rank_of(scores, probe_index);
    if (rank < best.rank || (rank == best.rank && margin > best.margin)) best = {c, rank, margin};
  }
  return best;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_MATCHING_HPP_
