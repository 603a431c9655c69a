#ifndef CORRSTRUCT_LEARNING_HPP_
#define CORRSTRUCT_LEARNING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corrstruct/error.hpp"
#include "corrstruct/geometry.hpp"
#include "corrstruct/matching.hpp"
#include "corrstruct/metric.hpp"
#include "corrstruct/parallel.hpp"
#include "corrstruct/structure.hpp"

namespace corrstruct {

// --- CMC ---------------------------------------------------------------------

/// values[n - 1] is the fraction of probes whose correct match ranks <= n.
struct CmcCurve {
  std::vector<double> values;
  int gallery_size = 0;

  double at(int n) const {
    if (n < 1) throw ArgumentError("CMC rank must be >= 1");
    if (values.empty()) return 0.0;
    return values[static_cast<std::size_t>(std::min<int>(n, gallery_size)) - 1];
  }
};

inline CmcCurve cmc_curve(std::span<const int> ranks, int gallery_size) {
  if (ranks.empty()) throw ArgumentError("CMC needs at least one rank");
  if (gallery_size < 1) throw ArgumentError("gallery size must be positive");
  std::vector<long> hits(static_cast<std::size_t>(gallery_size), 0);
  for (int r : ranks) {
    if (r < 1 || r > gallery_size) throw ArgumentError("rank " + std::to_string(r) + " outside [1, gallery size]");
    ++hits[static_cast<std::size_t>(r) - 1];
  }
  CmcCurve c{std::vector<double>(static_cast<std::size_t>(gallery_size)), gallery_size};
  long cum = 0;
  for (std::size_t n = 0; n < hits.size(); ++n) {
    cum += hits[n];
    c.values[n] = static_cast<double>(cum) / static_cast<double>(ranks.size());
  }
  return c;
}

/// Fraction of ranks <= n.
inline double cmc_at(std::span<const int> ranks, int n) {
  if (ranks.empty()) throw ArgumentError("CMC needs at least one rank");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [n](int r) { return r <= n; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

// --- Probability pieces ------------------------------------------------------

/// scores / sum(scores), or uniform when every score is zero.
inline std::vector<double> normalize_scores(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("nothing to normalise");
  double total = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ArgumentError("scores must be finite and non-negative");
    total += s;
  }
  std::vector<double> out(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    out[k] = total > 0.0 ? scores[k] / total : 1.0 / static_cast<double>(scores.size());
  }
  return out;
}

/// P(M_alpha) from each structure's rank-n CMC score.
inline std::vector<double> structure_prior(std::span<const double> cmc_scores) { return normalize_scores(cmc_scores); }

/// P(m | M_alpha) from each link's single-link rank-n CMC score.
inline std::vector<double> link_importance(std::span<const double> cmc_scores) { return normalize_scores(cmc_scores); }

/// Links of probe patch i, as a sub-range of the sorted link list.
inline std::span<const std::pair<int, int>> links_of(const BinaryMappingStructure& m, int i) {
  auto lo = std::lower_bound(m.links.begin(), m.links.end(), std::pair<int, int>{i, std::numeric_limits<int>::min()});
  auto hi = std::lower_bound(lo, m.links.end(), std::pair<int, int>{i + 1, std::numeric_limits<int>::min()});
  return {lo, hi};
}

/// P^(j | i, M_alpha) over all gallery patches j: raw 1 on linked j, the
/// average similarity relative to the linked total elsewhere, then
/// normalised. Without links the raw row is the average-similarity row.
inline std::vector<double> conditional_prob(const BinaryMappingStructure& m, int i, const AvgSimilarityTable& avg) {
  if (i < 0 || i >= avg.rows()) throw ArgumentError("probe patch outside similarity table");
  const auto linked = links_of(m, i);
  const auto n_b = static_cast<std::size_t>(avg.cols());
  std::vector<double> raw(n_b);
  if (linked.empty()) {
    for (std::size_t j = 0; j < n_b; ++j) raw[j] = avg(i, static_cast<Eigen::Index>(j));
  } else {
    double denom = 0.0;
    for (const auto& l : linked) denom += avg(i, l.second);
    for (std::size_t j = 0; j < n_b; ++j) raw[j] = avg(i, static_cast<Eigen::Index>(j)) / denom;
    for (const auto& l : linked) raw[static_cast<std::size_t>(l.second)] = 1.0;
  }
  double total = 0.0;
  for (double v : raw) total += v;
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("conditional row has no mass");
  for (double& v : raw) v /= total;
  return raw;
}

/// Impact of a link ending at probe patch s on probe patch i, before
/// normalisation: 1/(d+1) inside the zig-zag window, 0 from d >= max_distance.
inline double link_impact(const GridSpec& probe_grid, int i, int s, int max_distance) {
  const int d = zigzag_distance(probe_grid, i, s);
  return d >= max_distance ? 0.0 : 1.0 / (d + 1.0);
}

/// P^(i | M_alpha): impact-weighted link importances, normalised over i.
inline std::vector<double> patch_importance(const BinaryMappingStructure& m, std::span<const double> importances,
                                            const GridSpec& probe_grid, int max_distance) {
  if (importances.size() != m.links.size()) throw ArgumentError("one importance per link required");
  std::vector<double> out(static_cast<std::size_t>(probe_grid.size()), 0.0);
  for (int i = 0; i < probe_grid.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < m.links.size(); ++k) {
      acc += link_impact(probe_grid, i, m.links[k].first, max_distance) * importances[k];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  double total = 0.0;
  for (double v : out) total += v;
  if (total > 0.0) {
    for (double& v : out) v /= total;
  }
  return out;
}

/// P^(i, j | M_alpha) = P^(j | i, M_alpha) * P^(i | M_alpha).
inline ProbMatrix structure_joint(const BinaryMappingStructure& m, std::span<const double> importances,
                                  const AvgSimilarityTable& avg, const GridSpec& probe_grid, int max_distance) {
  const auto imp = patch_importance(m, importances, probe_grid, max_distance);
  ProbMatrix out(avg.rows(), avg.cols());
  for (Eigen::Index i = 0; i < avg.rows(); ++i) {
    const auto cond = conditional_prob(m, static_cast<int>(i), avg);
    for (Eigen::Index j = 0; j < avg.cols(); ++j) out(i, j) = cond[static_cast<std::size_t>(j)] * imp[static_cast<std::size_t>(i)];
  }
  return out;
}

/// P^k = sum over selected structures of joint * prior.
inline ProbMatrix compute_update(std::span<const ProbMatrix* const> joints, std::span<const double> priors) {
  if (joints.empty()) throw ArgumentError("update needs at least one structure");
  if (joints.size() != priors.size()) throw ArgumentError("one prior per structure required");
  ProbMatrix out = ProbMatrix::Zero(joints.front()->rows(), joints.front()->cols());
  for (std::size_t k = 0; k < joints.size(); ++k) {
    if (joints[k]->rows() != out.rows() || joints[k]->cols() != out.cols()) throw ArgumentError("joint shape mismatch");
    out += priors[k] * *joints[k];
  }
  return out;
}

/// Rows with mass are scaled to one; empty rows stay empty.
inline void normalize_nonzero_rows(ProbMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double s = row_sum(m, i);
    if (s > 0.0) m.row(i) /= s;
  }
}

/// Mean over rows of the L1 row difference. Row-sized rather than
/// entry-sized, so the threshold does not shrink with the gallery grid.
inline double mean_abs_change(const ProbMatrix& a, const ProbMatrix& b) {
  if (a.rows() == 0) return 0.0;
  return (a - b).cwiseAbs().sum() / static_cast<double>(a.rows());
}

// --- Learner -----------------------------------------------------------------

struct LearnerConfig {
  double rate = 0.2;               // epsilon
  int n_cmc = 5;                   // rank used for priors and link importance
  int selection_count = 20;        // structures per iteration, half per rank half
  double top_fraction = 0.5;       // rank quantile separating the halves
  int max_iterations = 300;
  double tolerance = 1e-4;         // mean absolute row change
  int max_distance = 32;           // T_d
  double gate = kDefaultGate;      // T_c
  double penalty = kDefaultUnmatchedPenalty;
  std::vector<int> ranges{1, 2, 3, 4};
  bool normalize_update = true;    // scale each row of P^k to unit mass before blending
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("update rate must lie in (0, 1]");
    if (n_cmc < 1) throw ConfigError("n_cmc must be positive");
    if (selection_count < 2 || selection_count % 2 != 0) throw ConfigError("selection count must be even and positive");
    if (!(top_fraction > 0.0 && top_fraction < 1.0)) throw ConfigError("top fraction must lie in (0, 1)");
    if (max_iterations < 1) throw ConfigError("max iterations must be positive");
    if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be non-negative");
    if (max_distance < 1) throw ConfigError("T_d must be at least 1");
    if (!(gate >= 0.0 && gate < 1.0)) throw ConfigError("T_c must lie in [0, 1)");
    if (!std::isfinite(penalty)) throw ConfigError("unmatched penalty must be finite");
    if (ranges.empty()) throw ConfigError("at least one search range required");
    for (int r : ranges)
      if (r < 1) throw ConfigError("search ranges must be >= 1");
    if (threads < 1) throw ConfigError("threads must be positive");
  }
};

struct IterationDiagnostics {
  int iteration = 0;
  double mean_rank = 0.0;  // training correct-match rank under the previous structure
  double cmc1 = 0.0;
  double cmc5 = 0.0;
  double delta = 0.0;      // mean absolute row change of this update
  long rank_sum = 0;       // the rank objective, monitored only
};

struct LearnResult {
  CorrespondenceStructure structure;
  std::vector<IterationDiagnostics> diagnostics;
  std::vector<BinaryMappingStructure> binaries;  // M_alpha per training probe
  std::vector<double> binary_cmc;                // rank-n CMC of each M_alpha
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Training data for one camera pair; probes[a] and galleries[a] share an
/// identity.
struct TrainingView {
  std::span<const PreparedProbe* const> probes;
  std::span<const PreparedGallery* const> galleries;
  const MetricModel* model = nullptr;
  GridSpec probe_grid;
  GridSpec gallery_grid;
};

namespace detail {

/// Uniform integer in [0, n) by rejection, identical on every platform.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % n;
  }
}

/// k distinct elements of pool, in draw order.
inline std::vector<int> sample_without_replacement(std::vector<int> pool, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t t = 0; t < k; ++t) {
    const auto pick = t + static_cast<std::size_t>(uniform_below(rng, pool.size() - t));
    std::swap(pool[t], pool[pick]);
  }
  pool.resize(k);
  return pool;
}

/// psi for a structure holding the single link (s, t) with probability 1:
/// penalty on every row but s, summed in row order like assignment_score.
inline double single_link_score(double c, int s, int rows, double penalty) {
  double psi = 0.0;
  for (int i = 0; i < rows; ++i) psi += i == s ? c : penalty;
  return psi;
}

}  // namespace detail

/// Rank-n CMC over the training set using the single link (s, t) as the
/// whole structure.
inline double single_link_cmc(const TrainingView& train, int s, int t, int n, double penalty) {
  const auto count = train.probes.size();
  const int rows = train.probe_grid.size();
  std::vector<double> scores(count);
  long hits = 0;
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t g = 0; g < count; ++g) {
      const double c = pair_log_similarity(*train.model, *train.probes[a], *train.galleries[g], s, t);
      scores[g] = detail::single_link_score(c, s, rows, penalty);
    }
    if (rank_of(scores, a) <= n) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

/// The learned structure plus diagnostics. `observer`, if set, sees every
/// structure from the initial one onward.
inline LearnResult learn_structure(const TrainingView& train, const LearnerConfig& cfg,
                                   const std::function<void(int, const CorrespondenceStructure&)>& observer = {}) {
  cfg.validate();
  if (train.model == nullptr) throw ArgumentError("training view has no metric");
  const std::size_t count = train.probes.size();
  if (count != train.galleries.size()) throw ArgumentError("probe and gallery lists must be aligned");
  if (count < 2) throw ConfigError("learning needs at least two training identities");
  const MetricModel& model = *train.model;
  const MatchOptions match_opt{cfg.penalty, true};

  LearnResult result;
  if (count < static_cast<std::size_t>(cfg.selection_count)) {
    result.warnings.push_back("only " + std::to_string(count) + " training identities for a selection of " +
                              std::to_string(cfg.selection_count) + "; selection clamped");
  }

  // Step 1: optimal binary structure per probe and its rank-n CMC.
  result.binaries.resize(count);
  parallel_for(count, cfg.threads, [&](std::size_t a) {
    const auto candidates = adjacency_candidates(*train.probes[a], *train.galleries[a], model, train.probe_grid,
                                                 train.gallery_grid, cfg.ranges);
    const auto choice = best_binary_structure(a, train.probes, train.galleries, candidates, model, match_opt);
    result.binaries[a] = candidates[choice.index];
  });
  result.binary_cmc.resize(count);
  for (std::size_t a = 0; a < count; ++a) {
    const auto support = binary_support(result.binaries[a], train.probe_grid.size(), train.gallery_grid.size());
    const auto ranks = correct_match_ranks(train.probes, train.galleries, support, model, match_opt, cfg.threads);
    result.binary_cmc[a] = cmc_at(ranks, cfg.n_cmc);
  }

  // Link importances depend only on the link; memoise across structures.
  std::map<std::pair<int, int>, double> link_cmc;
  for (const auto& m : result.binaries)
    for (const auto& l : m.links) link_cmc.emplace(l, 0.0);
  {
    std::vector<std::pair<int, int>> keys;
    keys.reserve(link_cmc.size());
    for (const auto& kv : link_cmc) keys.push_back(kv.first);
    std::vector<double> values(keys.size());
    parallel_for(keys.size(), cfg.threads, [&](std::size_t k) {
      values[k] = single_link_cmc(train, keys[k].first, keys[k].second, cfg.n_cmc, cfg.penalty);
    });
    for (std::size_t k = 0; k < keys.size(); ++k) link_cmc[keys[k]] = values[k];
  }

  const AvgSimilarityTable avg = build_avg_similarity(model, train.probes, train.galleries);
  std::vector<ProbMatrix> joints(count);
  parallel_for(count, cfg.threads, [&](std::size_t a) {
    const auto& m = result.binaries[a];
    std::vector<double> scores;
    scores.reserve(m.links.size());
    for (const auto& l : m.links) scores.push_back(link_cmc.at(l));
    joints[a] = structure_joint(m, link_importance(scores), avg, train.probe_grid, cfg.max_distance);
  });

  // Step 2.
  CorrespondenceStructure theta = init_structure(train.probe_grid, train.gallery_grid, cfg.max_distance);
  if (observer) observer(0, theta);

  std::mt19937_64 rng(cfg.seed);
  const std::size_t half = static_cast<std::size_t>(cfg.selection_count / 2);
  bool warned_half = false;
  for (int k = 1; k <= cfg.max_iterations; ++k) {
    // Step 3: rank under the current structure, split at the quantile.
    const MatchSupport support = gated_support(theta, cfg.gate);
    const auto ranks = correct_match_ranks(train.probes, train.galleries, support, model, match_opt, cfg.threads);
    std::vector<int> sorted(ranks);
    std::sort(sorted.begin(), sorted.end());
    const auto split_at = static_cast<std::size_t>(std::ceil(cfg.top_fraction * static_cast<double>(count))) - 1;
    const int threshold = sorted[std::min(split_at, count - 1)];
    std::vector<int> top, bottom;
    for (std::size_t a = 0; a < count; ++a) (ranks[a] <= threshold ? top : bottom).push_back(static_cast<int>(a));
    if ((top.size() < half || bottom.size() < half) && !warned_half) {
      result.warnings.push_back("a rank half holds fewer than " + std::to_string(half) + " identities; taking all");
      warned_half = true;
    }
    std::vector<int> chosen = detail::sample_without_replacement(top, half, rng);
    const auto low = detail::sample_without_replacement(bottom, half, rng);
    chosen.insert(chosen.end(), low.begin(), low.end());

    // Step 4.
    std::vector<const ProbMatrix*> picked;
    std::vector<double> scores;
    for (int a : chosen) {
      picked.push_back(&joints[static_cast<std::size_t>(a)]);
      scores.push_back(result.binary_cmc[static_cast<std::size_t>(a)]);
    }
    ProbMatrix update = compute_update(picked, structure_prior(scores));
    if (cfg.normalize_update) normalize_nonzero_rows(update);

    // Step 5.
    CorrespondenceStructure next = blend_update(theta, update, cfg.rate);
    IterationDiagnostics d;
    d.iteration = k;
    long sum = 0;
    for (int r : ranks) sum += r;
    d.rank_sum = sum;
    d.mean_rank = static_cast<double>(sum) / static_cast<double>(count);
    d.cmc1 = cmc_at(ranks, 1);
    d.cmc5 = cmc_at(ranks, 5);
    d.delta = mean_abs_change(next.probs, theta.probs);
    result.diagnostics.push_back(d);
    theta = std::move(next);
    if (observer) observer(k, theta);

    // Step 6.
    if (d.delta < cfg.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.structure = std::move(theta);
  return result;
}

/// Row-normalised mean of binary structures, as a correspondence structure.
inline CorrespondenceStructure average_binary_structure(std::span<const BinaryMappingStructure> structures,
                                                        const GridSpec& probe_grid, const GridSpec& gallery_grid) {
  if (structures.empty()) throw ArgumentError("no binary structures to average");
  CorrespondenceStructure s{probe_grid, gallery_grid, ProbMatrix::Zero(probe_grid.size(), gallery_grid.size())};
  for (const auto& m : structures)
    for (const auto& l : m.links) s.probs(l.first, l.second) += 1.0;
  normalize_rows(s.probs);
  return s;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_LEARNING_HPP_
