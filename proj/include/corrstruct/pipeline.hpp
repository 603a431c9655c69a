#ifndef CORRSTRUCT_PIPELINE_HPP_
#define CORRSTRUCT_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "corrstruct/config.hpp"
#include "corrstruct/dataset.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/imaging.hpp"
#include "corrstruct/learning.hpp"
#include "corrstruct/matching.hpp"
#include "corrstruct/metric.hpp"
#include "corrstruct/structure.hpp"

namespace corrstruct {

/// Descriptors of every identity's camera A and camera B image.
struct FeatureSet {
  std::vector<DescriptorMatrix> probe;
  std::vector<DescriptorMatrix> gallery;

  std::size_t size() const noexcept { return probe.size(); }
};

inline FeatureSet extract_features(std::span<const RgbImage> probes, std::span<const RgbImage> galleries,
                                   const RunConfig& cfg) {
  if (probes.size() != galleries.size()) throw ArgumentError("probe and gallery image lists must be aligned");
  FeatureSet f;
  f.probe.resize(probes.size());
  f.gallery.resize(galleries.size());
  parallel_for(probes.size(), cfg.threads, [&](std::size_t k) {
    f.probe[k] = extract_descriptors(scale_to_canonical(probes[k], cfg.probe_grid), cfg.probe_grid, cfg.descriptor);
    f.gallery[k] =
        extract_descriptors(scale_to_canonical(galleries[k], cfg.gallery_grid), cfg.gallery_grid, cfg.descriptor);
  });
  return f;
}

inline FeatureSet load_features(const DatasetManifest& m, const RunConfig& cfg) {
  std::vector<RgbImage> a(m.identities.size()), b(m.identities.size());
  for (std::size_t k = 0; k < m.identities.size(); ++k) {
    a[k] = load_image(m.probe_paths[k]);
    b[k] = load_image(m.gallery_paths[k]);
  }
  return extract_features(a, b, cfg);
}

/// Per-location metric training differences. Similar: probe patch i against
/// every gallery patch within `radius` zig-zag steps of its co-located patch
/// in the same identity's camera B image. Dissimilar: the same positions in a
/// randomly chosen other identity, one per similar pair.
inline std::vector<PairSamples> build_metric_pairs(const FeatureSet& features, std::span<const int> identities,
                                                   const GridSpec& probe_grid, const GridSpec& gallery_grid,
                                                   int radius, std::uint64_t seed) {
  if (identities.size() < 2) throw ConfigError("metric training needs at least two identities");
  const auto coloc = colocation_table(probe_grid, gallery_grid);
  const int n_a = probe_grid.size(), n_b = gallery_grid.size();
  std::vector<std::vector<int>> window(static_cast<std::size_t>(n_a));
  for (int i = 0; i < n_a; ++i)
    for (int j = 0; j < n_b; ++j)
      if (std::abs(j - coloc[static_cast<std::size_t>(i)]) < radius) window[static_cast<std::size_t>(i)].push_back(j);

  std::mt19937_64 rng(seed);
  std::vector<int> other(identities.size());
  for (std::size_t a = 0; a < identities.size(); ++a) {
    const auto pick = detail::uniform_below(rng, identities.size() - 1);
    other[a] = identities[pick >= a ? pick + 1 : pick];
  }

  const auto dim = features.probe.front().rows();
  std::vector<PairSamples> out(static_cast<std::size_t>(n_a));
  for (int i = 0; i < n_a; ++i) {
    const auto& win = window[static_cast<std::size_t>(i)];
    const auto count = static_cast<Eigen::Index>(win.size() * identities.size());
    auto& loc = out[static_cast<std::size_t>(i)];
    loc.similar.resize(dim, count);
    loc.dissimilar.resize(dim, count);
    Eigen::Index col = 0;
    for (std::size_t a = 0; a < identities.size(); ++a) {
      const auto& probe = features.probe[static_cast<std::size_t>(identities[a])];
      const auto& same = features.gallery[static_cast<std::size_t>(identities[a])];
      const auto& diff = features.gallery[static_cast<std::size_t>(other[a])];
      for (int j : win) {
        loc.similar.col(col) = probe.col(i) - same.col(j);
        loc.dissimilar.col(col) = probe.col(i) - diff.col(j);
        ++col;
      }
    }
  }
  return out;
}

/// Metric, prepared images and learned structure for one split.
struct SplitModel {
  MetricModel metric;
  std::vector<PreparedProbe> train_probes, test_probes;
  std::vector<PreparedGallery> train_galleries, test_galleries;
  LearnResult learned;

  template <typename T>
  static std::vector<const T*> pointers(const std::vector<T>& v) {
    std::vector<const T*> out;
    for (const auto& x : v) out.push_back(&x);
    return out;
  }
};

inline SplitModel train_split(const FeatureSet& features, const Split& split, const RunConfig& cfg,
                              const std::function<void(int, const CorrespondenceStructure&)>& observer = {}) {
  SplitModel sm;
  const auto pairs = build_metric_pairs(features, split.train, cfg.probe_grid, cfg.gallery_grid,
                                        cfg.metric_pair_radius, cfg.metric_seed);
  sm.metric = train_metric(pairs, cfg.metric);
  auto prep = [&](const std::vector<int>& ids, std::vector<PreparedProbe>& p, std::vector<PreparedGallery>& g) {
    p.resize(ids.size());
    g.resize(ids.size());
    parallel_for(ids.size(), cfg.threads, [&](std::size_t k) {
      p[k] = prepare_probe(sm.metric, features.probe[static_cast<std::size_t>(ids[k])]);
      g[k] = prepare_gallery(sm.metric, features.gallery[static_cast<std::size_t>(ids[k])]);
    });
  };
  prep(split.train, sm.train_probes, sm.train_galleries);
  prep(split.test, sm.test_probes, sm.test_galleries);

  const auto probes = SplitModel::pointers(sm.train_probes);
  const auto galleries = SplitModel::pointers(sm.train_galleries);
  TrainingView view{probes, galleries, &sm.metric, cfg.probe_grid, cfg.gallery_grid};
  sm.learned = learn_structure(view, cfg.learner, observer);
  return sm;
}

// --- Ablation ----------------------------------------------------------------

enum class Arm { NoStructure, SimpleAverage, NoGlobal, Proposed };

inline constexpr Arm kAllArms[] = {Arm::NoStructure, Arm::SimpleAverage, Arm::NoGlobal, Arm::Proposed};

inline std::string arm_name(Arm a) {
  switch (a) {
    case Arm::NoStructure: return "no-structure";
    case Arm::SimpleAverage: return "simple-average";
    case Arm::NoGlobal: return "no-global";
    case Arm::Proposed: return "proposed";
  }
  return "unknown";
}

inline Arm parse_arm(const std::string& s) {
  for (Arm a : kAllArms)
    if (arm_name(a) == s) return a;
  throw ArgumentError("unknown ablation arm '" + s + "'");
}

/// Correct-match ranks of the split's test probes under one arm.
inline std::vector<int> evaluate_arm(const SplitModel& sm, Arm arm, const RunConfig& cfg) {
  const auto& g = cfg.learner;
  MatchSupport support;
  MatchOptions opt{g.penalty, true};
  switch (arm) {
    case Arm::NoStructure:
      support = colocated_support(cfg.probe_grid, cfg.gallery_grid);
      break;
    case Arm::SimpleAverage:
      support = gated_support(average_binary_structure(sm.learned.binaries, cfg.probe_grid, cfg.gallery_grid), g.gate);
      break;
    case Arm::NoGlobal:
      support = gated_support(sm.learned.structure, g.gate);
      opt.global = false;
      break;
    case Arm::Proposed:
      support = gated_support(sm.learned.structure, g.gate);
      break;
  }
  const auto probes = SplitModel::pointers(sm.test_probes);
  const auto galleries = SplitModel::pointers(sm.test_galleries);
  return correct_match_ranks(probes, galleries, support, sm.metric, opt, cfg.threads);
}

struct ArmReport {
  Arm arm = Arm::Proposed;
  std::vector<CmcCurve> per_split;
  CmcCurve mean;
};

/// Element-wise mean of equally sized curves.
inline CmcCurve mean_curve(std::span<const CmcCurve> curves) {
  if (curves.empty()) throw ArgumentError("no curves to average");
  CmcCurve out{std::vector<double>(curves.front().values.size(), 0.0), curves.front().gallery_size};
  for (const auto& c : curves) {
    if (c.values.size() != out.values.size()) throw ArgumentError("curves differ in gallery size");
    for (std::size_t n = 0; n < c.values.size(); ++n) out.values[n] += c.values[n];
  }
  for (double& v : out.values) v /= static_cast<double>(curves.size());
  return out;
}

/// Trains each split once and evaluates every requested arm on it, so all
/// arms share descriptors, metric and binary structures.
inline std::vector<ArmReport> run_ablation(const FeatureSet& features, const SplitPlan& plan,
                                           std::span<const Arm> arms, const RunConfig& cfg,
                                           const std::function<void(int, const SplitModel&)>& on_split = {}) {
  if (arms.empty()) throw ArgumentError("no ablation arms requested");
  std::vector<ArmReport> reports;
  for (Arm a : arms) reports.push_back({a, {}, {}});
  for (std::size_t s = 0; s < plan.splits.size(); ++s) {
    const SplitModel sm = train_split(features, plan.splits[s], cfg);
    for (auto& r : reports) {
      const auto ranks = evaluate_arm(sm, r.arm, cfg);
      r.per_split.push_back(cmc_curve(ranks, static_cast<int>(ranks.size())));
    }
    if (on_split) on_split(static_cast<int>(s), sm);
  }
  for (auto& r : reports) r.mean = mean_curve(r.per_split);
  return reports;
}

// --- Reports -----------------------------------------------------------------

/// Header `split,rank_<n>...`, one row per split, then a `mean` row.
inline void write_cmc_csv(const ArmReport& r, std::span<const int> ranks, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "split";
  for (int n : ranks) out << ",rank_" << n;
  out << '\n';
  auto row = [&](const std::string& label, const CmcCurve& c) {
    out << label;
    for (int n : ranks) out << ',' << format_double(c.at(n));
    out << '\n';
  };
  for (std::size_t s = 0; s < r.per_split.size(); ++s) row(std::to_string(s), r.per_split[s]);
  row("mean", r.mean);
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_diagnostics_csv(std::span<const IterationDiagnostics> diag, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,mean_rank,cmc1,cmc5,delta\n";
  for (const auto& d : diag) {
    out << d.iteration << ',' << format_double(d.mean_rank) << ',' << format_double(d.cmc1) << ','
        << format_double(d.cmc5) << ',' << format_double(d.delta) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_PIPELINE_HPP_
