#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <vector>

#include "corrstruct/learning.hpp"
#include "corrstruct/pipeline.hpp"
#include "corrstruct/synthetic.hpp"

using namespace corrstruct;

namespace {

const GridSpec kTwoPatch{1, 2, 1, 1, 1, 1};  // two probe patches stacked vertically

AvgSimilarityTable table(std::initializer_list<std::initializer_list<double>> rows) {
  AvgSimilarityTable t(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) t(i, j++) = v;
    ++i;
  }
  return t;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

struct SyntheticRun {
  SplitModel model;
  RunConfig cfg;
};

// Trains one model on the first `identities` synthetic identities.
SyntheticRun train_synthetic(int identities, int shift_rows, double noise, int max_iterations) {
  SyntheticSpec spec;
  spec.identities = identities;
  spec.shift_rows = shift_rows;
  spec.noise = noise;
  const auto pairs = render_synthetic(spec);
  std::vector<RgbImage> a, b;
  for (const auto& pr : pairs) {
    a.push_back(pr.probe);
    b.push_back(pr.gallery);
  }
  SyntheticRun run;
  run.cfg.learner.max_iterations = max_iterations;
  const auto features = extract_features(a, b, run.cfg);
  Split split;
  split.train.resize(static_cast<std::size_t>(identities));
  std::iota(split.train.begin(), split.train.end(), 0);
  run.model = train_split(features, split, run.cfg);
  return run;
}

}  // namespace

TEST(Cmc, Examples) {
  const std::vector<int> ones{1, 1, 1};
  for (double v : cmc_curve(ones, 5).values) EXPECT_EQ(v, 1.0);

  const std::vector<int> r{1, 3};
  EXPECT_EQ(cmc_curve(r, 4).values, (std::vector<double>{0.5, 0.5, 1.0, 1.0}));

  const std::vector<int> last{6};
  EXPECT_EQ(cmc_curve(last, 6).values, (std::vector<double>{0, 0, 0, 0, 0, 1}));

  EXPECT_THROW(cmc_curve(std::vector<int>{}, 4), ArgumentError);
  EXPECT_THROW(cmc_curve(std::vector<int>{5}, 4), ArgumentError);
  EXPECT_EQ(cmc_at(r, 2), 0.5);
}

TEST(CmcProperty, MonotoneEndsAtOne) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int gallery = 1 + static_cast<int>(rng() % 50);
    std::vector<int> ranks(1 + rng() % 40);
    for (int& x : ranks) x = 1 + static_cast<int>(rng() % static_cast<unsigned>(gallery));
    const auto c = cmc_curve(ranks, gallery);
    for (std::size_t n = 1; n < c.values.size(); ++n) EXPECT_LE(c.values[n - 1], c.values[n]);
    EXPECT_EQ(c.values.back(), 1.0);
    for (std::size_t n = 0; n < c.values.size(); ++n) {
      const double scaled = c.values[n] * static_cast<double>(ranks.size());
      EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
    }
  }
}

TEST(Priors, Normalisation) {
  EXPECT_EQ(structure_prior(std::vector<double>{0.3}), (std::vector<double>{1.0}));
  const auto p = structure_prior(std::vector<double>{0.6, 0.2});
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
  EXPECT_EQ(structure_prior(std::vector<double>{0.0, 0.0, 0.0}), (std::vector<double>(3, 1.0 / 3.0)));
  EXPECT_THROW(structure_prior(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(structure_prior(std::vector<double>{-0.1, 0.2}), ArgumentError);
}

TEST(LinkImportance, Normalisation) {
  EXPECT_EQ(link_importance(std::vector<double>{0.4}), (std::vector<double>{1.0}));
  const auto p = link_importance(std::vector<double>{0.1, 0.3});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  EXPECT_EQ(link_importance(std::vector<double>{0.0, 0.0}), (std::vector<double>{0.5, 0.5}));
}

TEST(Conditional, SingleLink) {
  const auto avg = table({{0.2, 0.4, 0.1}});
  BinaryMappingStructure m{{{0, 1}}, 1};
  const auto p = conditional_prob(m, 0, avg);
  // Raw (0.5, 1, 0.25), total 1.75.
  EXPECT_NEAR(p[0], 0.5 / 1.75, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 1.75, 1e-15);
  EXPECT_NEAR(p[2], 0.25 / 1.75, 1e-15);
}

TEST(Conditional, UniformAverageGivesUniformRow) {
  // With one link the unlinked ratio is avg(i, j) / avg(i, link), which is 1
  // whenever the averages agree: the link ties rather than dominates.
  const auto avg = table({{0.3, 0.3, 0.3, 0.3}});
  BinaryMappingStructure m{{{0, 2}}, 1};
  const auto p = conditional_prob(m, 0, avg);
  for (double v : p) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Conditional, TwoLinksShareDenominator) {
  const auto avg = table({{0.2, 0.4, 0.3}});
  BinaryMappingStructure m{{{0, 0}, {0, 1}}, 1};
  const auto p = conditional_prob(m, 0, avg);
  // Raw (1, 1, 0.3 / 0.6 = 0.5), total 2.5.
  EXPECT_NEAR(p[2], 0.5 / 2.5, 1e-15);
  EXPECT_NEAR(p[0], 1.0 / 2.5, 1e-15);
}

TEST(Conditional, NoLinksFollowsAverageRow) {
  const auto avg = table({{0.2, 0.6}, {0.1, 0.3}});
  BinaryMappingStructure m{{{0, 0}}, 1};
  const auto p = conditional_prob(m, 1, avg);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  EXPECT_THROW(conditional_prob(m, 2, avg), ArgumentError);
}

TEST(ConditionalProperty, SumsToOneAndLinkBoundsWeakerColumns) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_b = 2 + static_cast<int>(rng() % 20);
    AvgSimilarityTable avg(3, n_b);
    for (Eigen::Index j = 0; j < n_b; ++j)
      for (Eigen::Index i = 0; i < 3; ++i) avg(i, j) = u(rng);
    BinaryMappingStructure m;
    const int linked = static_cast<int>(rng() % static_cast<unsigned>(n_b));
    m.links.emplace_back(1, linked);
    const int twin = (linked + 1) % n_b;
    avg(1, twin) = avg(1, linked);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(sum(conditional_prob(m, i, avg)), 1.0, 1e-9);
    const auto p = conditional_prob(m, 1, avg);
    const double at_link = p[static_cast<std::size_t>(linked)];
    EXPECT_EQ(p[static_cast<std::size_t>(twin)], at_link);
    for (int j = 0; j < n_b; ++j) {
      if (avg(1, j) < avg(1, linked)) EXPECT_LT(p[static_cast<std::size_t>(j)], at_link);
      if (avg(1, j) > avg(1, linked)) EXPECT_GT(p[static_cast<std::size_t>(j)], at_link);
    }
  }
}

TEST(ConditionalProperty, SingleLinkRowIsNormalisedAverageRow) {
  // Any single link gives the same row: the structure drops out.
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  AvgSimilarityTable avg(1, 9);
  for (Eigen::Index j = 0; j < 9; ++j) avg(0, j) = u(rng);
  const double total = avg.sum();
  for (int link = 0; link < 9; ++link) {
    BinaryMappingStructure m{{{0, link}}, 1};
    const auto p = conditional_prob(m, 0, avg);
    for (Eigen::Index j = 0; j < 9; ++j) EXPECT_NEAR(p[static_cast<std::size_t>(j)], avg(0, j) / total, 1e-15);
  }
}

TEST(LinkImpact, Examples) {
  const auto g = canonical_probe_grid();
  EXPECT_EQ(link_impact(g, 10, 10, 32), 1.0);
  EXPECT_EQ(link_impact(g, 10, 13, 32), 0.25);
  EXPECT_EQ(link_impact(g, 0, 32, 32), 0.0);
  EXPECT_NEAR(link_impact(g, 0, 31, 32), 1.0 / 32.0, 1e-15);
}

TEST(PatchImportance, SingleLinkDecays) {
  const auto g = canonical_probe_grid();
  BinaryMappingStructure m{{{40, 100}}, 1};
  const auto imp = patch_importance(m, std::vector<double>{1.0}, g, 32);
  EXPECT_NEAR(sum(imp), 1.0, 1e-12);
  for (int i = 0; i < g.size(); ++i) {
    const int d = std::abs(i - 40);
    if (d >= 32) {
      EXPECT_EQ(imp[static_cast<std::size_t>(i)], 0.0);
    } else if (i != 40) {
      EXPECT_LT(imp[static_cast<std::size_t>(i)], imp[40]);
      EXPECT_NEAR(imp[static_cast<std::size_t>(i)] / imp[40], 1.0 / (d + 1.0), 1e-12);
    }
  }
}

TEST(PatchImportance, UniformCoverageMatchesOracleSum) {
  const auto g = canonical_probe_grid();
  BinaryMappingStructure m;
  for (int i = 0; i < g.size(); ++i) m.links.emplace_back(i, i);
  const std::vector<double> w(static_cast<std::size_t>(g.size()), 1.0 / g.size());
  const auto imp = patch_importance(m, w, g, 32);
  std::vector<double> oracle(static_cast<std::size_t>(g.size()));
  for (int i = 0; i < g.size(); ++i)
    for (int s = 0; s < g.size(); ++s)
      if (std::abs(i - s) < 32) oracle[static_cast<std::size_t>(i)] += 1.0 / (std::abs(i - s) + 1.0);
  const double total = sum(oracle);
  for (int i = 0; i < g.size(); ++i) EXPECT_NEAR(imp[static_cast<std::size_t>(i)], oracle[static_cast<std::size_t>(i)] / total, 1e-12);
  // Interior patches, a full window away from both ends, get equal shares.
  for (int i = 32; i < g.size() - 32; ++i) EXPECT_NEAR(imp[static_cast<std::size_t>(i)], imp[32], 1e-15);
}

TEST(ComputeUpdate, HandMixture) {
  const auto avg = table({{0.2, 0.4}, {0.5, 0.5}});
  BinaryMappingStructure m1{{{0, 0}, {1, 1}}, 1}, m2{{{0, 1}}, 2};
  const auto j1 = structure_joint(m1, std::vector<double>{0.5, 0.5}, avg, kTwoPatch, 32);
  const auto j2 = structure_joint(m2, std::vector<double>{1.0}, avg, kTwoPatch, 32);
  // m1: importance (1/2, 1/2); rows (1/3, 2/3) and (1/2, 1/2).
  // m2: importance (2/3, 1/3); rows (1/3, 2/3) and the unlinked (1/2, 1/2).
  EXPECT_NEAR(j1(0, 0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(j1(1, 1), 1.0 / 4.0, 1e-15);
  EXPECT_NEAR(j2(0, 1), 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(j2(1, 0), 1.0 / 6.0, 1e-15);

  const std::vector<const ProbMatrix*> joints{&j1, &j2};
  const auto p = compute_update(joints, structure_prior(std::vector<double>{0.6, 0.2}));
  EXPECT_NEAR(p(0, 0), 0.75 / 6.0 + 0.25 * 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.75 / 3.0 + 0.25 * 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(p(1, 0), 0.75 / 4.0 + 0.25 / 6.0, 1e-15);
  EXPECT_NEAR(p(1, 1), 0.75 / 4.0 + 0.25 / 6.0, 1e-15);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);

  const std::vector<const ProbMatrix*> one{&j1}, twice{&j1, &j1};
  EXPECT_TRUE(compute_update(one, std::vector<double>{1.0}) == j1);
  EXPECT_LT((compute_update(twice, std::vector<double>{0.5, 0.5}) - j1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(compute_update(std::vector<const ProbMatrix*>{}, std::vector<double>{}), ArgumentError);
}

TEST(MeanAbsChange, RowL1Mean) {
  ProbMatrix a(2, 3), b(2, 3);
  a << 0.5, 0.5, 0.0, 1.0, 0.0, 0.0;
  b << 0.25, 0.5, 0.25, 0.0, 1.0, 0.0;
  // Row L1 changes 0.5 and 2.
  EXPECT_NEAR(mean_abs_change(a, b), 1.25, 1e-15);
  EXPECT_EQ(mean_abs_change(a, a), 0.0);
}

TEST(Sampling, WithoutReplacementAndSeeded) {
  std::vector<int> pool(30);
  std::iota(pool.begin(), pool.end(), 0);
  std::mt19937_64 r1(5), r2(5);
  const auto a = detail::sample_without_replacement(pool, 10, r1);
  EXPECT_EQ(a, detail::sample_without_replacement(pool, 10, r2));
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_EQ(detail::sample_without_replacement(std::vector<int>{1, 2}, 10, r1).size(), 2u);
}

TEST(LearnerConfig, Validation) {
  LearnerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.selection_count = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.ranges = {0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Learner, SingleIdentityIsConfigError) {
  MetricModel model;
  std::vector<const PreparedProbe*> probes(1);
  std::vector<const PreparedGallery*> galleries(1);
  TrainingView view{probes, galleries, &model, canonical_probe_grid(), canonical_gallery_grid()};
  EXPECT_THROW(learn_structure(view, LearnerConfig{}), ConfigError);
}

TEST(Learner, UnshiftedDataKeepsColocatedArgmax) {
  const auto run = train_synthetic(20, 0, 0.0, 300);
  const auto& s = run.model.learned.structure;
  EXPECT_EQ(row_stochastic_violations(s.probs), 0);
  const auto rows = interior_patches(s.probe_grid, s.gallery_grid, 0);
  EXPECT_GE(shift_recovery(s, 0, rows), 0.9);
  // 20 identities cannot fill two halves of 10 once ranks tie.
  EXPECT_FALSE(run.model.learned.warnings.empty());
}

TEST(Learner, ShiftedDataMovesArgmax) {
  const auto run = train_synthetic(30, 2, 0.05, 300);
  const auto& s = run.model.learned.structure;
  const auto rows = interior_patches(s.probe_grid, s.gallery_grid, 2);
  EXPECT_GE(shift_recovery(s, 2, rows), 0.7);
  EXPECT_TRUE(run.model.learned.converged);
}

TEST(Learner, DiagnosticsAreDeterministic) {
  const auto a = train_synthetic(12, 2, 0.05, 15);
  const auto b = train_synthetic(12, 2, 0.05, 15);
  ASSERT_EQ(a.model.learned.diagnostics.size(), b.model.learned.diagnostics.size());
  for (std::size_t k = 0; k < a.model.learned.diagnostics.size(); ++k) {
    const auto& x = a.model.learned.diagnostics[k];
    const auto& y = b.model.learned.diagnostics[k];
    EXPECT_EQ(x.iteration, y.iteration);
    EXPECT_EQ(x.rank_sum, y.rank_sum);
    EXPECT_EQ(x.delta, y.delta);
    EXPECT_EQ(x.cmc1, y.cmc1);
  }
  EXPECT_TRUE(a.model.learned.structure == b.model.learned.structure);
}

TEST(AverageBinary, RowNormalisedCounts) {
  std::vector<BinaryMappingStructure> ms{{{{0, 0}, {1, 1}}, 1}, {{{0, 1}, {1, 1}}, 2}};
  const auto s = average_binary_structure(ms, kTwoPatch, GridSpec{1, 2, 1, 1, 1, 1});
  EXPECT_EQ(s.probs(0, 0), 0.5);
  EXPECT_EQ(s.probs(0, 1), 0.5);
  EXPECT_EQ(s.probs(1, 1), 1.0);
}
