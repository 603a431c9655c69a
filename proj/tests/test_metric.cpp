#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "corrstruct/metric.hpp"

using namespace corrstruct;
namespace fs = std::filesystem;

namespace {

MetricModel scalar_model(double m, double sigma) {
  MetricModel model;
  model.dim = 1;
  model.matrices = {Eigen::MatrixXd::Constant(1, 1, m)};
  model.sigma = {sigma};
  model.fallback = {0};
  model.global_matrix = model.matrices[0];
  model.global_sigma = sigma;
  return model;
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, int dim, int n, const Eigen::VectorXd& scale) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd out(dim, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < dim; ++r) out(r, c) = z(rng) * scale(r);
  return out;
}

// Random per-location training set where dissimilar differences are wider.
std::vector<PairSamples> random_training(std::mt19937_64& rng, int dim, int locations, int n) {
  std::vector<PairSamples> out(static_cast<std::size_t>(locations));
  for (auto& loc : out) {
    Eigen::VectorXd s = Eigen::VectorXd::Constant(dim, 0.1), d = Eigen::VectorXd::Constant(dim, 0.3);
    for (int r = 0; r < dim; ++r) d(r) += 0.05 * r;
    loc.similar = gaussian(rng, dim, n, s);
    loc.dissimilar = gaussian(rng, dim, n, d);
  }
  return out;
}

Eigen::MatrixXd random_descriptors(std::mt19937_64& rng, int dim, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd out(dim, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < dim; ++r) out(r, c) = u(rng);
  return out;
}

}  // namespace

TEST(Kissme, ScalarHandArithmetic) {
  // Differences {+1, -1} and {+2, -2}: second moments 1 and 4.
  const Eigen::MatrixXd s{{1.0, -1.0}}, d{{2.0, -2.0}};
  EXPECT_NEAR(detail::kissme_matrix(s, d, 0.0)(0, 0), 0.75, 1e-12);
  // Default ridge adds 1e-3 * trace / dim to each covariance.
  EXPECT_NEAR(detail::kissme_matrix(s, d, 1e-3)(0, 0), 1.0 / 1.001 - 1.0 / 4.004, 1e-12);
}

TEST(Kissme, IdenticalDistributionsGiveZeroMetric) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = gaussian(rng, 6, 200, Eigen::VectorXd::Constant(6, 0.5));
  for (bool psd : {false, true}) {
    const auto m = detail::kissme_matrix(x, x, 1e-3, psd);
    EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Kissme, SymmetricAndProjected) {
  std::mt19937_64 rng(2);
  const auto training = random_training(rng, 8, 5, 100);
  for (bool psd : {false, true}) {
    MetricTrainConfig cfg;
    cfg.project_psd = psd;
    const auto model = train_metric(training, cfg);
    ASSERT_EQ(model.locations(), 5);
    for (const auto& m : model.matrices) {
      EXPECT_LE((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-9);
      if (psd) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
        EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
      }
    }
    for (double s : model.sigma) EXPECT_GT(s, 0.0);
  }
}

TEST(Kissme, SigmaRules) {
  std::mt19937_64 rng(3);
  const auto training = random_training(rng, 4, 3, 60);
  MetricTrainConfig cfg;
  cfg.project_psd = false;
  cfg.sigma_rule = SigmaRule::LikelihoodRatio;
  for (double s : train_metric(training, cfg).sigma) EXPECT_EQ(s, kLikelihoodSigma);

  cfg.sigma_rule = SigmaRule::MeanSimilar;
  const auto model = train_metric(training, cfg);
  for (int i = 0; i < 3; ++i) {
    const auto& sim = training[static_cast<std::size_t>(i)].similar;
    double total = 0.0;
    for (Eigen::Index k = 0; k < sim.cols(); ++k) {
      const Eigen::VectorXd v = sim.col(k);
      total += std::max(0.0, v.dot(model.matrices[static_cast<std::size_t>(i)] * v));
    }
    EXPECT_NEAR(model.sigma[static_cast<std::size_t>(i)], std::max(1e-6, total / sim.cols()), 1e-9);
  }
}

TEST(Kissme, MeanSigmaFloor) {
  // Identical distributions give M = 0, so every distance is 0.
  std::mt19937_64 rng(4);
  PairSamples loc;
  loc.similar = gaussian(rng, 3, 50, Eigen::VectorXd::Ones(3));
  loc.dissimilar = loc.similar;
  MetricTrainConfig cfg;
  cfg.sigma_rule = SigmaRule::MeanSimilar;
  EXPECT_EQ(train_metric(std::vector<PairSamples>{loc}, cfg).sigma[0], 1e-6);
}

TEST(Kissme, StarvedLocationFallsBackToGlobal) {
  std::mt19937_64 rng(5);
  auto training = random_training(rng, 4, 3, 40);
  training[1].similar.conservativeResize(4, 3);  // fewer than dim + 1
  const auto model = train_metric(training);
  EXPECT_EQ(model.fallback[1], 1);
  EXPECT_EQ(model.fallback[0], 0);
  EXPECT_TRUE(model.matrices[1] == model.global_matrix);
  EXPECT_EQ(model.sigma[1], model.global_sigma);
}

TEST(Kissme, EmptyTrainingIsConfigError) {
  EXPECT_THROW(train_metric(std::vector<PairSamples>{}), ConfigError);
  std::vector<PairSamples> empty(2);
  empty[0].similar.resize(3, 0);
  empty[0].dissimilar.resize(3, 0);
  empty[1] = empty[0];
  EXPECT_THROW(train_metric(empty), ConfigError);
}

TEST(Similarity, ScalarEvaluation) {
  const auto model = scalar_model(0.75, 1.0);
  const Eigen::VectorXd a{{2.0}}, b{{0.0}};
  EXPECT_NEAR(appearance_similarity(model, a, b, 0), std::exp(-3.0), 1e-15);
}

TEST(Similarity, NegativeDirectionClampsToOne) {
  const auto model = scalar_model(-0.5, 1.0);
  const Eigen::VectorXd a{{2.0}}, b{{0.0}};
  EXPECT_EQ(appearance_similarity(model, a, b, 0), 1.0);
}

TEST(Similarity, DimMismatchIsArgumentError) {
  const auto model = scalar_model(1.0, 1.0);
  EXPECT_THROW(appearance_similarity(model, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), 0), ArgumentError);
  EXPECT_THROW(appearance_similarity(model, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 3), ArgumentError);
}

TEST(SimilarityProperty, SelfSymmetryAndRay) {
  std::mt19937_64 rng(6);
  const auto model = train_metric(random_training(rng, 8, 4, 100));
  const auto f = random_descriptors(rng, 8, 200);
  for (int loc = 0; loc < 4; ++loc) {
    for (int k = 0; k + 1 < f.cols(); k += 2) {
      const Eigen::VectorXd a = f.col(k), b = f.col(k + 1);
      EXPECT_EQ(appearance_similarity(model, a, a, loc), 1.0);
      EXPECT_EQ(appearance_similarity(model, a, b, loc), appearance_similarity(model, b, a, loc));
      const Eigen::VectorXd d = b - a;
      if (metric_distance(model, a, b, loc) > 1e-9) {
        double prev = 1.0;
        for (double t : {0.5, 1.0, 1.5, 2.0}) {
          const double s = appearance_similarity(model, a, Eigen::VectorXd(a + t * d), loc);
          EXPECT_LT(s, prev);
          prev = s;
        }
      }
    }
  }
}

TEST(Similarity, BatchedMatchesDirect) {
  std::mt19937_64 rng(7);
  const auto model = train_metric(random_training(rng, 8, 6, 80));
  const auto fa = random_descriptors(rng, 8, 6), fb = random_descriptors(rng, 8, 11);
  const auto p = prepare_probe(model, fa);
  const auto g = prepare_gallery(model, fb);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 11; ++j) {
      const double direct = appearance_similarity(model, fa.col(i), fb.col(j), i);
      EXPECT_NEAR(pair_similarity(model, p, g, i, j), direct, 1e-12);
    }
  // Equal descriptors through the batched path are exactly 1.
  const auto gself = prepare_gallery(model, fa);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(pair_similarity(model, p, gself, i, i), 1.0);
}

TEST(AvgSimilarity, MeanOfPairs) {
  std::mt19937_64 rng(8);
  const auto model = train_metric(random_training(rng, 8, 4, 80));
  const auto p1 = prepare_probe(model, random_descriptors(rng, 8, 4));
  const auto g1 = prepare_gallery(model, random_descriptors(rng, 8, 7));
  const auto p2 = prepare_probe(model, random_descriptors(rng, 8, 4));
  const auto g2 = prepare_gallery(model, random_descriptors(rng, 8, 7));

  const std::vector<const PreparedProbe*> one_p{&p1}, dup_p{&p1, &p1}, two_p{&p1, &p2};
  const std::vector<const PreparedGallery*> one_g{&g1}, dup_g{&g1, &g1}, two_g{&g1, &g2};
  const auto single = build_avg_similarity(model, one_p, one_g);
  EXPECT_TRUE(single == similarity_table(model, p1, g1).cwiseMax(std::numeric_limits<double>::min()));
  EXPECT_LT((build_avg_similarity(model, dup_p, dup_g) - single).cwiseAbs().maxCoeff(), 1e-15);
  const auto both = build_avg_similarity(model, two_p, two_g);
  const auto t1 = similarity_table(model, p1, g1), t2 = similarity_table(model, p2, g2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 7; ++j) {
      EXPECT_NEAR(both(i, j), (t1(i, j) + t2(i, j)) / 2, 1e-15);
      EXPECT_GT(both(i, j), 0.0);
      EXPECT_LE(both(i, j), 1.0);
    }
  EXPECT_THROW(build_avg_similarity(model, one_p, two_g), ArgumentError);
}

TEST(MetricIo, RoundTripAndErrors) {
  std::mt19937_64 rng(9);
  auto training = random_training(rng, 5, 3, 40);
  training[2].dissimilar.conservativeResize(5, 2);
  const auto model = train_metric(training);
  const auto dir = fs::temp_directory_path() / "corrstruct_metric_test";
  fs::create_directories(dir);
  const auto path = dir / "metric.bin";
  save_metric(model, path);
  const auto back = load_metric(path);
  ASSERT_EQ(back.locations(), 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(back.matrices[static_cast<std::size_t>(i)] == model.matrices[static_cast<std::size_t>(i)]);
    EXPECT_EQ(back.sigma[static_cast<std::size_t>(i)], model.sigma[static_cast<std::size_t>(i)]);
    EXPECT_EQ(back.fallback[static_cast<std::size_t>(i)], model.fallback[static_cast<std::size_t>(i)]);
  }
  EXPECT_TRUE(back.global_matrix == model.global_matrix);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  write(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_metric(path), FormatError);
  write("XXXXXXXX" + bytes.substr(8));
  EXPECT_THROW(load_metric(path), FormatError);
  write(bytes + "x");
  EXPECT_THROW(load_metric(path), FormatError);
  EXPECT_THROW(load_metric(dir / "missing.bin"), IoError);
}
