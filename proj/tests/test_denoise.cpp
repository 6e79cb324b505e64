#include <gtest/gtest.h>

#include <numeric>

#include "qmf/datasets.hpp"
#include "qmf/denoise.hpp"
#include "support.hpp"

using namespace qmf;
using testing_support::Rng;

namespace {

Matrix noisy_sphere(std::uint64_t seed, int n = 240, double sigma = 0.2) {
  GenSpec g;
  g.shape = ShapeKind::UnitSphere;
  g.n = n;
  g.noise_sigma = sigma;
  g.seed = seed;
  return generate(g).points;
}

DenoiseConfig sphere_config(int K) {
  DenoiseConfig cfg;
  cfg.d = 2;
  cfg.neighborhood = Neighborhood::knn(K);
  cfg.reg = RegConfig::adaptive(sphere_delta_preset(K));
  return cfg;
}

} // namespace

TEST(Chart, KnnMatchesLinearScan) {
  Rng rng(1);
  const Matrix cloud = rng.gaussian(2, 80);
  DenoiseConfig cfg;
  for (int K : {1, 5, 17, 80}) {
    cfg.neighborhood = Neighborhood::knn(K);
    for (int t = 0; t < 10; ++t) {
      const Vector y = rng.gaussian(2);
      const Chart c = build_chart(cloud, y, cfg);
      EXPECT_EQ(c.members, testing_support::knn_oracle(cloud, y, K));
      EXPECT_EQ(c.weights, Vector::Ones(K));
    }
  }
}

TEST(Chart, TiesBrokenByLowerIndex) {
  Matrix cloud(1, 5);
  cloud << 1, -1, 2, -2, 1;
  DenoiseConfig cfg;
  cfg.neighborhood = Neighborhood::knn(5);
  const Chart c = build_chart(cloud, Vector::Zero(1), cfg);
  EXPECT_EQ(c.members, (std::vector<Index>{0, 1, 4, 2, 3}));
}

TEST(Chart, GaussianWeightsAndSelfMembership) {
  const Matrix cloud = noisy_sphere(2, 50);
  DenoiseConfig cfg;
  cfg.neighborhood = Neighborhood::knn(10);
  cfg.weighting = Weighting::Gaussian;
  const Chart c = build_chart(cloud, cloud.col(7), cfg);
  EXPECT_EQ(c.members.front(), 7);
  EXPECT_EQ(c.weights[0], 1.0);
  const double dK = (cloud.col(c.members.back()) - cloud.col(7)).norm();
  EXPECT_DOUBLE_EQ(c.bandwidth, dK / 3.0 + 3.0);
  for (Index i = 0; i < 10; ++i)
    EXPECT_NEAR(c.weights[i], gaussian_kernel(cloud.col(7), cloud.col(c.members[i]), c.bandwidth), 1e-15);
}

TEST(Chart, RadiusModeAndErrors) {
  Matrix cloud(1, 4);
  cloud << 0, 0.5, 1.5, 3;
  DenoiseConfig cfg;
  cfg.neighborhood = Neighborhood::within(1.0);
  EXPECT_EQ(build_chart(cloud, Vector::Zero(1), cfg).members, (std::vector<Index>{0, 1}));
  cfg.neighborhood = Neighborhood::within(0.1);
  EXPECT_THROW(build_chart(cloud, Vector::Constant(1, 10.0), cfg), InvalidArgument);
  cfg.neighborhood = Neighborhood::knn(5);
  EXPECT_THROW(build_chart(cloud, Vector::Zero(1), cfg), InvalidArgument);
}

TEST(Chart, BandwidthRules) {
  EXPECT_DOUBLE_EQ(parse_bandwidth_rule("sphere-paper")(0.6), 3.2);
  EXPECT_DOUBLE_EQ(parse_bandwidth_rule("knn-dist")(0.6), 0.6);
  EXPECT_DOUBLE_EQ(parse_bandwidth_rule("fixed(0.25)")(0.6), 0.25);
  EXPECT_THROW(parse_bandwidth_rule("silverman"), InvalidArgument);
}

TEST(Denoise, FlatDataIsAFixedPoint) {
  Rng rng(3);
  const Matrix basis = testing_support::random_orthogonal(rng, 3).leftCols(2);
  const Vector offset = rng.gaussian(3);
  const Matrix cloud = (basis * rng.gaussian(2, 60)).colwise() + offset;
  DenoiseConfig cfg = sphere_config(16);
  for (int j = 0; j < 5; ++j) {
    const Vector out = denoise_point(cloud, cloud.col(j), cfg);
    EXPECT_LE((out - cloud.col(j)).norm(), 1e-8);
  }
}

TEST(Denoise, CircleChartMovesTowardTheCircle) {
  GenSpec g;
  g.shape = ShapeKind::UnitCircle;
  g.n = 240;
  g.noise_sigma = 0.1;
  g.seed = 4;
  const PointCloud pc = generate(g);
  DenoiseConfig cfg;
  cfg.d = 1;
  cfg.neighborhood = Neighborhood::knn(40);
  cfg.reg = RegConfig::fixed(0.01);
  double before = 0, after = 0;
  for (int j = 0; j < 40; ++j) {
    before += std::abs(pc.points.col(j).norm() - 1.0);
    after += std::abs(denoise_point(pc.points, pc.points.col(j), cfg).norm() - 1.0);
  }
  EXPECT_LT(after, before);
}

TEST(Denoise, MemberOrderDoesNotMatter) {
  const Matrix cloud = noisy_sphere(5, 120);
  const DenoiseConfig cfg = sphere_config(16);
  const Vector y = cloud.col(3);
  const Vector library = denoise_point(cloud, y, cfg);

  // End-to-end re-run on the chart members in reversed order.
  const auto idx = testing_support::knn_oracle(cloud, y, 16);
  Matrix members(3, 16);
  for (int k = 0; k < 16; ++k) members.col(k) = cloud.col(idx[static_cast<std::size_t>(15 - k)]);
  const Vector mean = members.rowwise().mean();
  const Matrix centered = members.colwise() - mean;
  const FitResult fit = fit_rqmf(centered, 2, cfg.reg);
  const auto problem = ProjectionProblem::from_model(fit.model, y - mean);
  const Vector tau = project(problem, Vector(fit.embedding.col(15))).tau;
  const Vector reordered = model_eval(fit.model, tau) + mean;
  EXPECT_LE((library - reordered).norm(), 1e-10);
}

TEST(Denoise, PermutationEquivariance) {
  const Matrix cloud = noisy_sphere(6, 60);
  const DenoiseConfig cfg = sphere_config(12);
  std::vector<Index> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 gen(6);
  std::shuffle(perm.begin(), perm.end(), gen);
  const Matrix permuted = gather(cloud, perm);
  const Matrix a = denoise_all(cloud, cfg).points;
  const Matrix b = denoise_all(permuted, cfg).points;
  for (Index j = 0; j < 60; ++j) EXPECT_LE((b.col(j) - a.col(perm[static_cast<std::size_t>(j)])).norm(), 1e-8);
}

TEST(Denoise, RigidMotionEquivariance) {
  Rng rng(7);
  const Matrix cloud = noisy_sphere(7, 80);
  const Matrix Rot = testing_support::random_orthogonal(rng, 3);
  const Vector shift = rng.gaussian(3);
  const Matrix moved = (Rot * cloud).colwise() + shift;
  const DenoiseConfig cfg = sphere_config(16);
  for (int j = 0; j < 10; ++j) {
    const Vector a = denoise_point(cloud, cloud.col(j), cfg);
    const Vector b = denoise_point(moved, moved.col(j), cfg);
    EXPECT_LE((Rot * a + shift - b).norm(), 1e-8);
  }
}

TEST(Denoise, FallbackEqualsLocalPca) {
  // Two distinct points repeated: the chart's centered data has rank 1, so
  // the d = 2 fit cannot initialize.
  Matrix cloud(3, 12);
  for (int j = 0; j < 12; ++j) cloud.col(j) = (j % 2 ? Vector::Ones(3) : Vector::Zero(3));
  DenoiseConfig cfg = sphere_config(8);
  const PointOutcome r = denoise_point_detailed(cloud, cloud.col(0), cfg);
  EXPECT_EQ(r.report.status, PointStatus::Fallback);
  EXPECT_FALSE(r.report.warning.empty());
  EXPECT_LE((r.point - local_pca_denoise(cloud, cloud.col(0), 8, 2)).norm(), 1e-14);
}

TEST(Denoise, SinglePointCloud) {
  const Matrix cloud = Vector::Constant(3, 0.5);
  DenoiseConfig cfg = sphere_config(1);
  const DenoiseOutput out = denoise_all(cloud, cfg);
  EXPECT_EQ(out.points, cloud);
  EXPECT_NE(out.report[0].status, PointStatus::Ok);
}

TEST(Denoise, BatchIsDeterministicAcrossThreads) {
  const Matrix cloud = noisy_sphere(8, 80);
  const DenoiseConfig cfg = sphere_config(16);
  const DenoiseOutput a = denoise_all(cloud, cfg, 1);
  const DenoiseOutput b = denoise_all(cloud, cfg, 4);
  const DenoiseOutput c = denoise_all(cloud, cfg, 1);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.points, c.points);
  for (std::size_t i = 0; i < a.report.size(); ++i) EXPECT_EQ(a.report[i].lambda_used, b.report[i].lambda_used);
}

TEST(Denoise, ReportContents) {
  const Matrix cloud = noisy_sphere(9, 60);
  DenoiseConfig cfg = sphere_config(5); // K below the feature dimension 6
  const DenoiseOutput out = denoise_all(cloud, cfg);
  ASSERT_EQ(out.report.size(), 60u);
  for (std::size_t i = 0; i < out.report.size(); ++i) {
    EXPECT_EQ(out.report[i].index, static_cast<Index>(i));
    EXPECT_NE(out.report[i].warning.find("feature dimension"), std::string::npos);
  }
}

TEST(LocalPca, MatchesSvdOracle) {
  Rng rng(10);
  const Matrix cloud = rng.gaussian(4, 50);
  for (int t = 0; t < 10; ++t) {
    const Vector y = cloud.col(t);
    for (Index d : {1, 2, 3}) {
      EXPECT_LE((local_pca_denoise(cloud, y, 12, d) - testing_support::local_pca_svd_oracle(cloud, y, 12, d)).norm(),
                1e-10);
    }
  }
}

TEST(LocalPca, TrivialCases) {
  Rng rng(11);
  const Matrix cloud = rng.gaussian(3, 20);
  const Vector y = cloud.col(0);
  EXPECT_LE((local_pca_denoise(cloud, y, 10, 3) - y).norm(), 1e-12);
  const Matrix basis = testing_support::random_orthogonal(rng, 3).leftCols(2);
  const Matrix flat = basis * rng.gaussian(2, 20);
  EXPECT_LE((local_pca_denoise(flat, flat.col(1), 10, 2) - flat.col(1)).norm(), 1e-10);
  EXPECT_THROW(local_pca_denoise(cloud, y, 2, 2), InvalidArgument);
  EXPECT_THROW(local_pca_denoise(cloud, y, 21, 2), InvalidArgument);
}

TEST(LinearSurface, AgreesWithLocalPca) {
  const Matrix cloud = noisy_sphere(12, 100);
  DenoiseConfig cfg = sphere_config(16);
  cfg.surface = SurfaceKind::Linear;
  for (int j = 0; j < 10; ++j) {
    const Vector a = denoise_point(cloud, cloud.col(j), cfg);
    EXPECT_LE((a - local_pca_denoise(cloud, cloud.col(j), 16, 2)).norm(), 1e-8);
  }
}

TEST(PcaReduce, LosslessAndSpectralIdentity) {
  Rng rng(13);
  const Matrix cloud = rng.gaussian(6, 40);
  const PcaReduction full = pca_reduce(cloud, 6);
  EXPECT_LE((full.lift() - cloud).norm(), 1e-10 * cloud.norm());

  const PcaReduction r = pca_reduce(cloud, 3);
  EXPECT_LE((r.basis.transpose() * r.basis - Matrix::Identity(3, 3)).norm(), 1e-12);
  EXPECT_LE((r.reduced - r.basis.transpose() * cloud).norm(), 1e-12);
  const Matrix S = cloud * cloud.transpose() / 40.0;
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(S).eigenvalues(); // ascending
  const double tail = ev.head(3).sum();
  const double err = (cloud - r.lift()).squaredNorm();
  EXPECT_NEAR(err, 40.0 * tail, 1e-8 * 40.0 * tail);

  const Matrix rank2 = rng.gaussian(6, 2) * rng.gaussian(2, 30);
  EXPECT_LE((pca_reduce(rank2, 2).lift() - rank2).norm(), 1e-10 * rank2.norm());
  EXPECT_THROW(pca_reduce(cloud, 7), InvalidArgument);
}

TEST(Denoise, SphereNoiseIsReduced) {
  double before = 0, after = 0;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    GenSpec g;
    g.shape = ShapeKind::UnitSphere;
    g.n = 240;
    g.noise_sigma = 0.2;
    g.seed = seed;
    const PointCloud pc = generate(g);
    before += evaluate(pc.points, *pc.truth).mse;
    after += evaluate(denoise_all(pc.points, sphere_config(16)).points, *pc.truth).mse;
  }
  EXPECT_LT(after, before);
}
