#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qmf/errors.hpp"
#include "qmf/manifold.hpp"
#include "qmf/parallel.hpp"
#include "qmf/poly_features.hpp"
#include "qmf/projection.hpp"
#include "qmf/qmf.hpp"
#include "qmf/rqmf.hpp"

namespace qmf {

/// D x m points (one column per sample) with an optional clean manifold.
struct PointCloud {
  Matrix points;
  std::optional<ManifoldDescriptor> truth;

  Index dim() const { return points.rows(); }
  Index size() const { return points.cols(); }
};

struct Neighborhood {
  enum class Kind { Knn, Radius } kind = Kind::Knn;
  int k = 16;
  double radius = 0.0;

  static Neighborhood knn(int k) { return {Kind::Knn, k, 0.0}; }
  static Neighborhood within(double radius) { return {Kind::Radius, 0, radius}; }
};

enum class Weighting { Equal, Gaussian };

// Surface fitted on each chart: regularized quadratic or affine (Q = 0).
enum class SurfaceKind { Quadratic, Linear };

/// Kernel bandwidth as a function of the distance d_K from the target to its
/// farthest chart member.
struct BandwidthRule {
  enum class Kind { SpherePaper, KnnDist, Fixed } kind = Kind::SpherePaper;
  double h = 1.0;

  static BandwidthRule sphere_paper() { return {Kind::SpherePaper}; }
  static BandwidthRule knn_dist() { return {Kind::KnnDist}; }
  static BandwidthRule fixed(double h) { return {Kind::Fixed, h}; }

  double operator()(double d_k) const {
    switch (kind) {
    case Kind::SpherePaper: return d_k / 3.0 + 3.0;
    case Kind::KnnDist: return d_k;
    case Kind::Fixed: return h;
    }
    return h;
  }
};

inline BandwidthRule parse_bandwidth_rule(const std::string &s) {
  if (s == "sphere-paper") return BandwidthRule::sphere_paper();
  if (s == "knn-dist") return BandwidthRule::knn_dist();
  if (s.rfind("fixed(", 0) == 0 && s.back() == ')') return BandwidthRule::fixed(std::stod(s.substr(6, s.size() - 7)));
  throw InvalidArgument("unknown bandwidth rule '" + s + "'");
}

struct DenoiseConfig {
  Index d = 1;
  Neighborhood neighborhood{};
  Weighting weighting = Weighting::Equal;
  BandwidthRule bandwidth{};
  RegConfig reg = RegConfig::fixed(0.0);
  SurfaceKind surface = SurfaceKind::Quadratic;
  // Carried into reports; every step of the pipeline is deterministic.
  std::uint64_t seed = 0;
};

/// Neighborhood of one target point.
struct Chart {
  Vector target;
  std::vector<Index> members; // sorted by distance, ties by index
  Vector weights;
  double bandwidth = 0.0;
};

inline Chart build_chart(const Matrix &cloud, const Vector &y, const DenoiseConfig &cfg) {
  const Index m = cloud.cols();
  if (m == 0) throw InvalidArgument("build_chart: empty point cloud");
  detail::require_dims(y.size() == cloud.rows(), "build_chart: target has wrong dimension");

  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) dist[static_cast<std::size_t>(i)] = {(cloud.col(i) - y).squaredNorm(), i};

  Chart chart;
  chart.target = y;
  if (cfg.neighborhood.kind == Neighborhood::Kind::Knn) {
    const int K = cfg.neighborhood.k;
    if (K < 1) throw InvalidArgument("build_chart: K must be >= 1");
    if (K > m) throw InvalidArgument("build_chart: K = " + std::to_string(K) + " exceeds the cloud size " +
                                     std::to_string(m));
    std::partial_sort(dist.begin(), dist.begin() + K, dist.end());
    dist.resize(static_cast<std::size_t>(K));
  } else {
    if (!(cfg.neighborhood.radius > 0.0)) throw InvalidArgument("build_chart: radius must be positive");
    const double a2 = cfg.neighborhood.radius * cfg.neighborhood.radius;
    std::erase_if(dist, [a2](const auto &p) { return p.first > a2; });
    if (dist.empty()) throw InvalidArgument("build_chart: no points within the radius");
    std::sort(dist.begin(), dist.end());
  }

  for (const auto &p : dist) chart.members.push_back(p.second);
  const double d_far = std::sqrt(dist.back().first);
  chart.weights = Vector::Ones(static_cast<Index>(dist.size()));
  if (cfg.weighting == Weighting::Gaussian) {
    chart.bandwidth = cfg.bandwidth(d_far);
    if (!(chart.bandwidth > 0.0)) throw InvalidArgument("build_chart: bandwidth rule produced h <= 0");
    for (std::size_t i = 0; i < dist.size(); ++i)
      chart.weights[static_cast<Index>(i)] = std::exp(-dist[i].first / (2.0 * chart.bandwidth * chart.bandwidth));
  }
  return chart;
}

inline Matrix gather(const Matrix &cloud, const std::vector<Index> &idx) {
  Matrix out(cloud.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Index>(i)) = cloud.col(idx[i]);
  return out;
}

namespace detail {

// c + P (y - c) with P the projector on the top-d eigenvectors of the
// member covariance.
inline Vector local_pca_on(const Matrix &members, const Vector &y, Index d) {
  const Index K = members.cols();
  if (K < 1) throw InvalidArgument("local PCA: empty chart");
  const Vector c = members.rowwise().mean();
  if (d >= members.rows()) return y;
  const Matrix centered = members.colwise() - c;
  const Matrix M = centered * centered.transpose() / static_cast<double>(K);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
  const Matrix U = eig.eigenvectors().rightCols(d);
  return c + U * (U.transpose() * (y - c));
}

} // namespace detail

inline Vector local_pca_denoise(const Matrix &cloud, const Vector &y, int K, Index d) {
  DenoiseConfig cfg;
  cfg.neighborhood = Neighborhood::knn(K);
  if (K < d + 1) throw InvalidArgument("local_pca_denoise: need K >= d + 1");
  const Chart chart = build_chart(cloud, y, cfg);
  return detail::local_pca_on(gather(cloud, chart.members), y, d);
}

enum class PointStatus { Ok, Fallback, Failed };

inline const char *to_string(PointStatus s) {
  switch (s) {
  case PointStatus::Ok: return "ok";
  case PointStatus::Fallback: return "fallback";
  case PointStatus::Failed: return "failed";
  }
  return "unknown";
}

struct PointReport {
  Index index = -1;
  PointStatus status = PointStatus::Ok;
  double lambda_used = 0.0;
  int iterations = 0;
  std::string warning;
};

struct PointOutcome {
  Vector point;
  PointReport report;
};

/// Fits a regularized quadratic surface to the target's chart (translated so
/// the chart mean sits at the origin) and returns the image of the target's
/// projection onto that surface. If the fit fails, the Local PCA point of the
/// same chart is returned and the outcome is marked as a fallback.
inline PointOutcome denoise_point_detailed(const Matrix &cloud, const Vector &y, const DenoiseConfig &cfg) {
  const Chart chart = build_chart(cloud, y, cfg);
  const Matrix members = gather(cloud, chart.members);
  const Vector mean = members.rowwise().mean();
  const Matrix Xc = members.colwise() - mean;
  const Vector yc = y - mean;

  PointOutcome out;
  std::string notes;
  if (Xc.cols() <= feature_dim(cfg.d))
    notes = "chart has " + std::to_string(Xc.cols()) + " members, not more than the feature dimension " +
            std::to_string(feature_dim(cfg.d));
  try {
    RegConfig reg = cfg.reg;
    if (cfg.weighting == Weighting::Gaussian) reg.weights = chart.weights;
    const FitResult fit = cfg.surface == SurfaceKind::Quadratic ? fit_rqmf(Xc, cfg.d, reg)
                                                                : fit_lmf(Xc, cfg.d, reg.solver);
    const ProjectionProblem problem = ProjectionProblem::from_model(fit.model, yc);
    const ProjectionResult pr = project(problem, Vector(fit.embedding.col(0)), reg.solver.inner);
    const Vector fitted = model_eval(fit.model, pr.tau) + mean;
    if (!fitted.allFinite()) throw SingularSystem("denoised point is not finite");
    out.point = fitted;
    out.report.status = PointStatus::Ok;
    out.report.lambda_used = fit.lambda();
    out.report.iterations = fit.iterations;
    if (!fit.converged) notes += std::string(notes.empty() ? "" : "; ") + "outer loop reached max_outer";
  } catch (const Error &e) {
    out.point = detail::local_pca_on(members, y, cfg.d);
    out.report.status = PointStatus::Fallback;
    notes += std::string(notes.empty() ? "" : "; ") + "local PCA fallback: " + e.what();
  }
  out.report.warning = notes;
  return out;
}

inline Vector denoise_point(const Matrix &cloud, const Vector &y, const DenoiseConfig &cfg) {
  return denoise_point_detailed(cloud, y, cfg).point;
}

struct DenoiseOutput {
  Matrix points;
  std::vector<PointReport> report;
};

/// Denoises every column independently. A point whose chart cannot be built
/// (or whose fallback also fails) is copied unchanged and reported as failed.
inline DenoiseOutput denoise_all(const Matrix &cloud, const DenoiseConfig &cfg, unsigned threads = 1) {
  const Index m = cloud.cols();
  DenoiseOutput out;
  out.points.resize(cloud.rows(), m);
  out.report.resize(static_cast<std::size_t>(m));
  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t i) {
    const Index j = static_cast<Index>(i);
    PointReport &rep = out.report[i];
    try {
      PointOutcome r = denoise_point_detailed(cloud, cloud.col(j), cfg);
      out.points.col(j) = r.point;
      rep = std::move(r.report);
    } catch (const Error &e) {
      out.points.col(j) = cloud.col(j);
      rep.status = PointStatus::Failed;
      rep.warning = e.what();
    }
    rep.index = j;
  });
  return out;
}

struct PcaReduction {
  Matrix reduced; // D_target x m
  Matrix basis;   // D x D_target, orthonormal columns

  Matrix lift() const { return basis * reduced; }
};

/// Projects onto the top D_target eigenvectors of S = (1/m) sum_i x_i x_i^T
/// (uncentered second moment).
inline PcaReduction pca_reduce(const Matrix &cloud, Index D_target) {
  if (D_target < 1) throw InvalidArgument("pca_reduce: target dimension must be >= 1");
  if (D_target > cloud.rows())
    throw InvalidArgument("pca_reduce: target dimension exceeds the ambient dimension");
  PcaReduction out;
  if (cloud.cols() == 0) {
    out.basis = Matrix::Identity(cloud.rows(), D_target);
    out.reduced = Matrix(D_target, 0);
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(cloud, Eigen::ComputeFullU);
  out.basis = svd.matrixU().leftCols(D_target);
  for (Index j = 0; j < D_target; ++j) detail::fix_sign(out.basis.col(j));
  out.reduced = out.basis.transpose() * cloud;
  return out;
}

} // namespace qmf
