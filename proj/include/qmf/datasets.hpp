#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmf/denoise.hpp"
#include "qmf/errors.hpp"
#include "qmf/manifold.hpp"
#include "qmf/parallel.hpp"
#include "qmf/rqmf.hpp"

namespace qmf {

/// splitmix64-v1: Vigna's SplitMix64 generator. Point i of a cloud with seed s
/// draws from its own stream whose state starts at mix(s) ^ mix(i + 1), so
/// samples do not depend on generation order.
class SplitMix64 {
public:
  static constexpr const char *name = "splitmix64-v1";

  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static SplitMix64 stream(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(index + 1));
  }

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal by Box-Muller; the paired variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct GenSpec {
  ShapeKind shape = ShapeKind::UnitSphere;
  int n = 240;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (shape == ShapeKind::SampleSet) throw InvalidArgument("generate: sample-set is not a generator shape");
    if (n < 1) throw InvalidArgument("generate: n must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw InvalidArgument("generate: noise sigma must be finite and >= 0");
  }

  ManifoldDescriptor truth() const {
    switch (shape) {
    case ShapeKind::UnitCircle: return ManifoldDescriptor::unit_circle();
    case ShapeKind::UnitSphere: return ManifoldDescriptor::unit_sphere();
    case ShapeKind::SineCurve: return ManifoldDescriptor::sine_curve();
    case ShapeKind::SwissRoll: return ManifoldDescriptor::swiss_roll();
    default: break;
    }
    throw InvalidArgument("generate: unknown shape");
  }
};

/// Clean point i of the shape plus N(0, sigma^2 I) noise.
///   unit-circle: uniform angle; unit-sphere: normalized Gaussian;
///   sine-curve: (t, sin t) with t evenly spaced on [pi/3, 2pi/3];
///   swiss-roll: (t cos t, t sin t) / (4.5 pi) with t uniform on [1.5pi, 4.5pi].
inline PointCloud generate(const GenSpec &spec) {
  spec.validate();
  PointCloud cloud;
  cloud.truth = spec.truth();
  const Index D = cloud.truth->ambient_dim();
  cloud.points.resize(D, spec.n);
  for (int i = 0; i < spec.n; ++i) {
    SplitMix64 rng = SplitMix64::stream(spec.seed, static_cast<std::uint64_t>(i));
    Vector p(D);
    switch (spec.shape) {
    case ShapeKind::UnitCircle: {
      const double a = 2.0 * std::numbers::pi * rng.uniform();
      p << std::cos(a), std::sin(a);
      break;
    }
    case ShapeKind::UnitSphere: {
      double nrm = 0.0;
      do {
        for (Index k = 0; k < D; ++k) p[k] = rng.normal();
        nrm = p.norm();
      } while (!(nrm > 0.0));
      p /= nrm;
      break;
    }
    case ShapeKind::SineCurve: {
      const auto &t = *cloud.truth;
      const double s = spec.n == 1 ? 0.5 : static_cast<double>(i) / (spec.n - 1);
      p = t.curve_point(t.t_min + s * (t.t_max - t.t_min));
      break;
    }
    case ShapeKind::SwissRoll: {
      const auto &t = *cloud.truth;
      p = t.curve_point(t.t_min + rng.uniform() * (t.t_max - t.t_min));
      break;
    }
    default: throw InvalidArgument("generate: unknown shape");
    }
    if (spec.noise_sigma > 0.0)
      for (Index k = 0; k < D; ++k) p[k] += spec.noise_sigma * rng.normal();
    cloud.points.col(i) = p;
  }
  return cloud;
}

struct EvalReport {
  double mse = 0.0;
  double sd = 0.0;
  Vector per_point_sq_err;
};

/// MSE = mean_i ||x_i - P(x_i)||^2 and its population standard deviation.
inline EvalReport evaluate(const Matrix &denoised, const ManifoldDescriptor &truth) {
  detail::require_dims(denoised.rows() == truth.ambient_dim(), "evaluate: points do not match the manifold dimension");
  if (denoised.cols() == 0) throw InvalidArgument("evaluate: empty point cloud");
  EvalReport r;
  r.per_point_sq_err.resize(denoised.cols());
  for (Index i = 0; i < denoised.cols(); ++i) r.per_point_sq_err[i] = truth.squared_distance(denoised.col(i));
  r.mse = r.per_point_sq_err.mean();
  r.sd = std::sqrt((r.per_point_sq_err.array() - r.mse).square().mean());
  return r;
}

enum class BenchMethod { RqmfE, RqmfK, LocalPca, Lmf };

inline const char *to_string(BenchMethod m) {
  switch (m) {
  case BenchMethod::RqmfE: return "rqmf-e";
  case BenchMethod::RqmfK: return "rqmf-k";
  case BenchMethod::LocalPca: return "local-pca";
  case BenchMethod::Lmf: return "lmf";
  }
  return "unknown";
}

inline BenchMethod parse_method(const std::string &s) {
  if (s == "rqmf-e") return BenchMethod::RqmfE;
  if (s == "rqmf-k") return BenchMethod::RqmfK;
  if (s == "local-pca") return BenchMethod::LocalPca;
  if (s == "lmf") return BenchMethod::Lmf;
  throw InvalidArgument("unknown method '" + s + "'");
}

/// How the sensitivity level delta is chosen per (method, K).
struct DeltaRule {
  enum class Kind { SpherePreset, Fixed } kind = Kind::SpherePreset;
  double value = 0.0;

  static DeltaRule sphere_preset() { return {}; }
  static DeltaRule fixed(double v) { return {Kind::Fixed, v}; }

  double operator()(BenchMethod m, int K) const {
    if (kind == Kind::Fixed) return value;
    return m == BenchMethod::RqmfK ? kSphereKernelDelta : sphere_delta_preset(K);
  }
};

struct BenchConfig {
  Index d = 2;
  BandwidthRule bandwidth = BandwidthRule::sphere_paper();
  SolverConfig solver{};
  unsigned threads = 1;
};

struct BenchRow {
  BenchMethod method;
  int K;
  double mse;
  double sd;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<std::string> log;
};

inline DenoiseConfig bench_denoise_config(BenchMethod method, int K, const DeltaRule &delta, const BenchConfig &bc) {
  DenoiseConfig cfg;
  cfg.d = bc.d;
  cfg.neighborhood = Neighborhood::knn(K);
  cfg.bandwidth = bc.bandwidth;
  cfg.weighting = method == BenchMethod::RqmfK ? Weighting::Gaussian : Weighting::Equal;
  cfg.surface = method == BenchMethod::Lmf ? SurfaceKind::Linear : SurfaceKind::Quadratic;
  cfg.reg = RegConfig::adaptive(delta(method, K), bc.solver);
  return cfg;
}

/// Denoises one cloud with one method; returns the denoised points.
inline Matrix bench_denoise(const Matrix &cloud, BenchMethod method, int K, const DeltaRule &delta,
                            const BenchConfig &bc, unsigned threads = 1) {
  if (method == BenchMethod::LocalPca) {
    Matrix out(cloud.rows(), cloud.cols());
    parallel_for(static_cast<std::size_t>(cloud.cols()), threads, [&](std::size_t i) {
      const Index j = static_cast<Index>(i);
      out.col(j) = local_pca_denoise(cloud, cloud.col(j), K, bc.d);
    });
    return out;
  }
  return denoise_all(cloud, bench_denoise_config(method, K, delta, bc), threads).points;
}

/// Mean MSE and mean SD per (method, K) over `repeats` clouds; repeat r uses
/// the spec with seed + r. Failed runs contribute NaN.
inline BenchResult benchmark_sweep(const GenSpec &spec, const std::vector<BenchMethod> &methods,
                                   const std::vector<int> &Ks, const DeltaRule &delta, int repeats,
                                   std::uint64_t seed, const BenchConfig &bc = {}) {
  spec.validate();
  if (repeats < 1) throw InvalidArgument("benchmark_sweep: repeats must be >= 1");
  if (methods.empty() || Ks.empty()) throw InvalidArgument("benchmark_sweep: empty method or K list");

  std::vector<PointCloud> clouds;
  for (int r = 0; r < repeats; ++r) {
    GenSpec s = spec;
    s.seed = seed + static_cast<std::uint64_t>(r);
    clouds.push_back(generate(s));
  }

  const std::size_t cells = methods.size() * Ks.size();
  const std::size_t jobs = cells * static_cast<std::size_t>(repeats);
  std::vector<double> mse(jobs), sd(jobs);
  std::vector<std::string> errors(jobs);
  parallel_for(jobs, bc.threads, [&](std::size_t job) {
    const std::size_t cell = job / static_cast<std::size_t>(repeats);
    const int r = static_cast<int>(job % static_cast<std::size_t>(repeats));
    const BenchMethod method = methods[cell / Ks.size()];
    const int K = Ks[cell % Ks.size()];
    try {
      const Matrix out = bench_denoise(clouds[static_cast<std::size_t>(r)].points, method, K, delta, bc);
      const EvalReport ev = evaluate(out, *clouds[static_cast<std::size_t>(r)].truth);
      mse[job] = ev.mse;
      sd[job] = ev.sd;
    } catch (const std::exception &e) {
      mse[job] = sd[job] = std::numeric_limits<double>::quiet_NaN();
      errors[job] = std::string(to_string(method)) + " K=" + std::to_string(K) + " repeat " + std::to_string(r) +
                    ": " + e.what();
    }
  });

  BenchResult res;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double m = 0.0, s = 0.0;
    for (int r = 0; r < repeats; ++r) {
      m += mse[cell * repeats + r];
      s += sd[cell * repeats + r];
    }
    res.rows.push_back({methods[cell / Ks.size()], Ks[cell % Ks.size()], m / repeats, s / repeats});
  }
  for (const auto &e : errors)
    if (!e.empty()) res.log.push_back(e);
  return res;
}

} // namespace qmf
