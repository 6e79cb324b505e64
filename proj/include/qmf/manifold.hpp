#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "qmf/errors.hpp"
#include "qmf/poly_features.hpp"

namespace qmf {

enum class ShapeKind { UnitCircle, UnitSphere, SineCurve, SwissRoll, SampleSet };

inline const char *to_string(ShapeKind k) {
  switch (k) {
  case ShapeKind::UnitCircle: return "unit-circle";
  case ShapeKind::UnitSphere: return "unit-sphere";
  case ShapeKind::SineCurve: return "sine-curve";
  case ShapeKind::SwissRoll: return "swiss-roll";
  case ShapeKind::SampleSet: return "sample-set";
  }
  return "unknown";
}

inline ShapeKind parse_shape(const std::string &name) {
  if (name == "unit-circle" || name == "circle") return ShapeKind::UnitCircle;
  if (name == "unit-sphere" || name == "sphere") return ShapeKind::UnitSphere;
  if (name == "sine-curve" || name == "sine") return ShapeKind::SineCurve;
  if (name == "swiss-roll" || name == "swiss") return ShapeKind::SwissRoll;
  if (name == "sample-set") return ShapeKind::SampleSet;
  throw InvalidArgument("unknown shape '" + name + "'");
}

namespace detail {

// Golden-section search for the minimum of f on [a, b].
template <class F>
double golden_min(F &&f, double a, double b) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && (b - a) > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return (fc < fd) ? c : d;
}

// Nearest point on a parametric curve over [t0, t1]: dense grid, then
// golden-section refinement inside the two cells around the best node.
template <class Curve>
Vector nearest_on_curve(Curve &&curve, double t0, double t1, const Vector &x, int grid = 4001) {
  auto dist2 = [&](double t) { return (curve(t) - x).squaredNorm(); };
  int best = 0;
  double best_val = dist2(t0);
  const double step = (t1 - t0) / (grid - 1);
  for (int i = 1; i < grid; ++i) {
    const double v = dist2(t0 + step * i);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  const double a = t0 + step * std::max(0, best - 1);
  const double b = t0 + step * std::min(grid - 1, best + 1);
  double t = golden_min(dist2, a, b);
  if (dist2(t) > best_val) t = t0 + step * best;
  return curve(t);
}

} // namespace detail

/// Clean manifold underlying a generated cloud, with a nearest-point projector.
struct ManifoldDescriptor {
  ShapeKind kind = ShapeKind::UnitSphere;
  double t_min = 0.0; // parameter range of curve shapes
  double t_max = 0.0;
  double scale = 1.0; // swiss roll: coordinates are divided by this
  Matrix samples;     // sample-set: D x n reference points

  static ManifoldDescriptor curve(ShapeKind kind, double t0, double t1, double scale) {
    ManifoldDescriptor m;
    m.kind = kind;
    m.t_min = t0;
    m.t_max = t1;
    m.scale = scale;
    return m;
  }
  static ManifoldDescriptor unit_circle() { return curve(ShapeKind::UnitCircle, 0.0, 0.0, 1.0); }
  static ManifoldDescriptor unit_sphere() { return curve(ShapeKind::UnitSphere, 0.0, 0.0, 1.0); }
  static ManifoldDescriptor sine_curve(double t0 = std::numbers::pi / 3, double t1 = 2 * std::numbers::pi / 3) {
    return curve(ShapeKind::SineCurve, t0, t1, 1.0);
  }
  static ManifoldDescriptor swiss_roll(double t0 = 1.5 * std::numbers::pi, double t1 = 4.5 * std::numbers::pi) {
    return curve(ShapeKind::SwissRoll, t0, t1, t1);
  }
  static ManifoldDescriptor sample_set(Matrix pts) {
    ManifoldDescriptor m = curve(ShapeKind::SampleSet, 0.0, 0.0, 1.0);
    m.samples = std::move(pts);
    return m;
  }

  Index ambient_dim() const {
    switch (kind) {
    case ShapeKind::UnitSphere: return 3;
    case ShapeKind::SampleSet: return samples.rows();
    default: return 2;
    }
  }

  Vector curve_point(double t) const {
    Vector p(2);
    if (kind == ShapeKind::SineCurve) {
      p << t, std::sin(t);
    } else {
      p << t * std::cos(t) / scale, t * std::sin(t) / scale;
    }
    return p;
  }

  Vector project(const Vector &x) const {
    detail::require_dims(x.size() == ambient_dim(), "ManifoldDescriptor::project: point has wrong dimension");
    switch (kind) {
    case ShapeKind::UnitCircle:
    case ShapeKind::UnitSphere: {
      const double n = x.norm();
      if (!(n > 0.0)) throw InvalidArgument("projection onto the sphere/circle is undefined at the origin");
      return x / n;
    }
    case ShapeKind::SineCurve:
    case ShapeKind::SwissRoll:
      return detail::nearest_on_curve([this](double t) { return curve_point(t); }, t_min, t_max, x);
    case ShapeKind::SampleSet: {
      if (samples.cols() == 0) throw InvalidArgument("sample-set descriptor has no samples");
      Index best = 0;
      (samples.colwise() - x).colwise().squaredNorm().minCoeff(&best);
      return samples.col(best);
    }
    }
    throw InvalidArgument("unknown manifold kind");
  }

  double squared_distance(const Vector &x) const { return (x - project(x)).squaredNorm(); }
};

} // namespace qmf
