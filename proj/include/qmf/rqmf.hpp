#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmf/errors.hpp"
#include "qmf/poly_features.hpp"
#include "qmf/qmf.hpp"

namespace qmf {

// Bracketing limits for the sensitivity root.
inline constexpr double kLambdaFloor = 1e-12;
inline constexpr double kLambdaCeiling = 1e12;

/// The ridge R-step for a fixed embedding and optional sample weights:
///   R(lambda) = X W T^T (T W T^T + lambda J J^T)^{-1}
/// together with s(lambda) = ||R(lambda) J||_F^2 and its first two derivatives.
///
/// The weighted design is reduced once by a Householder QR, T W^{1/2} -> R0.
/// Each lambda then needs one small QR of [R0; sqrt(lambda) J^T], so
/// M = T W T^T + lambda J J^T = U^T U is never formed explicitly.
class RidgeProblem {
public:
  struct Eval {
    QuadModel model;
    double s = 0.0;
    double s_prime = 0.0;
    double s_double_prime = 0.0;
  };

  RidgeProblem(const Matrix &X, const Matrix &Phi, const std::optional<Vector> &w = std::nullopt)
      : d_(Phi.rows()) {
    detail::require_dims(Phi.cols() == X.cols(), "RidgeProblem: X and Phi disagree on sample count");
    if (d_ < 1) throw InvalidArgument("RidgeProblem: embedding has no rows");
    Tt_ = build_T(Phi).transpose();
    Xt_ = X.transpose();
    if (w) {
      detail::require_dims(w->size() == X.cols(), "RidgeProblem: weight vector has wrong length");
      if ((w->array() < 0.0).any() || !w->allFinite())
        throw InvalidArgument("RidgeProblem: weights must be finite and non-negative");
      const Vector root = w->cwiseSqrt();
      Tt_ = root.asDiagonal() * Tt_;
      Xt_ = root.asDiagonal() * Xt_;
    }
    const Index rows = std::min(Tt_.rows(), Tt_.cols());
    Eigen::HouseholderQR<Matrix> qr(Tt_);
    const Matrix qtx = qr.householderQ().transpose() * Xt_;
    R0_ = qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>();
    C0_ = qtx.topRows(rows);
  }

  Index latent_dim() const { return d_; }

  /// Ridge solution and s(lambda); derivatives only when requested.
  Eval evaluate(double lambda, bool derivatives = true) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw InvalidArgument("ridge: lambda must be finite and >= 0");
    const Index m = R0_.rows();
    const Index r = R0_.cols();
    const Index p = quad_dim(d_);

    Matrix stacked = Matrix::Zero(m + p, r);
    stacked.topRows(m) = R0_;
    stacked.bottomRightCorner(p, p).diagonal().setConstant(std::sqrt(lambda));
    Matrix rhs = Matrix::Zero(m + p, C0_.cols());
    rhs.topRows(m) = C0_;

    if (m + p < r)
      throw SingularSystem("ridge: fewer equations than coefficients (lambda = 0 with too few samples)");
    Eigen::HouseholderQR<Matrix> qr(stacked);
    const Matrix U = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    const Vector diag = U.diagonal().cwiseAbs();
    if (!(diag.minCoeff() > 1e-13 * diag.maxCoeff()))
      throw SingularSystem("ridge: T T^T + lambda J J^T is singular");

    const Matrix Rt = qr.solve(rhs);
    Eval out;
    out.model = QuadModel::from_R(Rt.transpose(), d_);
    const Matrix &Q = out.model.Q;
    out.s = Q.squaredNorm();
    if (!derivatives) return out;

    // Y = U^{-T} J so that J^T M^{-1} J = Y^T Y.
    const Matrix Y = U.transpose().triangularView<Eigen::Lower>().solve(selector_J(d_));
    const Matrix N = Y.transpose() * Y;
    // s'  = -2 tr(Q N Q^T),  s'' = 6 tr(Q N^2 Q^T)
    out.s_prime = -2.0 * (Y * Q.transpose()).squaredNorm();
    out.s_double_prime = 6.0 * (N * Q.transpose()).squaredNorm();
    return out;
  }

  QuadModel solve(double lambda) const { return evaluate(lambda, false).model; }

private:
  Index d_;
  Matrix Tt_; // m x r, rows scaled by sqrt(w)
  Matrix Xt_; // m x D, rows scaled by sqrt(w)
  Matrix R0_; // triangular factor of Tt_
  Matrix C0_; // matching rows of Q^T Xt_
};

inline QuadModel solve_R_ridge(const Matrix &X, const Matrix &Phi, double lambda,
                               const std::optional<Vector> &w = std::nullopt) {
  return RidgeProblem(X, Phi, w).solve(lambda);
}

inline double s_lambda(const Matrix &X, const Matrix &Phi, const std::optional<Vector> &w, double lambda) {
  return RidgeProblem(X, Phi, w).evaluate(lambda, false).s;
}

inline double s_prime(const Matrix &X, const Matrix &Phi, const std::optional<Vector> &w, double lambda) {
  return RidgeProblem(X, Phi, w).evaluate(lambda).s_prime;
}

inline double s_double_prime(const Matrix &X, const Matrix &Phi, const std::optional<Vector> &w,
                             double lambda) {
  return RidgeProblem(X, Phi, w).evaluate(lambda).s_double_prime;
}

struct TuningCurve {
  std::vector<double> lambda_grid;
  std::vector<double> s;
  std::vector<double> s_prime;
  std::vector<double> s_double_prime;
};

inline TuningCurve tuning_curve(const RidgeProblem &problem, const std::vector<double> &grid) {
  TuningCurve curve;
  for (double lambda : grid) {
    const auto e = problem.evaluate(lambda);
    curve.lambda_grid.push_back(lambda);
    curve.s.push_back(e.s);
    curve.s_prime.push_back(e.s_prime);
    curve.s_double_prime.push_back(e.s_double_prime);
  }
  return curve;
}

/// n evenly spaced values on [lo, hi].
inline std::vector<double> linear_grid(double lo, double hi, int n) {
  std::vector<double> g;
  if (n <= 0) return g;
  if (n == 1) return {lo};
  for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
  return g;
}

enum class TuneStatus {
  Root,    // s'(lambda) = -delta solved
  Floor,   // curve already flatter than delta at the floor
  Ceiling, // no sign change below the ceiling
};

inline const char *to_string(TuneStatus s) {
  switch (s) {
  case TuneStatus::Root: return "root";
  case TuneStatus::Floor: return "floor";
  case TuneStatus::Ceiling: return "ceiling";
  }
  return "unknown";
}

struct TuneResult {
  double lambda = kLambdaFloor;
  TuneStatus status = TuneStatus::Floor;
  double s_prime = 0.0;
  int evaluations = 0;
};

/// Solves s'(lambda) = -delta. s' is increasing in lambda, so the root is
/// bracketed by stepping lambda by factors of 10 (from 1e-6, or from `hint`
/// when given) and then polished by Newton steps in log(lambda) that fall
/// back to bisection whenever they leave the bracket.
inline TuneResult tune_lambda(const RidgeProblem &problem, double delta, std::optional<double> hint = std::nullopt) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("tune_lambda: delta must be positive");
  if (hint && !(*hint > kLambdaFloor && *hint < kLambdaCeiling)) hint.reset();
  TuneResult out;
  auto f = [&](double lambda) {
    ++out.evaluations;
    return problem.evaluate(lambda);
  };
  auto finish = [&](double lambda, TuneStatus status, double sp) {
    out.lambda = lambda;
    out.status = status;
    out.s_prime = sp;
    return out;
  };
  auto floor_check = [&]() -> std::optional<TuneResult> {
    const double sp = f(kLambdaFloor).s_prime;
    if (sp + delta >= 0.0) return finish(kLambdaFloor, TuneStatus::Floor, sp);
    return std::nullopt;
  };

  double lo = kLambdaFloor;
  double hi = hint.value_or(1e-6);
  if (!hint) {
    if (auto r = floor_check()) return *r;
  }
  auto e_hi = f(hi);
  if (hint && e_hi.s_prime + delta >= 0.0) {
    // walk down until the sign flips
    double probe = hi / 10.0;
    for (;;) {
      if (probe <= kLambdaFloor) {
        if (auto r = floor_check()) return *r;
        lo = kLambdaFloor;
        break;
      }
      const auto e = f(probe);
      if (e.s_prime + delta < 0.0) {
        lo = probe;
        break;
      }
      hi = probe;
      e_hi = e;
      probe /= 10.0;
    }
  } else {
    while (e_hi.s_prime + delta < 0.0) {
      lo = hi;
      hi *= 10.0;
      if (hi > kLambdaCeiling) return finish(kLambdaCeiling, TuneStatus::Ceiling, f(kLambdaCeiling).s_prime);
      e_hi = f(hi);
    }
  }

  const double target_tol = 1e-10 * delta;
  double u_lo = std::log(lo);
  double u_hi = std::log(hi);
  // Newton from the upper end, where s' is already on the correct side.
  double u = u_hi;
  double lambda = hi;
  RidgeProblem::Eval e = e_hi;
  for (int iter = 0; iter < 200; ++iter) {
    const double g = e.s_prime + delta;
    if (std::abs(g) <= target_tol) break;
    if (g < 0.0)
      u_lo = u;
    else
      u_hi = u;
    if (u_hi - u_lo <= 1e-15 * std::max(1.0, std::abs(u_hi))) break;
    const double slope = lambda * e.s_double_prime; // d g / d log(lambda)
    double u_next = (slope > 0.0) ? u - g / slope : 0.5 * (u_lo + u_hi);
    if (!(u_next > u_lo && u_next < u_hi)) u_next = 0.5 * (u_lo + u_hi);
    u = u_next;
    lambda = std::exp(u);
    e = f(lambda);
  }
  return finish(lambda, TuneStatus::Root, e.s_prime);
}

inline TuneResult tune_lambda(const Matrix &X, const Matrix &Phi, const std::optional<Vector> &w,
                              double delta) {
  return tune_lambda(RidgeProblem(X, Phi, w), delta);
}

/// Exactly one of lambda (fixed ridge) or delta (sensitivity target) is set.
/// Weights are used as given; scaling all weights by k is equivalent to
/// scaling lambda by 1/k.
struct RegConfig {
  std::optional<double> lambda;
  std::optional<double> delta;
  std::optional<Vector> weights;
  SolverConfig solver{};

  static RegConfig fixed(double lambda, SolverConfig solver = {}) {
    RegConfig c;
    c.lambda = lambda;
    c.solver = solver;
    return c;
  }
  static RegConfig adaptive(double delta, SolverConfig solver = {}) {
    RegConfig c;
    c.delta = delta;
    c.solver = solver;
    return c;
  }

  void validate() const {
    if (lambda.has_value() == delta.has_value())
      throw InvalidArgument("RegConfig: set exactly one of lambda or delta");
    if (lambda && !(*lambda >= 0.0)) throw InvalidArgument("RegConfig: lambda must be >= 0");
    if (delta && !(*delta > 0.0)) throw InvalidArgument("RegConfig: delta must be > 0");
    solver.validate();
  }
};

/// Regularized fit: min ||(X - R T(Phi)) W^{1/2}||_F^2 + lambda ||R J||_F^2 under the
/// embedding constraints. In delta mode lambda is re-tuned from the current
/// embedding before every R-step, and loss_trace holds the unregularized residual.
inline FitResult fit_rqmf(const Matrix &X, Index d, const RegConfig &cfg) {
  cfg.validate();
  std::optional<double> previous;
  return detail::alternating_fit(X, d, cfg.solver, cfg.weights, [&](const Matrix &Phi) {
    const RidgeProblem problem(X, Phi, cfg.weights);
    const double lambda = cfg.lambda ? *cfg.lambda : tune_lambda(problem, *cfg.delta, previous).lambda;
    previous = lambda;
    detail::RUpdate u{problem.solve(lambda)};
    u.lambda = lambda;
    u.penalty = lambda * u.model.Q.squaredNorm();
    u.regularized = cfg.lambda.has_value();
    u.ridge = true;
    return u;
  });
}

/// exp(-||x - y||^2 / (2 h^2))
inline double gaussian_kernel(const Vector &x, const Vector &y, double h) {
  if (!(h > 0.0)) throw InvalidArgument("gaussian_kernel: bandwidth must be positive");
  detail::require_dims(x.size() == y.size(), "gaussian_kernel: points differ in dimension");
  return std::exp(-(x - y).squaredNorm() / (2.0 * h * h));
}

/// Sensitivity level used for equal-weight fits in the unit-sphere benchmark:
/// delta = max{1, 8K - 125}.
inline double sphere_delta_preset(int K) { return std::max(1.0, 8.0 * K - 125.0); }

/// Sensitivity level used for kernel-weighted fits in the unit-sphere benchmark.
inline constexpr double kSphereKernelDelta = 100.0;

} // namespace qmf
