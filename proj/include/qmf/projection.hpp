#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "qmf/errors.hpp"
#include "qmf/poly_features.hpp"

namespace qmf {

/// Nearest-point problem min_tau ||x - c - A tau - B(tau, tau)||^2.
struct ProjectionProblem {
  Vector x;
  Vector c;
  Matrix A;
  SymTensor B;

  Index ambient_dim() const { return x.size(); }
  Index latent_dim() const { return A.cols(); }

  static ProjectionProblem from_model(const QuadModel &model, const Vector &x) {
    model.validate();
    detail::require_dims(x.size() == model.ambient_dim(), "ProjectionProblem: x has wrong length");
    return ProjectionProblem{x, model.c, model.A, model.tensor()};
  }

  void validate() const {
    detail::require_dims(c.size() == x.size() && A.rows() == x.size() && B.ambient_dim() == x.size(),
                         "ProjectionProblem: ambient dimensions disagree");
    detail::require_dims(B.latent_dim() == A.cols(), "ProjectionProblem: latent dimensions disagree");
  }
};

struct ProjectionOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

struct ProjectionResult {
  Vector tau;
  Vector eta;
  int iterations = 0;
  bool converged = false;
  double loss = 0.0;
  double grad_norm = 0.0;
  // Largest ||tau_s||, ||eta_s|| seen; feeds the default certificate radius.
  double max_iterate_norm = 0.0;
};

struct ConvexityCertificate {
  double b = 0.0;
  double b0 = 0.0;
  double alpha = 0.0;
  double sigma_d_A = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

/// x - c - A tau - B(tau, tau)
inline Vector projection_residual(const ProjectionProblem &p, const Vector &tau) {
  return p.x - p.c - p.A * tau - tensor_apply(p.B, tau, tau);
}

inline double loss_h(const ProjectionProblem &p, const Vector &tau) {
  return projection_residual(p, tau).squaredNorm();
}

inline Vector grad_h(const ProjectionProblem &p, const Vector &tau) {
  const Vector r = projection_residual(p, tau);
  return -2.0 * (p.A + 2.0 * tensor_action(p.B, tau)).transpose() * r;
}

inline double surrogate_g(const ProjectionProblem &p, const Vector &tau, const Vector &eta) {
  const Vector b = tensor_apply(p.B, tau, eta);
  const Vector base = p.x - p.c - b;
  return 0.5 * (base - p.A * tau).squaredNorm() + 0.5 * (base - p.A * eta).squaredNorm();
}

/// Gamma_eta: Hessian of g(., eta).
inline Matrix gamma(const ProjectionProblem &p, const Vector &eta) {
  const Matrix Beta = tensor_action(p.B, eta);
  const Matrix AB = p.A + Beta;
  return AB.transpose() * AB + Beta.transpose() * Beta;
}

/// zeta_eta: right-hand side of the tau-update, tau = Gamma_eta^{-1} zeta_eta.
inline Vector zeta(const ProjectionProblem &p, const Vector &eta) {
  const Matrix Beta = tensor_action(p.B, eta);
  const Vector xc = p.x - p.c;
  return (p.A + Beta).transpose() * xc + Beta.transpose() * (xc - p.A * eta);
}

namespace detail {

// SPD solve with an LU fallback. Reciprocal condition below 1e-14 is singular.
// For the Cholesky path (min L_ii / max L_ii)^2 stands in for rcond.
inline Vector solve_spd(const Matrix &G, const Vector &rhs) {
  constexpr double kMinRcond = 1e-14;
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() == Eigen::Success) {
    const Vector diag = llt.matrixLLT().diagonal();
    const double ratio = diag.minCoeff() / diag.maxCoeff();
    if (ratio * ratio >= kMinRcond) return llt.solve(rhs);
  }
  Eigen::FullPivLU<Matrix> lu(G);
  if (lu.rcond() < kMinRcond || !std::isfinite(lu.rcond()))
    throw SingularSystem("projection: Gamma is singular (rcond " + std::to_string(lu.rcond()) + ")");
  return lu.solve(rhs);
}

// Precomputed pieces of a projection problem for the inner loop, with
// scratch buffers reused across iterations. One instance per thread.
class ProjectionKernel {
public:
  explicit ProjectionKernel(const ProjectionProblem &p)
      : A_(p.A), xc_(p.x - p.c), D_(p.ambient_dim()), d_(p.latent_dim()), stacked_(D_ * d_, d_),
        flat_(D_ * d_), AB_(D_, d_), G_(d_, d_), z_(d_), r_(D_), llt_(d_) {
    for (Index k = 0; k < D_; ++k) stacked_.middleRows(k * d_, d_) = p.B[k];
  }

  // B_eta (D x d) into out.
  void action(const Vector &eta, Matrix &out) const {
    flat_.noalias() = stacked_ * eta;
    out = Eigen::Map<const Matrix>(flat_.data(), d_, D_).transpose();
  }

  Matrix action(const Vector &eta) const {
    Matrix out(D_, d_);
    action(eta, out);
    return out;
  }

  // Gamma_eta^{-1} zeta_eta given Beta = B_eta.
  Vector update(const Matrix &Beta, const Vector &eta) const {
    AB_ = A_ + Beta;
    G_.noalias() = AB_.transpose() * AB_;
    G_.noalias() += Beta.transpose() * Beta;
    r_ = xc_;
    r_.noalias() -= A_ * eta;
    z_.noalias() = AB_.transpose() * xc_;
    z_.noalias() += Beta.transpose() * r_;
    llt_.compute(G_);
    if (llt_.info() == Eigen::Success) {
      const auto diag = llt_.matrixLLT().diagonal();
      const double ratio = diag.minCoeff() / diag.maxCoeff();
      if (ratio * ratio >= 1e-14) return llt_.solve(z_);
    }
    return solve_spd(G_, z_);
  }

  // h(tau) given Beta = B_tau.
  double loss(const Matrix &Beta, const Vector &tau) const {
    AB_ = A_ + Beta;
    r_ = xc_;
    r_.noalias() -= AB_ * tau;
    return r_.squaredNorm();
  }
  double loss(const Vector &tau) const { return loss(action(tau), tau); }

private:
  const Matrix &A_;
  Vector xc_;
  Index D_, d_;
  Matrix stacked_;
  mutable Vector flat_;
  mutable Matrix AB_, G_;
  mutable Vector z_, r_;
  mutable Eigen::LLT<Matrix> llt_;
};

} // namespace detail

/// Alternating closed-form minimization of g(tau, eta) starting from (init, init).
///
/// Stops when max(||tau_s - tau_{s-1}||, ||tau_s - eta_s||) <= tol or after
/// max_iter sweeps. The result is flagged converged only when the step test
/// passed and ||grad h(tau)|| <= 10 tol. Otherwise the lowest-loss iterate
/// seen (init included) is returned.
inline ProjectionResult project(const ProjectionProblem &p, const Vector &init,
                                const ProjectionOptions &opts = {}) {
  p.validate();
  detail::require_dims(init.size() == p.latent_dim(), "project: init has wrong length");
  const detail::ProjectionKernel kernel(p);

  ProjectionResult out;
  Vector tau = init;
  Vector eta = init;
  Vector best = init;
  const double init_loss = kernel.loss(init);
  double best_loss = init_loss;
  double max_norm = init.norm();
  bool step_ok = false;

  Matrix B_eta(p.ambient_dim(), p.latent_dim()), B_tau(p.ambient_dim(), p.latent_dim());
  auto consider = [&](const Vector &v, double l) {
    if (l < best_loss) {
      best_loss = l;
      best = v;
    }
  };

  int s = 0;
  while (s < opts.max_iter) {
    ++s;
    const Vector tau_prev = tau;
    kernel.action(eta, B_eta);
    if (s > 1) consider(eta, kernel.loss(B_eta, eta));
    tau = kernel.update(B_eta, eta);
    kernel.action(tau, B_tau);
    consider(tau, kernel.loss(B_tau, tau));
    eta = kernel.update(B_tau, tau);
    max_norm = std::max({max_norm, tau.norm(), eta.norm()});

    const double step = std::max((tau - tau_prev).norm(), (tau - eta).norm());
    if (!std::isfinite(step)) break;
    if (step <= opts.tol) {
      step_ok = true;
      break;
    }
  }
  if (!step_ok && eta.allFinite()) consider(eta, kernel.loss(eta));

  out.iterations = s;
  out.eta = eta;
  out.max_iterate_norm = max_norm;
  if (step_ok) {
    const double g = grad_h(p, tau).norm();
    const double l = kernel.loss(tau);
    if (g <= 10.0 * opts.tol && l <= init_loss) {
      out.tau = tau;
      out.loss = l;
      out.grad_norm = g;
      out.converged = true;
      return out;
    }
  }
  out.tau = best;
  out.loss = best_loss;
  out.grad_norm = grad_h(p, best).norm();
  return out;
}

inline ProjectionResult project(const ProjectionProblem &p, const ProjectionOptions &opts = {}) {
  return project(p, Vector::Zero(p.latent_dim()), opts);
}

/// Sufficient condition for strong convexity of g on S_alpha x S_alpha:
/// (2||x-c||_1 + 4 alpha ||A||_{2,1}) b + 3 D alpha^2 b^2 <= sigma_d(A)^2 / 4.
inline ConvexityCertificate certificate(const ProjectionProblem &p, double alpha) {
  p.validate();
  if (!(alpha > 0.0)) throw InvalidArgument("certificate: alpha must be positive");

  ConvexityCertificate cert;
  cert.alpha = alpha;
  for (const Matrix &Bk : p.B.slices) {
    // slices are symmetric, so the top singular value is the largest |eigenvalue|
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(Bk, Eigen::EigenvaluesOnly).eigenvalues();
    cert.b = std::max(cert.b, ev.cwiseAbs().maxCoeff());
  }
  const Vector sv = Eigen::JacobiSVD<Matrix>(p.A).singularValues();
  cert.sigma_d_A = (sv.size() < p.latent_dim()) ? 0.0 : sv[p.latent_dim() - 1];

  const double xc1 = (p.x - p.c).lpNorm<1>();
  const double a21 = p.A.rowwise().norm().sum();
  const double D = static_cast<double>(p.ambient_dim());
  const double s2 = cert.sigma_d_A * cert.sigma_d_A;

  cert.lhs = (2.0 * xc1 + 4.0 * alpha * a21) * cert.b + 3.0 * D * alpha * alpha * cert.b * cert.b;
  cert.rhs = s2 / 4.0;
  cert.satisfied = cert.lhs <= cert.rhs;

  const double P = xc1 + 2.0 * alpha * a21;
  const double denom = 3.0 * D * alpha * alpha;
  // -P + sqrt(P^2 + q), written to avoid cancellation
  const double q = denom * s2 / 4.0;
  cert.b0 = (q == 0.0) ? 0.0 : q / (P + std::sqrt(P * P + q)) / denom;
  return cert;
}

/// Certificate with the default radius 2 * max iterate norm of a finished run.
inline ConvexityCertificate certificate(const ProjectionProblem &p, const ProjectionResult &run) {
  const double alpha = run.max_iterate_norm > 0.0 ? 2.0 * run.max_iterate_norm : 1.0;
  return certificate(p, alpha);
}

/// Hessian of g at (tau, eta) ordered as [tau; eta].
inline Matrix hessian_g(const ProjectionProblem &p, const Vector &tau, const Vector &eta) {
  p.validate();
  const Index d = p.latent_dim();
  const Matrix Bt = tensor_action(p.B, tau);
  const Matrix Be = tensor_action(p.B, eta);
  const Vector mid = p.x - p.c - p.A * (tau + eta) / 2.0 - Be * tau;
  const Matrix cross = -2.0 * tensor_adjoint(p.B, mid) + Be.transpose() * (p.A + Bt) +
                       (p.A + Be).transpose() * Bt;
  Matrix H(2 * d, 2 * d);
  H.topLeftCorner(d, d) = gamma(p, eta);
  H.bottomRightCorner(d, d) = gamma(p, tau);
  H.topRightCorner(d, d) = cross;
  H.bottomLeftCorner(d, d) = cross.transpose();
  return H;
}

} // namespace qmf
