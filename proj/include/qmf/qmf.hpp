#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmf/errors.hpp"
#include "qmf/parallel.hpp"
#include "qmf/poly_features.hpp"
#include "qmf/projection.hpp"

namespace qmf {

struct SolverConfig {
  double eps = 1e-6;     // outer stop: subspace gap between consecutive embeddings
  int max_outer = 100;
  ProjectionOptions inner{};
  bool warm_start = true; // start each projection from the previous latent coordinate
  unsigned threads = 1;   // workers for the per-column projections

  void validate() const {
    if (!(eps > 0.0)) throw InvalidArgument("SolverConfig: eps must be positive");
    if (max_outer < 1) throw InvalidArgument("SolverConfig: max_outer must be >= 1");
    if (!(inner.tol > 0.0) || inner.max_iter < 1)
      throw InvalidArgument("SolverConfig: inner tolerance/iterations must be positive");
  }
};

struct FitResult {
  QuadModel model;
  Matrix embedding; // d x m, orthonormal centered rows

  // Monitored objective after each R-update: l(R_{t+1}, Phi_t). This is the
  // (weighted) residual, plus lambda ||Q||^2 when a fixed ridge penalty is used.
  std::vector<double> loss_trace;
  // Same objective at (R_t, Phi~_t), i.e. after projection and before re-orthonormalization.
  std::vector<double> projected_trace;
  // Unregularized (weighted) residual ||(X - R T(Phi)) W^{1/2}||_F^2 after each R-update.
  std::vector<double> residual_trace;
  // Ridge parameter used for each R-update (empty for unregularized fits).
  std::vector<double> lambda_trace;

  int iterations = 0;
  bool converged = false;
  double final_gap = 0.0;
  // Fewer samples than features: the R-step interpolates.
  bool interpolation_regime = false;
  // Diagnostics of the last projection sweep.
  int inner_nonconverged = 0;
  double max_grad_norm = 0.0;

  double lambda() const { return lambda_trace.empty() ? 0.0 : lambda_trace.back(); }
};

namespace detail {

inline void require_data(const Matrix &X, Index d) {
  if (d < 1) throw InvalidArgument("latent dimension d must be >= 1");
  if (X.cols() < 1) throw InvalidArgument("data matrix has no columns");
  if (!X.allFinite()) throw InvalidArgument("data matrix has non-finite entries");
}

template <class Row>
void fix_sign(Row &&row) {
  Index arg = 0;
  for (Index i = 1; i < row.size(); ++i)
    if (std::abs(row[i]) > std::abs(row[arg])) arg = i;
  if (row.size() > 0 && row[arg] < 0) row = -row;
}

} // namespace detail

/// Rows are the top-d unit eigenvectors of the centered Gram matrix
/// (X - xbar 1^T)^T (X - xbar 1^T), computed as right singular vectors.
/// Each row is signed so its largest-magnitude entry is positive.
inline Matrix init_embedding(const Matrix &X, Index d) {
  detail::require_data(X, d);
  const Index m = X.cols();
  if (m <= d) throw RankDeficiency("init_embedding: need more samples than the latent dimension");
  const Matrix Xc = X.colwise() - X.rowwise().mean();
  Eigen::BDCSVD<Matrix> svd(Xc, Eigen::ComputeThinV);
  const Vector &sv = svd.singularValues();
  if (sv.size() < d || !(sv[0] > 0.0) || sv[d - 1] * sv[d - 1] <= 1e-12 * sv[0] * sv[0])
    throw RankDeficiency("init_embedding: centered data has fewer than " + std::to_string(d) +
                         " nonzero directions");
  Matrix Phi = svd.matrixV().leftCols(d).transpose();
  for (Index i = 0; i < d; ++i) detail::fix_sign(Phi.row(i));
  return Phi;
}

/// ||X - R T(Phi)||_F^2
inline double loss(const Matrix &X, const QuadModel &model, const Matrix &Phi) {
  detail::require_dims(X.rows() == model.ambient_dim() && Phi.cols() == X.cols() &&
                           Phi.rows() == model.latent_dim(),
                       "loss: dimensions disagree");
  return (X - model.R() * build_T(Phi)).squaredNorm();
}

/// sum_i w_i ||x_i - R xi(tau_i)||^2
inline double weighted_loss(const Matrix &X, const QuadModel &model, const Matrix &Phi,
                            const std::optional<Vector> &w) {
  if (!w) return loss(X, model, Phi);
  detail::require_dims(w->size() == X.cols(), "weighted_loss: weight vector has wrong length");
  const Matrix E = X - model.R() * build_T(Phi);
  return (E.colwise().squaredNorm().transpose().array() * w->array()).sum();
}

/// Minimum-norm least-squares R = X T^T (T T^T)^+.
inline QuadModel solve_R(const Matrix &X, const Matrix &Phi) {
  detail::require_dims(Phi.cols() == X.cols(), "solve_R: X and Phi disagree on sample count");
  const Matrix T = build_T(Phi);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(T.transpose());
  const Matrix Rt = cod.solve(X.transpose());
  return QuadModel::from_R(Rt.transpose(), Phi.rows());
}

/// Linear (Q = 0) counterpart of solve_R.
inline QuadModel solve_R_linear(const Matrix &X, const Matrix &Phi) {
  detail::require_dims(Phi.cols() == X.cols(), "solve_R_linear: X and Phi disagree on sample count");
  const Index d = Phi.rows();
  const Matrix T = build_T_linear(Phi);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(T.transpose());
  const Matrix Rt = cod.solve(X.transpose());
  return QuadModel{Rt.row(0).transpose(), Rt.bottomRows(d).transpose(),
                   Matrix::Zero(X.rows(), quad_dim(d))};
}

/// Phi = (C Phi~ C^T)^{-1/2} Phi~ C with the centering C = I - 1 1^T / m.
inline Matrix orthonormalize(const Matrix &Phi_tilde) {
  const Matrix centered = Phi_tilde.colwise() - Phi_tilde.rowwise().mean();
  const Matrix cov = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector &ev = eig.eigenvalues();
  if (ev.size() == 0 || !ev.allFinite() || !(ev[0] > 1e-14 * std::max(1.0, ev[ev.size() - 1])))
    throw RankCollapse("orthonormalize: latent coordinates are degenerate (smallest eigenvalue " +
                       (ev.size() ? std::to_string(ev[0]) : std::string("n/a")) + ")");
  const Matrix Z = eig.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                   eig.eigenvectors().transpose();
  return Z * centered;
}

/// ||Phi_a^T Phi_a - Phi_b^T Phi_b|| (spectral) for orthonormal-row embeddings,
/// i.e. the sine of the largest principal angle between their row spaces.
/// Evaluated as ||(I - Phi_a^T Phi_a) Phi_b^T||, which stays accurate when the
/// spaces nearly coincide, without forming m x m matrices.
inline double subspace_gap(const Matrix &Phi_a, const Matrix &Phi_b) {
  detail::require_dims(Phi_a.cols() == Phi_b.cols() && Phi_a.rows() == Phi_b.rows(),
                       "subspace_gap: embeddings disagree in shape");
  const Matrix resid = Phi_b.transpose() - Phi_a.transpose() * (Phi_a * Phi_b.transpose());
  if (resid.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(resid).singularValues()[0];
}

namespace detail {

// Outcome of one R-step of an alternating fit.
struct RUpdate {
  QuadModel model;
  double lambda = 0.0;
  double penalty = 0.0;     // lambda ||Q||_F^2
  bool regularized = false; // penalty belongs to the monitored objective
  bool ridge = false;       // lambda is recorded in the trace
};

inline Matrix project_columns(const Matrix &X, const QuadModel &model, const Matrix &Phi,
                              const SolverConfig &cfg, FitResult &diag) {
  const Index m = X.cols();
  const Index d = model.latent_dim();
  ProjectionProblem base{Vector(), model.c, model.A, model.tensor()};
  Matrix Phi_tilde(d, m);
  std::vector<char> ok(static_cast<std::size_t>(m), 0);
  std::vector<double> grads(static_cast<std::size_t>(m), 0.0);
  parallel_for(static_cast<std::size_t>(m), cfg.threads, [&](std::size_t i) {
    ProjectionProblem p = base;
    p.x = X.col(static_cast<Index>(i));
    const Vector init = cfg.warm_start ? Vector(Phi.col(static_cast<Index>(i))) : Vector(Vector::Zero(d));
    const ProjectionResult r = project(p, init, cfg.inner);
    Phi_tilde.col(static_cast<Index>(i)) = r.tau;
    ok[i] = r.converged ? 1 : 0;
    grads[i] = r.grad_norm;
  });
  diag.inner_nonconverged = static_cast<int>(std::count(ok.begin(), ok.end(), 0));
  diag.max_grad_norm = grads.empty() ? 0.0 : *std::max_element(grads.begin(), grads.end());
  return Phi_tilde;
}

/// Shared alternating loop: R-step (supplied), per-column projection,
/// re-orthonormalization; stops once the embedding's row space stabilizes.
template <class RStep>
FitResult alternating_fit(const Matrix &X, Index d, const SolverConfig &cfg,
                          const std::optional<Vector> &w, RStep &&r_step) {
  require_data(X, d);
  cfg.validate();
  FitResult res;
  res.interpolation_regime = X.cols() <= feature_dim(d);

  auto objective = [&](const RUpdate &u, const Matrix &Phi) {
    const double resid = weighted_loss(X, u.model, Phi, w);
    return std::pair{resid + (u.regularized ? u.penalty : 0.0), resid};
  };
  auto record = [&](const RUpdate &u, const Matrix &Phi) {
    const auto [obj, resid] = objective(u, Phi);
    res.loss_trace.push_back(obj);
    res.residual_trace.push_back(resid);
    if (u.ridge) res.lambda_trace.push_back(u.lambda);
  };

  Matrix Phi = init_embedding(X, d);
  RUpdate upd = r_step(Phi);
  record(upd, Phi);

  for (int t = 1; t <= cfg.max_outer; ++t) {
    const Matrix Phi_tilde = project_columns(X, upd.model, Phi, cfg, res);
    res.projected_trace.push_back(objective(upd, Phi_tilde).first);
    Matrix Phi_next = orthonormalize(Phi_tilde);
    upd = r_step(Phi_next);
    record(upd, Phi_next);
    res.final_gap = subspace_gap(Phi_next, Phi);
    Phi = std::move(Phi_next);
    res.iterations = t;
    if (res.final_gap <= cfg.eps) {
      res.converged = true;
      break;
    }
  }
  res.model = std::move(upd.model);
  res.embedding = std::move(Phi);
  return res;
}

} // namespace detail

/// Alternating minimization of ||X - R T(Phi)||_F^2 subject to
/// Phi Phi^T = I_d, Phi 1 = 0.
inline FitResult fit_qmf(const Matrix &X, Index d, const SolverConfig &cfg = {}) {
  return detail::alternating_fit(X, d, cfg, std::nullopt, [&](const Matrix &Phi) {
    return detail::RUpdate{solve_R(X, Phi)};
  });
}

/// The Q = 0 restriction (affine PCA fit).
inline FitResult fit_lmf(const Matrix &X, Index d, const SolverConfig &cfg = {}) {
  return detail::alternating_fit(X, d, cfg, std::nullopt, [&](const Matrix &Phi) {
    return detail::RUpdate{solve_R_linear(X, Phi)};
  });
}

} // namespace qmf
