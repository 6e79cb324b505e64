#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qmf/errors.hpp"

namespace qmf {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Number of quadratic monomials in d latent variables, (d^2 + d) / 2.
constexpr Index quad_dim(Index d) { return (d * d + d) / 2; }

/// Length of the full feature vector [1, tau, psi(tau)], (2 + 3d + d^2) / 2.
constexpr Index feature_dim(Index d) { return 1 + d + quad_dim(d); }

/// Fixed bijection k <-> (i, j), i <= j, in the order
/// (0,0), (0,1), ..., (0,d-1), (1,1), ..., (d-1,d-1).
/// Every serialized Q matrix uses this column order.
class FeatureIndex {
public:
  explicit FeatureIndex(Index d) : d_(d), table_(d * d, -1) {
    if (d < 1) throw InvalidArgument("FeatureIndex: latent dimension must be >= 1");
    pairs_.reserve(static_cast<std::size_t>(quad_dim(d)));
    for (Index i = 0; i < d; ++i) {
      for (Index j = i; j < d; ++j) {
        const auto k = static_cast<Index>(pairs_.size());
        table_[static_cast<std::size_t>(i * d + j)] = k;
        table_[static_cast<std::size_t>(j * d + i)] = k;
        pairs_.emplace_back(i, j);
      }
    }
  }

  Index dim() const { return d_; }
  Index size() const { return static_cast<Index>(pairs_.size()); }

  /// Column of the monomial tau_i * tau_j (order of i, j irrelevant).
  Index operator()(Index i, Index j) const {
    return table_[static_cast<std::size_t>(i * d_ + j)];
  }

  const std::pair<Index, Index> &pair(Index k) const {
    return pairs_[static_cast<std::size_t>(k)];
  }

private:
  Index d_;
  std::vector<Index> table_;
  std::vector<std::pair<Index, Index>> pairs_;
};

/// All quadratic and interaction monomials of tau.
inline Vector psi(const Vector &tau) {
  const Index d = tau.size();
  if (d < 1) throw InvalidArgument("psi: empty latent point");
  Vector out(quad_dim(d));
  Index k = 0;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) out[k++] = tau[i] * tau[j];
  return out;
}

/// Feature vector [1, tau, psi(tau)].
inline Vector xi(const Vector &tau) {
  const Index d = tau.size();
  if (d < 1) throw InvalidArgument("xi: empty latent point");
  Vector out(feature_dim(d));
  out[0] = 1.0;
  out.segment(1, d) = tau;
  out.tail(quad_dim(d)) = psi(tau);
  return out;
}

/// Design matrix T(Phi) = [xi(tau_1), ..., xi(tau_m)] for a d x m embedding.
inline Matrix build_T(const Matrix &Phi) {
  const Index d = Phi.rows();
  if (d < 1) throw InvalidArgument("build_T: embedding has no rows");
  const Index m = Phi.cols();
  Matrix T(feature_dim(d), m);
  T.row(0).setOnes();
  T.middleRows(1, d) = Phi;
  Index k = 1 + d;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) T.row(k++) = Phi.row(i).cwiseProduct(Phi.row(j));
  return T;
}

/// Linear-only design matrix [1; Phi], used by the Q = 0 restriction.
inline Matrix build_T_linear(const Matrix &Phi) {
  Matrix T(1 + Phi.rows(), Phi.cols());
  T.row(0).setOnes();
  T.bottomRows(Phi.rows()) = Phi;
  return T;
}

/// Selector J = [0 I]^T with R * J = Q.
inline Matrix selector_J(Index d) {
  if (d < 1) throw InvalidArgument("selector_J: latent dimension must be >= 1");
  Matrix J = Matrix::Zero(feature_dim(d), quad_dim(d));
  J.bottomRows(quad_dim(d)).setIdentity();
  return J;
}

/// D symmetric d x d slices B_k; B(tau, eta)_k = tau^T B_k eta.
struct SymTensor {
  std::vector<Matrix> slices;

  Index ambient_dim() const { return static_cast<Index>(slices.size()); }
  Index latent_dim() const { return slices.empty() ? 0 : slices.front().rows(); }

  static SymTensor zero(Index D, Index d) {
    return SymTensor{std::vector<Matrix>(static_cast<std::size_t>(D), Matrix::Zero(d, d))};
  }

  const Matrix &operator[](Index k) const { return slices[static_cast<std::size_t>(k)]; }
  Matrix &operator[](Index k) { return slices[static_cast<std::size_t>(k)]; }
};

inline SymTensor q_to_tensor(const Matrix &Q, Index d) {
  if (d < 1) throw InvalidArgument("q_to_tensor: latent dimension must be >= 1");
  detail::require_dims(Q.cols() == quad_dim(d),
                       "q_to_tensor: Q has " + std::to_string(Q.cols()) + " columns, expected " +
                           std::to_string(quad_dim(d)));
  const FeatureIndex idx(d);
  SymTensor B = SymTensor::zero(Q.rows(), d);
  for (Index k = 0; k < Q.rows(); ++k) {
    Matrix &Bk = B[k];
    for (Index c = 0; c < idx.size(); ++c) {
      const auto [i, j] = idx.pair(c);
      if (i == j) {
        Bk(i, i) = Q(k, c);
      } else {
        Bk(i, j) = Q(k, c) / 2.0;
        Bk(j, i) = Bk(i, j);
      }
    }
  }
  return B;
}

inline Matrix tensor_to_q(const SymTensor &B) {
  const Index D = B.ambient_dim();
  const Index d = B.latent_dim();
  if (D == 0) return Matrix(0, 0);
  const FeatureIndex idx(d);
  Matrix Q(D, idx.size());
  for (Index k = 0; k < D; ++k) {
    const Matrix &Bk = B[k];
    detail::require_dims(Bk.rows() == d && Bk.cols() == d, "tensor_to_q: ragged slices");
    for (Index i = 0; i < d; ++i)
      for (Index j = i + 1; j < d; ++j)
        if (Bk(i, j) != Bk(j, i))
          throw SymmetryViolation("tensor_to_q: slice " + std::to_string(k) + " is not symmetric");
    for (Index c = 0; c < idx.size(); ++c) {
      const auto [i, j] = idx.pair(c);
      Q(k, c) = (i == j) ? Bk(i, i) : 2.0 * Bk(i, j);
    }
  }
  return Q;
}

/// Action B_eta = [B_1 eta, ..., B_D eta]^T (D x d).
inline Matrix tensor_action(const SymTensor &B, const Vector &eta) {
  const Index d = B.latent_dim();
  detail::require_dims(B.ambient_dim() == 0 || eta.size() == d, "tensor_action: eta has wrong length");
  Matrix out(B.ambient_dim(), eta.size());
  for (Index k = 0; k < B.ambient_dim(); ++k) out.row(k) = (B[k] * eta).transpose();
  return out;
}

/// Adjoint B*(v) = sum_k v_k B_k (d x d).
inline Matrix tensor_adjoint(const SymTensor &B, const Vector &v) {
  detail::require_dims(v.size() == B.ambient_dim(), "tensor_adjoint: v has wrong length");
  const Index d = B.latent_dim();
  Matrix out = Matrix::Zero(d, d);
  for (Index k = 0; k < B.ambient_dim(); ++k) out.noalias() += v[k] * B[k];
  return out;
}

/// Bilinear evaluation B(tau, eta).
inline Vector tensor_apply(const SymTensor &B, const Vector &tau, const Vector &eta) {
  return tensor_action(B, eta) * tau;
}

/// Quadratic surface f(tau) = c + A tau + B(tau, tau), stored as R = [c | A | Q].
struct QuadModel {
  Vector c;
  Matrix A;
  Matrix Q;

  Index ambient_dim() const { return c.size(); }
  Index latent_dim() const { return A.cols(); }

  void validate() const {
    detail::require_dims(A.rows() == c.size() && Q.rows() == c.size(),
                         "QuadModel: c, A and Q must have the same number of rows");
    detail::require_dims(A.cols() >= 1, "QuadModel: latent dimension must be >= 1");
    detail::require_dims(Q.cols() == quad_dim(A.cols()), "QuadModel: Q has the wrong number of columns");
  }

  Matrix R() const {
    validate();
    Matrix out(c.size(), feature_dim(A.cols()));
    out << c, A, Q;
    return out;
  }

  SymTensor tensor() const { return q_to_tensor(Q, latent_dim()); }

  static QuadModel from_R(const Matrix &R, Index d) {
    detail::require_dims(R.cols() == feature_dim(d), "QuadModel::from_R: R has the wrong number of columns");
    return QuadModel{R.col(0), R.middleCols(1, d), R.rightCols(quad_dim(d))};
  }

  static QuadModel zero(Index D, Index d) {
    return QuadModel{Vector::Zero(D), Matrix::Zero(D, d), Matrix::Zero(D, quad_dim(d))};
  }
};

/// f(tau) evaluated through the c + A tau + Q psi(tau) blocks.
inline Vector model_eval(const QuadModel &model, const Vector &tau) {
  model.validate();
  detail::require_dims(tau.size() == model.latent_dim(), "model_eval: tau has wrong length");
  return model.c + model.A * tau + model.Q * psi(tau);
}

} // namespace qmf
