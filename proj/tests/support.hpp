#pragma once

// Shared helpers for the test suites: seeded random instances and oracles
// written without the library's own routines.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qmf/datasets.hpp"
#include "qmf/denoise.hpp"
#include "qmf/poly_features.hpp"
#include "qmf/projection.hpp"

namespace testing_support {

using qmf::Index;
using qmf::Matrix;
using qmf::Vector;

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }

  Matrix gaussian(Index r, Index c) {
    Matrix M(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) M(i, j) = normal();
    return M;
  }
  Vector gaussian(Index n) { return gaussian(n, 1).col(0); }
};

// Monomials tau_i tau_j, i <= j, read row by row from the upper triangle of tau tau^T.
inline Vector psi_oracle(const Vector &tau) {
  const Matrix outer = tau * tau.transpose();
  std::vector<double> vals;
  for (Index i = 0; i < tau.size(); ++i)
    for (Index j = i; j < tau.size(); ++j) vals.push_back(outer(i, j));
  return Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
}

// B(tau, tau)_k = sum_{i,j} B_k[i,j] tau_i tau_j, with B_k rebuilt from Q:
// B_k[i,i] = Q[k, col(i,i)], B_k[i,j] = B_k[j,i] = Q[k, col(i,j)] / 2.
inline Vector quadratic_oracle(const Matrix &Q, const Vector &tau) {
  const Index d = tau.size();
  Vector out = Vector::Zero(Q.rows());
  for (Index k = 0; k < Q.rows(); ++k) {
    Index col = 0;
    for (Index i = 0; i < d; ++i) {
      for (Index j = i; j < d; ++j, ++col) {
        if (i == j)
          out[k] += Q(k, col) * tau[i] * tau[i];
        else
          out[k] += 2.0 * (Q(k, col) / 2.0) * tau[i] * tau[j];
      }
    }
  }
  return out;
}

// Central differences of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector &)> &f, const Vector &x, double h = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline Matrix fd_hessian(const std::function<double(const Vector &)> &f, const Vector &x, double h = 1e-4) {
  const Index n = x.size();
  Matrix H(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      auto shifted = [&](double si, double sj) {
        Vector y = x;
        y[i] += si * h;
        y[j] += sj * h;
        return f(y);
      };
      H(i, j) = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (4.0 * h * h);
    }
  }
  return H;
}

// Global minimizer of a 1-D function on [lo, hi] by a uniform grid, then a
// finer grid around the best node, repeated until the step is tiny.
inline double grid_minimize(const std::function<double(double)> &f, double lo, double hi, double step) {
  double best = lo, best_val = f(lo);
  for (double t = lo; t <= hi; t += step) {
    const double v = f(t);
    if (v < best_val) {
      best_val = v;
      best = t;
    }
  }
  double width = step;
  for (int round = 0; round < 8; ++round) {
    const double a = best - width, fine = width / 50.0;
    for (int i = 0; i <= 100; ++i) {
      const double t = a + fine * i;
      const double v = f(t);
      if (v < best_val) {
        best_val = v;
        best = t;
      }
    }
    width = fine;
  }
  return best;
}

// Brute-force kNN: full sort of (distance, index) pairs.
inline std::vector<Index> knn_oracle(const Matrix &cloud, const Vector &y, int K) {
  std::vector<std::pair<double, Index>> all;
  for (Index i = 0; i < cloud.cols(); ++i) all.emplace_back((cloud.col(i) - y).norm(), i);
  std::stable_sort(all.begin(), all.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  std::vector<Index> out;
  for (int k = 0; k < K; ++k) out.push_back(all[static_cast<std::size_t>(k)].second);
  return out;
}

// Local PCA from the SVD of the centered neighbour matrix.
inline Vector local_pca_svd_oracle(const Matrix &cloud, const Vector &y, int K, Index d) {
  const auto idx = knn_oracle(cloud, y, K);
  Matrix N(cloud.rows(), K);
  for (int k = 0; k < K; ++k) N.col(k) = cloud.col(idx[static_cast<std::size_t>(k)]);
  const Vector c = N.rowwise().mean();
  const Matrix C = N.colwise() - c;
  Eigen::JacobiSVD<Matrix> svd(C, Eigen::ComputeThinU);
  const Matrix U = svd.matrixU().leftCols(d);
  return c + U * U.transpose() * (y - c);
}

// A random orthogonal matrix (QR of a Gaussian matrix with sign fix).
inline Matrix random_orthogonal(Rng &rng, Index n) {
  Eigen::HouseholderQR<Matrix> qr(rng.gaussian(n, n));
  Matrix Q = qr.householderQ();
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i)
    if (R(i, i) < 0) Q.col(i) = -Q.col(i);
  return Q;
}

// A chart from a noisy unit sphere: K nearest points to point `target`,
// centered. Built from the brute-force kNN so it does not rely on build_chart.
inline Matrix sphere_chart(std::uint64_t seed, int K, int target = 0, double sigma = 0.2, int n = 240) {
  qmf::GenSpec g;
  g.shape = qmf::ShapeKind::UnitSphere;
  g.n = n;
  g.noise_sigma = sigma;
  g.seed = seed;
  const Matrix X = qmf::generate(g).points;
  const auto idx = knn_oracle(X, X.col(target), K);
  Matrix C(3, K);
  for (int k = 0; k < K; ++k) C.col(k) = X.col(idx[static_cast<std::size_t>(k)]);
  return C.colwise() - C.rowwise().mean();
}

} // namespace testing_support
