#pragma once

// Shared numerical kernels: objective functions, shrinkage-thresholding
// operators, the reduced-rank Procrustes rotation, subspace angles, and a
// deterministic thin SVD used by every solver.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

#include "robsub/types.hpp"

namespace robsub {

struct ThinSvd {
  Matrix u;      // m x r
  Vector sigma;  // r
  Matrix v;      // n x r
};

/// Thin SVD with a fixed sign convention: each left singular vector is
/// flipped so its largest-magnitude entry is positive (ties broken by the
/// lowest index). Makes PCA and Procrustes outputs reproducible across
/// runs and platforms.
inline ThinSvd thin_svd(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ThinSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Index j = 0; j < out.u.cols(); ++j) {
    Index arg_max = 0;
    out.u.col(j).cwiseAbs().maxCoeff(&arg_max);
    if (out.u(arg_max, j) < 0.0) {
      out.u.col(j) = -out.u.col(j);
      out.v.col(j) = -out.v.col(j);
    }
  }
  return out;
}

/// Residual matrix with row n equal to x_n - mean - subspace*scores_n - o_n.
inline Matrix residual_matrix(const DataMatrix& data, const FactorModel& model,
                              const OutlierMatrix& outliers) {
  detail::require(model.dim() == data.cols() && model.n_obs() == data.rows(),
                  "residual_matrix: model dimensions do not match data");
  detail::require(model.mean.size() == data.cols(),
                  "residual_matrix: mean length does not match data");
  detail::require(outliers.rows() == data.rows() && outliers.cols() == data.cols(),
                  "residual_matrix: outlier matrix does not match data");
  return data.values - model.reconstruct() - outliers.values;
}

/// Outlier penalty: sum_n ||o_n||_2 for RowL2, sum |o_ij| for EntryL1.
inline double outlier_penalty(const Matrix& o, RegularizerKind kind) {
  return kind == RegularizerKind::RowL2 ? o.rowwise().norm().sum()
                                        : o.cwiseAbs().sum();
}

/// ||X - 1 m' - S U' - O||_F^2 + lambda2 * penalty(O).
inline double objective_value(const DataMatrix& data, const FactorModel& model,
                              const OutlierMatrix& outliers, double lambda2,
                              RegularizerKind kind) {
  detail::require(lambda2 >= 0, "objective_value: lambda2 must be >= 0");
  const Matrix residual = residual_matrix(data, model, outliers);
  return residual.squaredNorm() + lambda2 * outlier_penalty(outliers.values, kind);
}

/// Vector Huber loss: ||r||^2 inside radius lambda2/2, linear outside.
inline double huber_vector_loss(const Vector& r, double lambda2) {
  detail::require(lambda2 > 0, "huber_vector_loss: lambda2 must be > 0");
  const double norm = r.norm();
  if (norm <= lambda2 / 2.0) return norm * norm;
  return lambda2 * norm - lambda2 * lambda2 / 4.0;
}

/// Row-wise shrinkage r * (||r|| - tau)_+ / ||r||; the zero vector maps to
/// itself (no 0/0).
inline Vector row_soft_threshold(const Vector& r, double tau) {
  detail::require(tau >= 0, "row_soft_threshold: tau must be >= 0");
  const double norm = r.norm();
  if (norm <= tau || norm == 0.0) return Vector::Zero(r.size());
  return r * ((norm - tau) / norm);
}

/// Entry-wise shrinkage sign(r_i) (|r_i| - tau)_+.
inline Vector entry_soft_threshold(const Vector& r, double tau) {
  detail::require(tau >= 0, "entry_soft_threshold: tau must be >= 0");
  Vector out(r.size());
  for (Index i = 0; i < r.size(); ++i) {
    const double mag = std::abs(r(i)) - tau;
    out(i) = mag > 0 ? (r(i) > 0 ? mag : -mag) : 0.0;
  }
  return out;
}

namespace detail {

/// Apply the appropriate shrinkage to every row of a residual matrix.
inline Matrix shrink(const Matrix& residual, double tau, RegularizerKind kind) {
  Matrix out(residual.rows(), residual.cols());
  if (kind == RegularizerKind::RowL2) {
    for (Index n = 0; n < residual.rows(); ++n) {
      const double norm = residual.row(n).norm();
      if (norm <= tau || norm == 0.0)
        out.row(n).setZero();
      else
        out.row(n) = residual.row(n) * ((norm - tau) / norm);
    }
  } else {
    for (Index n = 0; n < residual.rows(); ++n)
      for (Index j = 0; j < residual.cols(); ++j) {
        const double mag = std::abs(residual(n, j)) - tau;
        out(n, j) = mag > 0 ? (residual(n, j) > 0 ? mag : -mag) : 0.0;
      }
  }
  return out;
}

/// Extend an orthonormal p x k block to p x q by Gram-Schmidt over the
/// canonical basis. Deterministic.
inline Matrix orthonormal_completion(const Matrix& u, Index q) {
  const Index p = u.rows();
  require(q <= p, "orthonormal_completion: q must be <= p");
  Matrix out(p, q);
  Index have = u.cols();
  out.leftCols(have) = u;
  for (Index i = 0; i < p && have < q; ++i) {
    Vector cand = Vector::Unit(p, i);
    cand -= out.leftCols(have) * (out.leftCols(have).transpose() * cand);
    const double norm = cand.norm();
    if (norm > 1e-8) out.col(have++) = cand / norm;
  }
  if (have < q) throw NumericalError("orthonormal_completion: could not complete basis");
  return out;
}

}  // namespace detail

/// Orthonormal U maximizing tr(U'A): U = L R' from the thin SVD A = L D R'.
/// Rank-deficient A is handled by the SVD product (any orthonormal
/// completion of the deficient directions is acceptable).
inline Matrix procrustes_rotation(const Matrix& a) {
  detail::require(a.cols() <= a.rows(), "procrustes_rotation: q must be <= p");
  const ThinSvd svd = thin_svd(a);
  return svd.u * svd.v.transpose();
}

/// Largest principal angle (radians, in [0, pi/2]) between the column
/// spans of two orthonormal p x q matrices.
inline double subspace_angle(const Matrix& u1, const Matrix& u2,
                             double ortho_tol = 1e-6) {
  detail::require(u1.rows() == u2.rows() && u1.cols() == u2.cols(),
                  "subspace_angle: dimension mismatch");
  const Index q = u1.cols();
  const Matrix eye = Matrix::Identity(q, q);
  if ((u1.transpose() * u1 - eye).norm() > ortho_tol ||
      (u2.transpose() * u2 - eye).norm() > ortho_tol)
    throw std::invalid_argument("subspace_angle: inputs must be orthonormal");
  Eigen::BDCSVD<Matrix> svd(u1.transpose() * u2);
  const double cos_min = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
  return std::acos(cos_min);
}

/// Plain PCA fit (mean + top-q subspace + scores) via the deterministic SVD.
/// Returns the model and the LS residual cost over the fitted rows.
struct PcaFit {
  FactorModel model;
  double residual_cost = 0.0;
};

inline PcaFit pca_fit(const Matrix& x, Index q) {
  detail::require(q >= 1 && q <= x.cols(), "pca_fit: q out of range");
  Vector mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean.transpose();
  const ThinSvd svd = thin_svd(centered);
  const Index avail = std::min<Index>(q, svd.sigma.size());
  Matrix subspace = svd.v.leftCols(avail);
  if (avail < q) subspace = detail::orthonormal_completion(subspace, q);
  Matrix scores = centered * subspace;
  double cost = 0.0;
  for (Index j = avail; j < svd.sigma.size(); ++j) cost += svd.sigma(j) * svd.sigma(j);
  PcaFit out;
  out.model = FactorModel{std::move(mean), std::move(subspace), std::move(scores), true};
  out.residual_cost = cost;
  return out;
}

/// Spectral norm by power iteration on M'M (tolerance on the iterate
/// change, deterministic start).
inline double spectral_norm(const Matrix& m, double tol = 1e-10, int max_iters = 1000) {
  if (m.size() == 0) return 0.0;
  Vector v(m.cols());
  for (Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.01 * std::sin(static_cast<double>(i + 1));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = m * v;
    const double sigma_new = w.norm();
    if (sigma_new == 0.0) return 0.0;
    Vector v_new = m.transpose() * w;
    const double scale = v_new.norm();
    if (scale == 0.0) return sigma_new;
    v_new /= scale;
    const bool done = std::abs(sigma_new - sigma) <= tol * std::max(1.0, sigma_new);
    sigma = sigma_new;
    v = v_new;
    if (done && it > 0) break;
  }
  return sigma;
}

}  // namespace robsub
