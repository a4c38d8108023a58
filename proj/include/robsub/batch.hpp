#pragma once

// Batch solvers: alternating minimization for the group-Lasso-regularized
// bilinear fit, its iteratively reweighted refinement, and exact
// small-scale enumeration oracles (least-trimmed-squares PCA and the
// l0-regularized support search).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "robsub/ops.hpp"
#include "robsub/types.hpp"

namespace robsub {

struct BatchFit {
  FactorModel model;       // orthonormal subspace
  OutlierMatrix outliers;
  std::vector<double> objective_trace;  // one value per full cycle, non-increasing
  int iters = 0;
  bool converged = false;

  double objective() const {
    return objective_trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : objective_trace.back();
  }
};

/**
 * Alternating minimization for
 *   min ||X - 1 m' - S U' - O||_F^2 + lambda2 * penalty(O),  U'U = I_q.
 *
 * Each cycle updates m -> S -> U (Procrustes) -> O (shrinkage at lambda2/2),
 * every block being an exact minimizer, so the recorded objective is
 * non-increasing. Stops when the relative objective change drops below
 * opts.rel_tol or after opts.max_iters cycles.
 *
 * Default start: U = first q canonical columns, O = 0. A warm start resumes
 * from the given fit's subspace and outlier matrix (its mean and scores are
 * refreshed by the first cycle, in update order).
 */
inline BatchFit fit_batch(const DataMatrix& data, Index q, double lambda2,
                          RegularizerKind kind, const SolverOptions& opts,
                          const BatchFit* warm_start = nullptr) {
  opts.validate();
  const Index n = data.rows();
  const Index p = data.cols();
  detail::require(q >= 1 && q <= std::min(n, p), "fit_batch: q out of range");
  detail::require(lambda2 >= 0, "fit_batch: lambda2 must be >= 0");

  const Matrix& x = data.values;
  Matrix u = Matrix::Identity(p, q);
  Matrix o = Matrix::Zero(n, p);
  if (warm_start != nullptr) {
    detail::require(warm_start->model.dim() == p && warm_start->model.rank() == q &&
                        warm_start->outliers.rows() == n,
                    "fit_batch: warm start has mismatched dimensions");
    u = warm_start->model.subspace;
    o = warm_start->outliers.values;
  }

  BatchFit fit;
  Vector mean(p);
  Matrix scores(n, q);
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int k = 1; k <= opts.max_iters; ++k) {
    mean = (x - o).colwise().mean();
    Matrix compensated = (x - o).rowwise() - mean.transpose();  // X_o
    scores = compensated * u;
    u = procrustes_rotation(compensated.transpose() * scores);
    Matrix residual = (x.rowwise() - mean.transpose()) - scores * u.transpose();
    o = detail::shrink(residual, lambda2 / 2.0, kind);
    const double objective =
        (residual - o).squaredNorm() + lambda2 * outlier_penalty(o, kind);
    fit.objective_trace.push_back(objective);
    fit.iters = k;
    if (k > 1 && detail::relative_change(prev, objective) < opts.rel_tol) {
      fit.converged = true;
      break;
    }
    prev = objective;
  }

  fit.model = FactorModel{std::move(mean), std::move(u), std::move(scores), true};
  fit.outliers = OutlierMatrix{std::move(o), kind};
  return fit;
}

/// Per-row refinement weights (||o_n|| + delta)^(-1).
inline Vector reweighting_weights(const OutlierMatrix& outliers, double delta) {
  detail::require(delta > 0, "reweighting_weights: delta must be > 0");
  Vector w = outliers.values.rowwise().norm();
  for (Index i = 0; i < w.size(); ++i) w(i) = 1.0 / (w(i) + delta);
  return w;
}

/**
 * Iteratively reweighted refinement of a converged fit. Each round freezes
 * weights from the current outliers, runs one full AM cycle with per-row
 * thresholds (lambda0/2) * w_n (per-entry for EntryL1), and records the
 * log-penalized objective
 *   ||X - 1 m' - S U' - O||_F^2 + lambda0 * sum log(||o_n|| + delta),
 * which is non-increasing across rounds by majorization.
 */
inline BatchFit refine_reweighted(const DataMatrix& data, const BatchFit& fit,
                                  double lambda0, double delta, int n_rounds) {
  detail::require(delta > 0, "refine_reweighted: delta must be > 0");
  detail::require(n_rounds >= 1, "refine_reweighted: n_rounds must be >= 1");
  detail::require(lambda0 >= 0, "refine_reweighted: lambda0 must be >= 0");

  const Matrix& x = data.values;
  const RegularizerKind kind = fit.outliers.reg_kind;
  Matrix u = fit.model.subspace;
  Matrix o = fit.outliers.values;
  const Index n = x.rows();

  BatchFit refined;
  Vector mean;
  Matrix scores;
  for (int round = 1; round <= n_rounds; ++round) {
    mean = (x - o).colwise().mean();
    Matrix compensated = (x - o).rowwise() - mean.transpose();
    scores = compensated * u;
    u = procrustes_rotation(compensated.transpose() * scores);
    Matrix residual = (x.rowwise() - mean.transpose()) - scores * u.transpose();

    double log_penalty = 0.0;
    if (kind == RegularizerKind::RowL2) {
      for (Index i = 0; i < n; ++i) {
        const double tau = (lambda0 / 2.0) / (o.row(i).norm() + delta);
        const double norm = residual.row(i).norm();
        if (norm <= tau || norm == 0.0)
          o.row(i).setZero();
        else
          o.row(i) = residual.row(i) * ((norm - tau) / norm);
        log_penalty += std::log(o.row(i).norm() + delta);
      }
    } else {
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < x.cols(); ++j) {
          const double tau = (lambda0 / 2.0) / (std::abs(o(i, j)) + delta);
          const double mag = std::abs(residual(i, j)) - tau;
          o(i, j) = mag > 0 ? (residual(i, j) > 0 ? mag : -mag) : 0.0;
          log_penalty += std::log(std::abs(o(i, j)) + delta);
        }
    }
    refined.objective_trace.push_back((residual - o).squaredNorm() +
                                      lambda0 * log_penalty);
  }

  refined.model = FactorModel{std::move(mean), std::move(u), std::move(scores), true};
  refined.outliers = OutlierMatrix{std::move(o), kind};
  refined.iters = n_rounds;
  refined.converged = true;
  return refined;
}

struct LtsFit {
  FactorModel model;
  std::vector<Index> kept_indices;  // sorted, |kept| = coverage
  double trimmed_cost = 0.0;
};

namespace detail {

inline std::uint64_t binomial_or_cap(Index n, Index k, std::uint64_t cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t value = 1;
  for (Index i = 1; i <= k; ++i) {
    // value * (n - k + i) / i stays integral at every step
    if (value > cap * 8) return cap + 1;
    value = value * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return value;
}

/// Lexicographic subset enumeration: visits every k-subset of {0..n-1}.
template <typename Fn>
inline void for_each_subset(Index n, Index k, Fn&& fn) {
  std::vector<Index> idx(k);
  for (Index i = 0; i < k; ++i) idx[i] = i;
  if (k == 0) {
    fn(idx);
    return;
  }
  while (true) {
    fn(idx);
    Index i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (Index j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace detail

/**
 * Exact least-trimmed-squares PCA: enumerate all C(N, coverage) row
 * subsets, solve plain PCA per subset, and keep the minimum-cost one.
 * Ties go to the lexicographically smallest index set. Refuses to run when
 * C(N, coverage) exceeds the cap.
 */
inline LtsFit lts_bruteforce(const DataMatrix& data, Index q, Index coverage,
                             std::uint64_t enumeration_cap = 1000000) {
  const Index n = data.rows();
  detail::require(coverage >= 1 && coverage <= n, "lts_bruteforce: coverage out of range");
  detail::require(q >= 1 && q <= data.cols(), "lts_bruteforce: q out of range");
  if (detail::binomial_or_cap(n, coverage, enumeration_cap) > enumeration_cap)
    throw std::invalid_argument("lts_bruteforce: subset count exceeds enumeration cap");

  const Matrix& x = data.values;
  LtsFit best;
  best.trimmed_cost = std::numeric_limits<double>::infinity();
  detail::for_each_subset(n, coverage, [&](const std::vector<Index>& kept) {
    const PcaFit fit = pca_fit(detail::gather_rows(x, kept), q);
    if (fit.residual_cost < best.trimmed_cost) {
      best.trimmed_cost = fit.residual_cost;
      best.model = fit.model;
      best.kept_indices = kept;
    }
  });

  // Scores for every row (trimmed rows projected onto the chosen subspace).
  Matrix centered = x.rowwise() - best.model.mean.transpose();
  best.model.scores = centered * best.model.subspace;
  return best;
}

struct L0Fit {
  FactorModel model;
  OutlierMatrix outliers;
  double objective = 0.0;
  Index support_size = 0;
};

/**
 * Exact minimizer of the l0-regularized criterion by support enumeration:
 * for each candidate outlier support the nonzero rows equal their residuals
 * exactly, reducing the problem to plain PCA on the complement, so the
 * cost is (trimmed PCA cost) + lambda0 * |support|. Supports of size 0
 * through N-1 are enumerated (a full support is never uniquely optimal).
 */
inline L0Fit l0_enumeration(const DataMatrix& data, Index q, double lambda0,
                            std::uint64_t enumeration_cap = 1000000) {
  const Index n = data.rows();
  detail::require(lambda0 >= 0, "l0_enumeration: lambda0 must be >= 0");
  detail::require(q >= 1 && q <= data.cols(), "l0_enumeration: q out of range");
  std::uint64_t total = 0;
  for (Index s = 0; s < n; ++s) {
    total += detail::binomial_or_cap(n, s, enumeration_cap);
    if (total > enumeration_cap)
      throw std::invalid_argument("l0_enumeration: subset count exceeds enumeration cap");
  }

  const Matrix& x = data.values;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<Index> best_support;
  PcaFit best_fit;
  for (Index s = 0; s < n; ++s) {
    detail::for_each_subset(n, n - s, [&](const std::vector<Index>& kept) {
      const PcaFit fit = pca_fit(detail::gather_rows(x, kept), q);
      const double cost = fit.residual_cost + lambda0 * static_cast<double>(s);
      if (cost < best_cost) {
        best_cost = cost;
        best_fit = fit;
        std::vector<Index> support;
        support.reserve(s);
        std::size_t kept_pos = 0;
        for (Index row = 0; row < n; ++row) {
          if (kept_pos < kept.size() && kept[kept_pos] == row)
            ++kept_pos;
          else
            support.push_back(row);
        }
        best_support = std::move(support);
      }
    });
  }

  L0Fit out;
  out.model = best_fit.model;
  Matrix centered = x.rowwise() - out.model.mean.transpose();
  out.model.scores = centered * out.model.subspace;
  Matrix o = Matrix::Zero(n, x.cols());
  for (Index row : best_support)
    o.row(row) = centered.row(row) - out.model.scores.row(row) * out.model.subspace.transpose();
  out.outliers = OutlierMatrix{std::move(o), RegularizerKind::RowL2};
  out.objective = best_cost;
  out.support_size = static_cast<Index>(best_support.size());
  return out;
}

}  // namespace robsub
