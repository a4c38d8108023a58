#pragma once

// Robustification paths: log-spaced lambda2 grids, warm-started sweeps of
// the batch solver, and the two data-driven selectors (known outlier count
// and known nominal noise covariance).

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

#include "robsub/batch.hpp"
#include "robsub/ops.hpp"
#include "robsub/parallel.hpp"
#include "robsub/types.hpp"

namespace robsub {

struct PathResult {
  std::vector<double> grid;             // strictly decreasing lambda2 values
  std::vector<BatchFit> fits;           // one per grid point
  Matrix outlier_norms;                 // N x G, ||o_n||_2 per grid point
  std::vector<Index> support_counts;    // ||O||_0 per grid point

  Index n_points() const { return static_cast<Index>(grid.size()); }
};

/// `count` values from lambda_max down to eps*lambda_max inclusive, evenly
/// spaced on a log scale.
inline std::vector<double> lambda_grid(double lambda_max, double eps, int count) {
  detail::require(lambda_max > 0, "lambda_grid: lambda_max must be > 0");
  detail::require(eps > 0 && eps < 1, "lambda_grid: eps must be in (0, 1)");
  detail::require(count >= 2, "lambda_grid: need at least two grid points");
  std::vector<double> grid(count);
  for (int g = 0; g < count; ++g)
    grid[g] = lambda_max * std::pow(eps, static_cast<double>(g) / (count - 1));
  return grid;
}

/// Smallest lambda2 keeping the outlier matrix empty: twice the largest
/// plain-PCA residual row norm. At this value the batch solver started
/// from O = 0 sits at a fixed point with no flagged rows.
inline double estimate_lambda_max(const DataMatrix& data, Index q) {
  const PcaFit pca = pca_fit(data.values, q);
  const Matrix residual =
      (data.values.rowwise() - pca.model.mean.transpose()) -
      pca.model.scores * pca.model.subspace.transpose();
  return 2.0 * residual.rowwise().norm().maxCoeff();
}

/**
 * Sweep the batch solver over a descending lambda2 grid. By default each
 * grid point is warm-started from its predecessor (sequential by
 * contract); `warm_start=false` cold-starts every point independently and
 * may run grid points on worker threads.
 */
inline PathResult compute_path(const DataMatrix& data, Index q,
                               const std::vector<double>& grid, RegularizerKind kind,
                               const SolverOptions& opts, bool warm_start = true) {
  detail::require(grid.size() >= 1, "compute_path: empty grid");
  for (std::size_t g = 1; g < grid.size(); ++g)
    detail::require(grid[g] < grid[g - 1], "compute_path: grid must be strictly decreasing");

  PathResult path;
  path.grid = grid;
  path.fits.resize(grid.size());
  if (warm_start) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const BatchFit* init = g == 0 ? nullptr : &path.fits[g - 1];
      path.fits[g] = fit_batch(data, q, grid[g], kind, opts, init);
    }
  } else {
    parallel_for_blocks(static_cast<Index>(grid.size()), [&](Index begin, Index end) {
      for (Index g = begin; g < end; ++g)
        path.fits[g] = fit_batch(data, q, grid[g], kind, opts);
    });
  }

  const Index n = data.rows();
  path.outlier_norms.resize(n, static_cast<Index>(grid.size()));
  path.support_counts.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    path.outlier_norms.col(static_cast<Index>(g)) = path.fits[g].outliers.row_norms();
    path.support_counts[g] = path.fits[g].outliers.support_count();
  }
  return path;
}

struct CountSelection {
  Index index = 0;       // grid index of the chosen point
  double lambda2 = 0.0;
  bool exact = true;     // false when only support >= count was available
};

/// Largest lambda2 whose support count equals the requested count; falls
/// back to the largest lambda2 with support >= count (flagged approximate).
inline CountSelection select_by_count(const PathResult& path, Index n_outliers) {
  detail::require(n_outliers >= 0, "select_by_count: count must be >= 0");
  Index fallback = -1;
  for (Index g = 0; g < path.n_points(); ++g) {
    const Index count = path.support_counts[static_cast<std::size_t>(g)];
    if (count == n_outliers) return {g, path.grid[static_cast<std::size_t>(g)], true};
    if (count >= n_outliers && fallback < 0) fallback = g;
  }
  if (fallback < 0)
    throw NumericalError("select_by_count: path never reaches the requested support count");
  return {fallback, path.grid[static_cast<std::size_t>(fallback)], false};
}

struct NoiseCovSelection {
  Index index = 0;
  double lambda2 = 0.0;
  std::vector<double> criterion;  // |tr - p| per grid point, NaN where skipped
  int clipped_eigenvalues = 0;    // eigenvalues clipped in the inverse root
};

/**
 * Absolute variance-deviation selector: whiten the residuals of rows not
 * flagged as outliers by the symmetric inverse square root of the nominal
 * noise covariance, and pick the grid point whose whitened sample
 * covariance trace is closest to p. Ties go to the larger lambda2. Grid
 * points with fewer than `min_clean_rows` clean rows are skipped.
 */
inline NoiseCovSelection select_by_noise_cov(const PathResult& path, const DataMatrix& data,
                                             const Matrix& sigma_e,
                                             Index min_clean_rows = 2) {
  const Index p = data.cols();
  detail::require(sigma_e.rows() == p && sigma_e.cols() == p,
                  "select_by_noise_cov: covariance must be p x p");
  detail::require((sigma_e - sigma_e.transpose()).norm() <= 1e-8 * std::max(1.0, sigma_e.norm()),
                  "select_by_noise_cov: covariance must be symmetric");
  detail::require(min_clean_rows >= 2, "select_by_noise_cov: need at least two clean rows");

  NoiseCovSelection out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_e);
  detail::require(es.eigenvalues().maxCoeff() > 0,
                  "select_by_noise_cov: covariance must be positive definite");
  const double floor = 1e-12 * es.eigenvalues().maxCoeff();
  Vector inv_root(p);
  for (Index i = 0; i < p; ++i) {
    double ev = es.eigenvalues()(i);
    if (ev < floor) {
      ev = floor;
      ++out.clipped_eigenvalues;
    }
    inv_root(i) = 1.0 / std::sqrt(ev);
  }
  const Matrix whitener =
      es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();

  out.criterion.assign(path.grid.size(), std::numeric_limits<double>::quiet_NaN());
  double best = std::numeric_limits<double>::infinity();
  Index best_g = -1;
  for (Index g = 0; g < path.n_points(); ++g) {
    const BatchFit& fit = path.fits[static_cast<std::size_t>(g)];
    std::vector<Index> clean;
    for (Index row = 0; row < data.rows(); ++row)
      if (path.outlier_norms(row, g) <= kSupportTol) clean.push_back(row);
    if (static_cast<Index>(clean.size()) < min_clean_rows) continue;

    Matrix whitened(static_cast<Index>(clean.size()), p);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const Index row = clean[i];
      const Vector residual = data.values.row(row).transpose() - fit.model.mean -
                              fit.model.subspace * fit.model.scores.row(row).transpose();
      whitened.row(static_cast<Index>(i)) = (whitener * residual).transpose();
    }
    const Vector centroid = whitened.colwise().mean();
    const double trace =
        (whitened.rowwise() - centroid.transpose()).squaredNorm() /
        static_cast<double>(clean.size() - 1);
    const double value = std::abs(trace - static_cast<double>(p));
    out.criterion[static_cast<std::size_t>(g)] = value;
    if (value < best) {
      best = value;
      best_g = g;
    }
  }
  if (best_g < 0)
    throw NumericalError("select_by_noise_cov: every grid point was skipped");
  out.index = best_g;
  out.lambda2 = path.grid[static_cast<std::size_t>(best_g)];
  return out;
}

/// Delimited path table: one line per grid point with lambda2, ||O||_0,
/// objective, then the per-row outlier norms.
inline void write_path_table(std::ostream& os, const PathResult& path) {
  os << std::setprecision(17);
  for (Index g = 0; g < path.n_points(); ++g) {
    const std::size_t gs = static_cast<std::size_t>(g);
    os << path.grid[gs] << ',' << path.support_counts[gs] << ','
       << path.fits[gs].objective();
    for (Index row = 0; row < path.outlier_norms.rows(); ++row)
      os << ',' << path.outlier_norms(row, g);
    os << '\n';
  }
}

}  // namespace robsub
