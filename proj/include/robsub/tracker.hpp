#pragma once

// Online robust subspace tracking: exponentially weighted recursive
// least-squares updates of the subspace, with per-datum outlier estimates
// from the multidimensional shrinkage-thresholding operator.

#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "robsub/ops.hpp"
#include "robsub/path.hpp"
#include "robsub/types.hpp"

namespace robsub {

struct TrackerState {
  Matrix u;       // p x q subspace estimate (approximately orthonormal)
  Matrix p_mat;   // q x q inverse-Gram state, kept symmetric
  Vector mean;    // p, exponentially weighted mean of compensated data
  double beta = 0.99;
  double lambda2 = 1.0;  // +infinity disables outlier estimation entirely
  long step_index = 0;
  double weight_sum = 1.0;         // running sum of forgetting weights
  int reorthonormalize_every = 0;  // 0 disables the optional QR step

  Index dim() const { return u.rows(); }
  Index rank() const { return u.cols(); }
};

struct StepOutput {
  Vector score;    // q
  Vector outlier;  // p
  bool is_outlier = false;
  double reconstruction_error = 0.0;  // ||x - m - U s - o||^2 / p
};

/**
 * Multidimensional shrinkage-thresholding operator: the minimizer of
 *   (1/2) o' H o + g' o + lambda2 ||o||_2
 * for symmetric PSD H. Zero iff ||g||_2 <= lambda2; otherwise
 * o = -(H + gamma I)^{-1} g where gamma = lambda2 / ||o|| is pinned down
 * by a monotone scalar equation solved by bisection (equivalently, the
 * line search over eta with gamma = lambda2^2 / (2 eta)).
 *
 * When H is numerically twice an orthogonal projection and g lies in its
 * range, the closed form o = -g (||g|| - lambda2)_+ / (2 ||g||) applies and
 * is returned via row_soft_threshold, bypassing the eigen-decomposition.
 */
inline Vector msto(const Matrix& h, const Vector& g, double lambda2) {
  detail::require(lambda2 > 0, "msto: lambda2 must be > 0");
  detail::require(h.rows() == h.cols() && h.rows() == g.size(), "msto: dimension mismatch");
  detail::require((h - h.transpose()).norm() <= 1e-8 * std::max(1.0, h.norm()),
                  "msto: H must be symmetric");

  const double g_norm = g.norm();
  if (g_norm <= lambda2) return Vector::Zero(g.size());

  // Fast path: H = 2 * projection acting as 2I on g.
  if ((h * (0.5 * h) - h).norm() <= 1e-8 &&
      (0.5 * h * g - g).norm() <= 1e-9 * g_norm) {
    return row_soft_threshold(-0.5 * g, 0.5 * lambda2);
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  Vector evals = es.eigenvalues();
  const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1.0);
  detail::require(evals.minCoeff() >= -1e-8 * scale, "msto: H must be positive semidefinite");
  evals = evals.cwiseMax(0.0);
  const Vector g_rot = es.eigenvectors().transpose() * g;

  double null_sq = 0.0;
  const double null_tol = 1e-12 * scale;
  for (Index i = 0; i < evals.size(); ++i)
    if (evals(i) <= null_tol) null_sq += g_rot(i) * g_rot(i);
  if (std::sqrt(null_sq) >= lambda2)
    throw NumericalError("msto: subproblem unbounded (null-space gradient exceeds lambda2)");

  // gamma * ||(H + gamma I)^{-1} g|| is strictly increasing from the
  // null-space norm toward ||g||; bracket and bisect its crossing of lambda2.
  auto shrunk_norm = [&](double gamma) {
    double total = 0.0;
    for (Index i = 0; i < evals.size(); ++i) {
      const double term = gamma * g_rot(i) / (evals(i) + gamma);
      total += term * term;
    }
    return std::sqrt(total);
  };
  double lo = 2.0 * lambda2 / (g_norm - lambda2);  // exact for H = 2 * projection
  double hi = lo;
  int guard = 0;
  while (shrunk_norm(hi) < lambda2) {
    hi *= 2.0;
    if (++guard > 400) throw NumericalError("msto: bracket growth failed");
  }
  guard = 0;
  while (shrunk_norm(lo) > lambda2) {
    lo /= 2.0;
    if (++guard > 400) throw NumericalError("msto: bracket shrink failed");
  }
  for (int it = 0; it < 200 && (hi - lo) > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (shrunk_norm(mid) < lambda2 ? lo : hi) = mid;
  }
  const double gamma = 0.5 * (lo + hi);

  Vector coeffs(evals.size());
  for (Index i = 0; i < evals.size(); ++i) coeffs(i) = -g_rot(i) / (evals(i) + gamma);
  return es.eigenvectors() * coeffs;
}

/// Batch-initialization settings: either a fixed lambda2, or a path sweep
/// with one of the two data-driven selectors.
struct TrackerInitConfig {
  double beta = 0.99;
  std::optional<double> lambda2;             // fixed value, skips the path
  std::optional<Index> outlier_count;        // select_by_count
  std::optional<Matrix> noise_cov;           // select_by_noise_cov
  int grid_size = 100;
  double grid_eps = 1e-2;
  RegularizerKind kind = RegularizerKind::RowL2;
  double p_init = 1e3;
  int reorthonormalize_every = 0;
};

/**
 * Batch initialization: fit the first n0 observations with the batch
 * solver (selecting lambda2 along a robustification path unless a fixed
 * value is given), then seed the tracker with the fitted subspace and
 * mean, P = p_init * I_q, and the frozen lambda2.
 */
inline std::pair<TrackerState, double> init_tracker(const DataMatrix& init_block, Index q,
                                                    const SolverOptions& opts,
                                                    const TrackerInitConfig& config) {
  const Index n0 = init_block.rows();
  detail::require(n0 >= q, "init_tracker: need at least q initialization rows");
  detail::require(config.beta > 0 && config.beta <= 1, "init_tracker: beta must be in (0, 1]");

  double lambda2;
  BatchFit fit;
  if (config.lambda2) {
    lambda2 = *config.lambda2;
    fit = fit_batch(init_block, q, lambda2, config.kind, opts);
  } else {
    const double lmax = estimate_lambda_max(init_block, q);
    detail::require(lmax > 0, "init_tracker: degenerate initialization block");
    const auto grid = lambda_grid(lmax, config.grid_eps, config.grid_size);
    const PathResult path = compute_path(init_block, q, grid, config.kind, opts);
    if (config.outlier_count) {
      const auto pick = select_by_count(path, *config.outlier_count);
      lambda2 = pick.lambda2;
      fit = path.fits[static_cast<std::size_t>(pick.index)];
    } else if (config.noise_cov) {
      const auto pick = select_by_noise_cov(path, init_block, *config.noise_cov);
      lambda2 = pick.lambda2;
      fit = path.fits[static_cast<std::size_t>(pick.index)];
    } else {
      throw std::invalid_argument("init_tracker: need a fixed lambda2 or a selector");
    }
  }

  TrackerState state;
  state.u = fit.model.subspace;
  state.p_mat = config.p_init * Matrix::Identity(q, q);
  state.mean = fit.model.mean;
  state.beta = config.beta;
  state.lambda2 = lambda2;
  state.step_index = n0;
  state.weight_sum = config.beta < 1.0
                         ? (1.0 - std::pow(config.beta, static_cast<double>(n0))) /
                               (1.0 - config.beta)
                         : static_cast<double>(n0);
  state.reorthonormalize_every = config.reorthonormalize_every;
  return {std::move(state), lambda2};
}

/**
 * One tracking step: form the shrinkage subproblem from the projection
 * complement of the current subspace, estimate the outlier, project the
 * compensated datum for the score, then run the rank-one recursive LS
 * update of (P, U) and fold the compensated datum into the mean.
 *
 * With lambda2 = +infinity the outlier is identically zero and the update
 * reduces to the non-robust projection-approximation tracker.
 */
inline StepOutput tracker_step(TrackerState& state, const Vector& x) {
  detail::require(x.size() == state.dim(), "tracker_step: dimension mismatch");
  detail::require(x.allFinite(), "tracker_step: non-finite input");
  const Index p = state.dim();
  const Matrix& u = state.u;

  const Vector v = x - state.mean;
  StepOutput out;
  if (std::isinf(state.lambda2)) {
    out.outlier = Vector::Zero(p);
  } else {
    // g = -H v with H = 2 (I - U U')'(I - U U'), assembled in O(pq).
    const Vector a = u.transpose() * v;
    const Vector b = (u.transpose() * u) * a;
    const Vector g = -2.0 * (v - u * (2.0 * a - b));
    if (g.norm() <= state.lambda2) {
      out.outlier = Vector::Zero(p);
    } else {
      const Matrix complement = Matrix::Identity(p, p) - u * u.transpose();
      out.outlier = msto(2.0 * complement * complement, g, state.lambda2);
    }
  }
  out.is_outlier = out.outlier.norm() > 0.0;

  out.score = u.transpose() * (v - out.outlier);
  const Vector ps = state.p_mat * out.score;
  const double denom = state.beta + out.score.dot(ps);
  const Vector gain = ps / denom;
  state.p_mat = (state.p_mat - gain * ps.transpose()) / state.beta;
  state.p_mat = 0.5 * (state.p_mat + state.p_mat.transpose());

  const Vector innovation = v - u * out.score - out.outlier;
  out.reconstruction_error = innovation.squaredNorm() / static_cast<double>(p);
  state.u += innovation * gain.transpose();

  state.weight_sum = state.beta * state.weight_sum + 1.0;
  state.mean += (x - out.outlier - state.mean) / state.weight_sum;
  ++state.step_index;

  if (state.reorthonormalize_every > 0 &&
      state.step_index % state.reorthonormalize_every == 0) {
    Eigen::HouseholderQR<Matrix> qr(state.u);
    state.u = qr.householderQ() * Matrix::Identity(state.dim(), state.rank());
  }
  return out;
}

struct StreamMetricRow {
  long n = 0;
  double outlier_norm = 0.0;
  double angle = std::numeric_limits<double>::quiet_NaN();  // radians vs truth
  double reconstruction_error = 0.0;
};

/// Feed every row of the stream through the tracker, recording per-step
/// metrics. When a true subspace is supplied, the angle compares it with
/// an orthonormalized copy of the current estimate.
inline std::vector<StreamMetricRow> run_stream(TrackerState& state, const DataMatrix& stream,
                                               const Matrix* truth_u = nullptr) {
  if (truth_u != nullptr)
    detail::require(truth_u->rows() == state.dim() && truth_u->cols() == state.rank(),
                    "run_stream: truth subspace dimension mismatch");
  std::vector<StreamMetricRow> metrics;
  metrics.reserve(static_cast<std::size_t>(stream.rows()));
  for (Index i = 0; i < stream.rows(); ++i) {
    const StepOutput step = tracker_step(state, stream.values.row(i).transpose());
    StreamMetricRow row;
    row.n = state.step_index;
    row.outlier_norm = step.outlier.norm();
    row.reconstruction_error = step.reconstruction_error;
    if (truth_u != nullptr) {
      Eigen::HouseholderQR<Matrix> qr(state.u);
      const Matrix ortho = qr.householderQ() * Matrix::Identity(state.dim(), state.rank());
      row.angle = subspace_angle(ortho, *truth_u);
    }
    metrics.push_back(row);
  }
  return metrics;
}

}  // namespace robsub
