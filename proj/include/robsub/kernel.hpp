#pragma once

// Robust kernel PCA: every feature-space quantity (mean, subspace,
// outliers) is carried as a coefficient matrix against the Gram matrix, so
// the rank-controlled solver runs without touching feature space. Includes
// the RBF and normalized-graph Gram builders and the k-means/ARI plumbing
// for the spectral-clustering use.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "robsub/ops.hpp"
#include "robsub/parallel.hpp"
#include "robsub/rank.hpp"
#include "robsub/rng.hpp"
#include "robsub/types.hpp"

namespace robsub {

struct GramMatrix {
  Matrix k;               // N x N, symmetric PSD
  double psd_shift = 0.0; // diagonal shift applied during construction

  Index size() const { return k.rows(); }
};

/// Gaussian radial kernel K_ij = exp(-||x_i - x_j||^2 / c); unit diagonal.
inline GramMatrix rbf_gram(const DataMatrix& data, double c) {
  detail::require(c > 0, "rbf_gram: bandwidth must be > 0");
  const Index n = data.rows();
  GramMatrix gram;
  gram.k.resize(n, n);
  const Matrix& x = data.values;
  parallel_for_blocks(n, [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      gram.k(i, i) = 1.0;
      for (Index j = 0; j < i; ++j) {
        const double value = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / c);
        gram.k(i, j) = value;
      }
    }
  });
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) gram.k(i, j) = gram.k(j, i);
  return gram;
}

/**
 * Normalized-adjacency Gram matrix K = zeta I + D^{-1/2} A D^{-1/2} for a
 * simple undirected graph. When zeta is not supplied it is set to
 * max(0, -lambda_min) + 1e-8, the smallest shift rendering K positive
 * semidefinite. Isolated nodes contribute zero normalized rows.
 */
inline GramMatrix graph_gram(const Matrix& adjacency, std::optional<double> zeta = {}) {
  const Index n = adjacency.rows();
  detail::require(adjacency.cols() == n, "graph_gram: adjacency must be square");
  detail::require((adjacency - adjacency.transpose()).norm() == 0.0,
                  "graph_gram: adjacency must be symmetric");
  detail::require(adjacency.minCoeff() >= 0, "graph_gram: adjacency must be nonnegative");
  detail::require(adjacency.diagonal().cwiseAbs().maxCoeff() == 0.0,
                  "graph_gram: adjacency must have a zero diagonal");

  Vector inv_root_degree(n);
  for (Index i = 0; i < n; ++i) {
    const double degree = adjacency.row(i).sum();
    inv_root_degree(i) = degree > 0 ? 1.0 / std::sqrt(degree) : 0.0;
  }
  Matrix normalized =
      inv_root_degree.asDiagonal() * adjacency * inv_root_degree.asDiagonal();

  GramMatrix gram;
  if (zeta) {
    gram.psd_shift = *zeta;
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(normalized);
    gram.psd_shift = std::max(0.0, -es.eigenvalues().minCoeff()) + 1e-8;
  }
  gram.k = normalized + gram.psd_shift * Matrix::Identity(n, n);
  return gram;
}

struct KernelModel {
  Vector mu;       // N, mean coefficients
  Matrix upsilon;  // N x q_bar, subspace coefficients
  Matrix scores;   // N x q_bar
  Matrix omega;    // N x N, outlier coefficients (column n is o_n)
  double lambda_star = 0.0;
  double lambda2 = 0.0;
  std::vector<double> objective_trace;
  int iters = 0;
  bool converged = false;

  struct Snapshot {
    Vector mu;
    Matrix upsilon, scores, omega;
  };
  std::vector<Snapshot> iterates;  // filled when opts.record_trace

  double objective() const {
    return objective_trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : objective_trace.back();
  }
};

/**
 * Kernelized rank-controlled robust fit. Cycles the coefficient updates
 *   mu -> Upsilon (ridge) -> S (ridge through K) -> Lambda -> Omega,
 * with residual norms read off as sqrt(rho' K rho). The objective
 *   tr(C K C') + (lambda_star/2)(tr(Y'KY) + ||S||^2) + lambda2 sum ||o_n||
 * (all evaluated through K) is non-increasing across cycles. Residual
 * quadratic forms more negative than -1e-10 indicate a non-PSD Gram matrix
 * and raise an error; smaller negatives are clamped to zero.
 */
inline KernelModel fit_kpca(const GramMatrix& gram, Index q_bar, double lambda_star,
                            double lambda2, const SolverOptions& opts) {
  opts.validate();
  const Index n = gram.size();
  detail::require(q_bar >= 1 && q_bar <= n, "fit_kpca: q_bar out of range");
  detail::require(lambda_star >= 0, "fit_kpca: lambda_star must be >= 0");
  detail::require(lambda2 > 0, "fit_kpca: lambda2 must be > 0");
  detail::require((gram.k - gram.k.transpose()).norm() <= 1e-10 * std::max(1.0, gram.k.norm()),
                  "fit_kpca: Gram matrix must be symmetric");

  const Matrix& k = gram.k;
  Rng rng(opts.seed);
  Matrix s = rng.normal_matrix(n, q_bar) / std::sqrt(static_cast<double>(q_bar));
  Matrix omega = Matrix::Zero(n, n);

  KernelModel model;
  model.lambda_star = lambda_star;
  model.lambda2 = lambda2;
  Vector mu(n);
  Matrix upsilon(n, q_bar);
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= opts.max_iters; ++it) {
    mu = (Vector::Ones(n) - omega * Vector::Ones(n)) / static_cast<double>(n);
    Matrix phi_o = Matrix::Identity(n, n);
    phi_o.noalias() -= mu * Eigen::RowVectorXd::Ones(n);
    phi_o -= omega;
    upsilon = detail::ridge_solve(phi_o * s, s.transpose() * s, lambda_star);
    const Matrix k_upsilon = k * upsilon;
    s = detail::ridge_solve(phi_o.transpose() * k_upsilon,
                            upsilon.transpose() * k_upsilon, lambda_star);

    // Columns of residual_coeffs are rho_n; k_residual = K * residual_coeffs.
    Matrix residual_coeffs = Matrix::Identity(n, n);
    residual_coeffs.noalias() -= mu * Eigen::RowVectorXd::Ones(n);
    residual_coeffs.noalias() -= upsilon * s.transpose();
    Matrix k_residual = k;
    k_residual.noalias() -= (k * mu) * Eigen::RowVectorXd::Ones(n);
    k_residual.noalias() -= k_upsilon * s.transpose();

    double frobenius = 0.0;
    double penalty = 0.0;
    Vector shrink_factors(n);
    for (Index col = 0; col < n; ++col) {
      double quad = residual_coeffs.col(col).dot(k_residual.col(col));
      if (quad < -1e-10)
        throw NumericalError("fit_kpca: negative residual quadratic form (non-PSD Gram matrix)");
      quad = std::max(quad, 0.0);
      const double r_norm = std::sqrt(quad);
      const double factor = r_norm > 0 ? std::max(r_norm - lambda2 / 2.0, 0.0) / r_norm : 0.0;
      shrink_factors(col) = factor;
      const double kept = 1.0 - factor;
      frobenius += kept * kept * quad;
      penalty += factor * r_norm;
    }
    omega = residual_coeffs * shrink_factors.asDiagonal();

    const double ridge_term = (lambda_star / 2.0) *
                              ((upsilon.array() * k_upsilon.array()).sum() + s.squaredNorm());
    const double objective = frobenius + ridge_term + lambda2 * penalty;
    model.objective_trace.push_back(objective);
    model.iters = it;
    if (opts.record_trace) model.iterates.push_back({mu, upsilon, s, omega});
    if (it > 1 && detail::relative_change(prev, objective) < opts.rel_tol) {
      model.converged = true;
      break;
    }
    prev = objective;
  }

  model.mu = std::move(mu);
  model.upsilon = std::move(upsilon);
  model.scores = std::move(s);
  model.omega = std::move(omega);
  return model;
}

/// Outlier norms sqrt(diag(Omega' K Omega)); exactly zero where the
/// corresponding coefficient column is zero.
inline Vector outlier_norms(const KernelModel& model, const GramMatrix& gram) {
  const Index n = gram.size();
  detail::require(model.omega.rows() == n, "outlier_norms: model does not match Gram matrix");
  const Matrix k_omega = gram.k * model.omega;
  Vector norms(n);
  for (Index col = 0; col < n; ++col) {
    if (model.omega.col(col).isZero(0.0)) {
      norms(col) = 0.0;
      continue;
    }
    norms(col) = std::sqrt(std::max(model.omega.col(col).dot(k_omega.col(col)), 0.0));
  }
  return norms;
}

/// Principal scores of a new point from its kernel evaluations against the
/// training set: s = Upsilon' k_x - Upsilon' K mu.
inline Vector project(const KernelModel& model, const Vector& k_x, const GramMatrix& gram) {
  detail::require(k_x.size() == gram.size(), "project: kernel vector length mismatch");
  return model.upsilon.transpose() * (k_x - gram.k * model.mu);
}

namespace detail {

struct KmeansResult {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

/// Seeded k-means++ with Lloyd iterations; restarted, best inertia kept.
inline KmeansResult kmeans(const Matrix& points, int n_clusters, std::uint64_t seed,
                           int restarts = 50, int max_iters = 200) {
  const Index n = points.rows();
  require(n_clusters >= 1, "kmeans: need at least one cluster");
  require(n >= n_clusters, "kmeans: fewer rows than clusters");
  Rng rng(seed);
  KmeansResult best;

  for (int attempt = 0; attempt < restarts; ++attempt) {
    // k-means++ seeding
    Matrix centers(n_clusters, points.cols());
    centers.row(0) = points.row(static_cast<Index>(rng.integer(static_cast<std::uint64_t>(n))));
    Vector dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < n_clusters; ++c) {
      const double total = dist2.sum();
      Index pick = 0;
      if (total > 0) {
        double target = rng.uniform() * total;
        for (Index i = 0; i < n; ++i) {
          target -= dist2(i);
          if (target <= 0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(n)));
      }
      centers.row(c) = points.row(pick);
      dist2 = dist2.cwiseMin(
          (points.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    double inertia = 0.0;
    for (int iter = 0; iter < max_iters; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (Index i = 0; i < n; ++i) {
        int arg = 0;
        double smallest = std::numeric_limits<double>::infinity();
        for (int c = 0; c < n_clusters; ++c) {
          const double d = (points.row(i) - centers.row(c)).squaredNorm();
          if (d < smallest) {
            smallest = d;
            arg = c;
          }
        }
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
        inertia += smallest;
      }
      if (!changed && iter > 0) break;
      Matrix sums = Matrix::Zero(n_clusters, points.cols());
      std::vector<Index> counts(static_cast<std::size_t>(n_clusters), 0);
      for (Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < n_clusters; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
          centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
    }
  }
  return best;
}

}  // namespace detail

/// Chance-corrected agreement between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  detail::require(a.size() == b.size(), "adjusted_rand_index: length mismatch");
  const auto n = a.size();
  if (n < 2) return 1.0;
  auto relabel = [](const std::vector<int>& v) {
    std::vector<int> out(v.size());
    std::vector<int> seen;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto it = std::find(seen.begin(), seen.end(), v[i]);
      if (it == seen.end()) {
        seen.push_back(v[i]);
        out[i] = static_cast<int>(seen.size()) - 1;
      } else {
        out[i] = static_cast<int>(it - seen.begin());
      }
    }
    return std::pair<std::vector<int>, int>{out, static_cast<int>(seen.size())};
  };
  const auto [la, ka] = relabel(a);
  const auto [lb, kb] = relabel(b);
  Eigen::MatrixXi table = Eigen::MatrixXi::Zero(ka, kb);
  for (std::size_t i = 0; i < n; ++i) ++table(la[i], lb[i]);

  auto comb2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (int i = 0; i < ka; ++i) sum_rows += comb2(table.row(i).sum());
  for (int j = 0; j < kb; ++j) sum_cols += comb2(table.col(j).sum());
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) sum_cells += comb2(table(i, j));
  const double total = comb2(static_cast<double>(n));
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (sum_cells - expected) / (max_index - expected);
}

struct ClusterResult {
  std::vector<int> labels;             // -1 marks excluded rows
  std::vector<Index> excluded;         // rows dropped as outliers
};

/// Cluster the rows of the subspace-coefficient embedding with seeded
/// k-means++ (50 restarts, best inertia). Rows with nonzero outlier norms
/// are dropped first when exclude_outliers is set.
inline ClusterResult embed_and_cluster(const KernelModel& model, const GramMatrix& gram,
                                       int n_clusters, bool exclude_outliers,
                                       std::uint64_t seed) {
  detail::require(n_clusters >= 1, "embed_and_cluster: need at least one cluster");
  const Index n = gram.size();
  const Vector norms = outlier_norms(model, gram);
  ClusterResult out;
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i) {
    if (exclude_outliers && norms(i) > kSupportTol)
      out.excluded.push_back(i);
    else
      rows.push_back(i);
  }
  detail::require(static_cast<int>(rows.size()) >= n_clusters,
                  "embed_and_cluster: fewer rows than clusters after exclusion");

  Matrix points(static_cast<Index>(rows.size()), model.upsilon.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    points.row(static_cast<Index>(i)) = model.upsilon.row(rows[i]);
  const auto km = detail::kmeans(points, n_clusters, seed);

  out.labels.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.labels[static_cast<std::size_t>(rows[i])] = km.labels[i];
  return out;
}

}  // namespace robsub
