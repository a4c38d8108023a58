#include <gtest/gtest.h>

#include <cmath>

#include "robsub/datagen.hpp"
#include "robsub/kernel.hpp"
#include "test_support.hpp"

namespace robsub {
namespace {

using testing::random_orthonormal;

TEST(RbfGram, UnitDiagonalSymmetryAndDuplicates) {
  Rng rng(91);
  Matrix pts = rng.normal_matrix(20, 3);
  pts.row(7) = pts.row(2);  // duplicate
  const GramMatrix gram = rbf_gram(DataMatrix{pts}, 2.5);
  EXPECT_EQ(gram.k.diagonal().cwiseAbs().minCoeff(), 1.0);
  EXPECT_EQ((gram.k - gram.k.transpose()).norm(), 0.0);
  EXPECT_EQ((gram.k.row(7) - gram.k.row(2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(gram.k(7, 2), 1.0);
  // PSD by construction.
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram.k);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(GraphGram, EmptyGraphAndSingleEdge) {
  const Matrix empty = Matrix::Zero(4, 4);
  const GramMatrix gram = graph_gram(empty);
  EXPECT_NEAR(gram.psd_shift, 1e-8, 1e-15);
  EXPECT_LE((gram.k - 1e-8 * Matrix::Identity(4, 4)).norm(), 1e-18);

  // Single edge: normalized block [[0,1],[1,0]] has lambda_min = -1, so
  // the automatic shift is 1 + 1e-8 (2x2 eigenvalues by hand: +-1).
  Matrix one_edge = Matrix::Zero(2, 2);
  one_edge(0, 1) = one_edge(1, 0) = 1.0;
  const GramMatrix g2 = graph_gram(one_edge);
  EXPECT_NEAR(g2.psd_shift, 1.0 + 1e-8, 1e-12);
  EXPECT_NEAR(g2.k(0, 0), 1.0 + 1e-8, 1e-12);
  EXPECT_NEAR(g2.k(0, 1), 1.0, 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g2.k);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(GraphGram, ValidatesInput) {
  Matrix asym = Matrix::Zero(3, 3);
  asym(0, 1) = 1.0;
  EXPECT_THROW(graph_gram(asym), std::invalid_argument);
  Matrix self_loop = Matrix::Zero(2, 2);
  self_loop(0, 0) = 1.0;
  EXPECT_THROW(graph_gram(self_loop), std::invalid_argument);
}

TEST(GraphGram, IsolatedNodesGetZeroRows) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = 2.0;  // node 2 isolated
  const GramMatrix gram = graph_gram(a);
  EXPECT_EQ(gram.k(2, 0), 0.0);
  EXPECT_EQ(gram.k(2, 1), 0.0);
  EXPECT_GT(gram.k(2, 2), 0.0);  // just the shift
}

TEST(FitKpca, LargeLambdaKeepsOutliersEmptyAndDescends) {
  Rng rng(92);
  const GramMatrix gram = rbf_gram(DataMatrix{rng.normal_matrix(40, 2)}, 5.0);
  SolverOptions opts;
  opts.max_iters = 200;
  opts.rel_tol = 1e-11;
  opts.seed = 4;
  const KernelModel model = fit_kpca(gram, 2, 1.0, 50.0, opts);
  EXPECT_TRUE(model.converged);
  EXPECT_EQ(outlier_norms(model, gram).cwiseAbs().maxCoeff(), 0.0);
  for (std::size_t k = 1; k < model.objective_trace.size(); ++k)
    EXPECT_LE(model.objective_trace[k], model.objective_trace[k - 1] + 1e-9);
}

TEST(FitKpca, RepresenterEquivalenceWithExplicitLinearFeatureMap) {
  // With the identity feature map the coefficient iterates must reproduce
  // the explicit solver's iterates through m = X' mu, U = X' Upsilon,
  // O' = X' Omega at every cycle (same seed, same S(0)).
  SynthSpec spec;
  spec.n_rows = 25;
  spec.n_cols = 6;
  spec.q = 2;
  spec.rho_p = 0.05;
  spec.sigma_e2 = 0.01;
  spec.seed = 93;
  const LowRankData data = gen_lowrank_outliers(spec);
  const Matrix& x = data.x;

  SolverOptions opts;
  opts.max_iters = 40;
  opts.rel_tol = 1e-15;  // run all cycles
  opts.seed = 17;
  opts.record_trace = true;
  const double lambda_star = 0.8, lambda2 = 0.6;

  GramMatrix gram;
  gram.k = x * x.transpose();
  const KernelModel kernel_model = fit_kpca(gram, 3, lambda_star, lambda2, opts);
  const RankFit explicit_fit = fit_rank(DataMatrix{x}, 3, lambda_star, lambda2,
                                        RegularizerKind::RowL2, opts, true);

  ASSERT_EQ(kernel_model.iterates.size(), explicit_fit.iterates.size());
  for (std::size_t k = 0; k < kernel_model.iterates.size(); ++k) {
    const auto& kc = kernel_model.iterates[k];
    const auto& ex = explicit_fit.iterates[k];
    EXPECT_LE((x.transpose() * kc.mu - ex.mean).norm(), 1e-8);
    EXPECT_LE((x.transpose() * kc.upsilon - ex.u).norm(), 1e-8);
    EXPECT_LE((kc.scores - ex.s).norm(), 1e-8);
    EXPECT_LE((kc.omega.transpose() * x - ex.o).norm(), 1e-8);
  }
  EXPECT_NEAR(kernel_model.objective(), explicit_fit.objective(),
              1e-8 * std::max(1.0, explicit_fit.objective()));
}

TEST(FitKpca, LinearKernelScoresMatchExplicitSolver) {
  SynthSpec spec;
  spec.n_rows = 30;
  spec.n_cols = 6;
  spec.q = 2;
  spec.rho_p = 0.04;
  spec.sigma_e2 = 0.01;
  spec.seed = 94;
  const LowRankData data = gen_lowrank_outliers(spec);
  Matrix centered = data.x.rowwise() - Vector(data.x.colwise().mean()).transpose();

  SolverOptions opts;
  opts.max_iters = 500;
  opts.rel_tol = 1e-13;
  opts.seed = 23;
  GramMatrix gram;
  gram.k = centered * centered.transpose();
  const KernelModel km = fit_kpca(gram, 3, 0.5, 0.4, opts);
  const RankFit rf =
      fit_rank(DataMatrix{centered}, 3, 0.5, 0.4, RegularizerKind::RowL2, opts, true);
  // Same seed, same algorithm: principal-score matrices agree after the
  // trivial column-sign alignment.
  ASSERT_EQ(km.scores.cols(), rf.s.cols());
  for (Index c = 0; c < km.scores.cols(); ++c) {
    const double direct = (km.scores.col(c) - rf.s.col(c)).norm();
    const double flipped = (km.scores.col(c) + rf.s.col(c)).norm();
    EXPECT_LE(std::min(direct, flipped), 1e-6);
  }
}

TEST(FitKpca, LambdaFactorsStayInUnitInterval) {
  Rng rng(95);
  const GramMatrix gram = rbf_gram(DataMatrix{rng.normal_matrix(30, 2)}, 1.0);
  SolverOptions opts;
  opts.max_iters = 60;
  opts.rel_tol = 1e-12;
  opts.seed = 3;
  const KernelModel model = fit_kpca(gram, 2, 0.5, 0.8, opts);
  // Lambda entries are recoverable from omega and the residual coefficients:
  // each nonzero outlier shrinks its residual column by a factor in (0, 1).
  const Vector norms = outlier_norms(model, gram);
  Matrix residual_coeffs = Matrix::Identity(gram.size(), gram.size());
  residual_coeffs.noalias() -= model.mu * Eigen::RowVectorXd::Ones(gram.size());
  residual_coeffs.noalias() -= model.upsilon * model.scores.transpose();
  const Matrix k_residual = gram.k * residual_coeffs;
  for (Index n = 0; n < gram.size(); ++n) {
    const double r_norm =
        std::sqrt(std::max(residual_coeffs.col(n).dot(k_residual.col(n)), 0.0));
    if (norms(n) > 0) {
      EXPECT_LT(norms(n), r_norm + 1e-12);
      EXPECT_GT(r_norm, model.lambda2 / 2.0 - 1e-9);
    }
  }
}

TEST(OutlierNorms, MatchCoefficientQuadraticFormAndExactZeros) {
  Rng rng(96);
  const auto circles = gen_concentric({40, 40}, {1.0, 3.0}, 0.1, 3, 5.0, 97);
  const GramMatrix gram = rbf_gram(DataMatrix{circles.x}, 10.0);
  SolverOptions opts;
  opts.max_iters = 150;
  opts.rel_tol = 1e-10;
  opts.seed = 12;
  const KernelModel model = fit_kpca(gram, 2, 1.0, 1.85, opts);
  const Vector norms = outlier_norms(model, gram);
  for (Index n = 0; n < gram.size(); ++n) {
    const double quad = model.omega.col(n).dot(gram.k * model.omega.col(n));
    EXPECT_NEAR(norms(n) * norms(n), std::max(quad, 0.0), 1e-10);
    if (model.omega.col(n).isZero(0.0)) EXPECT_EQ(norms(n), 0.0);
  }
  // Omega = 0 gives the zero vector.
  KernelModel empty = model;
  empty.omega.setZero();
  EXPECT_EQ(outlier_norms(empty, gram).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Project, LinearKernelMatchesInputSpaceProjection) {
  SynthSpec spec;
  spec.n_rows = 25;
  spec.n_cols = 5;
  spec.q = 2;
  spec.rho_p = 0.0;
  spec.sigma_e2 = 0.01;
  spec.seed = 98;
  const LowRankData data = gen_lowrank_outliers(spec);
  GramMatrix gram;
  gram.k = data.x * data.x.transpose();
  SolverOptions opts;
  opts.max_iters = 300;
  opts.rel_tol = 1e-13;
  opts.seed = 31;
  const KernelModel model = fit_kpca(gram, 2, 0.3, 5.0, opts);

  // Reconstruct the explicit subspace/mean and check the projection of a
  // training point computed both ways.
  const Matrix u_explicit = data.x.transpose() * model.upsilon;
  const Vector m_explicit = data.x.transpose() * model.mu;
  for (Index n = 0; n < 5; ++n) {
    const Vector k_x = data.x * data.x.row(n).transpose();
    const Vector via_kernel = project(model, k_x, gram);
    const Vector via_input =
        u_explicit.transpose() * (data.x.row(n).transpose() - m_explicit);
    EXPECT_LE((via_kernel - via_input).norm(), 1e-6);
  }

  // Upsilon = 0 projects everything to zero.
  KernelModel zero = model;
  zero.upsilon.setZero();
  EXPECT_EQ(project(zero, Vector(gram.k.col(0)), gram).norm(), 0.0);

  // Projecting the model's own mean point gives (approximately) zero when
  // centering is exact: k_mean = K mu.
  const Vector k_mean = gram.k * model.mu;
  EXPECT_EQ(project(model, k_mean, gram).norm(), 0.0);
}

TEST(EmbedAndCluster, WellSeparatedBlobsGivePerfectAri) {
  Rng rng(99);
  // Three tight 1-D blobs along a line in 2-D input space.
  const Index per = 15;
  Matrix pts(3 * per, 2);
  std::vector<int> truth;
  for (Index b = 0; b < 3; ++b)
    for (Index i = 0; i < per; ++i) {
      pts(b * per + i, 0) = 10.0 * static_cast<double>(b) + 0.05 * rng.normal();
      pts(b * per + i, 1) = 0.05 * rng.normal();
      truth.push_back(static_cast<int>(b));
    }
  const GramMatrix gram = rbf_gram(DataMatrix{pts}, 20.0);
  SolverOptions opts;
  opts.max_iters = 150;
  opts.rel_tol = 1e-10;
  opts.seed = 8;
  const KernelModel model = fit_kpca(gram, 3, 1.0, 20.0, opts);
  const ClusterResult clusters = embed_and_cluster(model, gram, 3, true, 2024);
  ASSERT_TRUE(clusters.excluded.empty());
  EXPECT_EQ(adjusted_rand_index(clusters.labels, truth), 1.0);
}

TEST(AdjustedRandIndex, KnownValues) {
  EXPECT_EQ(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);  // relabeled
  EXPECT_EQ(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
  // Independent-looking split scores near zero.
  const double ari = adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1});
  EXPECT_LT(std::abs(ari + 0.5), 0.51);  // exact value -1/2 for this 2x2 case
}

TEST(CirclesProtocol, RbfFitConvergesWithConsistentNorms) {
  const auto circles = gen_concentric_default(1234);
  ASSERT_EQ(circles.x.rows(), 455);
  const GramMatrix gram = rbf_gram(DataMatrix{circles.x}, 10.0);
  SolverOptions opts;
  opts.max_iters = 300;
  opts.rel_tol = 1e-9;
  opts.seed = 1234;
  const KernelModel model = fit_kpca(gram, 2, 1.0, 1.85, opts);
  EXPECT_TRUE(model.converged);
  for (std::size_t k = 1; k < model.objective_trace.size(); ++k)
    EXPECT_LE(model.objective_trace[k], model.objective_trace[k - 1] + 1e-9);
  // Some rows cross the threshold at these flags; every nonzero norm must
  // equal threshold overshoot of its residual (norm = ||r|| - lambda2/2).
  const Vector norms = outlier_norms(model, gram);
  EXPECT_GT(norms.maxCoeff(), 0.0);
  Matrix residual_coeffs = Matrix::Identity(455, 455);
  residual_coeffs.noalias() -= model.mu * Eigen::RowVectorXd::Ones(455);
  residual_coeffs.noalias() -= model.upsilon * model.scores.transpose();
  const Matrix k_residual = gram.k * residual_coeffs;
  for (Index n = 0; n < 455; ++n) {
    if (norms(n) == 0.0) continue;
    const double r_norm =
        std::sqrt(std::max(residual_coeffs.col(n).dot(k_residual.col(n)), 0.0));
    EXPECT_NEAR(norms(n), r_norm - 1.85 / 2.0, 1e-6);
  }
}

TEST(CirclesProtocol, NearestNeighborGraphEmbeddingSeparatesRings) {
  // Ring recovery through the normalized-graph Gram route: a symmetric
  // 10-NN adjacency makes the three rings spectrally separable, and
  // 3-means on the fitted embedding recovers them.
  const auto circles = gen_concentric({150, 150, 150}, {1.0, 2.8, 5.0}, 0.0225, 0, 7.0, 1);
  const Index n = circles.x.rows();
  Matrix adjacency = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> dist;
    for (Index j = 0; j < n; ++j)
      if (j != i) dist.push_back({(circles.x.row(i) - circles.x.row(j)).norm(), j});
    std::partial_sort(dist.begin(), dist.begin() + 10, dist.end());
    for (int k = 0; k < 10; ++k) {
      adjacency(i, dist[static_cast<std::size_t>(k)].second) = 1.0;
      adjacency(dist[static_cast<std::size_t>(k)].second, i) = 1.0;
    }
  }
  const GramMatrix gram = graph_gram(adjacency);
  SolverOptions opts;
  opts.max_iters = 400;
  opts.rel_tol = 1e-10;
  opts.seed = 1;
  const KernelModel model = fit_kpca(gram, 3, 1.0, 1.297, opts);
  const ClusterResult clusters = embed_and_cluster(model, gram, 3, true, 1);
  std::vector<int> got(clusters.labels.begin(), clusters.labels.end());
  EXPECT_GE(adjusted_rand_index(got, circles.labels), 0.95);
}

}  // namespace
}  // namespace robsub
