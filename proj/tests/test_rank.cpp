#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "robsub/datagen.hpp"
#include "robsub/rank.hpp"
#include "test_support.hpp"

namespace robsub {
namespace {

using testing::random_orthonormal;

// Independent second route for the convex pursuit objective: subgradient
// descent with adaptive Polyak steps on the O-eliminated function
//   F(L) = sum_n huber(x_n - l_n) + lambda_star ||L||_*,
// the elimination being the row-wise shrinkage identity (tested in
// test_core). Returns the best objective seen.
double subgradient_descent_objective(const Matrix& x, double lambda_star, double lambda2,
                                     int iters) {
  Matrix l = Matrix::Zero(x.rows(), x.cols());
  auto value = [&](const Matrix& lm) {
    const Matrix r = x - lm;
    double total = 0.0;
    for (Index n = 0; n < r.rows(); ++n)
      total += huber_vector_loss(r.row(n).transpose(), lambda2);
    return total + lambda_star * thin_svd(lm).sigma.sum();
  };
  auto subgradient = [&](const Matrix& lm) {
    const Matrix r = x - lm;
    Matrix g(r.rows(), r.cols());
    for (Index n = 0; n < r.rows(); ++n) {
      const double norm = r.row(n).norm();
      if (norm <= lambda2 / 2.0)
        g.row(n) = -2.0 * r.row(n);
      else
        g.row(n) = -lambda2 * r.row(n) / norm;
    }
    const ThinSvd svd = thin_svd(lm);
    Matrix nuclear_sub = Matrix::Zero(lm.rows(), lm.cols());
    for (Index i = 0; i < svd.sigma.size(); ++i)
      if (svd.sigma(i) > 1e-12)
        nuclear_sub += svd.u.col(i) * svd.v.col(i).transpose();
    return Matrix(g + lambda_star * nuclear_sub);
  };

  double f_best = value(l);
  Matrix l_best = l;
  double delta = 0.5 * f_best;  // Polyak target offset, tightened on stalls
  double f_at_last_cut = f_best;
  int since_cut = 0;
  for (int k = 0; k < iters; ++k) {
    const Matrix g = subgradient(l);
    const double g_norm2 = g.squaredNorm();
    if (g_norm2 < 1e-30) break;
    const double f = value(l);
    if (f < f_best) {
      f_best = f;
      l_best = l;
    }
    const double target = f_best - delta;
    const double step = std::max((f - target) / g_norm2, 0.0);
    l -= step * g;
    if (++since_cut >= 60) {
      if (f_at_last_cut - f_best < 0.5 * delta) delta *= 0.5;
      f_at_last_cut = f_best;
      since_cut = 0;
    }
  }
  return f_best;
}

TEST(FitRank, UnregularizedFullRankReachesExactFit) {
  Rng rng(41);
  DataMatrix x{rng.normal_matrix(12, 8)};
  SolverOptions opts;
  opts.max_iters = 500;
  opts.rel_tol = 1e-15;
  opts.seed = 7;
  const double inf = std::numeric_limits<double>::infinity();
  const RankFit fit = fit_rank(x, 8, 0.0, inf, RegularizerKind::RowL2, opts);
  EXPECT_EQ(fit.outliers.support_count(), 0);
  const Matrix recon = (Vector::Ones(12) * fit.mean.transpose()) + fit.low_rank();
  EXPECT_LE((x.values - recon).norm(), 1e-6);
}

TEST(FitRank, ObjectiveTraceMonotone) {
  SynthSpec spec;
  spec.n_rows = 30;
  spec.n_cols = 20;
  spec.q = 3;
  spec.rho_p = 0.02;
  spec.sigma_e2 = 0.01;
  spec.seed = 42;
  const LowRankData data = gen_lowrank_outliers(spec);
  SolverOptions opts;
  opts.max_iters = 300;
  opts.rel_tol = 1e-12;
  opts.seed = 5;
  const RankFit fit =
      fit_rank(DataMatrix{data.x}, 6, 0.8, 0.4, RegularizerKind::EntryL1, opts);
  for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
    EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] + 1e-9);
}

TEST(FitRank, RidgeUpdatesSolveNormalEquations) {
  Rng rng(43);
  DataMatrix x{rng.normal_matrix(15, 9)};
  const double lambda_star = 0.6;
  // One manual half-cycle: the U update from a random S must satisfy its
  // normal equations exactly.
  Matrix s = rng.normal_matrix(15, 4);
  Matrix compensated = x.values.rowwise() - Vector(x.values.colwise().mean()).transpose();
  Matrix u = detail::ridge_solve(compensated.transpose() * s, s.transpose() * s, lambda_star);
  const Matrix lhs = u * (s.transpose() * s +
                          (lambda_star / 2.0) * Matrix::Identity(4, 4));
  EXPECT_LE((lhs - compensated.transpose() * s).norm(), 1e-8);
}

TEST(FitRank, SingularRidgeSystemReported) {
  Rng rng(44);
  DataMatrix x{rng.normal_matrix(10, 6)};
  SolverOptions opts;
  opts.seed = 11;
  // lambda_star = 0 with q_bar > rank of the random S'S stays fine, but a
  // degenerate S (rank-deficient Gram) must be reported. Force it by
  // seeding S with q_bar > n via... q_bar capped; instead check the throw
  // path with a zero data matrix which collapses S after one cycle.
  DataMatrix zero{Matrix::Zero(10, 6).array() + 0.0};
  EXPECT_THROW(
      {
        SolverOptions o2;
        o2.max_iters = 5;
        o2.seed = 3;
        fit_rank(zero, 3, 0.0, std::numeric_limits<double>::infinity(),
                 RegularizerKind::RowL2, o2);
      },
      NumericalError);
}

TEST(FitRank, BalancedRefactoringDoesNotIncreasePenalty) {
  SynthSpec spec;
  spec.n_rows = 25;
  spec.n_cols = 15;
  spec.q = 3;
  spec.rho_p = 0.02;
  spec.sigma_e2 = 0.01;
  spec.seed = 45;
  const LowRankData data = gen_lowrank_outliers(spec);
  SolverOptions opts;
  opts.max_iters = 2000;
  opts.rel_tol = 1e-14;
  opts.seed = 9;
  const RankFit fit = fit_rank(DataMatrix{data.x}, 6, 1.0, 0.5,
                               RegularizerKind::RowL2, opts);
  const double penalty = 0.5 * (fit.u.squaredNorm() + fit.s.squaredNorm());
  // Re-balancing the product through its SVD cannot beat a converged fit
  // by more than numerical slack.
  const ThinSvd svd = thin_svd(fit.low_rank());
  const double rebalanced = svd.sigma.sum();
  EXPECT_LE(rebalanced, penalty + 1e-8);
  EXPECT_NEAR(rebalanced, penalty, 1e-4 * std::max(1.0, penalty));
}

TEST(SpcpReference, ZeroDataGivesZeroSolution) {
  DataMatrix x{Matrix::Constant(6, 5, 0.0)};
  SolverOptions opts;
  opts.max_iters = 1000;
  const SpcpSolution sol = spcp_reference(x, 1.0, 1.0, RegularizerKind::RowL2, opts);
  EXPECT_TRUE(sol.converged);
  EXPECT_EQ(sol.l.norm(), 0.0);
  EXPECT_EQ(sol.o.norm(), 0.0);
}

TEST(SpcpReference, HugeEntryPenaltyReducesToSvtClosedForm) {
  Rng rng(46);
  DataMatrix x{rng.normal_matrix(10, 7)};
  SolverOptions opts;
  opts.max_iters = 20000;
  const double lambda_star = 2.5;
  const SpcpSolution sol =
      spcp_reference(x, lambda_star, 1e6, RegularizerKind::RowL2, opts, false, 1e-11);
  ASSERT_TRUE(sol.converged);
  EXPECT_EQ(sol.o.norm(), 0.0);
  // With O pinned at zero the minimizer is singular-value thresholding of
  // X at lambda_star / 2.
  const Matrix expected = detail::svt(x.values, lambda_star / 2.0);
  EXPECT_LE((sol.l - expected).norm(), 1e-6);

  // And a threshold above the top singular value kills L entirely.
  const double big = 2.0 * spectral_norm(x.values) + 1.0;
  const SpcpSolution dead =
      spcp_reference(x, big, 1e6, RegularizerKind::RowL2, opts, false, 1e-11);
  EXPECT_EQ(dead.l.norm(), 0.0);
}

TEST(SpcpReference, AgreesWithSubgradientDescentOracle) {
  SynthSpec spec;
  spec.n_rows = 20;
  spec.n_cols = 20;
  spec.q = 2;
  spec.rho_p = 0.03;
  spec.sigma_e2 = 0.01;
  spec.seed = 47;
  const LowRankData data = gen_lowrank_outliers(spec);
  const double lambda_star = 2.0 * std::sqrt(2.0 * 20 * spec.sigma_e2);
  const double lambda2 = 2.0 * std::sqrt(2.0 * spec.sigma_e2) * 3.0;

  SolverOptions opts;
  opts.max_iters = 50000;
  const SpcpSolution sol = spcp_reference(DataMatrix{data.x}, lambda_star, lambda2,
                                          RegularizerKind::RowL2, opts, false, 1e-10);
  ASSERT_TRUE(sol.converged);
  const double oracle = subgradient_descent_objective(data.x, lambda_star, lambda2, 30000);
  EXPECT_NEAR(sol.objective, oracle, 1e-4 * std::max(1.0, sol.objective));
}

TEST(CheckCertificate, TrivialCases) {
  Rng rng(48);
  const Index n = 10, p = 6, q = 2;
  Matrix u = rng.normal_matrix(p, q);
  Matrix s = rng.normal_matrix(n, q);
  DataMatrix x{s * u.transpose()};

  RankFit exact;
  exact.mean = Vector::Zero(p);
  exact.u = u;
  exact.s = s;
  exact.outliers = OutlierMatrix{Matrix::Zero(n, p), RegularizerKind::RowL2};
  const double lambda_star = 3.0;
  const Certificate cert = check_certificate(x, exact, lambda_star);
  EXPECT_TRUE(cert.holds);
  EXPECT_NEAR(cert.gap, lambda_star / 2.0, 1e-9);

  // A tiny lambda_star cannot cover a nonzero residual spectral norm.
  RankFit sloppy = exact;
  sloppy.s = s + rng.normal_matrix(n, q);
  const Certificate bad = check_certificate(x, sloppy, 1e-6);
  EXPECT_FALSE(bad.holds);
  EXPECT_LT(bad.gap, 0.0);
}

TEST(NuclearVariationalGap, HandValuesAndRandomMatrices) {
  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = 3.0;
  diag(1, 1) = 4.0;
  EXPECT_NEAR(nuclear_variational_gap(diag), 0.0, 1e-12);
  EXPECT_NEAR(thin_svd(diag).sigma.sum(), 7.0, 1e-12);

  EXPECT_NEAR(nuclear_variational_gap(Matrix::Zero(3, 4)), 0.0, 1e-15);

  Rng rng(49);
  for (int i = 0; i < 20; ++i) {
    const Matrix l = rng.normal_matrix(6, 4);
    EXPECT_LE(std::abs(nuclear_variational_gap(l)), 1e-9);

    // Any other exact factorization pays at least the nuclear norm.
    const ThinSvd svd = thin_svd(l);
    Matrix mix = rng.normal_matrix(4, 4);
    mix += 4.0 * Matrix::Identity(4, 4);  // keep it invertible
    const Matrix s_factor = svd.u * svd.sigma.asDiagonal() * mix;
    const Matrix u_factor = svd.v * mix.inverse().transpose();
    EXPECT_LE((s_factor * u_factor.transpose() - l).norm(), 1e-8);
    const double unbalanced = 0.5 * (s_factor.squaredNorm() + u_factor.squaredNorm());
    EXPECT_GE(unbalanced, svd.sigma.sum() - 1e-9);
  }
}

TEST(FitRank, MeanFreeModeMatchesMeanFreeObjective) {
  SynthSpec spec;
  spec.n_rows = 20;
  spec.n_cols = 12;
  spec.q = 2;
  spec.seed = 50;
  const LowRankData data = gen_lowrank_outliers(spec);
  SolverOptions opts;
  opts.max_iters = 200;
  opts.rel_tol = 1e-12;
  opts.seed = 1;
  const RankFit fit = fit_rank(DataMatrix{data.x}, 4, 0.7, 0.3,
                               RegularizerKind::RowL2, opts, /*fit_mean=*/false);
  EXPECT_EQ(fit.mean.norm(), 0.0);
  const double recomputed =
      (data.x - fit.low_rank() - fit.outliers.values).squaredNorm() +
      (0.7 / 2.0) * (fit.u.squaredNorm() + fit.s.squaredNorm()) +
      0.3 * fit.outliers.values.rowwise().norm().sum();
  EXPECT_NEAR(fit.objective(), recomputed, 1e-9 * std::max(1.0, recomputed));
}

}  // namespace
}  // namespace robsub
