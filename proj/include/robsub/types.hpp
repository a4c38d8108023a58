#pragma once

// Core domain types shared by all solvers: data matrices, the bilinear
// factor model, explicit outlier matrices, and solver options.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace robsub {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when an iterative routine fails numerically (non-convergence,
/// bracket failure, singular system). Contract violations use
/// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Row norms below this are treated as exact zeros when counting outlier
/// support (numerical dust from warm starts).
inline constexpr double kSupportTol = 1e-12;

/// Outlier penalty: row-wise l2 sum (group sparsity over observations) or
/// entry-wise l1 (sparsity over individual coordinates).
enum class RegularizerKind { RowL2, EntryL1 };

inline const char* to_string(RegularizerKind kind) {
  return kind == RegularizerKind::RowL2 ? "row" : "entry";
}

/// N x p data matrix, rows are observations. Validates shape and finiteness
/// on construction.
struct DataMatrix {
  Matrix values;

  explicit DataMatrix(Matrix v) : values(std::move(v)) {
    if (values.rows() < 1 || values.cols() < 1)
      throw std::invalid_argument("DataMatrix: need at least one row and one column");
    if (!values.allFinite())
      throw std::invalid_argument("DataMatrix: entries must be finite");
  }

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Low-rank bilinear factor model: x_n ~ mean + subspace * scores_n.
struct FactorModel {
  Vector mean;      // p
  Matrix subspace;  // p x q
  Matrix scores;    // N x q
  bool orthonormal = false;

  Index dim() const { return subspace.rows(); }
  Index rank() const { return subspace.cols(); }
  Index n_obs() const { return scores.rows(); }

  /// N x p reconstruction 1*mean' + scores*subspace'.
  Matrix reconstruct() const {
    return (scores * subspace.transpose()).rowwise() + mean.transpose();
  }

  /// Frobenius deviation of subspace'*subspace from the identity.
  double orthonormality_defect() const {
    const Index q = subspace.cols();
    return (subspace.transpose() * subspace - Matrix::Identity(q, q)).norm();
  }
};

/// N x p outlier matrix with row/entry support bookkeeping.
struct OutlierMatrix {
  Matrix values;
  RegularizerKind reg_kind = RegularizerKind::RowL2;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  /// Indices of rows with ||o_n||_2 above tol.
  std::vector<Index> row_support(double tol = kSupportTol) const {
    std::vector<Index> support;
    for (Index n = 0; n < values.rows(); ++n)
      if (values.row(n).norm() > tol) support.push_back(n);
    return support;
  }

  /// ||O||_0: nonzero rows for RowL2, nonzero entries for EntryL1.
  Index support_count(double tol = kSupportTol) const {
    if (reg_kind == RegularizerKind::RowL2)
      return static_cast<Index>(row_support(tol).size());
    Index count = 0;
    for (Index n = 0; n < values.rows(); ++n)
      for (Index j = 0; j < values.cols(); ++j)
        if (std::abs(values(n, j)) > tol) ++count;
    return count;
  }

  Vector row_norms() const { return values.rowwise().norm(); }
};

/// Common knobs for the iterative solvers. All randomized routines draw
/// from the portable generator seeded with `seed`.
struct SolverOptions {
  int max_iters = 100;
  double rel_tol = 1e-7;
  std::uint64_t seed = 0;
  bool record_trace = false;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("SolverOptions: max_iters must be >= 1");
    if (!(rel_tol > 0)) throw std::invalid_argument("SolverOptions: rel_tol must be > 0");
  }
};

namespace detail {

/// Relative objective change used as the stopping rule everywhere:
/// |prev - cur| / max(1, |prev|).
inline double relative_change(double prev, double cur) {
  return std::abs(prev - cur) / std::max(1.0, std::abs(prev));
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

}  // namespace robsub
