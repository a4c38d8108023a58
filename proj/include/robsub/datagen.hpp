#pragma once

// Seeded synthetic data generators for the experiment protocols: low-rank
// data with sparse gross outliers, two-parameter logistic item-response
// matrices with injected random responders, and concentric-ring point
// clouds for the kernel demos. All draws come from the portable generator,
// so identical seeds give bit-identical output.

#include <cmath>
#include <cstdint>
#include <vector>

#include "robsub/rng.hpp"
#include "robsub/types.hpp"

namespace robsub {

struct SynthSpec {
  Index n_rows = 200;
  Index n_cols = 200;
  Index q = 20;
  double rho_p = 0.01;      // Bernoulli rate for outlier entries
  double sigma_e2 = 0.01;   // nominal noise variance
  double outlier_lo = -5.0;
  double outlier_hi = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(n_rows >= 1 && n_cols >= 1, "SynthSpec: need at least one row/column");
    detail::require(q >= 1 && q <= std::min(n_rows, n_cols), "SynthSpec: q out of range");
    detail::require(rho_p >= 0 && rho_p <= 1, "SynthSpec: rho_p must be in [0, 1]");
    detail::require(sigma_e2 >= 0, "SynthSpec: sigma_e2 must be >= 0");
    detail::require(outlier_hi >= outlier_lo, "SynthSpec: empty outlier range");
  }
};

struct LowRankData {
  Matrix x;  // = l + e + o
  Matrix l;  // s * u'
  Matrix o;
  Matrix u;  // n_cols x q
  Matrix s;  // n_rows x q
  Matrix e;
};

/// Zero-mean low-rank data plus dense noise plus sparse gross outliers.
/// Factor entries are N(0, sigma_us^2) with sigma_us^2 = 10 sigma_e / sqrt(N);
/// outlier entries are Bernoulli(rho_p)-gated uniforms on the given range.
inline LowRankData gen_lowrank_outliers(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double sigma_e = std::sqrt(spec.sigma_e2);
  const double sigma_us =
      std::sqrt(10.0 * sigma_e / std::sqrt(static_cast<double>(spec.n_rows)));

  LowRankData data;
  data.u = sigma_us * rng.normal_matrix(spec.n_cols, spec.q);
  data.s = sigma_us * rng.normal_matrix(spec.n_rows, spec.q);
  data.e = sigma_e * rng.normal_matrix(spec.n_rows, spec.n_cols);
  data.o = Matrix::Zero(spec.n_rows, spec.n_cols);
  for (Index i = 0; i < spec.n_rows; ++i)
    for (Index j = 0; j < spec.n_cols; ++j)
      if (rng.bernoulli(spec.rho_p))
        data.o(i, j) = rng.uniform(spec.outlier_lo, spec.outlier_hi);
  data.l = data.s * data.u.transpose();
  data.x = data.l + data.e + data.o;
  return data;
}

/// Endorsement probability of the two-parameter logistic response model.
inline double irt_response_probability(double discrimination, double trait, double difficulty) {
  const double z = 1.7 * discrimination * (trait - difficulty);
  return 1.0 / (1.0 + std::exp(-z));
}

struct IrtData {
  Matrix responses;        // n_subjects x n_items, entries 0/1
  Vector discrimination;   // a_m ~ U[1, 1.5]
  Vector difficulty;       // b_m ~ U[-2, 2]
  Matrix traits;           // n_subjects x q, theta ~ N(0, I)
  std::vector<int> item_factor;  // item m loads on factor m mod q
};

/// Binary item-response matrix from the two-parameter logistic model with
/// items assigned round-robin to q latent factors.
inline IrtData gen_irt_2plm(Index n_subjects, Index n_items, Index q, std::uint64_t seed) {
  detail::require(n_subjects >= 1 && n_items >= 1, "gen_irt_2plm: empty dimensions");
  detail::require(q >= 1, "gen_irt_2plm: q must be >= 1");
  Rng rng(seed);

  IrtData data;
  data.discrimination.resize(n_items);
  data.difficulty.resize(n_items);
  data.item_factor.resize(static_cast<std::size_t>(n_items));
  for (Index m = 0; m < n_items; ++m) {
    data.discrimination(m) = rng.uniform(1.0, 1.5);
    data.difficulty(m) = rng.uniform(-2.0, 2.0);
    data.item_factor[static_cast<std::size_t>(m)] = static_cast<int>(m % q);
  }
  data.traits = rng.normal_matrix(n_subjects, q);
  data.responses.resize(n_subjects, n_items);
  for (Index n = 0; n < n_subjects; ++n)
    for (Index m = 0; m < n_items; ++m) {
      const double trait = data.traits(n, data.item_factor[static_cast<std::size_t>(m)]);
      const double prob =
          irt_response_probability(data.discrimination(m), trait, data.difficulty(m));
      data.responses(n, m) = prob >= rng.uniform() ? 1.0 : 0.0;
    }
  return data;
}

/// Replace the listed rows with iid Bernoulli(rate) draws (random
/// responding); all other rows are untouched.
inline Matrix inject_random_responders(const Matrix& responses, const std::vector<Index>& rows,
                                       double rate, std::uint64_t seed) {
  detail::require(rate >= 0 && rate <= 1, "inject_random_responders: rate must be in [0, 1]");
  Rng rng(seed);
  Matrix corrupted = responses;
  for (Index row : rows) {
    detail::require(row >= 0 && row < responses.rows(),
                    "inject_random_responders: row index out of range");
    for (Index j = 0; j < responses.cols(); ++j)
      corrupted(row, j) = rng.bernoulli(rate) ? 1.0 : 0.0;
  }
  return corrupted;
}

struct ConcentricData {
  Matrix x;                       // 2-D points; outliers appended last
  std::vector<int> labels;        // ring index, -1 for outliers
  std::vector<Index> outlier_indices;
};

/// Concentric circular clusters (uniform in angle, isotropic Gaussian
/// noise of the given variance) plus uniformly scattered box outliers
/// appended at known indices.
inline ConcentricData gen_concentric(const std::vector<Index>& counts,
                                     const std::vector<double>& radii, double noise_var,
                                     Index n_outliers, double box_half_width,
                                     std::uint64_t seed) {
  detail::require(counts.size() == radii.size(), "gen_concentric: counts/radii mismatch");
  detail::require(!counts.empty(), "gen_concentric: need at least one ring");
  for (double r : radii) detail::require(r > 0, "gen_concentric: radii must be positive");
  detail::require(noise_var >= 0, "gen_concentric: noise variance must be >= 0");
  detail::require(n_outliers >= 0, "gen_concentric: negative outlier count");

  Index total = n_outliers;
  for (Index c : counts) total += c;
  Rng rng(seed);
  const double sigma = std::sqrt(noise_var);

  ConcentricData data;
  data.x.resize(total, 2);
  data.labels.reserve(static_cast<std::size_t>(total));
  Index row = 0;
  for (std::size_t ring = 0; ring < counts.size(); ++ring) {
    for (Index i = 0; i < counts[ring]; ++i, ++row) {
      const double angle = rng.uniform(0.0, 2.0 * M_PI);
      data.x(row, 0) = radii[ring] * std::cos(angle) + sigma * rng.normal();
      data.x(row, 1) = radii[ring] * std::sin(angle) + sigma * rng.normal();
      data.labels.push_back(static_cast<int>(ring));
    }
  }
  for (Index i = 0; i < n_outliers; ++i, ++row) {
    data.x(row, 0) = rng.uniform(-box_half_width, box_half_width);
    data.x(row, 1) = rng.uniform(-box_half_width, box_half_width);
    data.labels.push_back(-1);
    data.outlier_indices.push_back(row);
  }
  return data;
}

/// Paper-protocol defaults for the concentric demo: 3 x 150 points on
/// radii {1, 2.8, 5}, noise variance 0.15, five outliers in [-7, 7]^2.
inline ConcentricData gen_concentric_default(std::uint64_t seed) {
  return gen_concentric({150, 150, 150}, {1.0, 2.8, 5.0}, 0.15, 5, 7.0, seed);
}

}  // namespace robsub
