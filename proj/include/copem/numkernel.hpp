#pragma once

#include <cstddef>
#include <vector>

#include "copem/errors.hpp"
#include "copem/rng.hpp"

namespace copem {

/// Dense symmetric p x p matrix, full row-major storage.
/// Construction enforces symmetry to 1e-12 and dim >= 1.
class SymMatrix {
 public:
  explicit SymMatrix(int dim);
  SymMatrix(int dim, std::vector<double> row_major);

  static SymMatrix identity(int dim);

  int dim() const { return dim_; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * dim_ + j]; }

  /// Sets both (i,j) and (j,i).
  void set(int i, int j, double v) {
    a_[static_cast<std::size_t>(i) * dim_ + j] = v;
    a_[static_cast<std::size_t>(j) * dim_ + i] = v;
  }

  const std::vector<double>& data() const { return a_; }

  /// Max elementwise |a-b|; matrices must share dim.
  double max_abs_diff(const SymMatrix& other) const;
  /// Elementwise L1 distance (the stopping norm of the outer loop).
  double l1_diff(const SymMatrix& other) const;

 private:
  int dim_;
  std::vector<double> a_;
};

/// Lower-triangular Cholesky factor of a positive definite SymMatrix.
/// PD test: every pivot must exceed 1e-12.
class Cholesky {
 public:
  explicit Cholesky(const SymMatrix& a);

  bool ok() const { return ok_; }
  double min_pivot() const { return min_pivot_; }
  int dim() const { return dim_; }

  /// L(i,j), j <= i.
  double l(int i, int j) const { return l_[static_cast<std::size_t>(i) * dim_ + j]; }

  double log_det() const;                          // of the factored matrix
  std::vector<double> solve(const std::vector<double>& b) const;
  SymMatrix inverse() const;

  /// y = mu + L * eps applied in place of eps.
  void transform_in_place(std::vector<double>& eps, const std::vector<double>& mu) const;

 private:
  int dim_;
  bool ok_;
  double min_pivot_;
  std::vector<double> l_;
};

/// Split of {0..p-1} into observed and missing index sets (both sorted).
struct IndexPartition {
  std::vector<int> obs;
  std::vector<int> mis;
  int p = 0;

  IndexPartition() = default;
  IndexPartition(std::vector<int> obs_idx, std::vector<int> mis_idx, int dim);

  /// mask[j] true <=> coordinate j observed.
  static IndexPartition from_mask(const std::vector<bool>& observed);

  bool fully_observed() const { return mis.empty(); }
  bool fully_missing() const { return obs.empty(); }
};

double std_normal_cdf(double x);
double std_normal_pdf(double x);
/// Inverse of std_normal_cdf; throws std::domain_error outside (0,1).
double std_normal_quantile(double u);

/// Conditional law of the "mis" block of N(0, sigma) given the "obs" block
/// equals z_obs: mu = S_mo S_oo^-1 z_obs, sigma' = S_mm - S_mo S_oo^-1 S_om.
/// obs empty yields (0, sigma) unchanged.
struct ConditionalMoments {
  std::vector<double> mu;
  SymMatrix sigma_prime;
};
ConditionalMoments schur_conditional(const SymMatrix& sigma, const IndexPartition& part,
                                     const std::vector<double>& z_obs);

/// m draws from N(mu, sigma); deterministic given the rng state.
std::vector<std::vector<double>> mvn_sample(const std::vector<double>& mu, const SymMatrix& sigma,
                                            int m, Rng& rng);

/// P S P with P = diag(1/sqrt(S_jj)); unit diagonal by construction.
SymMatrix correlation_normalize(const SymMatrix& s);

}  // namespace copem
