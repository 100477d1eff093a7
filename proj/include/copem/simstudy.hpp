#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "copem/dataset.hpp"
#include "copem/ecm.hpp"

namespace copem {

using Mat2 = std::vector<std::array<double, 2>>;

/// Regularized lower incomplete gamma at (df/2, x/2); domain error on x < 0.
double chi2_cdf(double x, int df);
double chi2_pdf(double x, int df);
/// Inverse of chi2_cdf to |cdf(result)-u| <= 1e-10; domain error outside (0,1).
double chi2_quantile(double u, int df);

/// One cell of the four-setting grid plus the knobs the runs share.
struct StudySetting {
  double rho = 0.5;
  double beta0 = 0.0;
  double beta1 = 2.0;
  double p_mcar = 0.1;
  int n_rows = 200;
  int df1 = 6;
  int df2 = 7;
  int reps = 100;
  std::uint64_t seed = 0;
  int ks_draws = 10000;  // per-method draws entering the KS statistic
  int n_prime = 10000;   // presample size of the mixture percentile estimator
  EcmConfig ecm;
  double baseline_eps = 1e-5;  // stopping threshold of the correlation-only fits
  int baseline_max_iter = 200;
};

struct RepResult {
  bool ok = false;
  std::string error;
  double rho_scope = 0.0, rho_em = 0.0, rho_gold = 0.0;
  double ks_scope = 0.0, ks_em = 0.0, ks_gold = 0.0;
  // column-2 marginal diagnostics
  double ecdf2_signed_area = 0.0;  // integral of (observed ecdf - true cdf)
  double ecdf2_sup_err = 0.0;      // sup |observed ecdf - true cdf|
  double em2_sup_err = 0.0;        // sup |fitted mixture cdf - true cdf|
  int em_iterations = 0;
};

struct StudyResult {
  StudySetting setting;
  std::vector<RepResult> reps;
  int failures() const;
};

/// N x 2 draws with Gaussian copula correlation rho and chi-square marginals.
Mat2 generate_complete(const StudySetting& setting, Rng& rng);

/// Two-stage mask: MCAR removal of every cell, then logistic removal of cell 2
/// on rows where both cells survived, driven by the true gaussianized cell 1.
IncompleteDataset apply_missingness(const Mat2& d, const StudySetting& setting, Rng& rng);

/// The linearly interpolated percentile-function estimator over a sorted
/// sample; constant at the extremes.
class PercentileEcdf {
 public:
  explicit PercentileEcdf(std::vector<double> sorted_values);
  double operator()(double u) const;
  const std::vector<double>& values() const { return y_; }

 private:
  std::vector<double> y_;
};

/// Percentile estimator of a mixture marginal: n_prime simulated draws
/// (uniform component choice, then a normal) wrapped in PercentileEcdf.
PercentileEcdf percentile_mixture(const MixtureMarginal& m, int n_prime, Rng& rng);

struct BaselineFit {
  SymMatrix sigma;
  int iterations = 0;
  std::vector<std::vector<double>> sorted_observed;  // per column (SCOPE marginals)
};

/// Observed-ecdf baseline: marginals pinned to the observed data through the
/// rank transform rank/(n_obs+1), then the correlation-only EM.
BaselineFit fit_scope(const IncompleteDataset& data, double eps_converged = 1e-5,
                      int max_iterations = 200);

/// Oracle baseline: observed cells mapped through the true chi-square cdfs,
/// then the correlation-only EM.
BaselineFit fit_gold(const IncompleteDataset& data, const StudySetting& setting,
                     double eps_converged = 1e-5, int max_iterations = 200);

/// k joint draws: bivariate normal with unit variances and correlation
/// rho_hat, pushed through Phi and the supplied percentile functions.
Mat2 sample_joint(double rho_hat, const std::function<double(double)>& q1,
                  const std::function<double(double)>& q2, int k, Rng& rng);

/// Two-sample two-dimensional KS statistic: per anchor point, the largest
/// absolute difference of the two samples' quadrant fractions over the four
/// quadrants at that point (anchor excluded from its own counts); the result
/// averages the two per-sample maxima.
double ks2d_two_sample(const Mat2& a, const Mat2& b);

/// Full study: per rep generate, mask, fit the three methods, draw joint
/// samples, and score.  Failed reps are recorded and skipped.
StudyResult run_study(const StudySetting& setting, int workers = 1);

std::string study_to_csv(const StudyResult& result);
std::string study_summary_json(const StudyResult& result);

/// Median of unsorted values (average of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace copem
