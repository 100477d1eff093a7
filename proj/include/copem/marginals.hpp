#pragma once

#include <vector>

#include "copem/errors.hpp"
#include "copem/numkernel.hpp"

namespace copem {

/// Equal-weight Gaussian mixture with shared bandwidth:
///   F(x) = (1/g) sum_k Phi((x - center_k) / bandwidth).
/// Centers are kept nondecreasing (identifiability); bandwidth is a fixed
/// hyperparameter, not a fitted quantity.
struct MixtureMarginal {
  std::vector<double> centers;
  double bandwidth = 1.0;

  MixtureMarginal() = default;
  MixtureMarginal(std::vector<double> c, double bw);

  int g() const { return static_cast<int>(centers.size()); }
  double min_center() const { return centers.front(); }
  double max_center() const { return centers.back(); }
};

/// One marginal per coordinate of the model.
struct MarginalSet {
  std::vector<MixtureMarginal> marginals;

  int p() const { return static_cast<int>(marginals.size()); }
  const MixtureMarginal& operator[](int j) const { return marginals[j]; }
  MixtureMarginal& operator[](int j) { return marginals[j]; }
};

/// Probabilities are clamped to [kCdfClamp, 1-kCdfClamp] before any inverse
/// normal cdf; Monte Carlo draws can land far enough in the tails to hit 0/1.
constexpr double kCdfClamp = 1e-12;

double mix_cdf(const MixtureMarginal& m, double x);
double mix_pdf(const MixtureMarginal& m, double x);
/// Inverse of mix_cdf to |cdf(result)-u| <= 1e-10; domain error outside (0,1).
double mix_quantile(const MixtureMarginal& m, double u);

/// z = Phi^-1(clamped F(x)): the coordinate's map to the standard normal scale.
double gaussianize(const MixtureMarginal& m, double x);

/// d gaussianize / d center_k for every k; zero where the cdf clamp is active
/// (the transform is flat there).
std::vector<double> gaussianize_grad(const MixtureMarginal& m, double x);

/// d ln mix_pdf / d center_k for every k.
std::vector<double> logpdf_grad(const MixtureMarginal& m, double x);

/// Centers at the midpoint-interpolated ecdf quantiles of levels (k-1/2)/g,
/// bandwidth by the Silverman-style rule with g in place of the sample size:
///   0.9 * min(sd, IQR/1.34) * g^(-1/5), floored for degenerate samples.
MixtureMarginal init_from_observed(std::vector<double> observed, int g);

}  // namespace copem
