#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "copem/marginals.hpp"
#include "copem/numkernel.hpp"
#include "copem/rng.hpp"

namespace copem {

/// Correlation matrix (unit diagonal, positive definite) with its Cholesky
/// factor cached; the factor backs determinant, inverse and sampling.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(SymMatrix m);

  static CorrelationMatrix identity(int dim) { return CorrelationMatrix(SymMatrix::identity(dim)); }

  int dim() const { return m_.dim(); }
  double operator()(int i, int j) const { return m_(i, j); }
  const SymMatrix& matrix() const { return m_; }
  const Cholesky& chol() const { return *chol_; }

  double log_det() const { return chol_->log_det(); }
  SymMatrix precision() const { return chol_->inverse(); }

 private:
  SymMatrix m_;
  std::shared_ptr<const Cholesky> chol_;
};

/// Full parametrization of the copula model: correlation plus one mixture
/// marginal per coordinate.  Immutable after construction.
struct CopulaModel {
  CorrelationMatrix sigma;
  MarginalSet marginals;

  CopulaModel(CorrelationMatrix s, MarginalSet m);
  int p() const { return sigma.dim(); }
};

/// Gaussian-scale conditional law of the missing block given observed values.
struct ConditionalLaw {
  std::vector<double> mu;
  SymMatrix sigma_prime;
  IndexPartition part;
};

/// Joint log density of a fully observed point.
double log_density(const CopulaModel& model, const std::vector<double>& x);

/// Conditional law of z_mis given x_obs (observed values enter through their
/// gaussianized images).
ConditionalLaw conditional_law(const CopulaModel& model, const IndexPartition& part,
                               const std::vector<double>& x_obs);

/// m draws of the missing coordinates (data scale, mis order); each draw maps
/// a N(mu, sigma') sample through Phi and the marginal quantiles.
std::vector<std::vector<double>> sample_conditional(const CopulaModel& model,
                                                    const ConditionalLaw& law, int m, Rng& rng);

/// Index pairs (j,k), j<k, whose precision entry is within tol of zero;
/// these coordinates are conditionally independent given the rest.
std::vector<std::pair<int, int>> precision_zeros(const CopulaModel& model, double tol = 1e-8);

}  // namespace copem
