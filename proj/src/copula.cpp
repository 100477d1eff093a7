#include "copem/copula.hpp"

#include <algorithm>
#include <cmath>

namespace copem {

CorrelationMatrix::CorrelationMatrix(SymMatrix m) : m_(std::move(m)) {
  for (int i = 0; i < m_.dim(); ++i)
    if (std::abs(m_(i, i) - 1.0) > 1e-10)
      throw ConfigError("CorrelationMatrix: diagonal entry differs from 1");
  chol_ = std::make_shared<const Cholesky>(m_);
  if (!chol_->ok()) throw NumericalError("CorrelationMatrix: matrix is not positive definite");
}

CopulaModel::CopulaModel(CorrelationMatrix s, MarginalSet m)
    : sigma(std::move(s)), marginals(std::move(m)) {
  if (marginals.p() != sigma.dim())
    throw ConfigError("CopulaModel: marginal count does not match correlation dimension");
}

double log_density(const CopulaModel& model, const std::vector<double>& x) {
  const int p = model.p();
  if (static_cast<int>(x.size()) != p) throw ConfigError("log_density: dimension mismatch");

  std::vector<double> z(p);
  double log_marg = 0.0;
  for (int j = 0; j < p; ++j) {
    z[j] = gaussianize(model.marginals[j], x[j]);
    log_marg += std::log(mix_pdf(model.marginals[j], x[j]));
  }
  // -1/2 z^T (Sigma^-1 - I) z  computed as  z^T Sigma^-1 z - z^T z via the factor
  const std::vector<double> w = model.sigma.chol().solve(z);
  double quad = 0.0, zz = 0.0;
  for (int j = 0; j < p; ++j) {
    quad += z[j] * w[j];
    zz += z[j] * z[j];
  }
  return -0.5 * model.sigma.log_det() - 0.5 * (quad - zz) + log_marg;
}

ConditionalLaw conditional_law(const CopulaModel& model, const IndexPartition& part,
                               const std::vector<double>& x_obs) {
  if (part.p != model.p()) throw ConfigError("conditional_law: partition dimension mismatch");
  std::vector<double> z_obs(part.obs.size());
  for (std::size_t i = 0; i < part.obs.size(); ++i)
    z_obs[i] = gaussianize(model.marginals[part.obs[i]], x_obs[i]);
  auto mom = schur_conditional(model.sigma.matrix(), part, z_obs);
  return ConditionalLaw{std::move(mom.mu), std::move(mom.sigma_prime), part};
}

std::vector<std::vector<double>> sample_conditional(const CopulaModel& model,
                                                    const ConditionalLaw& law, int m, Rng& rng) {
  const int nm = static_cast<int>(law.part.mis.size());
  std::vector<std::vector<double>> out;
  if (m <= 0) return out;
  out.reserve(m);

  const Cholesky chol(law.sigma_prime);
  if (!chol.ok()) throw NumericalError("sample_conditional: sigma' is not positive definite");

  std::vector<double> z(nm);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < nm; ++i) z[i] = rng.next_normal();
    chol.transform_in_place(z, law.mu);
    std::vector<double> x(nm);
    for (int i = 0; i < nm; ++i) {
      // clamp: an extreme draw can round Phi(z) to 0 or 1
      const double u =
          std::min(1.0 - kCdfClamp, std::max(kCdfClamp, std_normal_cdf(z[i])));
      x[i] = mix_quantile(model.marginals[law.part.mis[i]], u);
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<std::pair<int, int>> precision_zeros(const CopulaModel& model, double tol) {
  const SymMatrix k = model.sigma.precision();
  std::vector<std::pair<int, int>> zeros;
  for (int i = 0; i < k.dim(); ++i)
    for (int j = i + 1; j < k.dim(); ++j)
      if (std::abs(k(i, j)) <= tol) zeros.emplace_back(i, j);
  return zeros;
}

}  // namespace copem
