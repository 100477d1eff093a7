#include "copem/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace copem {

namespace {
constexpr double kSymTol = 1e-12;
constexpr double kPivotTol = 1e-12;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kSqrt2Pi = 2.5066282746310005024;
}  // namespace

SymMatrix::SymMatrix(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("SymMatrix: dimension must be >= 1");
  a_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
}

SymMatrix::SymMatrix(int dim, std::vector<double> row_major) : dim_(dim), a_(std::move(row_major)) {
  if (dim < 1) throw ConfigError("SymMatrix: dimension must be >= 1");
  if (a_.size() != static_cast<std::size_t>(dim) * dim)
    throw ConfigError("SymMatrix: storage size does not match dimension");
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      const double d = std::abs((*this)(i, j) - (*this)(j, i));
      if (!(d <= kSymTol))
        throw ConfigError("SymMatrix: input asymmetric at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
      // store exactly symmetric
      set(i, j, (*this)(i, j));
    }
}

SymMatrix SymMatrix::identity(int dim) {
  SymMatrix m(dim);
  for (int i = 0; i < dim; ++i) m.set(i, i, 1.0);
  return m;
}

double SymMatrix::max_abs_diff(const SymMatrix& other) const {
  double d = 0.0;
  for (std::size_t k = 0; k < a_.size(); ++k) d = std::max(d, std::abs(a_[k] - other.a_[k]));
  return d;
}

double SymMatrix::l1_diff(const SymMatrix& other) const {
  double d = 0.0;
  for (std::size_t k = 0; k < a_.size(); ++k) d += std::abs(a_[k] - other.a_[k]);
  return d;
}

Cholesky::Cholesky(const SymMatrix& a)
    : dim_(a.dim()), ok_(true), min_pivot_(0.0), l_(static_cast<std::size_t>(a.dim()) * a.dim(), 0.0) {
  const int n = dim_;
  min_pivot_ = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    min_pivot_ = std::min(min_pivot_, d);
    if (!(d > kPivotTol)) {
      ok_ = false;
      return;
    }
    const double lj = std::sqrt(d);
    l_[static_cast<std::size_t>(j) * n + j] = lj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l_[static_cast<std::size_t>(i) * n + j] = s / lj;
    }
  }
}

double Cholesky::log_det() const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

std::vector<double> Cholesky::solve(const std::vector<double>& b) const {
  const int n = dim_;
  std::vector<double> x(b);
  for (int i = 0; i < n; ++i) {  // L y = b
    double s = x[i];
    for (int k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {  // L^T x = y
    double s = x[i];
    for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

SymMatrix Cholesky::inverse() const {
  const int n = dim_;
  SymMatrix inv(n);
  std::vector<double> e(n, 0.0);
  for (int j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    const std::vector<double> col = solve(e);
    // columns of the true inverse are symmetric; writing j..n-1 keeps storage consistent
    for (int i = j; i < n; ++i) inv.set(i, j, col[i]);
  }
  return inv;
}

void Cholesky::transform_in_place(std::vector<double>& eps, const std::vector<double>& mu) const {
  const int n = dim_;
  for (int i = n - 1; i >= 0; --i) {
    double s = mu[i];
    for (int k = 0; k <= i; ++k) s += l(i, k) * eps[k];
    eps[i] = s;
  }
}

IndexPartition::IndexPartition(std::vector<int> obs_idx, std::vector<int> mis_idx, int dim)
    : obs(std::move(obs_idx)), mis(std::move(mis_idx)), p(dim) {
  std::vector<bool> seen(p, false);
  for (int j : obs) {
    if (j < 0 || j >= p || seen[j]) throw ConfigError("IndexPartition: bad observed index set");
    seen[j] = true;
  }
  for (int j : mis) {
    if (j < 0 || j >= p || seen[j]) throw ConfigError("IndexPartition: sets overlap or out of range");
    seen[j] = true;
  }
  if (static_cast<int>(obs.size() + mis.size()) != p)
    throw ConfigError("IndexPartition: sets do not cover {0..p-1}");
  std::sort(obs.begin(), obs.end());
  std::sort(mis.begin(), mis.end());
}

IndexPartition IndexPartition::from_mask(const std::vector<bool>& observed) {
  std::vector<int> o, m;
  for (int j = 0; j < static_cast<int>(observed.size()); ++j)
    (observed[j] ? o : m).push_back(j);
  return IndexPartition(std::move(o), std::move(m), static_cast<int>(observed.size()));
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double std_normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("std_normal_quantile: u outside (0,1)");

  // Acklam's rational approximation, |rel err| < 1.15e-9, then one Halley step
  // against the erfc-based cdf pushes the error below 1e-15.
  static const double A[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double B[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double C[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double D[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;

  double x;
  if (u < p_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  } else if (u <= 1.0 - p_low) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q /
        (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  }

  const double e = std_normal_cdf(x) - u;
  const double w = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= w / (1.0 + 0.5 * x * w);
  return x;
}

ConditionalMoments schur_conditional(const SymMatrix& sigma, const IndexPartition& part,
                                     const std::vector<double>& z_obs) {
  if (sigma.dim() != part.p) throw ConfigError("schur_conditional: dimension mismatch");
  if (z_obs.size() != part.obs.size())
    throw ConfigError("schur_conditional: z_obs length does not match observed set");

  const auto& obs = part.obs;
  const auto& mis = part.mis;
  const int no = static_cast<int>(obs.size());
  const int nm = static_cast<int>(mis.size());

  if (no == 0) {
    ConditionalMoments out{std::vector<double>(nm, 0.0), sigma};
    return out;
  }
  if (nm == 0) return ConditionalMoments{{}, SymMatrix(1)};  // degenerate; callers guard

  SymMatrix s_oo(no);
  for (int i = 0; i < no; ++i)
    for (int j = i; j < no; ++j) s_oo.set(i, j, sigma(obs[i], obs[j]));
  const Cholesky chol(s_oo);
  if (!chol.ok())
    throw NumericalError("schur_conditional: observed block of sigma is not positive definite");

  // w = S_oo^-1 z_obs and columns of S_oo^-1 S_om
  const std::vector<double> w = chol.solve(z_obs);
  std::vector<std::vector<double>> sol_cols(nm);
  std::vector<double> col(no);
  for (int j = 0; j < nm; ++j) {
    for (int i = 0; i < no; ++i) col[i] = sigma(obs[i], mis[j]);
    sol_cols[j] = chol.solve(col);
  }

  std::vector<double> mu(nm, 0.0);
  for (int i = 0; i < nm; ++i) {
    double s = 0.0;
    for (int k = 0; k < no; ++k) s += sigma(mis[i], obs[k]) * w[k];
    mu[i] = s;
  }

  SymMatrix sp(nm);
  for (int i = 0; i < nm; ++i)
    for (int j = i; j < nm; ++j) {
      double s = sigma(mis[i], mis[j]);
      for (int k = 0; k < no; ++k) s -= sigma(mis[i], obs[k]) * sol_cols[j][k];
      sp.set(i, j, s);
    }
  return ConditionalMoments{std::move(mu), std::move(sp)};
}

std::vector<std::vector<double>> mvn_sample(const std::vector<double>& mu, const SymMatrix& sigma,
                                            int m, Rng& rng) {
  const int n = sigma.dim();
  if (static_cast<int>(mu.size()) != n) throw ConfigError("mvn_sample: mean dimension mismatch");
  const Cholesky chol(sigma);
  if (!chol.ok()) throw NumericalError("mvn_sample: sigma is not positive definite");

  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(std::max(m, 0)));
  for (int k = 0; k < m; ++k) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.next_normal();
    chol.transform_in_place(x, mu);
    out.push_back(std::move(x));
  }
  return out;
}

SymMatrix correlation_normalize(const SymMatrix& s) {
  const int n = s.dim();
  for (int i = 0; i < n; ++i)
    if (!(s(i, i) > 0.0))
      throw NumericalError("correlation_normalize: nonpositive diagonal entry");
  SymMatrix r(n);
  // s_ij / sqrt(s_ii * s_jj), kept as a single product under the root so that
  // rescaling s by a power of two cancels exactly.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) r.set(i, j, s(i, j) / std::sqrt(s(i, i) * s(j, j)));
    r.set(i, i, 1.0);
  }
  return r;
}

}  // namespace copem
