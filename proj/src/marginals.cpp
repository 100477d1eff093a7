#include "copem/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace copem {

MixtureMarginal::MixtureMarginal(std::vector<double> c, double bw)
    : centers(std::move(c)), bandwidth(bw) {
  if (centers.empty()) throw ConfigError("MixtureMarginal: needs at least one center");
  if (!(bandwidth > 0.0)) throw ConfigError("MixtureMarginal: bandwidth must be positive");
  if (!std::is_sorted(centers.begin(), centers.end()))
    std::sort(centers.begin(), centers.end());
}

double mix_cdf(const MixtureMarginal& m, double x) {
  const double inv_bw = 1.0 / m.bandwidth;
  double s = 0.0;
  for (double c : m.centers) s += std_normal_cdf((x - c) * inv_bw);
  const double u = s / m.g();
  return std::min(1.0 - kCdfClamp, std::max(kCdfClamp, u));
}

double mix_pdf(const MixtureMarginal& m, double x) {
  const double inv_bw = 1.0 / m.bandwidth;
  double s = 0.0;
  for (double c : m.centers) s += std_normal_pdf((x - c) * inv_bw);
  return s * inv_bw / m.g();
}

double mix_quantile(const MixtureMarginal& m, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("mix_quantile: u outside (0,1)");

  // Guaranteed bracket: every component cdf is bounded by the extreme-center
  // ones, so F(min_center + bw*q_u) <= u <= F(max_center + bw*q_u).
  const double q = std_normal_quantile(std::min(1.0 - kCdfClamp, std::max(kCdfClamp, u)));
  double lo = std::max(m.min_center() + m.bandwidth * q, m.min_center() - 12.0 * m.bandwidth);
  double hi = std::min(m.max_center() + m.bandwidth * q, m.max_center() + 12.0 * m.bandwidth);
  if (lo > hi) std::swap(lo, hi);

  // Bisection narrows the bracket, Newton polishes; Newton steps that leave
  // the bracket fall back to bisection.
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = mix_cdf(m, x) - u;
    if (std::abs(f) <= 1e-12) return x;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double next = x;
    const double dens = mix_pdf(m, x);
    if (dens > 0.0) next = x - f / dens;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
  }
  return x;
}

double gaussianize(const MixtureMarginal& m, double x) {
  return std_normal_quantile(mix_cdf(m, x));
}

std::vector<double> gaussianize_grad(const MixtureMarginal& m, double x) {
  const int g = m.g();
  const double inv_bw = 1.0 / m.bandwidth;
  const double u = mix_cdf(m, x);
  std::vector<double> grad(g, 0.0);
  if (u <= kCdfClamp || u >= 1.0 - kCdfClamp) return grad;  // clamp active: flat
  const double z = std_normal_quantile(u);
  const double scale = -1.0 / (g * m.bandwidth * std_normal_pdf(z));
  for (int k = 0; k < g; ++k) grad[k] = scale * std_normal_pdf((x - m.centers[k]) * inv_bw);
  return grad;
}

std::vector<double> logpdf_grad(const MixtureMarginal& m, double x) {
  const int g = m.g();
  const double inv_bw = 1.0 / m.bandwidth;
  std::vector<double> phi(g);
  double total = 0.0;
  for (int k = 0; k < g; ++k) {
    phi[k] = std_normal_pdf((x - m.centers[k]) * inv_bw);
    total += phi[k];
  }
  std::vector<double> grad(g, 0.0);
  if (total <= 0.0) return grad;  // all components underflowed; score is flat here
  for (int k = 0; k < g; ++k) {
    const double t = (x - m.centers[k]) * inv_bw;
    grad[k] = t * inv_bw * phi[k] / total;
  }
  return grad;
}

namespace {

// Midpoint-interpolated ecdf quantile: sorted values sit at levels (i+1/2)/n.
double ecdf_quantile_midpoint(const std::vector<double>& sorted, double u) {
  const int n = static_cast<int>(sorted.size());
  const double h = u * n - 0.5;
  if (h <= 0.0) return sorted.front();
  if (h >= n - 1) return sorted.back();
  const int i = static_cast<int>(h);
  const double w = h - i;
  return sorted[i] + w * (sorted[i + 1] - sorted[i]);
}

}  // namespace

MixtureMarginal init_from_observed(std::vector<double> observed, int g) {
  if (g < 1) throw ConfigError("init_from_observed: g must be >= 1");
  if (static_cast<int>(observed.size()) < g)
    throw ConfigError("init_from_observed: need at least g observed values, got " +
                      std::to_string(observed.size()));
  std::sort(observed.begin(), observed.end());
  const int n = static_cast<int>(observed.size());

  std::vector<double> centers(g);
  for (int k = 0; k < g; ++k)
    centers[k] = ecdf_quantile_midpoint(observed, (k + 0.5) / g);

  double mean = 0.0;
  for (double v : observed) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : observed) ss += (v - mean) * (v - mean);
  const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  const double iqr =
      ecdf_quantile_midpoint(observed, 0.75) - ecdf_quantile_midpoint(observed, 0.25);

  double bw = 0.9 * std::min(sd, iqr / 1.34) * std::pow(static_cast<double>(g), -0.2);
  const double range = observed.back() - observed.front();
  const double floor = 1e-6 * (1.0 + std::abs(range));
  if (!(bw > floor)) bw = floor;

  return MixtureMarginal(std::move(centers), bw);
}

}  // namespace copem
