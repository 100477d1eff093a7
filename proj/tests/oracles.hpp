// Independent reference implementations used by the tests only.  Everything
// here is deliberately written from first principles (series, continued
// fractions, brute force) rather than through the library code paths it checks.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// erf by Taylor series; converges for all x, used for |x| <= 2.
inline double erf_series(double x) {
  const double two_over_sqrt_pi = 1.1283791670955125739;
  double term = x;
  double sum = x;
  const double x2 = x * x;
  for (int n = 1; n < 200; ++n) {
    term *= -x2 / n;
    const double contrib = term / (2 * n + 1);
    sum += contrib;
    if (std::abs(contrib) < 1e-18 * std::abs(sum)) break;
  }
  return two_over_sqrt_pi * sum;
}

// erfc by the Laplace continued fraction, accurate for x >= 2.
inline double erfc_cf(double x) {
  double f = 0.0;
  for (int k = 60; k >= 1; --k) f = (0.5 * k) / (x + f);
  const double inv_sqrt_pi = 0.56418958354775628695;
  return std::exp(-x * x) * inv_sqrt_pi / (x + f);
}

inline double erfc_oracle(double x) {
  if (x < 0.0) return 2.0 - erfc_oracle(-x);
  if (x < 2.0) return 1.0 - erf_series(x);
  return erfc_cf(x);
}

inline double normal_cdf(double x) { return 0.5 * erfc_oracle(-x * 0.7071067811865475244); }

inline double normal_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

// Composite Simpson; n must be even.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Gauss-Jordan inverse with partial pivoting; throws on singular input.
inline std::vector<double> invert_dense(std::vector<double> a, int n) {
  std::vector<double> inv(n * n, 0.0);
  for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < 1e-14) throw std::runtime_error("invert_dense: singular");
    if (piv != col)
      for (int c = 0; c < n; ++c) {
        std::swap(a[piv * n + c], a[col * n + c]);
        std::swap(inv[piv * n + c], inv[col * n + c]);
      }
    const double d = a[col * n + col];
    for (int c = 0; c < n; ++c) {
      a[col * n + c] /= d;
      inv[col * n + c] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double m = a[r * n + col];
      if (m == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        a[r * n + c] -= m * a[col * n + c];
        inv[r * n + c] -= m * inv[col * n + c];
      }
    }
  }
  return inv;
}

// Regularized lower incomplete gamma by the series alone (slow but simple).
inline double gammp_series(double a, double x) {
  if (x <= 0.0) return 0.0;
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double chi2_cdf_series(double x, int df) { return gammp_series(0.5 * df, 0.5 * x); }

using Mat2 = std::vector<std::array<double, 2>>;

// O(k^2) two-sample two-dimensional KS statistic: quadrant fractions at every
// anchor of each sample, anchor excluded from its own counts, full-size
// denominators, mean of the two per-sample maxima.
inline double ks2d_brute(const Mat2& a, const Mat2& b) {
  auto half = [](const Mat2& self, const Mat2& other) {
    double best = 0.0;
    for (std::size_t i = 0; i < self.size(); ++i) {
      const double x0 = self[i][0];
      const double y0 = self[i][1];
      long s[4] = {0, 0, 0, 0};
      long o[4] = {0, 0, 0, 0};
      for (std::size_t k = 0; k < self.size(); ++k) {
        if (k == i) continue;
        const int qx = self[k][0] > x0 ? 1 : 0;
        const int qy = self[k][1] > y0 ? 1 : 0;
        ++s[qx * 2 + qy];
      }
      for (std::size_t k = 0; k < other.size(); ++k) {
        const int qx = other[k][0] > x0 ? 1 : 0;
        const int qy = other[k][1] > y0 ? 1 : 0;
        ++o[qx * 2 + qy];
      }
      for (int q = 0; q < 4; ++q) {
        const double d = std::abs(s[q] / static_cast<double>(self.size()) -
                                  o[q] / static_cast<double>(other.size()));
        if (d > best) best = d;
      }
    }
    return best;
  };
  return 0.5 * (half(a, b) + half(b, a));
}

}  // namespace oracle
