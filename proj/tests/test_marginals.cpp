#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "copem/marginals.hpp"
#include "copem/rng.hpp"
#include "copem/simstudy.hpp"
#include "oracles.hpp"

using namespace copem;

namespace {

MixtureMarginal random_marginal(Rng& rng, int g_max = 4) {
  const int g = 1 + static_cast<int>(rng.next_uniform() * g_max);
  std::vector<double> centers(g);
  for (auto& c : centers) c = rng.next_normal() * 2.0;
  return MixtureMarginal(std::move(centers), 0.3 + rng.next_uniform() * 1.5);
}

// Centers close enough that the density has no numerically flat valley.
MixtureMarginal random_tight_marginal(Rng& rng, int g_max = 4) {
  const int g = 1 + static_cast<int>(rng.next_uniform() * g_max);
  std::vector<double> centers(g);
  for (auto& c : centers) c = (rng.next_uniform() - 0.5) * 4.0;
  return MixtureMarginal(std::move(centers), 0.7 + rng.next_uniform() * 0.8);
}

}  // namespace

TEST_SUITE("marginals") {

TEST_CASE("mix_cdf values and clamping") {
  const MixtureMarginal std_normal({0.0}, 1.0);
  CHECK(mix_cdf(std_normal, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  for (double x = -3.0; x <= 3.0; x += 0.41)
    CHECK(mix_cdf(std_normal, x) == doctest::Approx(std_normal_cdf(x)).epsilon(1e-15));

  const MixtureMarginal sym({-1.0, 1.0}, 1.0);
  CHECK(mix_cdf(sym, 0.0) == doctest::Approx(0.5).epsilon(1e-14));

  const MixtureMarginal two({0.0, 2.0}, 0.5);
  const double expected = 0.5 * (oracle::normal_cdf(0.0) + oracle::normal_cdf(-4.0));
  CHECK(mix_cdf(two, 0.0) == doctest::Approx(expected).epsilon(1e-9));

  // clamp keeps outputs inside [1e-12, 1-1e-12]
  CHECK(mix_cdf(std_normal, -100.0) == kCdfClamp);
  CHECK(mix_cdf(std_normal, 100.0) == 1.0 - kCdfClamp);
}

TEST_CASE("mix_cdf strictly increasing") {
  Rng rng(11);
  for (int t = 0; t < 4; ++t) {
    const MixtureMarginal m = random_tight_marginal(rng);
    for (int i = 0; i < 10000; ++i) {
      const double span = 6.0 * m.bandwidth;
      double x1 = m.min_center() - span + rng.next_uniform() * (m.max_center() - m.min_center() + 2 * span);
      double x2 = m.min_center() - span + rng.next_uniform() * (m.max_center() - m.min_center() + 2 * span);
      if (std::abs(x1 - x2) < 1e-4) continue;
      if (x1 > x2) std::swap(x1, x2);
      CHECK(mix_cdf(m, x1) < mix_cdf(m, x2));
    }
  }
}

TEST_CASE("mix_pdf: closed form, derivative of cdf, unit mass") {
  const MixtureMarginal std_normal({0.0}, 1.0);
  CHECK(mix_pdf(std_normal, 0.0) == doctest::Approx(0.3989423).epsilon(1e-6));

  const MixtureMarginal sym({-1.0, 1.0}, 1.0);
  CHECK(mix_pdf(sym, 0.0) ==
        doctest::Approx(0.5 * (oracle::normal_pdf(1.0) + oracle::normal_pdf(-1.0))).epsilon(1e-12));

  Rng rng(12);
  const MixtureMarginal m = random_marginal(rng);
  for (double x = -2.5; x <= 2.5; x += 0.61) {
    const double fd = oracle::central_diff([&](double t) { return mix_cdf(m, t); }, x, 1e-6);
    CHECK(mix_pdf(m, x) == doctest::Approx(fd).epsilon(1e-6));
  }

  const double lo = m.min_center() - 40.0 * m.bandwidth;
  const double hi = m.max_center() + 40.0 * m.bandwidth;
  const double mass = oracle::simpson([&](double x) { return mix_pdf(m, x); }, lo, hi, 40000);
  CHECK(std::abs(mass - 1.0) < 1e-8);
}

TEST_CASE("mix_quantile inverts mix_cdf") {
  const MixtureMarginal std_normal({0.0}, 1.0);
  CHECK(mix_quantile(std_normal, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  const MixtureMarginal sym({-1.0, 1.0}, 1.0);
  CHECK(mix_quantile(sym, 0.5) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK_THROWS_AS(mix_quantile(sym, 0.0), std::domain_error);
  CHECK_THROWS_AS(mix_quantile(sym, 1.0), std::domain_error);

  Rng rng(13);
  for (int t = 0; t < 4; ++t) {
    const MixtureMarginal m = random_tight_marginal(rng);
    for (int i = 0; i < 60; ++i) {
      const double x = m.min_center() - 3 * m.bandwidth +
                       rng.next_uniform() * (m.max_center() - m.min_center() + 6 * m.bandwidth);
      CHECK(mix_quantile(m, mix_cdf(m, x)) == doctest::Approx(x).epsilon(1e-8));
    }
    for (double u : {1e-9, 1e-4, 0.031, 0.5, 0.812, 1.0 - 1e-5, 1.0 - 1e-9})
      CHECK(std::abs(mix_cdf(m, mix_quantile(m, u)) - u) <= 1e-10);
  }
}

TEST_CASE("gaussianize: identity for the standard normal, monotone, symmetric") {
  const MixtureMarginal std_normal({0.0}, 1.0);
  for (double x = -5.0; x <= 5.0; x += 0.37)
    CHECK(gaussianize(std_normal, x) == doctest::Approx(x).epsilon(1e-10));

  const MixtureMarginal sym({-1.0, 1.0}, 1.0);
  CHECK(std::abs(gaussianize(sym, 0.0)) < 1e-13);

  // strictly monotone inside the unclamped range (the cdf clamp flattens the
  // transform beyond ~7 bandwidths)
  Rng rng(14);
  const MixtureMarginal m = random_tight_marginal(rng);
  double prev = gaussianize(m, m.min_center() - 6.3 * m.bandwidth);
  for (double x = m.min_center() - 6.2 * m.bandwidth; x < m.max_center() + 6.3 * m.bandwidth;
       x += 0.13) {
    const double cur = gaussianize(m, x);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("gaussianize_grad matches finite differences") {
  const MixtureMarginal std_normal({0.0}, 1.0);
  const auto g0 = gaussianize_grad(std_normal, 0.0);
  CHECK(g0[0] == doctest::Approx(-1.0).epsilon(1e-9));

  Rng rng(15);
  for (int t = 0; t < 100; ++t) {
    MixtureMarginal m = random_marginal(rng);
    // draw x from the bulk of the mixture: far tails make the central
    // difference itself ill-conditioned without saying anything about the formula
    const double x = mix_quantile(m, 0.05 + 0.9 * rng.next_uniform());
    const auto grad = gaussianize_grad(m, x);
    for (int k = 0; k < m.g(); ++k) {
      CHECK(grad[k] <= 0.0);  // raising any center shifts mass right, lowering F
      if (std::abs((x - m.centers[k]) / m.bandwidth) < 35.0) CHECK(grad[k] < 0.0);
      const double h = 1e-6 * (1.0 + std::abs(m.centers[k]));
      MixtureMarginal up = m, dn = m;
      up.centers[k] += h;
      dn.centers[k] -= h;
      // perturbation may break ordering; evaluate the sum directly (order-free)
      const double fd = (gaussianize(MixtureMarginal(up.centers, m.bandwidth), x) -
                         gaussianize(MixtureMarginal(dn.centers, m.bandwidth), x)) /
                        (2.0 * h);
      CHECK(std::abs(grad[k] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }

  // distant center contributes nothing at a far-tail x
  const MixtureMarginal far({0.0, 30.0}, 1.0);
  const auto gf = gaussianize_grad(far, -2.0);
  const double h = 1e-6 * 31.0;
  MixtureMarginal up = far, dn = far;
  up.centers[1] += h;
  dn.centers[1] -= h;
  const double fd = (gaussianize(up, -2.0) - gaussianize(dn, -2.0)) / (2.0 * h);
  CHECK(std::abs(gf[1]) < 1e-8);
  CHECK(std::abs(gf[1] - fd) < 1e-8);
}

TEST_CASE("logpdf_grad matches finite differences and symmetry") {
  const MixtureMarginal std_normal({0.0}, 1.0);
  CHECK(logpdf_grad(std_normal, 1.0)[0] == doctest::Approx(1.0).epsilon(1e-12));

  const MixtureMarginal sym({-1.0, 1.0}, 1.0);
  const auto gs = logpdf_grad(sym, 0.0);
  CHECK(gs[0] == doctest::Approx(-gs[1]).epsilon(1e-12));

  Rng rng(16);
  for (int t = 0; t < 100; ++t) {
    MixtureMarginal m = random_marginal(rng);
    const double x = mix_quantile(m, 0.05 + 0.9 * rng.next_uniform());
    const auto grad = logpdf_grad(m, x);
    for (int k = 0; k < m.g(); ++k) {
      const double h = 1e-6 * (1.0 + std::abs(m.centers[k]));
      MixtureMarginal up = m, dn = m;
      up.centers[k] += h;
      dn.centers[k] -= h;
      const double fd = (std::log(mix_pdf(MixtureMarginal(up.centers, m.bandwidth), x)) -
                         std::log(mix_pdf(MixtureMarginal(dn.centers, m.bandwidth), x))) /
                        (2.0 * h);
      CHECK(std::abs(grad[k] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("center order never matters") {
  Rng rng(17);
  std::vector<double> centers{1.4, -0.3, 0.9, 2.2};
  const MixtureMarginal sorted_m(centers, 0.7);
  std::vector<double> shuffled{2.2, 0.9, 1.4, -0.3};
  const MixtureMarginal shuffled_m(shuffled, 0.7);  // constructor re-sorts
  for (double x = -2.0; x <= 4.0; x += 0.3)
    CHECK(mix_cdf(sorted_m, x) == mix_cdf(shuffled_m, x));
  (void)rng;
}

TEST_CASE("init_from_observed: quantile centers and Silverman bandwidth") {
  const MixtureMarginal m = init_from_observed({1.0, 2.0, 3.0, 4.0}, 2);
  REQUIRE(m.g() == 2);
  CHECK(m.centers[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(m.centers[1] == doctest::Approx(3.5).epsilon(1e-12));

  // g=1: the single center is the sample median
  CHECK(init_from_observed({5.0, 1.0, 3.0}, 1).centers[0] == doctest::Approx(3.0));
  CHECK(init_from_observed({1.0, 2.0, 3.0, 4.0}, 1).centers[0] == doctest::Approx(2.5));

  // degenerate sample hits the bandwidth floor
  const MixtureMarginal flat = init_from_observed({2.0, 2.0, 2.0}, 1);
  CHECK(flat.bandwidth == doctest::Approx(1e-6).epsilon(1e-12));

  CHECK_THROWS_AS(init_from_observed({1.0, 2.0}, 3), ConfigError);
  CHECK_THROWS_AS(init_from_observed({1.0}, 0), ConfigError);
}

TEST_CASE("g=15 marginal initialized from chi2(6) samples tracks the true cdf") {
  Rng rng(18);
  const int n = 10000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = chi2_quantile(rng.next_uniform(), 6);
  const MixtureMarginal m = init_from_observed(xs, 15);

  auto sup_err = [&](const MixtureMarginal& marg) {
    double sup = 0.0;
    for (double x = 0.0; x <= 25.0; x += 0.05)
      sup = std::max(sup, std::abs(mix_cdf(marg, x) - oracle::chi2_cdf_series(x, 6)));
    return sup;
  };

  // The g-based Silverman bandwidth (~1.7 here) carries an irreducible cdf
  // smoothing bias of about bw^2/2 * max f', so ~0.05 is the attainable level
  // for the initializer itself.
  CHECK(sup_err(m) < 0.07);

  // The family is flexible enough: the same centers with a tighter bandwidth
  // land within 0.02 of the true cdf.
  CHECK(sup_err(MixtureMarginal(m.centers, 0.8)) < 0.02);
}

}  // TEST_SUITE
