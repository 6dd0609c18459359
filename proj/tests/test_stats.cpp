#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "walsh/noise.hpp"
#include "walsh/sde_sim.hpp"
#include "walsh/stats.hpp"

#include <cmath>

using namespace walsh;

TEST_CASE("distribution functions against known values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));
  CHECK(chi_square_survival(3.841458821, 1) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_square_survival(5.991464547, 2) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_square_survival(13.27670414, 4) == doctest::Approx(0.01).epsilon(1e-6));
  // gamma_p(1/2, x) = erf(sqrt(x))
  for (double x : {0.1, 0.5, 2.0, 5.0})
    CHECK(gamma_p(0.5, x) == doctest::Approx(std::erf(std::sqrt(x))).epsilon(1e-10));
  CHECK(kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(ks_critical_value(10000, 0.05) == doctest::Approx(1.3581 / 100.0).epsilon(1e-3));
  CHECK(arcsine_cdf(0.5, 1.0) == doctest::Approx(0.5));
  CHECK(arcsine_cdf(0.14644660940672624, 1.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(half_normal_cdf(0.6744897501960817, 1.0) == doctest::Approx(0.5).epsilon(1e-9));
  // skew-BM marginal: continuous, mass p_plus on the positive side
  CHECK(skew_bm_cdf(0.0, 1.0, 0.3) == doctest::Approx(0.7));
  CHECK(skew_bm_cdf(1e9, 1.0, 0.3) == doctest::Approx(1.0));
  CHECK(skew_bm_cdf(-1e9, 1.0, 0.3) == doctest::Approx(0.0));
}

TEST_CASE("mc_mean: trivial and oracle cases") {
  CHECK_THROWS_AS(mc_mean(Eigen::ArrayXd::Constant(1, 3.0)), std::invalid_argument);

  const Eigen::ArrayXd constant = Eigen::ArrayXd::Constant(50, 2.5);
  const EstimateReport c = mc_mean(constant);
  CHECK(c.estimate == doctest::Approx(2.5));
  CHECK(c.stderror == doctest::Approx(0.0));
  CHECK(c.ci_low <= c.estimate);
  CHECK(c.estimate <= c.ci_high);

  const int n = 1'000'000;
  Eigen::ArrayXd z(n);
  const SeedSpec seed{2222, 1};
  for (int i = 0; i < n; ++i) z[i] = rng_normal(seed, i);
  CHECK(std::abs(mc_mean(z).estimate) < 0.004);

  Eigen::ArrayXd half = z.abs().head(100000);
  const EstimateReport h = mc_mean(half);
  CHECK(std::abs(h.estimate - std::sqrt(2.0 / M_PI)) < 3.0 * h.stderror);
}

TEST_CASE("mc_mean: CI width scales like n^{-1/2}") {
  const SeedSpec seed{2223, 1};
  Eigen::ArrayXd z(100000);
  for (int i = 0; i < z.size(); ++i) z[i] = rng_normal(seed, i);
  const double w3 = mc_mean(z.head(1000)).ci_high - mc_mean(z.head(1000)).ci_low;
  const double w4 = mc_mean(z.head(10000)).ci_high - mc_mean(z.head(10000)).ci_low;
  const double w5 = mc_mean(z).ci_high - mc_mean(z).ci_low;
  CHECK(w3 / w4 == doctest::Approx(std::sqrt(10.0)).epsilon(0.10));
  CHECK(w4 / w5 == doctest::Approx(std::sqrt(10.0)).epsilon(0.10));
}

TEST_CASE("chi-square independence: oracles and symmetry") {
  // perfectly correlated pairs: astronomically small p-value
  std::vector<std::pair<int, int>> diag;
  const SeedSpec seed{31, 1};
  for (int k = 0; k < 10000; ++k) {
    const int i = 1 + static_cast<int>(rng_uniform(seed, k) * 3);
    diag.emplace_back(std::min(i, 3), std::min(i, 3));
  }
  CHECK(chi_square_independence(diag, 3).p_value < 1e-6);

  // symmetry under swapping the pair coordinates
  std::vector<std::pair<int, int>> pairs, swapped;
  for (int k = 0; k < 5000; ++k) {
    const int i = 1 + static_cast<int>(rng_uniform(seed, 2 * k + 100000) * 3);
    const int j = 1 + static_cast<int>(rng_uniform(seed, 2 * k + 100001) * 3);
    pairs.emplace_back(std::min(i, 3), std::min(j, 3));
    swapped.emplace_back(std::min(j, 3), std::min(i, 3));
  }
  CHECK(chi_square_independence(pairs, 3).statistic ==
        doctest::Approx(chi_square_independence(swapped, 3).statistic));

  std::vector<std::pair<int, int>> tiny(10, {1, 1});
  CHECK_THROWS_AS(chi_square_independence(tiny, 3), std::invalid_argument);
}

TEST_CASE("chi-square independence: calibrated under the null") {
  const SeedSpec seed{32, 1};
  int rejects = 0;
  const int reps = 100;
  std::uint64_t idx = 0;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(2000);
    for (int k = 0; k < 2000; ++k) {
      const int i = 1 + static_cast<int>(rng_uniform(seed, idx++) * 3);
      const int j = 1 + static_cast<int>(rng_uniform(seed, idx++) * 3);
      pairs.emplace_back(std::min(i, 3), std::min(j, 3));
    }
    if (chi_square_independence(pairs, 3).reject_at_5pct) ++rejects;
  }
  CHECK(rejects >= 1);
  CHECK(rejects <= 12);
}

TEST_CASE("martingale test: null calibration on Brownian increments") {
  const SeedSpec seed{33, 1};
  int rejects = 0;
  const int reps = 100;
  const int n = 400;
  std::uint64_t idx = 0;
  for (int rep = 0; rep < reps; ++rep) {
    Eigen::ArrayXd m1(n), m2(n);
    Eigen::ArrayXXd features(n, 4);
    for (int i = 0; i < n; ++i) {
      const double a = rng_normal(seed, idx++);
      const double b = rng_normal(seed, idx++);
      m1[i] = a;
      m2[i] = a + b;
      features(i, 0) = 1.0;
      features(i, 1) = std::clamp(a, -2.0, 2.0);
      features(i, 2) = a > 0 ? 1.0 : 0.0;
      features(i, 3) = std::min(std::abs(a), 2.0);
    }
    if (martingale_test(m1, m2, features).reject_at_5pct) ++rejects;
  }
  CHECK(rejects >= 1);
  CHECK(rejects <= 12);
}

TEST_CASE("martingale test: radial submartingale is rejected") {
  const StarGraph g = StarGraph::uniform(3);
  const int n = 2000;
  Eigen::ArrayXd m1(n), m2(n);
  Eigen::ArrayXXd features = Eigen::ArrayXXd::Ones(n, 1);
  for (int i = 0; i < n; ++i) {
    const SamplePath p =
        simulate_wbm_exact(g, 1.0, 1e-2, SeedSpec{34, static_cast<std::uint64_t>(i)});
    m1[i] = p.points[p.grid_index(0.5)].radius;
    m2[i] = p.points.back().radius;
  }
  const TestOutcome outcome = martingale_test(m1, m2, features);
  CHECK(outcome.p_value < 0.01);
  CHECK_THROWS_AS(martingale_test(m1, m2, Eigen::ArrayXXd(n, 0)), std::invalid_argument);
}

TEST_CASE("ks test: calibration and oracle laws") {
  const SeedSpec seed{35, 1};
  int rejects = 0;
  std::uint64_t idx = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::ArrayXd u(500);
    for (int i = 0; i < 500; ++i) u[i] = rng_uniform(seed, idx++);
    if (ks_test(u, [](double x) { return std::clamp(x, 0.0, 1.0); }).reject_at_5pct)
      ++rejects;
  }
  CHECK(rejects >= 1);
  CHECK(rejects <= 12);

  Eigen::ArrayXd small(50);
  CHECK_THROWS_AS(ks_test(small, [](double) { return 0.5; }), std::invalid_argument);
}

TEST_CASE("ks test: skew projection of a non-uniform three-ray motion") {
  Eigen::ArrayXd probs(3);
  probs << 0.5, 0.25, 0.25;
  const StarGraph g(3, probs);
  const int n = 20000;
  Eigen::ArrayXd proj(n);
  for (int i = 0; i < n; ++i) {
    const SamplePath p =
        simulate_wbm_exact(g, 1.0, 0.01, SeedSpec{36, static_cast<std::uint64_t>(i)});
    const GraphPoint& x = p.points.back();
    proj[i] = (x.ray == 1) ? x.radius : -x.radius;
  }
  const TestOutcome ks =
      ks_test(proj, [](double x) { return skew_bm_cdf(x, 1.0, 0.5); });
  CHECK(ks.statistic < ks_critical_value(n, 0.01));
}

TEST_CASE("vanishing scan: Gaussian near-zero probabilities have exponent 1") {
  const SeedSpec seed{37, 1};
  const int n = 100000;
  Eigen::ArrayXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng_normal(seed, i);
  std::vector<ScanPoint> points;
  for (double delta : {0.1, 0.05, 0.025}) {
    const auto count = static_cast<std::int64_t>((z.abs() < delta).count());
    points.push_back({delta, binomial_report(count, n, "p_below")});
  }
  const ScanReport report = vanishing_scan(points);
  CHECK(report.decreasing);
  CHECK(report.extremes_separated);
  CHECK(report.exponent == doctest::Approx(1.0).epsilon(0.15));

  points.pop_back();
  CHECK_THROWS_AS(vanishing_scan(points), std::invalid_argument);
}
