#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "walsh/noise.hpp"
#include "walsh/stats.hpp"

#include <cmath>

using namespace walsh;

TEST_CASE("gen_driver is deterministic and validates input") {
  const SeedSpec seed{123456789ULL, 42ULL};
  const DriverPath a = gen_driver(3, 0.01, 100, seed);
  const DriverPath b = gen_driver(3, 0.01, 100, seed);
  CHECK((a.increments == b.increments).all());
  CHECK(a.dt == 0.01);
  CHECK(a.steps() == 100);
  CHECK(a.n_rays() == 3);
  CHECK_THROWS_AS(gen_driver(3, 0.0, 10, seed), std::invalid_argument);
  CHECK_THROWS_AS(gen_driver(3, 0.01, 0, seed), std::invalid_argument);
}

TEST_CASE("increment moments match the CLT and chi-square oracles") {
  const double dt = 0.01;
  const DriverPath w = gen_driver(1, dt, 1'000'000, SeedSpec{987, 6});
  const auto n = static_cast<double>(w.increments.size());
  const double mean = w.increments.mean();
  // 4 sigma CLT band around zero
  CHECK(std::abs(mean) < 4.0 * std::sqrt(dt / n));
  const double var = (w.increments - mean).square().sum() / (n - 1.0);
  // chi-square concentration: relative sd of the variance is sqrt(2/n) ~ 0.14%
  CHECK(var == doctest::Approx(dt).epsilon(0.01));
}

TEST_CASE("normal inverse cdf round-trips the normal cdf") {
  for (double p : {1e-12, 1e-6, 0.025, 0.31, 0.5, 0.77, 0.975, 1.0 - 1e-10}) {
    CHECK(normal_cdf(normal_inverse_cdf(p)) == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK_THROWS_AS(normal_inverse_cdf(0.0), std::domain_error);
  CHECK_THROWS_AS(normal_inverse_cdf(1.0), std::domain_error);
}

TEST_CASE("mix_drivers endpoints and correlation") {
  const double dt = 2e-3;
  const DriverPath w = gen_driver(2, dt, 500'000, SeedSpec{55, 10});
  const DriverPath w_hat = gen_driver(2, dt, 500'000, SeedSpec{55, 11});

  CHECK((mix_drivers(w, w_hat, 1.0).increments == w.increments).all());
  CHECK((mix_drivers(w, w_hat, 0.0).increments == w_hat.increments).all());

  const DriverPath mixed = mix_drivers(w, w_hat, 0.8);
  const auto n = static_cast<double>(mixed.increments.size());
  const double cov = (mixed.increments * w.increments).sum() / n;
  const double corr =
      cov / std::sqrt((mixed.increments.square().sum() / n) *
                      (w.increments.square().sum() / n));
  // Fisher-z 4-sigma band at n = 1e6 is ~0.0014; 0.005 per the stated bound.
  CHECK(std::abs(corr - 0.8) < 0.005);

  DriverPath short_path = gen_driver(2, dt, 10, SeedSpec{55, 12});
  CHECK_THROWS_AS(mix_drivers(w, short_path, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(mix_drivers(w, w_hat, 1.5), std::invalid_argument);
}

TEST_CASE("mixture preserves per-entry variance for every r") {
  const double dt = 5e-3;
  const DriverPath w = gen_driver(1, dt, 400'000, SeedSpec{77, 20});
  const DriverPath w_hat = gen_driver(1, dt, 400'000, SeedSpec{77, 21});
  for (double r : {0.0, 0.3, 0.7, 0.95, 1.0}) {
    const DriverPath mixed = mix_drivers(w, w_hat, r);
    const double var =
        mixed.increments.square().sum() / static_cast<double>(mixed.increments.size());
    CHECK(var == doctest::Approx(dt).epsilon(0.015));
  }
}

TEST_CASE("independent complement via negative r") {
  const double dt = 1e-2;
  const DriverPath w = gen_driver(1, dt, 200'000, SeedSpec{99, 30});
  const DriverPath w_hat = gen_driver(1, dt, 200'000, SeedSpec{99, 31});
  const double r = 0.6;
  const DriverPath w_r = mix_drivers(w, w_hat, r);
  const DriverPath complement = mix_drivers(w_hat, w, -r);  // sqrt(1-r^2) W - r W_hat
  const auto n = static_cast<double>(w_r.increments.size());
  const double corr = (w_r.increments * complement.increments).sum() / (n * dt);
  CHECK(std::abs(corr) < 4.0 / std::sqrt(n));
}

TEST_CASE("distinct streams are uncorrelated") {
  const DriverPath a = gen_driver(1, 1.0, 1'000'000, SeedSpec{2024, 100});
  const DriverPath b = gen_driver(1, 1.0, 1'000'000, SeedSpec{2024, 101});
  const auto n = static_cast<double>(a.increments.size());
  const double corr = (a.increments * b.increments).sum() / n;
  CHECK(std::abs(corr) < 4.0 / std::sqrt(n));
}

TEST_CASE("normalized increments pass the 1% KS test") {
  const double dt = 0.25;
  const DriverPath w = gen_driver(1, dt, 100'000, SeedSpec{31337, 200});
  Eigen::ArrayXd z = w.increments.col(0) / std::sqrt(dt);
  const TestOutcome ks = ks_test(z, [](double x) { return normal_cdf(x); });
  CHECK(ks.statistic < ks_critical_value(z.size(), 0.01));
}

TEST_CASE("substream tags move the stream id top byte") {
  const SeedSpec seed{1, 2};
  CHECK(substream(seed, 3).stream_id == (2ULL ^ (3ULL << 56)));
  CHECK(substream(seed, 3).master_seed == 1ULL);
}
