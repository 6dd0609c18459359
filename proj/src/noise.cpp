#include "walsh/noise.hpp"

#include <cmath>

namespace walsh {

namespace {

constexpr std::uint64_t kPhiloxM = 0xD2B74407B1CE6E93ULL;
constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;

inline void philox_round(std::uint64_t& c0, std::uint64_t& c1, std::uint64_t& key) {
  const unsigned __int128 prod = static_cast<unsigned __int128>(kPhiloxM) * c0;
  const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
  const std::uint64_t lo = static_cast<std::uint64_t>(prod);
  c0 = hi ^ key ^ c1;
  c1 = lo;
  key += kWeyl;
}

}  // namespace

SeedSpec substream(const SeedSpec& seed, std::uint64_t tag) {
  return {seed.master_seed, seed.stream_id ^ (tag << 56)};
}

std::uint64_t rng_u64(const SeedSpec& seed, std::uint64_t index) {
  std::uint64_t c0 = index;
  std::uint64_t c1 = seed.stream_id;
  std::uint64_t key = seed.master_seed;
  for (int round = 0; round < 10; ++round) philox_round(c0, c1, key);
  return c0;
}

double rng_uniform(const SeedSpec& seed, std::uint64_t index) {
  // 53-bit mantissa shifted into (0,1); never returns an endpoint.
  return static_cast<double>(rng_u64(seed, index) >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double rng_normal(const SeedSpec& seed, std::uint64_t index) {
  return normal_inverse_cdf(rng_uniform(seed, index));
}

double normal_inverse_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("normal_inverse_cdf: p must lie in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -x : x;
}

Eigen::ArrayXXd DriverPath::cumulative() const {
  Eigen::ArrayXXd out(increments.rows(), increments.cols());
  Eigen::ArrayXd running = Eigen::ArrayXd::Zero(increments.cols());
  for (Eigen::Index k = 0; k < increments.rows(); ++k) {
    running += increments.row(k).transpose();
    out.row(k) = running.transpose();
  }
  return out;
}

DriverPath gen_driver(int n_rays, double dt, int steps, const SeedSpec& seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("gen_driver: dt must be positive");
  if (steps < 1) throw std::invalid_argument("gen_driver: steps must be >= 1");
  if (n_rays < 1) throw std::invalid_argument("gen_driver: n_rays must be >= 1");
  DriverPath path;
  path.dt = dt;
  path.increments.resize(steps, n_rays);
  const double scale = std::sqrt(dt);
  for (int k = 0; k < steps; ++k)
    for (int i = 0; i < n_rays; ++i)
      path.increments(k, i) =
          scale * rng_normal(seed, static_cast<std::uint64_t>(k) * n_rays + i);
  return path;
}

DriverPath mix_drivers(const DriverPath& w, const DriverPath& w_hat, double r) {
  if (w.increments.rows() != w_hat.increments.rows() ||
      w.increments.cols() != w_hat.increments.cols() || w.dt != w_hat.dt)
    throw std::invalid_argument("mix_drivers: shape or dt mismatch");
  if (!(r >= -1.0 && r <= 1.0))
    throw std::invalid_argument("mix_drivers: r must lie in [-1,1]");
  DriverPath out;
  out.dt = w.dt;
  out.increments = r * w.increments + std::sqrt(1.0 - r * r) * w_hat.increments;
  return out;
}

}  // namespace walsh
