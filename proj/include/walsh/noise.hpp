// Deterministic generation of the N-dimensional Brownian driver.
//
// All randomness is counter-based: a draw is a pure function of
// (master_seed, stream_id, index), so paths can be produced by any number of
// workers in any order and still be bit-identical. Gaussians come from the
// inverse normal CDF applied to the counter output, which keeps the mapping
// monotone and reproducible across platforms.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace walsh {

// Identifies one independent random stream. Distinct (master_seed, stream_id)
// pairs give statistically independent streams.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

// Derives a sub-stream for an internal purpose (driver coordinates, bridge
// uniforms, ray choices, ...). Tags occupy the top byte of the stream id;
// callers keep that byte zero when building stream ids.
SeedSpec substream(const SeedSpec& seed, std::uint64_t tag);

// Stateless counter-based generator (Philox 2x64-10). `index` is the counter.
std::uint64_t rng_u64(const SeedSpec& seed, std::uint64_t index);

// Uniform draw in the open interval (0,1).
double rng_uniform(const SeedSpec& seed, std::uint64_t index);

// Standard normal draw via the inverse CDF of the uniform output.
double rng_normal(const SeedSpec& seed, std::uint64_t index);

// Inverse of the standard normal CDF (Wichura's PPND16 rational
// approximations; accurate to ~1e-15 over (0,1)).
double normal_inverse_cdf(double p);

// Increments of an N-dimensional Brownian driver on a uniform grid.
// increments(k, i) is the step-k increment of coordinate W^{i+1}; each entry
// is centered Gaussian with variance dt, independent across entries.
struct DriverPath {
  double dt = 0.0;
  Eigen::ArrayXXd increments;  // steps x n_rays

  int steps() const { return static_cast<int>(increments.rows()); }
  int n_rays() const { return static_cast<int>(increments.cols()); }

  // Cumulative sum: value of W^{i+1} at grid time (k+1) dt.
  Eigen::ArrayXXd cumulative() const;
};

// Draws the driver increments for `steps` steps of size dt.
DriverPath gen_driver(int n_rays, double dt, int steps, const SeedSpec& seed);

// Entrywise c1 * w + c2 * w_hat with (c1, c2) = (r, sqrt(1-r^2)). Accepts
// r in [-1, 1]: mix_drivers(w_hat, w, -r) yields the independent complement
// sqrt(1-r^2) W - r W_hat.
DriverPath mix_drivers(const DriverPath& w, const DriverPath& w_hat, double r);

}  // namespace walsh
