// Path generation on the star graph: an exact Walsh Brownian motion sampler
// built on the Levy transform with exactly sampled per-step bridge minima, a
// Euler scheme for the interface SDE, couplings sharing one driver, and the
// reconstruction of a driver pair (W, W_hat) from a given solution path.
#pragma once

#include "walsh/noise.hpp"
#include "walsh/star_graph.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace walsh {

// One path on a uniform grid of K steps. points has K+1 entries; the
// increment arrays have K. Invariants maintained by every simulator:
//   radius(points[k]) - radius(points[0]) - sum_{j<k} bx_increments[j]
//     == local_time[k] - local_time[0]   (exactly, per construction)
// and local_time is nondecreasing, increasing only across steps that touch
// the origin. zero_visit[k+1] flags a step during which the path visited the
// origin; ray_used[k] is the driver coordinate integrated over step k.
struct SamplePath {
  double dt = 0.0;
  std::vector<GraphPoint> points;
  Eigen::ArrayXd bx_increments;
  Eigen::ArrayXd local_time;
  Eigen::ArrayXi ray_used;
  std::vector<std::uint8_t> zero_visit;

  int steps() const { return static_cast<int>(bx_increments.size()); }
  double horizon() const { return dt * steps(); }

  // Index of the last grid time <= t (grid_index(t) = floor(t/dt) clamped).
  int grid_index(double t) const;

  // Radial series |X_{t_k}| as an array of K+1 values.
  Eigen::ArrayXd radial() const;
};

// Two paths driven by one N-dimensional driver. When r is present, x_path was
// driven by mix_drivers(w, w_hat, r) and y_path by w.
struct CouplingRun {
  SamplePath x_path;
  SamplePath y_path;
  DriverPath w;
  std::optional<DriverPath> w_hat;
  std::optional<double> r;
};

// Exact Walsh Brownian motion on [0, t_max]. The radial part is the Levy
// transform |X_t| = B_t - min_{s<=t} B_s of a scalar driver B, with the
// within-step minimum of B sampled exactly from the Brownian bridge law, so
// the radial path has the exact reflected-BM law at all grid times jointly.
// Excursions (maximal stretches with no origin visit) get i.i.d. ray labels
// with probabilities p_i. A start off the origin runs as scalar BM on its
// initial ray until the first origin visit.
SamplePath simulate_wbm_exact(const StarGraph& g, double t_max, double dt,
                              const SeedSpec& seed,
                              const GraphPoint& x0 = GraphPoint::origin());

// Grid scheme for the interface SDE driven by w. Over step k the radius
// follows the coordinate of the current ray; the within-step minimum of the
// ride is sampled exactly from the Brownian bridge law, so origin visits are
// detected without a threshold and the radial part has the exact reflected
// law at all grid times. A step that touches the origin ends on a fresh ray
// drawn with probabilities p_j (stream seed_rays) carrying the rebound
// radius. ray_used[k] is the coordinate actually integrated (the ray at the
// start of the step); the point after a touching step carries the fresh ray.
SamplePath simulate_interface_euler(const StarGraph& g, const DriverPath& w,
                                    const SeedSpec& seed_rays,
                                    const GraphPoint& x0 = GraphPoint::origin());

// Runs simulate_interface_euler twice with the same w and independent ray
// streams: the only randomness beyond W is the i.i.d. ray choices, so the two
// legs are independent given W by construction.
CouplingRun simulate_wiener_coupling(const StarGraph& g, const DriverPath& w,
                                     const SeedSpec& seeds_x, const SeedSpec& seeds_y);

// X driven by mix_drivers(w, w_hat, r), Y driven by w, independent ray streams.
CouplingRun simulate_r_coupling(const StarGraph& g, const DriverPath& w,
                                const DriverPath& w_hat, double r,
                                const SeedSpec& seeds_x, const SeedSpec& seeds_y);

// n Euler paths sharing w with pairwise-distinct ray streams (the op consumes
// the contiguous stream-id block [seeds.stream_id, seeds.stream_id + n)).
// Empirical averages over the copies estimate E[f(X_t) | W].
std::vector<SamplePath> simulate_conditional_ensemble(const StarGraph& g,
                                                      const DriverPath& w, int n,
                                                      const SeedSpec& seeds);

// Rebuilds a driver pair from a solution path: draws 2N fresh coordinate
// streams V^1..V^{2N} and sets, per step,
//   dGamma^i = 1_{ray_used=i} dB^X + 1_{ray_used!=i} dV^i,
//   dW^i     = r dGamma^i + sqrt(1-r^2) dV^{i+N},
//   dW_hat^i = sqrt(1-r^2) dGamma^i - r dV^{i+N},
// so that (X, mix_drivers(W, W_hat, r)) solves the interface SDE on the grid.
std::pair<DriverPath, DriverPath> construct_driver_from_solution(
    const StarGraph& g, const SamplePath& x, double r, const SeedSpec& seeds);

}  // namespace walsh
