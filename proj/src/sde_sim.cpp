#include "walsh/sde_sim.hpp"

#include <algorithm>
#include <cmath>

namespace walsh {

namespace {

// Substream purpose tags (top byte of the stream id).
constexpr std::uint64_t kTagScalarDriver = 1;
constexpr std::uint64_t kTagBridgeMin = 2;
constexpr std::uint64_t kTagExcursionLabel = 3;
constexpr std::uint64_t kTagRayChoice = 4;
constexpr std::uint64_t kTagDriverRecon = 16;  // 16..16+2N-1 for V^1..V^{2N}

int draw_label(const StarGraph& g, const SeedSpec& stream, std::uint64_t index) {
  double u = rng_uniform(stream, index);
  for (int i = 0; i < g.n_rays - 1; ++i) {
    u -= g.probs[i];
    if (u <= 0.0) return i + 1;
  }
  return g.n_rays;
}

int step_count(double t_max, double dt) {
  if (!(dt > 0.0) || !(t_max > 0.0))
    throw std::invalid_argument("simulate: t_max and dt must be positive");
  const int steps = static_cast<int>(std::ceil(t_max / dt - 1e-9));
  return std::max(steps, 1);
}

void init_path(SamplePath& path, double dt, int steps) {
  path.dt = dt;
  path.points.resize(steps + 1);
  path.bx_increments.resize(steps);
  path.local_time = Eigen::ArrayXd::Zero(steps + 1);
  path.ray_used.resize(steps);
  path.zero_visit.assign(steps + 1, 0);
}

// Minimum of a Brownian bridge over one step, sampled by inversion:
// given endpoints a, b over duration dt, m = (a + b - sqrt((b-a)^2 - 2 dt log u)) / 2.
double bridge_min(double a, double b, double dt, double u) {
  const double d = b - a;
  return 0.5 * (a + b - std::sqrt(d * d - 2.0 * dt * std::log(u)));
}

}  // namespace

int SamplePath::grid_index(double t) const {
  const int k = static_cast<int>(std::floor(t / dt + 1e-9));
  return std::clamp(k, 0, steps());
}

Eigen::ArrayXd SamplePath::radial() const {
  Eigen::ArrayXd out(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) out[k] = points[k].radius;
  return out;
}

SamplePath simulate_wbm_exact(const StarGraph& g, double t_max, double dt,
                              const SeedSpec& seed, const GraphPoint& x0) {
  if (!x0.is_origin() && !g.valid_ray(x0.ray))
    throw std::out_of_range("simulate_wbm_exact: x0 ray out of range");
  const int steps = step_count(t_max, dt);
  const SeedSpec s_driver = substream(seed, kTagScalarDriver);
  const SeedSpec s_bridge = substream(seed, kTagBridgeMin);
  const SeedSpec s_label = substream(seed, kTagExcursionLabel);

  SamplePath path;
  init_path(path, dt, steps);
  path.points[0] = x0;
  path.zero_visit[0] = x0.is_origin() ? 1 : 0;

  const double scale = std::sqrt(dt);
  double v = x0.radius;        // scalar driver level, offset by the start radius
  double running_min = v;      // continuous-time running minimum of v + B
  int label = x0.ray;          // 0 until the first origin visit from an origin start

  for (int k = 0; k < steps; ++k) {
    const double db = scale * rng_normal(s_driver, static_cast<std::uint64_t>(k));
    const double v_next = v + db;
    const double m = bridge_min(v, v_next, dt, rng_uniform(s_bridge, k));
    const bool touched = (m <= 0.0) && (m < running_min);
    if (touched) label = draw_label(g, s_label, k);
    running_min = std::min(running_min, m);

    const double radius = v_next - std::min(running_min, 0.0);
    path.points[k + 1] =
        radius > 0.0 ? GraphPoint::on_ray(label, radius) : GraphPoint::origin();
    path.bx_increments[k] = db;
    path.local_time[k + 1] = -std::min(running_min, 0.0);
    path.zero_visit[k + 1] = touched ? 1 : 0;
    path.ray_used[k] = label;
    v = v_next;
  }
  return path;
}

SamplePath simulate_interface_euler(const StarGraph& g, const DriverPath& w,
                                    const SeedSpec& seed_rays, const GraphPoint& x0) {
  if (w.n_rays() != g.n_rays)
    throw std::invalid_argument("simulate_interface_euler: driver width != n_rays");
  if (!x0.is_origin() && !g.valid_ray(x0.ray))
    throw std::out_of_range("simulate_interface_euler: x0 ray out of range");
  const int steps = w.steps();
  const double dt = w.dt;
  const SeedSpec s_ray = substream(seed_rays, kTagRayChoice);
  const SeedSpec s_bridge = substream(seed_rays, kTagBridgeMin);

  SamplePath path;
  init_path(path, dt, steps);
  path.points[0] = x0;
  path.zero_visit[0] = x0.is_origin() ? 1 : 0;

  int ray = x0.is_origin() ? draw_label(g, s_ray, 0) : x0.ray;
  double rho = x0.radius;
  for (int k = 0; k < steps; ++k) {
    const double dw = w.increments(k, ray - 1);
    const double end = rho + dw;
    // exact minimum of the radial ride across the step
    const double m = bridge_min(rho, end, dt, rng_uniform(s_bridge, k));
    const bool touched = m <= 0.0;

    path.bx_increments[k] = dw;
    path.ray_used[k] = ray;
    path.zero_visit[k + 1] = touched ? 1 : 0;
    if (touched) {
      rho = end - m;  // excursion height above the within-step origin visit
      path.local_time[k + 1] = path.local_time[k] - m;
      ray = draw_label(g, s_ray, static_cast<std::uint64_t>(k) + 1);
    } else {
      rho = end;
      path.local_time[k + 1] = path.local_time[k];
    }
    path.points[k + 1] =
        rho > 0.0 ? GraphPoint::on_ray(ray, rho) : GraphPoint::origin();
  }
  return path;
}

CouplingRun simulate_wiener_coupling(const StarGraph& g, const DriverPath& w,
                                     const SeedSpec& seeds_x, const SeedSpec& seeds_y) {
  if (seeds_x == seeds_y)
    throw std::invalid_argument("simulate_wiener_coupling: ray seeds must differ");
  CouplingRun run;
  run.x_path = simulate_interface_euler(g, w, seeds_x);
  run.y_path = simulate_interface_euler(g, w, seeds_y);
  run.w = w;
  return run;
}

CouplingRun simulate_r_coupling(const StarGraph& g, const DriverPath& w,
                                const DriverPath& w_hat, double r,
                                const SeedSpec& seeds_x, const SeedSpec& seeds_y) {
  if (!(r >= 0.0 && r <= 1.0))
    throw std::invalid_argument("simulate_r_coupling: r must lie in [0,1]");
  if (seeds_x == seeds_y)
    throw std::invalid_argument("simulate_r_coupling: ray seeds must differ");
  CouplingRun run;
  run.x_path = simulate_interface_euler(g, mix_drivers(w, w_hat, r), seeds_x);
  run.y_path = simulate_interface_euler(g, w, seeds_y);
  run.w = w;
  run.w_hat = w_hat;
  run.r = r;
  return run;
}

std::vector<SamplePath> simulate_conditional_ensemble(const StarGraph& g,
                                                      const DriverPath& w, int n,
                                                      const SeedSpec& seeds) {
  if (n < 1) throw std::invalid_argument("simulate_conditional_ensemble: n must be >= 1");
  std::vector<SamplePath> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(simulate_interface_euler(
        g, w, SeedSpec{seeds.master_seed, seeds.stream_id + static_cast<std::uint64_t>(i)}));
  return out;
}

std::pair<DriverPath, DriverPath> construct_driver_from_solution(
    const StarGraph& g, const SamplePath& x, double r, const SeedSpec& seeds) {
  if (!(r >= 0.0 && r <= 1.0))
    throw std::invalid_argument("construct_driver_from_solution: r must lie in [0,1]");
  if (x.steps() < 1)
    throw std::invalid_argument("construct_driver_from_solution: empty path");
  const int n = g.n_rays;
  const int steps = x.steps();
  const double dt = x.dt;
  const double scale = std::sqrt(dt);
  const double s = std::sqrt(1.0 - r * r);

  DriverPath w, w_hat;
  w.dt = w_hat.dt = dt;
  w.increments.resize(steps, n);
  w_hat.increments.resize(steps, n);

  for (int i = 0; i < n; ++i) {
    const SeedSpec sv = substream(seeds, kTagDriverRecon + static_cast<std::uint64_t>(i));
    const SeedSpec svn = substream(seeds, kTagDriverRecon + static_cast<std::uint64_t>(i + n));
    for (int k = 0; k < steps; ++k) {
      const double d_gamma = (x.ray_used[k] == i + 1)
                                 ? x.bx_increments[k]
                                 : scale * rng_normal(sv, static_cast<std::uint64_t>(k));
      const double dv = scale * rng_normal(svn, static_cast<std::uint64_t>(k));
      w.increments(k, i) = r * d_gamma + s * dv;
      w_hat.increments(k, i) = s * d_gamma - r * dv;
    }
  }
  return {std::move(w), std::move(w_hat)};
}

}  // namespace walsh
