#include "walsh/estimators.hpp"

#include <cmath>

namespace walsh {

namespace {

void require_same_grid(const SamplePath& x, const SamplePath& y) {
  if (x.steps() != y.steps() || x.dt != y.dt)
    throw std::invalid_argument("coupling legs must share one grid");
}

}  // namespace

LocalTimeEstimate local_time_occupation(const Eigen::ArrayXd& series, double dt,
                                        double a, double eps, double rate) {
  if (!(eps > 0.0)) throw std::invalid_argument("local_time_occupation: eps must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("local_time_occupation: dt must be > 0");
  std::int64_t count = 0;
  for (Eigen::Index k = 0; k + 1 < series.size(); ++k)
    if (std::abs(series[k] - a) < eps) ++count;
  return {a, eps, rate * dt * static_cast<double>(count) / (2.0 * eps),
          LocalTimeMethod::occupation};
}

LocalTimeEstimate local_time_downcrossing(const SamplePath& path, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("local_time_downcrossing: eps must be > 0");
  std::int64_t count = 0;
  bool armed = false;
  for (int k = 0; k <= path.steps(); ++k) {
    if (armed && path.zero_visit[k]) {
      ++count;
      armed = false;
    }
    if (path.points[k].radius >= eps) armed = true;
  }
  // Excursions exceeding a level arrive at rate 1/level per unit local time.
  // Grid-sampled excursion maxima sit 0.5826 sqrt(dt) below the continuous
  // ones (the discrete-monitoring offset), so the effective arming level is
  // eps plus that offset.
  const double effective_level = eps + 0.5826 * std::sqrt(path.dt);
  return {0.0, eps, effective_level * static_cast<double>(count),
          LocalTimeMethod::downcrossing};
}

LocalTimeEstimate local_time_tanaka(const SamplePath& path, double t) {
  return {0.0, 0.0, path.local_time[path.grid_index(t)] - path.local_time[0],
          LocalTimeMethod::tanaka};
}

Eigen::ArrayXd spider_distance(const StarGraph& g, const CouplingRun& run) {
  require_same_grid(run.x_path, run.y_path);
  const int n_points = run.x_path.steps() + 1;
  Eigen::ArrayXd d(n_points);
  for (int k = 0; k < n_points; ++k) {
    const GraphPoint& x = run.x_path.points[k];
    const GraphPoint& y = run.y_path.points[k];
    const double sx = spider_radius(g, x);
    const double sy = spider_radius(g, y);
    d[k] = (x.ray == y.ray) ? std::abs(sx - sy) : sx + sy;
  }
  return d;
}

LocalTimeEstimate local_time_of_distance(const StarGraph& g, const CouplingRun& run,
                                         double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("local_time_of_distance: eps must be > 0");
  const Eigen::ArrayXd d = spider_distance(g, run);
  double qv_in_band = 0.0;
  for (Eigen::Index k = 0; k + 1 < d.size(); ++k) {
    if (d[k] > 0.0 && d[k] < eps) {
      const double inc = d[k + 1] - d[k];
      qv_in_band += inc * inc;
    }
  }
  return {0.0, eps, qv_in_band / (2.0 * eps), LocalTimeMethod::occupation};
}

double last_zero(const SamplePath& path, double t) {
  for (int k = path.grid_index(t); k >= 0; --k)
    if (path.zero_visit[k]) return k * path.dt;
  throw std::logic_error("last_zero: path has no zero-visit before t");
}

Eigen::ArrayXd quadratic_covariation(const Eigen::ArrayXd& u, const Eigen::ArrayXd& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("quadratic_covariation: length mismatch");
  Eigen::ArrayXd out(u.size());
  double running = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    running += u[k] * v[k];
    out[k] = running;
  }
  return out;
}

ResidualReport interface_sde_residual(const StarGraph& g, const SamplePath& path,
                                      const DriverPath& w, const TestFunction& f) {
  if (!in_class_d(g, f))
    throw std::invalid_argument("interface_sde_residual: f must lie in class D");
  if (path.steps() != w.steps() || path.dt != w.dt)
    throw std::invalid_argument("interface_sde_residual: grid mismatch");

  const double f0 = eval_test_function(g, f, path.points[0]).value;
  double stochastic = 0.0;
  double drift = 0.0;
  double sup = 0.0;
  double value = f0;
  for (int k = 0; k < path.steps(); ++k) {
    const TestFunctionValues tv = eval_test_function(g, f, path.points[k]);
    stochastic += tv.d1 * w.increments(k, path.ray_used[k] - 1);
    drift += 0.5 * tv.d2 * path.dt;
    value = eval_test_function(g, f, path.points[k + 1]).value;
    sup = std::max(sup, std::abs(value - f0 - stochastic - drift));
  }
  return {sup, value - f0, -stochastic, -drift, 0.0};
}

ResidualReport freidlin_sheu_residual(const StarGraph& g, const SamplePath& path,
                                      const TestFunction& f) {
  if (f.n_rays() != g.n_rays)
    throw std::invalid_argument("freidlin_sheu_residual: coefficient size mismatch");
  const double boundary_coeff = (g.probs * f.a).sum();
  const double f0 = eval_test_function(g, f, path.points[0]).value;
  double stochastic = 0.0;
  double drift = 0.0;
  double sup = 0.0;
  double value = f0;
  double lt = 0.0;
  for (int k = 0; k < path.steps(); ++k) {
    const TestFunctionValues tv = eval_test_function(g, f, path.points[k]);
    stochastic += tv.d1 * path.bx_increments[k];
    drift += 0.5 * tv.d2 * path.dt;
    lt = boundary_coeff * (path.local_time[k + 1] - path.local_time[0]);
    value = eval_test_function(g, f, path.points[k + 1]).value;
    sup = std::max(sup, std::abs(value - f0 - stochastic - drift - lt));
  }
  return {sup, value - f0, -stochastic, -drift, -lt};
}

Eigen::ArrayXXd spider_components(const StarGraph& g, const SamplePath& path) {
  const int n_points = path.steps() + 1;
  Eigen::ArrayXXd comps = Eigen::ArrayXXd::Zero(n_points, g.n_rays);
  for (int k = 0; k < n_points; ++k) {
    const GraphPoint& x = path.points[k];
    if (!x.is_origin()) comps(k, x.ray - 1) = spider_radius(g, x);
  }
  return comps;
}

std::pair<double, double> local_time_exclusion(const CouplingRun& run, double theta) {
  require_same_grid(run.x_path, run.y_path);
  const auto fraction = [theta](const SamplePath& leg, const SamplePath& other) {
    double total = 0.0;
    double near_other_zero = 0.0;
    for (int k = 0; k < leg.steps(); ++k) {
      const double dl = leg.local_time[k + 1] - leg.local_time[k];
      if (dl <= 0.0) continue;
      total += dl;
      if (other.points[k].radius <= theta || other.zero_visit[k + 1])
        near_other_zero += dl;
    }
    return total > 0.0 ? near_other_zero / total : 0.0;
  };
  return {fraction(run.x_path, run.y_path), fraction(run.y_path, run.x_path)};
}

}  // namespace walsh
