#include "walsh/experiments.hpp"

#include "walsh/estimators.hpp"
#include "walsh/sde_sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace walsh {

namespace {

constexpr double kHalfNormalMean = 0.7978845608028654;  // sqrt(2/pi)

// ---------------------------------------------------------------------------
// resolved configuration and stream layout
// ---------------------------------------------------------------------------

struct Resolved {
  std::string id;
  int ordinal = 0;
  int n_rays = 3;
  Eigen::ArrayXd probs;
  double t = 1.0;
  std::vector<double> dt{1e-3};
  std::int64_t n_paths = 20000;
  std::vector<double> r;
  std::uint64_t master_seed = 0;
  int workers = 2;
  std::string out_dir;
};

// Stream ids keep the top byte free for substream purpose tags:
// [ordinal:8][subrun:8][path:40] in bits 0..55.
std::uint64_t sid(const Resolved& cfg, int subrun, std::int64_t path) {
  return (static_cast<std::uint64_t>(cfg.ordinal) << 48) |
         (static_cast<std::uint64_t>(subrun) << 40) | static_cast<std::uint64_t>(path);
}

SeedSpec seed_of(const Resolved& cfg, int subrun, std::int64_t path) {
  return {cfg.master_seed, sid(cfg, subrun, path)};
}

int experiment_ordinal(const std::string& id) {
  static const std::vector<std::string> order = {"E1", "E2",  "E3",  "E4",  "E5",
                                                 "E6", "E7",  "E8a", "E8b", "E9",
                                                 "E10", "E11", "E12", "E13"};
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == id) return static_cast<int>(i) + 1;
  return -1;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string probs_repr(const Eigen::ArrayXd& p) {
  std::string out;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (i) out += ';';
    out += format_double(p[i]);
  }
  return out;
}

std::string config_hash(const Resolved& cfg) {
  std::string canon = cfg.id;
  canon += '|' + std::to_string(cfg.n_rays) + '|' + probs_repr(cfg.probs);
  canon += '|' + format_double(cfg.t);
  for (double d : cfg.dt) canon += '|' + format_double(d);
  canon += '|' + std::to_string(cfg.n_paths);
  for (double r : cfg.r) canon += '|' + format_double(r);
  canon += '|' + std::to_string(cfg.master_seed);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// record construction
// ---------------------------------------------------------------------------

struct Recorder {
  const Resolved& cfg;
  std::string claim_ref;
  std::vector<ResultRecord> records = {};

  ResultRecord base(std::string name, double dt, std::optional<double> r,
                    std::int64_t n) const {
    ResultRecord rec;
    rec.experiment_id = cfg.id;
    rec.claim_ref = claim_ref;
    rec.statistic_name = std::move(name);
    rec.n_paths = n;
    rec.n_rays = cfg.n_rays;
    rec.probs_repr = probs_repr(cfg.probs);
    rec.t = cfg.t;
    rec.dt = dt;
    rec.r = r;
    rec.master_seed = cfg.master_seed;
    rec.config_hash = config_hash(cfg);
    return rec;
  }

  void add_estimate(std::string name, const EstimateReport& rep, bool pass, double dt,
                    std::optional<double> r = std::nullopt,
                    std::optional<double> target = std::nullopt,
                    std::optional<double> tolerance = std::nullopt) {
    ResultRecord rec = base(std::move(name), dt, r, rep.n);
    rec.estimate = rep.estimate;
    rec.stderror = rep.stderror;
    rec.ci_low = rep.ci_low;
    rec.ci_high = rep.ci_high;
    rec.pass = pass;
    rec.target = target;
    rec.tolerance = tolerance;
    records.push_back(std::move(rec));
  }

  void add_test(std::string name, const TestOutcome& outcome, bool pass, double dt,
                std::int64_t n, std::optional<double> r = std::nullopt) {
    ResultRecord rec = base(std::move(name), dt, r, n);
    rec.estimate = outcome.p_value;
    rec.stderror = 0.0;
    rec.ci_low = outcome.p_value;
    rec.ci_high = outcome.p_value;
    rec.pass = pass;
    rec.test = outcome;
    records.push_back(std::move(rec));
  }

  void add_value(std::string name, double value, bool pass, double dt, std::int64_t n,
                 std::optional<double> r = std::nullopt,
                 std::optional<double> target = std::nullopt,
                 std::optional<double> tolerance = std::nullopt) {
    ResultRecord rec = base(std::move(name), dt, r, n);
    rec.estimate = value;
    rec.ci_low = value;
    rec.ci_high = value;
    rec.pass = pass;
    rec.target = target;
    rec.tolerance = tolerance;
    records.push_back(std::move(rec));
  }
};

// ---------------------------------------------------------------------------
// shared simulation helpers
// ---------------------------------------------------------------------------

int grid_steps(double t, double dt) {
  return std::max(1, static_cast<int>(std::llround(std::ceil(t / dt - 1e-9))));
}

// Wiener coupling path pair sharing one driver.
CouplingRun wiener_run(const StarGraph& g, const Resolved& cfg, double t, double dt,
                       int subrun, std::int64_t i) {
  const DriverPath w = gen_driver(g.n_rays, dt, grid_steps(t, dt), seed_of(cfg, subrun, i));
  return simulate_wiener_coupling(g, w, seed_of(cfg, subrun + 1, i),
                                  seed_of(cfg, subrun + 2, i));
}

CouplingRun r_run(const StarGraph& g, const Resolved& cfg, double t, double dt, double r,
                  int subrun, std::int64_t i) {
  const int steps = grid_steps(t, dt);
  const DriverPath w = gen_driver(g.n_rays, dt, steps, seed_of(cfg, subrun, i));
  const DriverPath w_hat = gen_driver(g.n_rays, dt, steps, seed_of(cfg, subrun + 3, i));
  return simulate_r_coupling(g, w, w_hat, r, seed_of(cfg, subrun + 1, i),
                             seed_of(cfg, subrun + 2, i));
}

// Per-pair summary used by the coupling experiments.
struct PairStats {
  double d_t1 = 0.0, d_t2 = 0.0;        // spider distance at t1, t2
  double plain_d_t2 = 0.0;              // graph distance at t2
  double xbar_t1 = 0.0, xbar_t2 = 0.0;  // spider radii
  double ybar_t1 = 0.0, ybar_t2 = 0.0;
  int ex = 0, ey = 0;                   // terminal labels, 0 when near the origin
  double gx = 0.0, gy = 0.0;            // last zeros before t2
  double m11_t1 = 0.0, m11_t2 = 0.0;    // balayage functional at t1, t2
};

double spider_distance_at(const StarGraph& g, const CouplingRun& run, int k) {
  const GraphPoint& x = run.x_path.points[k];
  const GraphPoint& y = run.y_path.points[k];
  const double sx = spider_radius(g, x);
  const double sy = spider_radius(g, y);
  return (x.ray == y.ray) ? std::abs(sx - sy) : sx + sy;
}

double balayage_form(const StarGraph& g, const CouplingRun& run, double t, double theta) {
  const double ratio = static_cast<double>(g.n_rays - 2) / g.n_rays;
  const int k = run.x_path.grid_index(t);
  const double gy = last_zero(run.y_path, t);
  const double gx = last_zero(run.x_path, t);
  const int kgy = run.x_path.grid_index(gy);
  const int kgx = run.y_path.grid_index(gx);
  const double x_alive = run.x_path.points[kgy].radius > theta ? 1.0 : 0.0;
  const double y_alive = run.y_path.points[kgx].radius > theta ? 1.0 : 0.0;
  return spider_distance_at(g, run, k) -
         ratio * (x_alive * spider_radius(g, run.y_path.points[k]) +
                  y_alive * spider_radius(g, run.x_path.points[k]));
}

PairStats pair_stats(const StarGraph& g, const CouplingRun& run, double t1, double t2) {
  PairStats s;
  const double theta = std::sqrt(run.x_path.dt);
  const int k1 = run.x_path.grid_index(t1);
  const int k2 = run.x_path.grid_index(t2);
  s.d_t1 = spider_distance_at(g, run, k1);
  s.d_t2 = spider_distance_at(g, run, k2);
  s.plain_d_t2 = distance(g, run.x_path.points[k2], run.y_path.points[k2]);
  s.xbar_t1 = spider_radius(g, run.x_path.points[k1]);
  s.xbar_t2 = spider_radius(g, run.x_path.points[k2]);
  s.ybar_t1 = spider_radius(g, run.y_path.points[k1]);
  s.ybar_t2 = spider_radius(g, run.y_path.points[k2]);
  const GraphPoint& x2 = run.x_path.points[k2];
  const GraphPoint& y2 = run.y_path.points[k2];
  s.ex = x2.radius > theta ? x2.ray : 0;
  s.ey = y2.radius > theta ? y2.ray : 0;
  s.gx = last_zero(run.x_path, t2);
  s.gy = last_zero(run.y_path, t2);
  s.m11_t1 = balayage_form(g, run, t1, theta);
  s.m11_t2 = balayage_form(g, run, t2, theta);
  return s;
}

// Random class-D test functions: a ~ N(0,1) projected onto {sum p a = 0},
// b ~ N(0,1).
std::vector<TestFunction> random_test_functions(const StarGraph& g, int count,
                                                const SeedSpec& seed, bool class_d) {
  std::vector<TestFunction> out;
  std::uint64_t idx = 0;
  for (int f = 0; f < count; ++f) {
    Eigen::ArrayXd a(g.n_rays), b(g.n_rays);
    for (int i = 0; i < g.n_rays; ++i) {
      a[i] = rng_normal(seed, idx++);
      b[i] = rng_normal(seed, idx++);
    }
    if (class_d) a -= ((g.probs * a).sum() / g.probs.square().sum()) * g.probs;
    out.emplace_back(a, b);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Least-squares slope of log(value) against log(dt).
double loglog_slope(const std::vector<double>& dts, const std::vector<double>& values) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(dts.size());
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double x = std::log(dts[i]);
    const double y = std::log(std::max(values[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Discretization allowance: least-squares fit through the origin of observed
// |bias| against sqrt(dt) over pilot meshes.
double fit_sqrt_allowance(const std::vector<double>& dts, const std::vector<double>& biases) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    num += std::abs(biases[i]) * std::sqrt(dts[i]);
    den += dts[i];
  }
  return den > 0.0 ? std::max(0.0, num / den) : 0.0;
}

double mean_distance_target(int n_rays, double t) {
  return 2.0 * (n_rays - 2.0) / n_rays * std::sqrt(2.0 * t / M_PI);
}

// Monte Carlo mean over per-path values produced by `body`.
EstimateReport mc_over_paths(std::int64_t n, int workers,
                             const std::function<double(std::int64_t)>& body,
                             std::string name = {}) {
  Eigen::ArrayXd values(n);
  parallel_for(n, workers, [&](std::int64_t i) { values[i] = body(i); });
  return mc_mean(values, std::move(name));
}

// ---------------------------------------------------------------------------
// E1: marginal laws of the exact sampler
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e1(const Resolved& cfg) {
  Recorder rec{cfg, "wbm marginals: half-normal radius; ray frequencies; arcsine last zero"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const std::int64_t n = cfg.n_paths;

  // half-normal radius and ray frequencies at the horizon
  Eigen::ArrayXd radius(n);
  Eigen::ArrayXi ray(n);
  parallel_for(n, cfg.workers, [&](std::int64_t i) {
    const SamplePath p = simulate_wbm_exact(g, cfg.t, dt, seed_of(cfg, 0, i));
    radius[i] = p.points.back().radius;
    ray[i] = p.points.back().ray;
  });
  const double sigma = std::sqrt(cfg.t);
  const TestOutcome ks =
      ks_test(radius, [sigma](double x) { return half_normal_cdf(x, sigma); });
  const double crit = ks_critical_value(n, 0.01);
  rec.add_test("ks_radius_half_normal", ks, ks.statistic < crit, dt, n);
  for (int i = 1; i <= g.n_rays; ++i) {
    const EstimateReport freq =
        binomial_report((ray == i).count(), n, "ray_frequency_" + std::to_string(i));
    const bool pass = std::abs(freq.estimate - g.probs[i - 1]) < 3.0 * freq.stderror;
    rec.add_estimate("ray_frequency_" + std::to_string(i), freq, pass, dt, std::nullopt,
                     g.probs[i - 1], 3.0 * freq.stderror);
  }

  // arcsine law of the last zero, on a fine mesh (midpoint of the flagged step)
  const double dt_arc = std::min(dt, 5e-5);
  const std::int64_t n_arc = std::min<std::int64_t>(n, 4000);
  Eigen::ArrayXd zeros(n_arc);
  parallel_for(n_arc, cfg.workers, [&](std::int64_t i) {
    const SamplePath p = simulate_wbm_exact(g, cfg.t, dt_arc, seed_of(cfg, 1, i));
    zeros[i] = last_zero(p, cfg.t) - 0.5 * dt_arc;
  });
  const double horizon = cfg.t;
  const TestOutcome ks_arc =
      ks_test(zeros, [horizon](double x) { return arcsine_cdf(x, horizon); });
  rec.add_test("ks_last_zero_arcsine", ks_arc,
               ks_arc.statistic < ks_critical_value(n_arc, 0.01), dt_arc, n_arc);

  // spider-normalized mean radius for a non-uniform graph
  Eigen::ArrayXd pskew(3);
  pskew << 0.5, 0.25, 0.25;
  const StarGraph gskew(3, pskew);
  const std::int64_t n_skew = std::max<std::int64_t>(n / 5, 2000);
  const EstimateReport spider_mean = mc_over_paths(
      n_skew, cfg.workers,
      [&](std::int64_t i) {
        const SamplePath p = simulate_wbm_exact(gskew, cfg.t, dt, seed_of(cfg, 2, i));
        return spider_radius(gskew, p.points.back());
      },
      "spider_mean_nonuniform");
  const double target = kHalfNormalMean * std::sqrt(cfg.t);
  const bool pass = std::abs(spider_mean.estimate - target) < 3.0 * spider_mean.stderror;
  rec.add_estimate("spider_mean_nonuniform", spider_mean, pass, dt, std::nullopt, target,
                   3.0 * spider_mean.stderror);
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E2 / E3: residuals of the two pathwise identities across meshes
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_residual_experiment(const Resolved& cfg, bool interface_form) {
  Recorder rec{cfg, interface_form
                        ? "interface SDE identity residual decays with the mesh"
                        : "Ito formula with boundary term: residual decays with the mesh"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const auto funcs =
      random_test_functions(g, 10, seed_of(cfg, 40, 0), /*class_d=*/interface_form);

  std::vector<double> meshes = cfg.dt;
  std::vector<double> medians;
  std::vector<double> eq6_sups;
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    const double dt = meshes[m];
    const std::int64_t n = std::max<std::int64_t>(cfg.n_paths, 50);
    std::vector<double> sups(n * funcs.size());
    Eigen::ArrayXd eq6(n);
    const int subrun = static_cast<int>(8 * m);
    parallel_for(n, cfg.workers, [&](std::int64_t i) {
      const DriverPath w =
          gen_driver(g.n_rays, dt, grid_steps(cfg.t, dt), seed_of(cfg, subrun, i));
      const SamplePath p = simulate_interface_euler(g, w, seed_of(cfg, subrun + 1, i));
      for (std::size_t f = 0; f < funcs.size(); ++f) {
        const ResidualReport report =
            interface_form ? interface_sde_residual(g, p, w, funcs[f])
                           : freidlin_sheu_residual(g, p, funcs[f]);
        sups[i * funcs.size() + f] = report.sup_abs_residual;
      }
      // spider-component reconstruction error (driver sum plus local time)
      double sup_diff = 0.0;
      Eigen::ArrayXd recon = Eigen::ArrayXd::Zero(g.n_rays);
      const Eigen::ArrayXXd comps = spider_components(g, p);
      for (int k = 0; k < p.steps(); ++k) {
        const int j = p.ray_used[k] - 1;
        recon[j] += p.bx_increments[k] / (g.n_rays * g.probs[j]);
        for (int q = 0; q < g.n_rays; ++q) {
          const double reference = recon[q] + p.local_time[k + 1] / g.n_rays;
          sup_diff = std::max(sup_diff, std::abs(comps(k + 1, q) - reference));
        }
      }
      eq6[i] = sup_diff;
    });
    const double med = median(sups);
    medians.push_back(med);
    const bool decreasing = m == 0 || med < medians[m - 1];
    rec.add_value("median_sup_residual", med, decreasing, dt, n);
    if (!interface_form) {
      std::vector<double> e6(eq6.begin(), eq6.end());
      eq6_sups.push_back(median(e6));
      const bool dec6 = m == 0 || eq6_sups[m] < eq6_sups[m - 1];
      rec.add_value("median_spider_component_gap", eq6_sups[m], dec6, dt, n);
    }
  }
  const double slope = loglog_slope(meshes, medians);
  rec.add_value("residual_loglog_slope", slope, slope >= 0.35 && slope <= 0.65,
                meshes.back(), cfg.n_paths, std::nullopt, 0.5, 0.15);
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E4: mean spider distance of the coupling against the closed form
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e4(const Resolved& cfg) {
  Recorder rec{cfg, "mean spider distance = 2 (N-2)/N sqrt(2t/pi)"};
  const double dt_final = cfg.dt.front();
  const std::vector<double> pilot_meshes = {9e-3, 4e-3, 1e-3};
  const std::int64_t n_pilot = std::max<std::int64_t>(cfg.n_paths / 5, 2000);

  int subrun = 0;
  for (int n_rays : {3, 4, 5}) {
    const StarGraph g = StarGraph::uniform(n_rays);
    const double target = mean_distance_target(n_rays, cfg.t);

    // three-mesh pilot fits the discretization allowance
    std::vector<double> biases;
    for (double dt : pilot_meshes) {
      const EstimateReport pilot = mc_over_paths(n_pilot, cfg.workers, [&](std::int64_t i) {
        const CouplingRun run = wiener_run(g, cfg, cfg.t, dt, subrun, i);
        return spider_distance_at(g, run, run.x_path.grid_index(cfg.t));
      });
      biases.push_back(pilot.estimate - target);
      subrun += 3;
    }
    const double allowance_coeff = fit_sqrt_allowance(pilot_meshes, biases);

    const EstimateReport final_rep = mc_over_paths(
        cfg.n_paths, cfg.workers,
        [&](std::int64_t i) {
          const CouplingRun run = wiener_run(g, cfg, cfg.t, dt_final, subrun, i);
          return spider_distance_at(g, run, run.x_path.grid_index(cfg.t));
        },
        "mean_spider_distance");
    subrun += 3;
    const double tol = 3.0 * final_rep.stderror + allowance_coeff * std::sqrt(dt_final);
    const bool pass = std::abs(final_rep.estimate - target) < tol;
    rec.add_estimate("mean_spider_distance[N=" + std::to_string(n_rays) + "]", final_rep,
                     pass, dt_final, std::nullopt, target, tol);

    if (n_rays == 3) {
      // the spider radius of one leg has the reflected-BM mean
      const EstimateReport xbar = mc_over_paths(
          cfg.n_paths, cfg.workers,
          [&](std::int64_t i) {
            const CouplingRun run = wiener_run(g, cfg, cfg.t, dt_final, subrun, i);
            return spider_radius(g, run.x_path.points[run.x_path.grid_index(cfg.t)]);
          },
          "mean_spider_radius");
      subrun += 3;
      const double rad_target = kHalfNormalMean * std::sqrt(cfg.t);
      const bool rad_pass = std::abs(xbar.estimate - rad_target) < 3.0 * xbar.stderror;
      rec.add_estimate("mean_spider_radius[N=3]", xbar, rad_pass, dt_final, std::nullopt,
                       rad_target, 3.0 * xbar.stderror);
    }
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E5: martingale tests for the compensated distance
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e5(const Resolved& cfg) {
  Recorder rec{cfg, "distance minus (N-2)/N radial sum is a martingale"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const double t1 = 0.5 * cfg.t, t2 = cfg.t;
  const double ratio = static_cast<double>(g.n_rays - 2) / g.n_rays;
  const std::int64_t n = cfg.n_paths;

  Eigen::ArrayXd m_t1(n), m_t2(n), radial_t1(n), radial_t2(n), m11_t1(n), m11_t2(n);
  Eigen::ArrayXd dec_t1(n), dec_t2(n);
  Eigen::ArrayXXd features(n, 6);
  const double eps_band = 0.02;  // banded-QV width for the distance local time
  parallel_for(n, cfg.workers, [&](std::int64_t i) {
    const CouplingRun run = wiener_run(g, cfg, cfg.t, dt, 0, i);
    const PairStats s = pair_stats(g, run, t1, t2);
    m_t1[i] = s.d_t1 - ratio * (s.xbar_t1 + s.ybar_t1);
    m_t2[i] = s.d_t2 - ratio * (s.xbar_t2 + s.ybar_t2);
    radial_t1[i] = s.xbar_t1;
    radial_t2[i] = s.xbar_t2;
    m11_t1[i] = s.m11_t1;
    m11_t2[i] = s.m11_t2;

    // distance decomposition: D - (1/2) Lambda - (N-2)/N sum of local-time
    // increments carried while the other leg is away from the origin
    // (this form holds for any coupling of two motions, not only this one)
    const double theta = std::sqrt(dt);
    const int k1 = run.x_path.grid_index(t1);
    const int k2 = run.x_path.grid_index(t2);
    double lambda_hat = 0.0, cross_lt = 0.0;
    dec_t1[i] = 0.0;
    double d_prev = spider_distance_at(g, run, 0);
    for (int k = 0; k < k2; ++k) {
      const double d_next = spider_distance_at(g, run, k + 1);
      if (d_prev > 0.0 && d_prev < eps_band)
        lambda_hat += (d_next - d_prev) * (d_next - d_prev);
      d_prev = d_next;
      const bool y_away = run.y_path.points[k].radius > theta && !run.y_path.zero_visit[k + 1];
      const bool x_away = run.x_path.points[k].radius > theta && !run.x_path.zero_visit[k + 1];
      if (y_away)
        cross_lt += run.x_path.local_time[k + 1] - run.x_path.local_time[k];
      if (x_away)
        cross_lt += run.y_path.local_time[k + 1] - run.y_path.local_time[k];
      if (k + 1 == k1)
        dec_t1[i] = spider_distance_at(g, run, k1) - 0.5 * lambda_hat / (2.0 * eps_band) -
                    ratio * cross_lt;
    }
    dec_t2[i] = spider_distance_at(g, run, k2) - 0.5 * lambda_hat / (2.0 * eps_band) -
                ratio * cross_lt;

    const GraphPoint& x1 = run.x_path.points[k1];
    const GraphPoint& y1 = run.y_path.points[k1];
    features(i, 0) = 1.0;
    features(i, 1) = x1.ray == 1 ? 1.0 : 0.0;
    features(i, 2) = y1.ray == 1 ? 1.0 : 0.0;
    features(i, 3) = x1.ray == y1.ray ? 1.0 : 0.0;
    features(i, 4) = std::min(s.xbar_t1, 2.0);
    features(i, 5) = std::min(s.d_t1, 2.0);
  });

  const TestOutcome main_test = martingale_test(m_t1, m_t2, features);
  rec.add_test("martingale_compensated_distance", main_test, main_test.p_value >= 0.01,
               dt, n);
  const TestOutcome control = martingale_test(radial_t1, radial_t2, features);
  rec.add_test("martingale_positive_control_radius", control, control.p_value < 0.01, dt,
               n);
  const TestOutcome balayage = martingale_test(m11_t1, m11_t2, features);
  rec.add_test("martingale_balayage_form", balayage, balayage.p_value >= 0.01, dt, n);
  const TestOutcome decomposition = martingale_test(dec_t1, dec_t2, features);
  rec.add_test("martingale_decomposition_form", decomposition,
               decomposition.p_value >= 0.01, dt, n);
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E6: independence of the terminal rays
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e6(const Resolved& cfg) {
  Recorder rec{cfg, "terminal rays of the two legs are independent"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const std::int64_t n = cfg.n_paths;
  const int nr = g.n_rays;

  std::vector<int> ex(n), ey(n);
  parallel_for(n, cfg.workers, [&](std::int64_t i) {
    const CouplingRun run = wiener_run(g, cfg, cfg.t, dt, 0, i);
    const PairStats s = pair_stats(g, run, 0.5 * cfg.t, cfg.t);
    ex[i] = s.ex;
    ey[i] = s.ey;
  });
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(n);
  for (std::int64_t i = 0; i < n; ++i)
    if (ex[i] > 0 && ey[i] > 0) pairs.emplace_back(ex[i], ey[i]);
  const auto kept = static_cast<std::int64_t>(pairs.size());
  const EstimateReport kept_rep = binomial_report(kept, n, "kept_fraction");
  rec.add_estimate("kept_fraction", kept_rep, kept_rep.estimate > 0.8, dt);

  const TestOutcome chi = chi_square_independence(pairs, nr);
  rec.add_test("chi_square_independence", chi, chi.p_value >= 0.01, dt, kept);

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nr, nr);
  Eigen::VectorXd margin_x = Eigen::VectorXd::Zero(nr), margin_y = Eigen::VectorXd::Zero(nr);
  for (const auto& [a, b] : pairs) {
    counts(a - 1, b - 1) += 1.0;
    margin_x[a - 1] += 1.0;
    margin_y[b - 1] += 1.0;
  }
  double worst_dev = 0.0;
  for (int a = 0; a < nr; ++a) {
    for (int b = 0; b < nr; ++b) {
      const double pab = counts(a, b) / kept;
      const double expected = g.probs[a] * g.probs[b];
      const double se = std::sqrt(expected * (1.0 - expected) / kept);
      worst_dev = std::max(worst_dev, std::abs(pab - expected) / se);
    }
  }
  rec.add_value("max_cell_deviation_sigmas", worst_dev, worst_dev < 3.0, dt, kept,
                std::nullopt, 0.0, 3.0);

  // squared-probability identity: P(i,i) = P(i)^2, one record per ray
  for (int a = 0; a < nr; ++a) {
    const double paa = counts(a, a) / kept;
    const double pa = margin_x[a] / kept;
    const double diff = paa - pa * pa;
    const double var = (paa * (1.0 - paa) + 4.0 * pa * pa * pa * (1.0 - pa) -
                        4.0 * pa * paa * (1.0 - pa)) /
                       kept;
    const double se = std::sqrt(std::max(var, 1e-300));
    rec.add_value("squared_probability_gap_" + std::to_string(a + 1), diff,
                  std::abs(diff) < 3.0 * se, dt, kept, std::nullopt, 0.0, 3.0 * se);
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E7: local time of the spider distance vanishes under refinement
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e7(const Resolved& cfg) {
  Recorder rec{cfg, "local time of the spider distance vanishes"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  struct SchedulePoint {
    double eps, dt;
    std::int64_t n;
  };
  const std::vector<SchedulePoint> schedule = {
      {0.04, 1e-2, cfg.n_paths}, {0.02, 1e-3, cfg.n_paths}, {0.01, 1e-4, cfg.n_paths / 2}};

  double prev = 0.0, final_value = 0.0, control_value = 0.0;
  for (std::size_t m = 0; m < schedule.size(); ++m) {
    const auto& pt = schedule[m];
    const int subrun = static_cast<int>(8 * m);
    const EstimateReport lt = mc_over_paths(pt.n, cfg.workers, [&](std::int64_t i) {
      const CouplingRun run = wiener_run(g, cfg, cfg.t, pt.dt, subrun, i);
      return local_time_of_distance(g, run, pt.eps).value;
    });
    const bool decreasing = m == 0 || lt.estimate < prev;
    std::optional<double> none;
    rec.add_estimate("distance_local_time[eps=" + format_double(pt.eps) + "]", lt,
                     decreasing, pt.dt, none);
    prev = lt.estimate;
    final_value = lt.estimate;
    if (m + 1 == schedule.size()) {
      // positive control: the same banded-QV estimator applied to one radial leg
      const EstimateReport control =
          mc_over_paths(pt.n, cfg.workers, [&](std::int64_t i) {
            const CouplingRun run = wiener_run(g, cfg, cfg.t, pt.dt, subrun + 4, i);
            const Eigen::ArrayXd radial = run.x_path.radial();
            double qv = 0.0;
            for (Eigen::Index k = 0; k + 1 < radial.size(); ++k)
              if (radial[k] > 0.0 && radial[k] < pt.eps) {
                const double inc = radial[k + 1] - radial[k];
                qv += inc * inc;
              }
            return qv / (2.0 * pt.eps);
          });
      control_value = control.estimate;
      rec.add_estimate("radial_local_time_control", control, control.estimate > 0.3,
                       pt.dt, none);
    }
  }
  const double final_ratio = control_value > 0.0 ? final_value / control_value : 1.0;
  rec.add_value("final_to_control_ratio", final_ratio, final_ratio < 0.10,
                schedule.back().dt, schedule.back().n, std::nullopt, 0.0, 0.10);
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E8a: covariation identity for the r-coupling
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e8a(const Resolved& cfg) {
  Recorder rec{cfg, "radial covariation accrues r dt on shared-ray steps"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const std::int64_t n = cfg.n_paths;
  int subrun = 0;
  for (double r : cfg.r) {
    const EstimateReport sup_gap = mc_over_paths(n, cfg.workers, [&](std::int64_t i) {
      const CouplingRun run = r_run(g, cfg, cfg.t, dt, r, subrun, i);
      const Eigen::ArrayXd cov =
          quadratic_covariation(run.x_path.bx_increments, run.y_path.bx_increments);
      double running_equal = 0.0;
      double worst = 0.0;
      for (int k = 0; k < run.x_path.steps(); ++k) {
        if (run.x_path.ray_used[k] == run.y_path.ray_used[k]) running_equal += dt;
        worst = std::max(worst, std::abs(cov[k] - r * running_equal));
      }
      return worst;
    });
    subrun += 8;
    const double bound = 5.0 * std::sqrt(dt);
    rec.add_estimate("mean_sup_covariation_gap", sup_gap, sup_gap.estimate < bound, dt, r,
                     0.0, bound);
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E8b: local-time exclusion fractions vanish under refinement
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e8b(const Resolved& cfg) {
  Recorder rec{cfg, "local time carried while the other leg is at the origin vanishes"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  int subrun = 0;
  for (double r : cfg.r) {
    double first = 0.0, prev = 0.0;
    bool decreasing = true;
    double final_value = 0.0;
    for (std::size_t m = 0; m < cfg.dt.size(); ++m) {
      const double dt = cfg.dt[m];
      const double theta = std::sqrt(dt);
      const std::int64_t n = dt < 5e-4 ? cfg.n_paths / 4 : cfg.n_paths;
      const EstimateReport frac = mc_over_paths(n, cfg.workers, [&](std::int64_t i) {
        const CouplingRun run = r >= 1.0 ? wiener_run(g, cfg, cfg.t, dt, subrun, i)
                                         : r_run(g, cfg, cfg.t, dt, r, subrun, i);
        const auto [fx, fy] = local_time_exclusion(run, theta);
        return 0.5 * (fx + fy);
      });
      if (m == 0) first = frac.estimate;
      if (m > 0 && frac.estimate >= prev) decreasing = false;
      prev = frac.estimate;
      final_value = frac.estimate;
      rec.add_estimate("exclusion_fraction", frac, true, dt, r);
      subrun += 8;
    }
    rec.add_value("exclusion_verdict", final_value, decreasing && final_value < 0.5 * first,
                  cfg.dt.back(), cfg.n_paths, r, 0.0, 0.5 * first);
  }

  // positive control: identical legs share every origin visit
  {
    const double dt = cfg.dt[1];
    const DriverPath w = gen_driver(g.n_rays, dt, grid_steps(cfg.t, dt), seed_of(cfg, 200, 0));
    CouplingRun same;
    same.x_path = simulate_interface_euler(g, w, seed_of(cfg, 201, 0));
    same.y_path = simulate_interface_euler(g, w, seed_of(cfg, 201, 0));
    same.w = w;
    const auto [fx, fy] = local_time_exclusion(same, std::sqrt(dt));
    rec.add_value("identical_legs_control", fx, fx == 1.0 && fy == 1.0, dt, 1,
                  std::nullopt, 1.0, 0.0);
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E9: r-sweep of the mean spider distance
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e9(const Resolved& cfg) {
  Recorder rec{cfg, "r-sweep: mean distance bounded below and continuous at r = 1"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const std::int64_t n = cfg.n_paths;
  const double target = mean_distance_target(g.n_rays, cfg.t);

  // pilot allowance, as in the mean-distance experiment
  const std::vector<double> pilot_meshes = {9e-3, 4e-3, 1e-3};
  std::vector<double> biases;
  int subrun = 0;
  for (double pdt : pilot_meshes) {
    const EstimateReport pilot =
        mc_over_paths(std::max<std::int64_t>(n / 5, 2000), cfg.workers, [&](std::int64_t i) {
          const CouplingRun run = wiener_run(g, cfg, cfg.t, pdt, subrun, i);
          return spider_distance_at(g, run, run.x_path.grid_index(cfg.t));
        });
    biases.push_back(pilot.estimate - target);
    subrun += 3;
  }
  const double allowance = fit_sqrt_allowance(pilot_meshes, biases) * std::sqrt(dt);

  std::vector<EstimateReport> sweep;
  for (double r : cfg.r) {
    const EstimateReport rep = mc_over_paths(
        n, cfg.workers,
        [&](std::int64_t i) {
          const CouplingRun run = r >= 1.0 ? wiener_run(g, cfg, cfg.t, dt, subrun, i)
                                           : r_run(g, cfg, cfg.t, dt, r, subrun, i);
          return spider_distance_at(g, run, run.x_path.grid_index(cfg.t));
        },
        "mean_spider_distance");
    subrun += 8;
    const double tol = 3.0 * rep.stderror + allowance;
    rec.add_estimate("mean_spider_distance", rep, rep.estimate >= target - tol, dt, r,
                     target, tol);
    sweep.push_back(rep);
  }

  // continuity at r = 1: compare the two largest grid values
  if (cfg.r.size() >= 2) {
    const EstimateReport& a = sweep[sweep.size() - 2];
    const EstimateReport& b = sweep.back();
    const double joint_se =
        std::sqrt(a.stderror * a.stderror + b.stderror * b.stderror);
    const double gap = std::abs(a.estimate - b.estimate);
    rec.add_value("limit_gap_r_to_1", gap, gap < 3.0 * joint_se, dt, n, cfg.r.back(), 0.0,
                  3.0 * joint_se);
  }

  // r = 0 equals a pair of independent motions (independent-pair oracle)
  if (!cfg.r.empty() && cfg.r.front() == 0.0) {
    const EstimateReport indep = mc_over_paths(n, cfg.workers, [&](std::int64_t i) {
      const SamplePath x = simulate_wbm_exact(g, cfg.t, dt, seed_of(cfg, 150, i));
      const SamplePath y = simulate_wbm_exact(g, cfg.t, dt, seed_of(cfg, 151, i));
      const GraphPoint& px = x.points.back();
      const GraphPoint& py = y.points.back();
      const double sx = spider_radius(g, px), sy = spider_radius(g, py);
      return (px.ray == py.ray) ? std::abs(sx - sy) : sx + sy;
    });
    const double joint_se = std::sqrt(indep.stderror * indep.stderror +
                                      sweep.front().stderror * sweep.front().stderror);
    const double gap = std::abs(indep.estimate - sweep.front().estimate);
    rec.add_value("independent_pair_gap_r0", gap, gap < 3.0 * joint_se, dt, n, 0.0, 0.0,
                  3.0 * joint_se);
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E10: separation of last zeros and positions
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e10(const Resolved& cfg) {
  Recorder rec{cfg, "last zeros and positions of the legs separate"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const std::int64_t n = cfg.n_paths;
  const std::vector<double> deltas = {0.1, 0.05, 0.025};

  Eigen::ArrayXd gap_zero(n), gap_pos(n);
  parallel_for(n, cfg.workers, [&](std::int64_t i) {
    const CouplingRun run = wiener_run(g, cfg, cfg.t, dt, 0, i);
    const PairStats s = pair_stats(g, run, 0.5 * cfg.t, cfg.t);
    gap_zero[i] = std::abs(s.gx - s.gy);
    gap_pos[i] = s.plain_d_t2;
  });

  const auto scan_records = [&](const Eigen::ArrayXd& gaps, const std::string& label) {
    std::vector<ScanPoint> points;
    for (double delta : deltas) {
      const auto count = static_cast<std::int64_t>((gaps < delta).count());
      points.push_back({delta, binomial_report(count, n, label)});
    }
    const ScanReport scan = vanishing_scan(points);
    for (const ScanPoint& pt : scan.points)
      rec.add_estimate(label + "[delta=" + format_double(pt.scale) + "]", pt.estimate,
                       true, dt);
    const bool pass = scan.decreasing && scan.extremes_separated && scan.exponent > 0.0;
    rec.add_value(label + "_scan_verdict", scan.exponent, pass, dt, n, std::nullopt, 1.0);
  };
  scan_records(gap_zero, "p_last_zero_gap_below");
  scan_records(gap_pos, "p_position_gap_below");

  // each leg is away from the origin at the other leg's last zero
  double prev_frac = 0.0;
  bool increasing = true;
  const std::vector<double> frac_meshes = {1e-2, dt};
  for (std::size_t m = 0; m < frac_meshes.size(); ++m) {
    const double fdt = frac_meshes[m];
    const double theta = std::sqrt(fdt);
    const EstimateReport frac =
        mc_over_paths(std::min<std::int64_t>(n, 20000), cfg.workers, [&](std::int64_t i) {
          const CouplingRun run = wiener_run(g, cfg, cfg.t, fdt, 8 + 8 * m, i);
          const double gy = last_zero(run.y_path, cfg.t);
          const int kgy = run.x_path.grid_index(gy);
          return run.x_path.points[kgy].radius > theta ? 1.0 : 0.0;
        });
    if (m > 0 && frac.estimate <= prev_frac) increasing = false;
    rec.add_estimate("alive_at_other_leg_last_zero", frac,
                     m + 1 < frac_meshes.size() || (increasing && frac.estimate > 0.7),
                     fdt);
    prev_frac = frac.estimate;
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E11: two-ray negative control
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e11(const Resolved& cfg) {
  Recorder rec{cfg, "two-ray control: legs coalesce as the mesh refines"};
  const StarGraph g = StarGraph::uniform(2);
  double prev = 0.0, final_value = 0.0;
  bool decreasing = true;
  for (std::size_t m = 0; m < cfg.dt.size(); ++m) {
    const double dt = cfg.dt[m];
    const std::int64_t n = dt < 5e-4 ? cfg.n_paths / 2 : cfg.n_paths;
    const EstimateReport rep = mc_over_paths(
        n, cfg.workers,
        [&](std::int64_t i) {
          const CouplingRun run = wiener_run(g, cfg, cfg.t, dt, static_cast<int>(8 * m), i);
          return distance(g, run.x_path.points[run.x_path.grid_index(cfg.t)],
                          run.y_path.points[run.y_path.grid_index(cfg.t)]);
        },
        "mean_distance_two_rays");
    if (m > 0 && rep.estimate >= prev) decreasing = false;
    rec.add_estimate("mean_distance_two_rays", rep, m == 0 || rep.estimate < prev, dt);
    prev = rep.estimate;
    final_value = rep.estimate;
  }
  const double bound = 0.25 * mean_distance_target(3, cfg.t);
  rec.add_value("coalescence_verdict", final_value, decreasing && final_value < bound,
                cfg.dt.back(), cfg.n_paths, std::nullopt, 0.0, bound);
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E12: driver reconstruction round trip
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e12(const Resolved& cfg) {
  Recorder rec{cfg, "driver reconstruction round trip"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double r = cfg.r.empty() ? 0.7 : cfg.r.front();
  const auto funcs = random_test_functions(g, 10, seed_of(cfg, 40, 0), /*class_d=*/true);

  std::vector<double> medians;
  double cross_sum = 0.0, sq_over_dt = 0.0;
  std::int64_t entry_count = 0;
  double worst_r1_gap = 0.0;
  std::mutex agg_mutex;

  for (std::size_t m = 0; m < cfg.dt.size(); ++m) {
    const double dt = cfg.dt[m];
    const std::int64_t n = dt < 5e-4 ? cfg.n_paths / 2 : cfg.n_paths;
    const int subrun = static_cast<int>(8 * m);
    std::vector<double> sups(n * funcs.size());
    parallel_for(n, cfg.workers, [&](std::int64_t i) {
      const SamplePath x = simulate_wbm_exact(g, cfg.t, dt, seed_of(cfg, subrun, i));
      const auto [w, w_hat] =
          construct_driver_from_solution(g, x, r, seed_of(cfg, subrun + 1, i));
      const DriverPath w_r = mix_drivers(w, w_hat, r);
      for (std::size_t f = 0; f < funcs.size(); ++f)
        sups[i * funcs.size() + f] =
            interface_sde_residual(g, x, w_r, funcs[f]).sup_abs_residual;

      const double cross = (w.increments * w_hat.increments).sum();
      const double sq = w.increments.square().sum();
      double r1_gap = 0.0;
      if (m == 0 && i < 64) {
        const auto [w1, w1_hat] =
            construct_driver_from_solution(g, x, 1.0, seed_of(cfg, subrun + 2, i));
        const DriverPath gamma = mix_drivers(w1, w1_hat, 1.0);
        for (int k = 0; k < x.steps(); ++k)
          r1_gap = std::max(r1_gap, std::abs(gamma.increments(k, x.ray_used[k] - 1) -
                                             x.bx_increments[k]));
      }
      const std::scoped_lock lock(agg_mutex);
      cross_sum += cross / dt;
      sq_over_dt += sq / dt;
      entry_count += w.increments.size();
      worst_r1_gap = std::max(worst_r1_gap, r1_gap);
    });
    const double med = median(sups);
    rec.add_value("median_sup_residual", med, m == 0 || med < medians.back(), dt, n, r);
    medians.push_back(med);
  }

  const double slope = loglog_slope(cfg.dt, medians);
  rec.add_value("residual_loglog_slope", slope, slope >= 0.35 && slope <= 0.65,
                cfg.dt.back(), cfg.n_paths, r, 0.5, 0.15);

  // pooled cross-correlation and per-step variance of the rebuilt pair
  const double n_entries = static_cast<double>(entry_count);
  const double corr = cross_sum / sq_over_dt;
  const double corr_bound = 4.0 / std::sqrt(n_entries);
  rec.add_value("driver_pair_correlation", corr, std::abs(corr) < corr_bound,
                cfg.dt.front(), entry_count, r, 0.0, corr_bound);
  const double var_ratio = sq_over_dt / n_entries;
  rec.add_value("driver_variance_per_step_ratio", var_ratio,
                std::abs(var_ratio - 1.0) < 0.01, cfg.dt.front(), entry_count, r, 1.0,
                0.01);
  rec.add_value("reproduces_radial_driver_at_r1", worst_r1_gap, worst_r1_gap == 0.0,
                cfg.dt.front(), 64, 1.0, 0.0, 0.0);
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// E13: conditional ray frequencies given the driver
// ---------------------------------------------------------------------------

std::vector<ResultRecord> run_e13(const Resolved& cfg) {
  Recorder rec{cfg, "conditional ray frequencies given the driver"};
  const StarGraph g(cfg.n_rays, cfg.probs);
  const double dt = cfg.dt.front();
  const std::int64_t n_drivers = cfg.n_paths;
  const int copies = 64;
  const int nr = g.n_rays;

  Eigen::ArrayXXd freq(n_drivers, nr);  // per-driver frequencies among kept members
  Eigen::ArrayXd kept(n_drivers);
  std::vector<int> terminal_ray(n_drivers * copies, 0);  // 0 when near the origin
  Eigen::ArrayXXd driver_sign(n_drivers, nr);
  parallel_for(n_drivers, cfg.workers, [&](std::int64_t i) {
    const DriverPath w = gen_driver(nr, dt, grid_steps(cfg.t, dt), seed_of(cfg, 0, i));
    const auto members = simulate_conditional_ensemble(
        g, w, copies, SeedSpec{cfg.master_seed, sid(cfg, 1, i * copies)});
    Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(nr);
    const double theta = std::sqrt(dt);
    for (int c = 0; c < copies; ++c) {
      const GraphPoint& x = members[c].points.back();
      if (x.radius <= theta) continue;
      counts[x.ray - 1] += 1.0;
      terminal_ray[i * copies + c] = x.ray;
    }
    kept[i] = counts.sum();
    freq.row(i) = (counts / std::max(kept[i], 1.0)).transpose();
    for (int q = 0; q < nr; ++q)
      driver_sign(i, q) = w.increments.col(q).sum() > 0.0 ? 1.0 : 0.0;
  });

  // across-driver variance of the per-driver frequencies against the binomial
  // floor p (1 - p) / (mean kept copies)
  const double mean_kept = kept.mean();
  for (int q = 0; q < nr; ++q) {
    const double mean = freq.col(q).mean();
    const Eigen::ArrayXd centered = freq.col(q) - mean;
    const double s2 = centered.square().sum() / static_cast<double>(n_drivers - 1);
    const double mu4 = centered.pow(4).mean();
    const double se_s2 = std::sqrt(
        std::max(0.0, (mu4 - s2 * s2 * (n_drivers - 3.0) / (n_drivers - 1.0)) /
                          static_cast<double>(n_drivers)));
    const double floor = g.probs[q] * (1.0 - g.probs[q]) / mean_kept;
    const double excess = s2 - floor;
    rec.add_value("frequency_variance_excess_" + std::to_string(q + 1), excess,
                  excess < 3.0 * se_s2, dt, n_drivers, std::nullopt, 0.0, 3.0 * se_s2);
  }

  // mean frequencies against the excursion probabilities, with driver-level
  // standard errors (members of one ensemble are correlated through W)
  for (int q = 0; q < nr; ++q) {
    const EstimateReport rep =
        mc_mean(freq.col(q), "mean_frequency_" + std::to_string(q + 1));
    rec.add_estimate("mean_frequency_" + std::to_string(q + 1), rep,
                     std::abs(rep.estimate - g.probs[q]) < 3.0 * rep.stderror, dt,
                     std::nullopt, g.probs[q], 3.0 * rep.stderror);
  }

  // independence of the terminal ray from the driver's terminal signs
  // (Bonferroni over the N sign features at the 1% level)
  for (int q = 0; q < nr; ++q) {
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(nr, 2);
    for (std::int64_t i = 0; i < n_drivers; ++i) {
      const int col = driver_sign(i, q) > 0.5 ? 0 : 1;
      for (int c = 0; c < copies; ++c) {
        const int ray = terminal_ray[i * copies + c];
        if (ray > 0) table(ray - 1, col) += 1.0;
      }
    }
    const TestOutcome chi = chi_square_table(table);
    rec.add_test("ray_vs_driver_sign_" + std::to_string(q + 1), chi,
                 chi.p_value * nr >= 0.01, dt, static_cast<std::int64_t>(table.sum()));
  }
  return std::move(rec.records);
}

// ---------------------------------------------------------------------------
// registry and dispatch
// ---------------------------------------------------------------------------

Resolved resolve(const ExperimentConfig& cfg, const std::string& id) {
  Resolved out;
  out.id = id;
  out.ordinal = experiment_ordinal(id);
  if (out.ordinal < 0) throw std::invalid_argument("unknown experiment id: " + id);
  out.master_seed = cfg.master_seed;
  out.workers = cfg.workers.value_or(0);
  if (out.workers <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    out.workers = hw > 0 ? static_cast<int>(hw) : 2;
  }
  out.out_dir = cfg.out_dir;
  out.t = cfg.t.value_or(1.0);

  // per-experiment documented defaults
  const auto dt_default = [&](std::initializer_list<double> d) {
    out.dt = cfg.dt.value_or(std::vector<double>(d));
  };
  const auto r_default = [&](std::initializer_list<double> d) {
    out.r = cfg.r.value_or(std::vector<double>(d));
  };
  const auto n_default = [&](std::int64_t d) { out.n_paths = cfg.n_paths.value_or(d); };
  out.n_rays = cfg.n_rays.value_or(id == "E11" ? 2 : 3);
  if (cfg.probs) {
    out.probs = Eigen::Map<const Eigen::ArrayXd>(cfg.probs->data(),
                                                 static_cast<Eigen::Index>(cfg.probs->size()));
  } else {
    out.probs = Eigen::ArrayXd::Constant(out.n_rays, 1.0 / out.n_rays);
  }

  if (id == "E1") {
    dt_default({1e-3});
    n_default(100000);
  } else if (id == "E2" || id == "E3") {
    dt_default({1e-2, 1e-3, 1e-4});
    n_default(400);
  } else if (id == "E4") {
    dt_default({1e-3});
    n_default(20000);
  } else if (id == "E5") {
    dt_default({1e-3});
    n_default(20000);
  } else if (id == "E6") {
    dt_default({1e-3});
    n_default(100000);
  } else if (id == "E7") {
    dt_default({1e-2, 1e-3, 1e-4});
    n_default(3000);
  } else if (id == "E8a") {
    dt_default({1e-3});
    n_default(1000);
    r_default({0.0, 0.5, 0.9});
  } else if (id == "E8b") {
    dt_default({1e-2, 1e-3, 1e-4});
    n_default(1500);
    r_default({0.0, 0.5, 1.0});
  } else if (id == "E9") {
    dt_default({1e-3});
    n_default(20000);
    r_default({0.0, 0.5, 0.9, 0.99, 1.0});
  } else if (id == "E10") {
    dt_default({1e-3});
    n_default(20000);
  } else if (id == "E11") {
    dt_default({1e-2, 1e-3, 1e-4});
    n_default(10000);
  } else if (id == "E12") {
    dt_default({1e-2, 1e-3, 1e-4});
    n_default(400);
    r_default({0.7});
  } else if (id == "E13") {
    dt_default({1e-3});
    n_default(1000);
  }
  if (out.dt.empty() || out.n_paths < 1)
    throw std::invalid_argument("experiment config: empty mesh list or n_paths < 1");
  for (std::size_t i = 1; i < out.dt.size(); ++i)
    if (out.dt[i] >= out.dt[i - 1])
      throw std::invalid_argument("experiment config: mesh list must strictly decrease");
  return out;
}

using Runner = std::vector<ResultRecord> (*)(const Resolved&);

std::vector<ResultRecord> run_e2(const Resolved& cfg) {
  return run_residual_experiment(cfg, /*interface_form=*/true);
}
std::vector<ResultRecord> run_e3(const Resolved& cfg) {
  return run_residual_experiment(cfg, /*interface_form=*/false);
}

struct RegistryEntry {
  ExperimentInfo info;
  Runner runner;
};

const std::vector<RegistryEntry>& registry_entries() {
  static const std::vector<RegistryEntry> entries = {
      {{"E1", "wbm marginals: half-normal radius; ray frequencies; arcsine last zero",
        "exact sampler marginal laws at the horizon"},
       run_e1},
      {{"E2", "interface SDE identity residual decays with the mesh",
        "pathwise residual of the driver-coordinate identity for class-D functions"},
       run_e2},
      {{"E3", "Ito formula with boundary term: residual decays with the mesh",
        "pathwise residual of the radial-driver identity and spider components"},
       run_e3},
      {{"E4", "mean spider distance = 2 (N-2)/N sqrt(2t/pi)",
        "coupled legs' mean spider distance against the closed form, N = 3,4,5"},
       run_e4},
      {{"E5", "distance minus (N-2)/N radial sum is a martingale",
        "feature-orthogonality martingale tests, with a submartingale control"},
       run_e5},
      {{"E6", "terminal rays of the two legs are independent",
        "contingency-table independence and the squared-probability identity"},
       run_e6},
      {{"E7", "local time of the spider distance vanishes",
        "banded-QV local time of the distance under joint refinement"},
       run_e7},
      {{"E8a", "radial covariation accrues r dt on shared-ray steps",
        "running covariation against r x shared-ray occupation"},
       run_e8a},
      {{"E8b", "local time carried while the other leg is at the origin vanishes",
        "exclusion fractions under refinement, with an identical-legs control"},
       run_e8b},
      {{"E9", "r-sweep: mean distance bounded below and continuous at r = 1",
        "mean spider distance across the mixing grid"},
       run_e9},
      {{"E10", "last zeros and positions of the legs separate",
        "vanishing scans for the last-zero gap and the terminal distance"},
       run_e10},
      {{"E11", "two-ray control: legs coalesce as the mesh refines",
        "two-ray coupling mean distance across meshes"},
       run_e11},
      {{"E12", "driver reconstruction round trip",
        "rebuilt driver pair solves the identity and decorrelates"},
       run_e12},
      {{"E13", "conditional ray frequencies given the driver",
        "ensemble frequency variance against the binomial floor; sign independence"},
       run_e13},
  };
  return entries;
}

}  // namespace

// ---------------------------------------------------------------------------
// public interface
// ---------------------------------------------------------------------------

void parallel_for(std::int64_t n, int workers, const std::function<void(std::int64_t)>& body) {
  if (workers <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    workers = hw > 0 ? static_cast<int>(hw) : 1;
  }
  workers = static_cast<int>(std::min<std::int64_t>(workers, std::max<std::int64_t>(n, 1)));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const std::int64_t chunk = std::max<std::int64_t>(1, n / (8 * workers));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int wkr = 0; wkr < workers; ++wkr) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t start = next.fetch_add(chunk);
        if (start >= n) return;
        const std::int64_t end = std::min(n, start + chunk);
        try {
          for (std::int64_t i = start; i < end; ++i) body(i);
        } catch (...) {
          const std::scoped_lock lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

const std::vector<ExperimentInfo>& experiment_registry() {
  static const std::vector<ExperimentInfo> infos = [] {
    std::vector<ExperimentInfo> out;
    for (const RegistryEntry& e : registry_entries()) out.push_back(e.info);
    return out;
  }();
  return infos;
}

std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
  for (const RegistryEntry& entry : registry_entries()) {
    if (entry.info.id != cfg.experiment_id) continue;
    const Resolved resolved = resolve(cfg, cfg.experiment_id);
    const auto start = std::chrono::steady_clock::now();
    std::vector<ResultRecord> records = entry.runner(resolved);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (ResultRecord& rec : records) rec.wallclock_s = elapsed;
    return records;
  }
  throw std::invalid_argument("unknown experiment id: " + cfg.experiment_id);
}

std::vector<ResultRecord> run_all(ExperimentConfig cfg) {
  std::vector<ResultRecord> all;
  for (const RegistryEntry& entry : registry_entries()) {
    cfg.experiment_id = entry.info.id;
    std::vector<ResultRecord> records = run_experiment(cfg);
    all.insert(all.end(), std::make_move_iterator(records.begin()),
               std::make_move_iterator(records.end()));
  }
  return all;
}

bool all_pass(const std::vector<ResultRecord>& records) {
  return std::all_of(records.begin(), records.end(),
                     [](const ResultRecord& rec) { return rec.pass; });
}

namespace {

nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["experiment_id"] = cfg.experiment_id;
  if (cfg.n_rays) j["n_rays"] = *cfg.n_rays;
  if (cfg.probs) j["probs"] = *cfg.probs;
  if (cfg.t) j["t"] = *cfg.t;
  if (cfg.dt) j["dt"] = *cfg.dt;
  if (cfg.n_paths) j["n_paths"] = *cfg.n_paths;
  if (cfg.r) j["r"] = *cfg.r;
  j["master_seed"] = cfg.master_seed;
  if (cfg.workers) j["workers"] = *cfg.workers;
  j["out_dir"] = cfg.out_dir;
  return j;
}

std::string csv_escape_free(const std::string& s) { return s; }  // fields are comma-free

}  // namespace

void emit_results(const std::vector<ResultRecord>& records, const ExperimentConfig& cfg,
                  const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("emit_results: cannot create " + out_dir);

  const std::string csv_path = out_dir + "/results.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("emit_results: cannot open " + csv_path);
  csv << "experiment_id,claim_ref,statistic_name,estimate,stderr,ci_low,ci_high,"
         "n_paths,n_rays,probs,t,dt,r,master_seed,pass,wallclock_s\n";
  for (const ResultRecord& rec : records) {
    csv << rec.experiment_id << ',' << csv_escape_free(rec.claim_ref) << ','
        << rec.statistic_name << ',' << format_double(rec.estimate) << ','
        << format_double(rec.stderror) << ',' << format_double(rec.ci_low) << ','
        << format_double(rec.ci_high) << ',' << rec.n_paths << ',' << rec.n_rays << ','
        << rec.probs_repr << ',' << format_double(rec.t) << ',' << format_double(rec.dt)
        << ',' << (rec.r ? format_double(*rec.r) : std::string{}) << ','
        << rec.master_seed << ',' << (rec.pass ? "true" : "false") << ',';
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", rec.wallclock_s);
    csv << wall << '\n';
  }
  if (!csv.good()) throw std::runtime_error("emit_results: write failure on " + csv_path);
  csv.close();

  nlohmann::ordered_json summary;
  summary["config"] = config_json(cfg);
  summary["records"] = nlohmann::ordered_json::array();
  for (const ResultRecord& rec : records) {
    nlohmann::ordered_json j;
    j["experiment_id"] = rec.experiment_id;
    j["claim_ref"] = rec.claim_ref;
    j["statistic_name"] = rec.statistic_name;
    j["estimate"] = rec.estimate;
    j["stderr"] = rec.stderror;
    j["ci_low"] = rec.ci_low;
    j["ci_high"] = rec.ci_high;
    j["n_paths"] = rec.n_paths;
    j["n_rays"] = rec.n_rays;
    j["probs"] = rec.probs_repr;
    j["t"] = rec.t;
    j["dt"] = rec.dt;
    if (rec.r) j["r"] = *rec.r;
    j["master_seed"] = rec.master_seed;
    j["pass"] = rec.pass;
    j["wallclock_s"] = rec.wallclock_s;
    j["config_hash"] = rec.config_hash;
    if (rec.target) j["target"] = *rec.target;
    if (rec.tolerance) j["tolerance"] = *rec.tolerance;
    if (rec.test) {
      j["statistic"] = rec.test->statistic;
      j["p_value"] = rec.test->p_value;
      j["dof"] = rec.test->dof;
      j["reject_at_5pct"] = rec.test->reject_at_5pct;
    }
    summary["records"].push_back(std::move(j));
  }
  summary["suite_pass"] = all_pass(records);

  const std::string json_path = out_dir + "/summary.json";
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw std::runtime_error("emit_results: cannot open " + json_path);
  js << summary.dump(2) << '\n';
  if (!js.good()) throw std::runtime_error("emit_results: write failure on " + json_path);
}

namespace {

std::vector<double> parse_double_list(const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("empty list value");
  return out;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ExperimentConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key == "experiment_id") cfg.experiment_id = value;
    else if (key == "n_rays") cfg.n_rays = std::stoi(value);
    else if (key == "probs") cfg.probs = parse_double_list(value);
    else if (key == "t") cfg.t = std::stod(value);
    else if (key == "dt") cfg.dt = parse_double_list(value);
    else if (key == "n_paths") cfg.n_paths = std::stoll(value);
    else if (key == "r") cfg.r = parse_double_list(value);
    else if (key == "master_seed") cfg.master_seed = std::stoull(value);
    else if (key == "workers") cfg.workers = std::stoi(value);
    else if (key == "out_dir") cfg.out_dir = value;
    else
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": unknown key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig config_from_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("replay: cannot open " + path);
  nlohmann::json j;
  in >> j;
  const auto& c = j.at("config");
  ExperimentConfig cfg;
  cfg.experiment_id = c.at("experiment_id").get<std::string>();
  if (c.contains("n_rays")) cfg.n_rays = c["n_rays"].get<int>();
  if (c.contains("probs")) cfg.probs = c["probs"].get<std::vector<double>>();
  if (c.contains("t")) cfg.t = c["t"].get<double>();
  if (c.contains("dt")) cfg.dt = c["dt"].get<std::vector<double>>();
  if (c.contains("n_paths")) cfg.n_paths = c["n_paths"].get<std::int64_t>();
  if (c.contains("r")) cfg.r = c["r"].get<std::vector<double>>();
  cfg.master_seed = c.at("master_seed").get<std::uint64_t>();
  if (c.contains("workers")) cfg.workers = c["workers"].get<int>();
  if (c.contains("out_dir")) cfg.out_dir = c["out_dir"].get<std::string>();
  return cfg;
}

}  // namespace walsh
