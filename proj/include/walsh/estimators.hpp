// Pathwise functionals: local-time estimators, last-zero times, quadratic
// (co)variation, the spider decomposition, and discrete residuals of the
// interface SDE and of the Ito formula for functions of the path.
//
// All stochastic integrals use the left-point rule; the ray indicator over a
// step is the step's ray_used entry (the freshly chosen ray at zero-visits),
// matching the simulators' driver bookkeeping.
#pragma once

#include "walsh/sde_sim.hpp"

#include <string>
#include <vector>

namespace walsh {

enum class LocalTimeMethod { occupation, downcrossing, tanaka };

struct LocalTimeEstimate {
  double level = 0.0;
  double eps = 0.0;
  double value = 0.0;
  LocalTimeMethod method = LocalTimeMethod::occupation;
};

// Occupation-band estimator at level a: (rate / (2 eps)) * dt * #{k < K :
// |series[k] - a| < eps}. `rate` is the quadratic-variation rate d<series>/ds
// of the sampled semimartingale (1 for Brownian radial parts).
LocalTimeEstimate local_time_occupation(const Eigen::ArrayXd& series, double dt,
                                        double a, double eps, double rate = 1.0);

// Crossing-count estimator at the interface: counts completed down-crossings
// from radius >= eps to an origin visit (the path's zero-visit flags are the
// lower level), normalized by the grid-corrected crossing level.
LocalTimeEstimate local_time_downcrossing(const SamplePath& path, double eps);

// Local time read off the path's own Tanaka bookkeeping at time t.
LocalTimeEstimate local_time_tanaka(const SamplePath& path, double t);

// Local time at 0+ of the spider distance D_t = d(Xbar_t, Ybar_t), using the
// one-sided band (0, eps) with the path's own squared increments as the
// quadratic-variation measure: (1/(2 eps)) * sum_{0 < D_k < eps} (D_{k+1}-D_k)^2.
LocalTimeEstimate local_time_of_distance(const StarGraph& g, const CouplingRun& run,
                                         double eps);

// Spider distance series D_k = d(Xbar_k, Ybar_k).
Eigen::ArrayXd spider_distance(const StarGraph& g, const CouplingRun& run);

// Largest grid time <= t flagged as a zero-visit. Throws if the path has no
// zero-visit by t (impossible for origin-started paths).
double last_zero(const SamplePath& path, double t);

// Running sum of products of two increment sequences.
Eigen::ArrayXd quadratic_covariation(const Eigen::ArrayXd& u, const Eigen::ArrayXd& v);

struct ResidualReport {
  double sup_abs_residual = 0.0;
  // Signed terminal values of each term; they sum to the terminal residual.
  double delta_f = 0.0;        //  f(X_T) - f(X_0)
  double stochastic = 0.0;     // -sum f'(X_k) (driver increment of step k)
  double drift = 0.0;          // -(1/2) sum f''(X_k) dt
  double local_time_term = 0.0;  // -f'(0) L_T (Ito-formula residual only)
};

// Residual of the interface SDE over the grid for a class-D test function:
// f(X_t) - f(X_0) - sum_i int f'(X) 1_{E_i} dW^i - (1/2) int f''(X) ds,
// reported as the sup of |.| over grid times. Throws if f is not in class D.
ResidualReport interface_sde_residual(const StarGraph& g, const SamplePath& path,
                                      const DriverPath& w, const TestFunction& f);

// Residual of the Ito formula with local-time boundary term for any test
// function: f(X_t) - f(X_0) - int f'(X) dB^X - (1/2) int f''(X) ds
// - [sum_i p_i a_i] L_t(|X|), using the path's own bx_increments and local_time.
ResidualReport freidlin_sheu_residual(const StarGraph& g, const SamplePath& path,
                                      const TestFunction& f);

// The N spider component series: column i holds |Xbar_t| when the path sits
// on ray i+1 and 0 elsewhere; rows sum to |Xbar_t| at every grid time.
Eigen::ArrayXXd spider_components(const StarGraph& g, const SamplePath& path);

// Fractions of local-time increase of each leg happening while the other leg
// is at the interface: first = fraction of dL(|X|) carried on steps where Y
// is within theta of the origin or visited it, second = the same with the
// roles swapped. A leg with zero accumulated local time reports fraction 0.
std::pair<double, double> local_time_exclusion(const CouplingRun& run, double theta);

}  // namespace walsh
