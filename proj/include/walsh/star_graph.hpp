// Geometry and function spaces of a metric star graph: N half-lines (rays)
// glued at a single origin, geodesic distance, ray label, the spider
// rescaling, and a closed-form family of bounded C^2 test functions.
#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

namespace walsh {

// Star graph configuration: ray count N and excursion probabilities p_1..p_N.
// Probabilities are strictly inside (0,1) and sum to 1 (tolerance 1e-12).
struct StarGraph {
  int n_rays;
  Eigen::ArrayXd probs;

  StarGraph(int n, Eigen::ArrayXd p);

  static StarGraph uniform(int n);

  bool valid_ray(int ray) const { return ray >= 1 && ray <= n_rays; }
};

// A point of the graph: the origin, or a (ray, radius) pair with radius > 0.
// Radii below 1e-300 collapse to the origin so that denormals never carry a
// ray label.
struct GraphPoint {
  int ray = 0;       // 0 = origin, otherwise 1..N
  double radius = 0.0;

  static GraphPoint origin() { return {}; }
  static GraphPoint on_ray(int ray, double radius);

  bool is_origin() const { return ray == 0; }

  friend bool operator==(const GraphPoint&, const GraphPoint&) = default;
};

// Geodesic distance: |r_x - r_y| on a shared ray, r_x + r_y across rays.
double distance(const StarGraph& g, const GraphPoint& x, const GraphPoint& y);

// Ray label of a non-origin point; empty at the origin.
std::optional<int> epsilon(const GraphPoint& x);

// Spider rescaling: e_i(r) -> e_i(r / (N p_i)), origin fixed. With uniform
// probabilities this is the identity map.
GraphPoint spider_transform(const StarGraph& g, const GraphPoint& x);

// Radius of the spider-transformed point, i.e. r / (N p_i) (0 at the origin).
double spider_radius(const StarGraph& g, const GraphPoint& x);

// Test function on the graph, one profile per ray:
//   f(e_i(r)) = a_i (1 - exp(-r)) + b_i (1 - exp(-r))^2.
// f is continuous with f(0) = 0, and f, f', f'' are bounded with finite
// limits at 0+, so f lies in C_b^2 for any coefficients. Membership in the
// class D is the linear constraint sum_i p_i a_i = 0.
struct TestFunction {
  Eigen::ArrayXd a;  // per-ray first-derivative limits at 0+
  Eigen::ArrayXd b;  // per-ray curvature coefficients

  TestFunction(Eigen::ArrayXd a_coeffs, Eigen::ArrayXd b_coeffs);

  int n_rays() const { return static_cast<int>(a.size()); }
};

struct TestFunctionValues {
  double value;
  double d1;
  double d2;
};

bool in_class_d(const StarGraph& g, const TestFunction& f, double tol = 1e-12);

// Evaluate (f, f', f'') at a point. At the origin the derivatives follow the
// p-weighted convention f'(0) = sum_i p_i (f o e_i)'(0+), same for f''.
TestFunctionValues eval_test_function(const StarGraph& g, const TestFunction& f,
                                      const GraphPoint& x);

}  // namespace walsh
