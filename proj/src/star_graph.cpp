#include "walsh/star_graph.hpp"

#include <cmath>

namespace walsh {

namespace {
constexpr double kProbSumTol = 1e-12;
constexpr double kOriginRadius = 1e-300;  // radii below this collapse to the origin
}  // namespace

StarGraph::StarGraph(int n, Eigen::ArrayXd p) : n_rays(n), probs(std::move(p)) {
  if (n_rays < 2) throw std::invalid_argument("StarGraph: need at least 2 rays");
  if (probs.size() != n_rays)
    throw std::invalid_argument("StarGraph: probs size must equal n_rays");
  for (int i = 0; i < n_rays; ++i) {
    if (!(probs[i] > 0.0 && probs[i] < 1.0))
      throw std::invalid_argument("StarGraph: every p_i must lie strictly in (0,1)");
  }
  if (std::abs(probs.sum() - 1.0) > kProbSumTol)
    throw std::invalid_argument("StarGraph: probabilities must sum to 1");
}

StarGraph StarGraph::uniform(int n) {
  return StarGraph(n, Eigen::ArrayXd::Constant(n, 1.0 / n));
}

GraphPoint GraphPoint::on_ray(int ray, double radius) {
  if (ray < 1) throw std::invalid_argument("GraphPoint: ray index must be >= 1");
  if (!(radius >= 0.0)) throw std::invalid_argument("GraphPoint: radius must be >= 0");
  if (radius < kOriginRadius) return origin();
  return {ray, radius};
}

double distance(const StarGraph& g, const GraphPoint& x, const GraphPoint& y) {
  if (!x.is_origin() && !g.valid_ray(x.ray))
    throw std::out_of_range("distance: ray index of x out of range");
  if (!y.is_origin() && !g.valid_ray(y.ray))
    throw std::out_of_range("distance: ray index of y out of range");
  if (x.ray == y.ray) return std::abs(x.radius - y.radius);
  return x.radius + y.radius;
}

std::optional<int> epsilon(const GraphPoint& x) {
  if (x.is_origin()) return std::nullopt;
  return x.ray;
}

GraphPoint spider_transform(const StarGraph& g, const GraphPoint& x) {
  if (x.is_origin()) return GraphPoint::origin();
  if (!g.valid_ray(x.ray)) throw std::out_of_range("spider_transform: ray out of range");
  return GraphPoint::on_ray(x.ray, x.radius / (g.n_rays * g.probs[x.ray - 1]));
}

double spider_radius(const StarGraph& g, const GraphPoint& x) {
  if (x.is_origin()) return 0.0;
  return x.radius / (g.n_rays * g.probs[x.ray - 1]);
}

TestFunction::TestFunction(Eigen::ArrayXd a_coeffs, Eigen::ArrayXd b_coeffs)
    : a(std::move(a_coeffs)), b(std::move(b_coeffs)) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("TestFunction: a and b must share size >= 2");
}

bool in_class_d(const StarGraph& g, const TestFunction& f, double tol) {
  if (f.n_rays() != g.n_rays)
    throw std::invalid_argument("in_class_d: coefficient size mismatch");
  return std::abs((g.probs * f.a).sum()) <= tol;
}

TestFunctionValues eval_test_function(const StarGraph& g, const TestFunction& f,
                                      const GraphPoint& x) {
  if (f.n_rays() != g.n_rays)
    throw std::invalid_argument("eval_test_function: coefficient size mismatch");
  if (x.is_origin()) {
    // p-weighted convention: f'(0) = sum p_i a_i, f''(0) = sum p_i (2 b_i - a_i).
    const double d1 = (g.probs * f.a).sum();
    const double d2 = (g.probs * (2.0 * f.b - f.a)).sum();
    return {0.0, d1, d2};
  }
  if (!g.valid_ray(x.ray)) throw std::out_of_range("eval_test_function: ray out of range");
  const double ai = f.a[x.ray - 1];
  const double bi = f.b[x.ray - 1];
  const double e = std::exp(-x.radius);
  const double u = 1.0 - e;
  return {ai * u + bi * u * u,
          ai * e + 2.0 * bi * u * e,
          -ai * e + 2.0 * bi * e * (2.0 * e - 1.0)};
}

}  // namespace walsh
