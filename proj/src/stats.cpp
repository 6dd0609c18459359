#include "walsh/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace walsh {

namespace {
constexpr double kZ95 = 1.959963984540054;  // two-sided 95% normal quantile
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// Regularized lower incomplete gamma by series expansion (x < s + 1).
double gamma_p_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int n = 1; n < 500; ++n) {
    term *= x / (s + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Regularized upper incomplete gamma by continued fraction (x >= s + 1).
double gamma_q_contfrac(double s, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

}  // namespace

double gamma_p(double s, double x) {
  if (!(s > 0.0)) throw std::domain_error("gamma_p: s must be > 0");
  if (x <= 0.0) return 0.0;
  return (x < s + 1.0) ? gamma_p_series(s, x) : 1.0 - gamma_q_contfrac(s, x);
}

double chi_square_survival(double x, int dof) {
  if (dof < 1) throw std::domain_error("chi_square_survival: dof must be >= 1");
  if (x <= 0.0) return 1.0;
  return (x < dof + 1.0) ? 1.0 - gamma_p_series(0.5 * dof, 0.5 * x)
                         : gamma_q_contfrac(0.5 * dof, 0.5 * x);
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double half_normal_cdf(double x, double sigma) {
  if (x <= 0.0) return 0.0;
  return std::erf(x / (sigma * std::sqrt(2.0)));
}

double arcsine_cdf(double x, double t) {
  if (x <= 0.0) return 0.0;
  if (x >= t) return 1.0;
  return 2.0 / M_PI * std::asin(std::sqrt(x / t));
}

double skew_bm_cdf(double x, double t, double p_plus) {
  // Density: 2(1-p_plus) phi_t(x) for x < 0 and 2 p_plus phi_t(x) for x > 0.
  const double sigma = std::sqrt(t);
  if (x <= 0.0) return 2.0 * (1.0 - p_plus) * normal_cdf(x / sigma);
  return (1.0 - p_plus) + p_plus * (2.0 * normal_cdf(x / sigma) - 1.0);
}

EstimateReport mc_mean(const Eigen::ArrayXd& samples, std::string name) {
  const auto n = samples.size();
  if (n < 2) throw std::invalid_argument("mc_mean: need at least 2 samples");
  const double mean = samples.mean();
  const double var = (samples - mean).square().sum() / static_cast<double>(n - 1);
  const double se = std::sqrt(var / static_cast<double>(n));
  return {std::move(name), mean, se, mean - kZ95 * se, mean + kZ95 * se, n};
}

EstimateReport binomial_report(std::int64_t count, std::int64_t n, std::string name) {
  if (n < 1) throw std::invalid_argument("binomial_report: n must be >= 1");
  const double p = static_cast<double>(count) / static_cast<double>(n);
  const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
  return {std::move(name), p, se, p - kZ95 * se, p + kZ95 * se, n};
}

TestOutcome chi_square_table(const Eigen::MatrixXd& table) {
  const double total = table.sum();
  if (total <= 0.0) throw std::invalid_argument("chi_square_table: empty table");
  const Eigen::VectorXd row_sums = table.rowwise().sum();
  const Eigen::VectorXd col_sums = table.colwise().sum().transpose();
  double stat = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      const double expected = row_sums[i] * col_sums[j] / total;
      if (expected <= 0.0) continue;
      const double diff = table(i, j) - expected;
      stat += diff * diff / expected;
    }
  }
  const int dof =
      static_cast<int>((table.rows() - 1) * (table.cols() - 1));
  const double p = chi_square_survival(stat, dof);
  return {stat, p, dof, p < 0.05};
}

TestOutcome chi_square_independence(const std::vector<std::pair<int, int>>& labels,
                                    int n_rays) {
  if (n_rays < 2) throw std::invalid_argument("chi_square_independence: n_rays >= 2");
  if (static_cast<std::int64_t>(labels.size()) <
      5LL * static_cast<std::int64_t>(n_rays) * n_rays)
    throw std::invalid_argument(
        "chi_square_independence: undersampled (need >= 5 N^2 pairs)");
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(n_rays, n_rays);
  for (const auto& [i, j] : labels) {
    if (i < 1 || i > n_rays || j < 1 || j > n_rays)
      throw std::out_of_range("chi_square_independence: label out of range");
    table(i - 1, j - 1) += 1.0;
  }
  return chi_square_table(table);
}

TestOutcome martingale_test(const Eigen::ArrayXd& m_t1, const Eigen::ArrayXd& m_t2,
                            const Eigen::ArrayXXd& history_features) {
  if (history_features.cols() < 1)
    throw std::invalid_argument("martingale_test: empty feature dictionary");
  if (m_t1.size() != m_t2.size() || m_t1.size() != history_features.rows())
    throw std::invalid_argument("martingale_test: sample size mismatch");
  const Eigen::ArrayXd delta = m_t2 - m_t1;
  const int n_features = static_cast<int>(history_features.cols());
  double max_abs_z = 0.0;
  double min_p = 1.0;
  for (int f = 0; f < n_features; ++f) {
    const EstimateReport rep = mc_mean(delta * history_features.col(f));
    const double z = rep.stderror > 0.0 ? rep.estimate / rep.stderror : 0.0;
    max_abs_z = std::max(max_abs_z, std::abs(z));
    min_p = std::min(min_p, 2.0 * normal_cdf(-std::abs(z)));
  }
  const double p = std::min(1.0, n_features * min_p);
  return {max_abs_z, p, n_features, p < 0.05};
}

TestOutcome ks_test(Eigen::ArrayXd samples, const std::function<double(double)>& cdf) {
  const auto n = samples.size();
  if (n < 100) throw std::invalid_argument("ks_test: need at least 100 samples");
  std::sort(samples.begin(), samples.end());
  double d = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs((i + 1.0) / n - f));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  const double lambda = (root_n + 0.12 + 0.11 / root_n) * d;
  const double p = kolmogorov_survival(lambda);
  return {d, p, 0, p < 0.05};
}

double ks_critical_value(std::int64_t n, double alpha) {
  // Invert the asymptotic tail: lambda with Q(lambda) = alpha, then d = lambda/sqrt(n).
  double lo = 1e-6, hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_survival(mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(n));
}

ScanReport vanishing_scan(std::vector<ScanPoint> points) {
  if (points.size() < 3)
    throw std::invalid_argument("vanishing_scan: need at least 3 scales");
  std::sort(points.begin(), points.end(),
            [](const ScanPoint& a, const ScanPoint& b) { return a.scale > b.scale; });
  ScanReport report;
  report.decreasing = true;
  for (std::size_t k = 0; k + 1 < points.size(); ++k)
    if (!(points[k + 1].estimate.estimate < points[k].estimate.estimate))
      report.decreasing = false;
  report.extremes_separated =
      points.back().estimate.ci_high < points.front().estimate.ci_low;

  // Least-squares slope of log p against log scale, clipping p at 0.5/n.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double m = static_cast<double>(points.size());
  for (const ScanPoint& pt : points) {
    const double p_eff =
        std::max(pt.estimate.estimate, 0.5 / static_cast<double>(std::max<std::int64_t>(
                                                 pt.estimate.n, 1)));
    const double x = std::log(pt.scale);
    const double y = std::log(p_eff);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  report.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  report.points = std::move(points);
  return report;
}

}  // namespace walsh
