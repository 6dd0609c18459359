// Statistical machinery: Monte Carlo aggregation, contingency-table
// independence tests, a feature-orthogonality martingale test, one-sample
// Kolmogorov-Smirnov, and refinement-scan diagnostics, plus the distribution
// functions they need.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace walsh {

struct EstimateReport {
  std::string name;
  double estimate = 0.0;
  double stderror = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t n = 0;
};

struct TestOutcome {
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;
  bool reject_at_5pct = false;
};

// -- distribution functions --------------------------------------------------

double normal_cdf(double x);
// Regularized incomplete gamma P(s, x); chi2_cdf(x, k) = P(k/2, x/2).
double gamma_p(double s, double x);
double chi_square_survival(double x, int dof);
// Asymptotic Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
double kolmogorov_survival(double lambda);
double half_normal_cdf(double x, double sigma);
// CDF of the last zero before t of a (reflected) Brownian motion.
double arcsine_cdf(double x, double t);
// Marginal CDF at time t of skew Brownian motion with P(positive) = p_plus.
double skew_bm_cdf(double x, double t, double p_plus);

// -- estimators and tests ----------------------------------------------------

// Sample mean with normal 95% confidence interval. Needs n >= 2.
EstimateReport mc_mean(const Eigen::ArrayXd& samples, std::string name = {});

// Mean of a Bernoulli indicator sample given as count/n.
EstimateReport binomial_report(std::int64_t count, std::int64_t n, std::string name = {});

// Pearson chi-square independence test on the n_rays x n_rays contingency
// table of label pairs (values in 1..n_rays), dof (N-1)^2. Requires at least
// 5 N^2 samples (expected-cell rule).
TestOutcome chi_square_independence(const std::vector<std::pair<int, int>>& labels,
                                    int n_rays);

// Chi-square independence on a prebuilt contingency table.
TestOutcome chi_square_table(const Eigen::MatrixXd& table);

// Feature-orthogonality martingale test: for each bounded feature column
// phi measurable at t1, tests E[(M_t2 - M_t1) phi] = 0 via the sample mean,
// then Bonferroni-aggregates. statistic = max |z|, p = min(1, F min_f p_f).
TestOutcome martingale_test(const Eigen::ArrayXd& m_t1, const Eigen::ArrayXd& m_t2,
                            const Eigen::ArrayXXd& history_features);

// One-sample Kolmogorov-Smirnov test against a continuous CDF.
TestOutcome ks_test(Eigen::ArrayXd samples, const std::function<double(double)>& cdf);

// Critical value d such that P(D_n > d) = alpha under the null (asymptotic).
double ks_critical_value(std::int64_t n, double alpha);

// -- refinement scans ---------------------------------------------------------

struct ScanPoint {
  double scale = 0.0;
  EstimateReport estimate;
};

struct ScanReport {
  bool decreasing = false;            // point estimates decrease as scale shrinks
  bool extremes_separated = false;    // CIs of largest and smallest scale disjoint
  double exponent = 0.0;              // fitted slope of log p against log scale
  std::vector<ScanPoint> points;      // sorted by descending scale
};

// Verifies probability estimates shrink with the scale and fits the power-law
// exponent. Estimates at 0 are clipped to 0.5/n for the log fit. Needs at
// least 3 scales.
ScanReport vanishing_scan(std::vector<ScanPoint> points);

}  // namespace walsh
