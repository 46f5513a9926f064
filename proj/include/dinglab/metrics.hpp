#pragma once

#include <vector>

#include <Eigen/Core>

#include "dinglab/rng.hpp"
#include "dinglab/task.hpp"

namespace ding {

struct MetricReport {
  double sliced_wasserstein = 0.0;
  double mean_error = 0.0;
  double cov_error = 0.0;
  double cpsnr = 0.0;
  int n_samples = 0;
  int n_projections = 0;
};

// Exact 2-Wasserstein distance between two 1D empirical measures. Unequal
// sizes are handled by integrating the quantile functions over the union of
// quantile levels.
double wasserstein2_1d(std::vector<double> a, std::vector<double> b);

// Average over unit directions (columns of `projections`) of the projected
// 1D 2-Wasserstein distance.
double sliced_wasserstein_fixed(const std::vector<Vec>& a,
                                const std::vector<Vec>& b,
                                const Mat& projections);

// As above with `n_projections` random unit directions drawn from rng.
double sliced_wasserstein(const std::vector<Vec>& a, const std::vector<Vec>& b,
                          int n_projections, Rng& rng);

// (L2 distance of the empirical mean to reference,
//  Frobenius distance of the empirical covariance to reference).
std::pair<double, double> moment_errors(const std::vector<Vec>& samples,
                                        const Vec& reference_mean,
                                        const Mat& reference_cov);

Vec empirical_mean(const std::vector<Vec>& samples);
Mat empirical_cov(const std::vector<Vec>& samples);

}  // namespace ding
