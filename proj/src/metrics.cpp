#include "dinglab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ding {

double wasserstein2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("wasserstein2_1d: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = a[i] - b[i];
      acc += diff * diff;
    }
    return std::sqrt(acc / static_cast<double>(n));
  }
  // W2^2 = int_0^1 (F^-1(u) - G^-1(u))^2 du with piecewise-constant inverse
  // CDFs; integrate exactly over the union of the break levels i/n and j/m.
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < n && j < m) {
    const double ui = static_cast<double>(i + 1) / static_cast<double>(n);
    const double uj = static_cast<double>(j + 1) / static_cast<double>(m);
    const double next = std::min(ui, uj);
    const double diff = a[i] - b[j];
    acc += diff * diff * (next - u);
    u = next;
    if (ui <= next) ++i;
    if (uj <= next) ++j;
  }
  return std::sqrt(acc);
}

double sliced_wasserstein_fixed(const std::vector<Vec>& a,
                                const std::vector<Vec>& b,
                                const Mat& projections) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("sliced_wasserstein: empty sample set");
  if (a[0].size() != b[0].size())
    throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  if (projections.rows() != a[0].size())
    throw std::invalid_argument("sliced_wasserstein: projection dim mismatch");
  const Eigen::Index L = projections.cols();
  std::vector<double> pa(a.size()), pb(b.size());
  double total = 0.0;
  for (Eigen::Index l = 0; l < L; ++l) {
    const Vec dir = projections.col(l);
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = dir.dot(a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = dir.dot(b[i]);
    total += wasserstein2_1d(pa, pb);
  }
  return total / static_cast<double>(L);
}

double sliced_wasserstein(const std::vector<Vec>& a, const std::vector<Vec>& b,
                          int n_projections, Rng& rng) {
  if (n_projections < 1)
    throw std::invalid_argument("sliced_wasserstein: need >= 1 projection");
  if (a.empty() || b.empty())
    throw std::invalid_argument("sliced_wasserstein: empty sample set");
  const Eigen::Index d = a[0].size();
  Mat projections(d, n_projections);
  for (int l = 0; l < n_projections; ++l) {
    Vec dir = rng.normal_vec(static_cast<int>(d));
    double norm = dir.norm();
    while (norm == 0.0) {
      dir = rng.normal_vec(static_cast<int>(d));
      norm = dir.norm();
    }
    projections.col(l) = dir / norm;
  }
  return sliced_wasserstein_fixed(a, b, projections);
}

Vec empirical_mean(const std::vector<Vec>& samples) {
  if (samples.empty())
    throw std::invalid_argument("empirical_mean: empty sample set");
  Vec m = Vec::Zero(samples[0].size());
  for (const auto& x : samples) m += x;
  return m / static_cast<double>(samples.size());
}

Mat empirical_cov(const std::vector<Vec>& samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("empirical_cov: need >= 2 samples");
  const Vec m = empirical_mean(samples);
  Mat c = Mat::Zero(m.size(), m.size());
  for (const auto& x : samples) {
    const Vec dx = x - m;
    c += dx * dx.transpose();
  }
  return c / static_cast<double>(samples.size() - 1);
}

std::pair<double, double> moment_errors(const std::vector<Vec>& samples,
                                        const Vec& reference_mean,
                                        const Mat& reference_cov) {
  const Vec m = empirical_mean(samples);
  const Mat c = empirical_cov(samples);
  return {(m - reference_mean).norm(), (c - reference_cov).norm()};
}

}  // namespace ding
