#pragma once

#include <Eigen/Dense>

#include "dinglab/rng.hpp"
#include "dinglab/task.hpp"

namespace ding {

// Operator (spectral) norm of a square matrix via the symmetric
// eigendecomposition of A^T A.
inline double operator_norm(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a.transpose() * a);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline double min_eigenvalue_sym(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  return es.eigenvalues().minCoeff();
}

// Random SPD matrix Q diag(lambda) Q^T with eigenvalues log-uniform in
// [eig_min, eig_max] and Q from the QR factor of a Gaussian matrix.
inline Mat random_spd(int d, double eig_min, double eig_max, Rng& rng) {
  Mat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Vec lambda(d);
  const double lo = std::log(eig_min);
  const double hi = std::log(eig_max);
  for (int i = 0; i < d; ++i)
    lambda[i] = std::exp(lo + (hi - lo) * rng.uniform());
  Mat spd = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (spd + spd.transpose());
}

// M = P^T P for the observed-coordinate projection of the task (d x d
// diagonal 0/1 matrix).
inline Mat observed_projection(const InpaintingTask& task) {
  Mat m = Mat::Zero(task.d, task.d);
  for (const int i : task.observed) m(i, i) = 1.0;
  return m;
}

// P^T y scattered into d dimensions.
inline Vec scatter_observed_vec(const InpaintingTask& task, const Vec& y) {
  Vec v = Vec::Zero(task.d);
  for (std::size_t i = 0; i < task.observed.size(); ++i)
    v[task.observed[i]] = y[static_cast<Eigen::Index>(i)];
  return v;
}

}  // namespace ding
