#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dinglab/schedule.hpp"
#include "dinglab/task.hpp"

namespace ding {

// Exact one-step transition law of a twisted reverse step under a zero-mean
// Gaussian prior N(0, Sigma).
struct TransitionMoments {
  enum class Label { Dps, Ding };
  Vec mean;
  Mat cov;
  Label label = Label::Dps;
};

struct BiasReport {
  double eta = 0.0;
  double mean_gap = 0.0;     // || mu_dps - mu_ding ||_2
  double cov_gap = 0.0;      // || Sigma_dps - Sigma_ding ||_op
  double epsilon_s = 0.0;
  double epsilon_bound = 0.0;
};

// D_t = alpha_t Sigma (alpha_t^2 Sigma + sigma_t^2 I)^-1 for the zero-mean
// Gaussian prior.
Mat gaussian_denoiser_matrix(const Mat& sigma, double t,
                             const NoiseSchedule& ns);

// DDIM transition mean mu_{s|t}(x_t; eta) = alpha_s D_t x_t
// + sqrt(sigma_s^2 - eta^2) sigma_t^-1 (I - alpha_t D_t) x_t.
Vec ddim_mean_gaussian(const Mat& sigma, const Vec& x_t, double s, double t,
                       const NoiseSchedule& ns, double eta_s);

TransitionMoments dps_transition_moments(const Mat& sigma, const Vec& x_t,
                                         const InpaintingTask& task, double s,
                                         double t, const NoiseSchedule& ns,
                                         double eta_s);
TransitionMoments ding_transition_moments(const Mat& sigma, const Vec& x_t,
                                          const InpaintingTask& task, double s,
                                          double t, const NoiseSchedule& ns,
                                          double eta_s);

TransitionMoments dps_transition_moments(const Mat& sigma, const Vec& x_t,
                                         const InpaintingTask& task, double s,
                                         double t, const NoiseSchedule& ns,
                                         const EtaSchedule& es);
TransitionMoments ding_transition_moments(const Mat& sigma, const Vec& x_t,
                                          const InpaintingTask& task, double s,
                                          double t, const NoiseSchedule& ns,
                                          const EtaSchedule& es);

// epsilon_s = || (D_s - alpha_s^-1 I) M ||_op together with its upper bound
// (sigma_s^2 / alpha_s) / (alpha_s^2 lambda_min(Sigma) + sigma_s^2).
std::pair<double, double> epsilon_and_bound(const Mat& sigma,
                                            const InpaintingTask& task,
                                            double s, const NoiseSchedule& ns);

// Per-eta moment gaps computed from the two closed forms above.
std::vector<BiasReport> bias_scan(const Mat& sigma, const Vec& x_t,
                                  const InpaintingTask& task, double s,
                                  double t, const NoiseSchedule& ns,
                                  const std::vector<double>& eta_values);

// Ordinary least squares slope of log y against log x.
double fit_order(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ding
