#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "dinglab/rng.hpp"
#include "dinglab/schedule.hpp"
#include "dinglab/task.hpp"

namespace ding {

// Denoiser output pair: x0_hat = E[X0 | X_t], x1_hat = E[X1 | X_t].
// For sigma_t > 0 they satisfy x1_hat = (x_t - alpha_t x0_hat) / sigma_t.
struct DenoiserOutput {
  Vec x0_hat;
  Vec x1_hat;
};

// A prior with closed-form denoiser, exact sampler, moments, and exact
// inpainting posterior within the same family.
class AnalyticPrior {
 public:
  virtual ~AnalyticPrior() = default;
  virtual int dim() const = 0;
  virtual DenoiserOutput denoise(const Vec& x_t, double t,
                                 const NoiseSchedule& ns) const = 0;
  virtual Vec sample(Rng& rng) const = 0;
  virtual Vec mean() const = 0;
  virtual Mat cov() const = 0;
  virtual std::unique_ptr<AnalyticPrior> clone() const = 0;
};

class GaussianPrior final : public AnalyticPrior {
 public:
  GaussianPrior(Vec mean, Mat cov);

  int dim() const override { return static_cast<int>(mean_.size()); }
  DenoiserOutput denoise(const Vec& x_t, double t,
                         const NoiseSchedule& ns) const override;
  Vec sample(Rng& rng) const override;
  Vec mean() const override { return mean_; }
  Mat cov() const override { return cov_; }
  std::unique_ptr<AnalyticPrior> clone() const override {
    return std::make_unique<GaussianPrior>(*this);
  }

  // D_t = alpha_t Sigma (alpha_t^2 Sigma + sigma_t^2 I)^-1
  Mat denoiser_matrix(double t, const NoiseSchedule& ns) const;

 private:
  Vec mean_;
  Mat cov_;
  Mat chol_;  // lower Cholesky factor of cov_
};

class GmmPrior final : public AnalyticPrior {
 public:
  GmmPrior(Vec weights, std::vector<Vec> means, std::vector<Mat> covs);

  int dim() const override { return static_cast<int>(means_[0].size()); }
  DenoiserOutput denoise(const Vec& x_t, double t,
                         const NoiseSchedule& ns) const override;
  Vec sample(Rng& rng) const override;
  Vec mean() const override;
  Mat cov() const override;
  std::unique_ptr<AnalyticPrior> clone() const override {
    return std::make_unique<GmmPrior>(*this);
  }

  int components() const { return static_cast<int>(weights_.size()); }
  const Vec& weights() const { return weights_; }
  const std::vector<Vec>& means() const { return means_; }
  const std::vector<Mat>& covs() const { return covs_; }

 private:
  Vec weights_;
  std::vector<Vec> means_;
  std::vector<Mat> covs_;
  std::vector<Mat> chols_;
};

DenoiserOutput gaussian_denoise(const GaussianPrior& p, const Vec& x_t,
                                double t, const NoiseSchedule& ns);
DenoiserOutput gmm_denoise(const GmmPrior& p, const Vec& x_t, double t,
                           const NoiseSchedule& ns);

// Exact posterior for y = x[observed] + N(0, sigma_y^2 I). An empty observed
// set returns the prior unchanged. The GMM case updates each component by
// conjugacy and reweights with marginal likelihoods.
GaussianPrior exact_inpaint_posterior(const GaussianPrior& p,
                                      const InpaintingTask& task);
GmmPrior exact_inpaint_posterior(const GmmPrior& p, const InpaintingTask& task);
std::unique_ptr<AnalyticPrior> exact_inpaint_posterior(
    const AnalyticPrior& p, const InpaintingTask& task);

std::vector<Vec> sample_prior(const AnalyticPrior& p, int n, Rng& rng);

// log N(x; mean, cov) with cov given by its lower Cholesky factor.
double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& chol);

}  // namespace ding
