#include "dinglab/prior.hpp"

#include <cmath>
#include <stdexcept>

namespace ding {

namespace {

Mat checked_cholesky(const Mat& cov, const char* who) {
  if (cov.rows() != cov.cols())
    throw std::invalid_argument(std::string(who) + ": covariance not square");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument(std::string(who) +
                                ": covariance not symmetric (1e-10)");
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(who) +
                                ": covariance not positive definite");
  return llt.matrixL();
}

}  // namespace

double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& chol) {
  const Vec z = chol.triangularView<Eigen::Lower>().solve(x - mean);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < chol.rows(); ++i)
    log_det += std::log(chol(i, i));
  const double d = static_cast<double>(x.size());
  return -0.5 * z.squaredNorm() - log_det - 0.5 * d * std::log(2.0 * M_PI);
}

GaussianPrior::GaussianPrior(Vec mean, Mat cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size())
    throw std::invalid_argument("GaussianPrior: dimension mismatch");
  chol_ = checked_cholesky(cov_, "GaussianPrior");
}

Mat GaussianPrior::denoiser_matrix(double t, const NoiseSchedule& ns) const {
  const double a = ns.alpha(t);
  const double s = ns.sigma(t);
  const int d = dim();
  Mat lhs = a * a * cov_ + s * s * Mat::Identity(d, d);
  Eigen::LLT<Mat> llt(lhs);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("GaussianPrior: denoiser solve failed");
  // D_t = a Sigma (a^2 Sigma + s^2 I)^-1, kept symmetric via the solve of
  // the transposed product.
  return llt.solve(a * cov_).transpose();
}

DenoiserOutput GaussianPrior::denoise(const Vec& x_t, double t,
                                      const NoiseSchedule& ns) const {
  const double a = ns.alpha(t);
  const double s = ns.sigma(t);
  DenoiserOutput out;
  if (s == 0.0) {
    if (t != 0.0)
      throw std::runtime_error("GaussianPrior: sigma_t = 0 away from t = 0");
    out.x0_hat = x_t;
    out.x1_hat = Vec::Zero(dim());
    return out;
  }
  const Mat D = denoiser_matrix(t, ns);
  out.x0_hat = mean_ + D * (x_t - a * mean_);
  out.x1_hat = (x_t - a * out.x0_hat) / s;
  return out;
}

Vec GaussianPrior::sample(Rng& rng) const {
  return mean_ + chol_ * rng.normal_vec(dim());
}

GmmPrior::GmmPrior(Vec weights, std::vector<Vec> means, std::vector<Mat> covs)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covs_(std::move(covs)) {
  const auto k = static_cast<std::size_t>(weights_.size());
  if (k == 0 || means_.size() != k || covs_.size() != k)
    throw std::invalid_argument("GmmPrior: component count mismatch");
  if (weights_.minCoeff() < 0.0)
    throw std::invalid_argument("GmmPrior: negative weight");
  if (std::abs(weights_.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("GmmPrior: weights must sum to 1 (1e-12)");
  chols_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (means_[i].size() != means_[0].size() ||
        covs_[i].rows() != means_[0].size())
      throw std::invalid_argument("GmmPrior: dimension mismatch");
    chols_.push_back(checked_cholesky(covs_[i], "GmmPrior"));
  }
}

DenoiserOutput GmmPrior::denoise(const Vec& x_t, double t,
                                 const NoiseSchedule& ns) const {
  const double a = ns.alpha(t);
  const double s = ns.sigma(t);
  const int d = dim();
  DenoiserOutput out;
  if (s == 0.0) {
    if (t != 0.0)
      throw std::runtime_error("GmmPrior: sigma_t = 0 away from t = 0");
    out.x0_hat = x_t;
    out.x1_hat = Vec::Zero(d);
    return out;
  }

  const int k = components();
  // Responsibilities r_j ∝ w_j N(x_t; a m_j, a^2 C_j + s^2 I), computed in
  // log space with max subtraction so small sigma_t cannot underflow them.
  std::vector<double> log_r(static_cast<std::size_t>(k));
  std::vector<Vec> cond_mean(static_cast<std::size_t>(k));
  double max_log = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    const Mat marg = a * a * covs_[j] + s * s * Mat::Identity(d, d);
    Eigen::LLT<Mat> llt(marg);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("GmmPrior: marginal covariance solve failed");
    const Mat L = llt.matrixL();
    log_r[j] = std::log(std::max(weights_[j], 1e-300)) +
               gaussian_log_density(x_t, a * means_[j], L);
    cond_mean[j] = means_[j] + a * covs_[j] * llt.solve(x_t - a * means_[j]);
    max_log = std::max(max_log, log_r[j]);
  }
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    log_r[j] = std::exp(log_r[j] - max_log);
    total += log_r[j];
  }
  out.x0_hat = Vec::Zero(d);
  for (int j = 0; j < k; ++j) out.x0_hat += (log_r[j] / total) * cond_mean[j];
  out.x1_hat = (x_t - a * out.x0_hat) / s;
  return out;
}

Vec GmmPrior::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  int j = components() - 1;
  for (int i = 0; i < components(); ++i) {
    acc += weights_[i];
    if (u <= acc) {
      j = i;
      break;
    }
  }
  return means_[j] + chols_[j] * rng.normal_vec(dim());
}

Vec GmmPrior::mean() const {
  Vec m = Vec::Zero(dim());
  for (int j = 0; j < components(); ++j) m += weights_[j] * means_[j];
  return m;
}

Mat GmmPrior::cov() const {
  const Vec m = mean();
  Mat c = Mat::Zero(dim(), dim());
  for (int j = 0; j < components(); ++j) {
    const Vec dm = means_[j] - m;
    c += weights_[j] * (covs_[j] + dm * dm.transpose());
  }
  return c;
}

DenoiserOutput gaussian_denoise(const GaussianPrior& p, const Vec& x_t,
                                double t, const NoiseSchedule& ns) {
  return p.denoise(x_t, t, ns);
}

DenoiserOutput gmm_denoise(const GmmPrior& p, const Vec& x_t, double t,
                           const NoiseSchedule& ns) {
  return p.denoise(x_t, t, ns);
}

namespace {

struct ConjugateUpdate {
  Vec mean;
  Mat cov;
  double log_marginal;  // log N(y; m[observed], C[oo] + sigma_y^2 I)
};

// Linear-Gaussian conjugacy for a coordinate-subset observation.
ConjugateUpdate condition_gaussian(const Vec& mean, const Mat& cov,
                                   const InpaintingTask& task) {
  const auto ny = static_cast<Eigen::Index>(task.observed.size());
  const Eigen::Index d = mean.size();
  Mat cov_oo(ny, ny);
  Mat cov_xo(d, ny);
  Vec mean_o(ny);
  for (Eigen::Index i = 0; i < ny; ++i) {
    const int oi = task.observed[static_cast<std::size_t>(i)];
    mean_o[i] = mean[oi];
    cov_xo.col(i) = cov.col(oi);
    for (Eigen::Index j = 0; j < ny; ++j)
      cov_oo(i, j) = cov(oi, task.observed[static_cast<std::size_t>(j)]);
  }
  Mat s = cov_oo + task.sigma_y * task.sigma_y * Mat::Identity(ny, ny);
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("exact_inpaint_posterior: conjugate solve failed");
  const Mat gain = llt.solve(cov_xo.transpose()).transpose();  // d x ny
  ConjugateUpdate out;
  out.mean = mean + gain * (task.y - mean_o);
  out.cov = cov - gain * cov_xo.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.log_marginal = gaussian_log_density(task.y, mean_o, Mat(llt.matrixL()));
  return out;
}

}  // namespace

GaussianPrior exact_inpaint_posterior(const GaussianPrior& p,
                                      const InpaintingTask& task) {
  if (!(task.sigma_y > 0.0))
    throw std::invalid_argument("exact_inpaint_posterior: sigma_y must be > 0");
  if (task.fully_masked()) return p;
  const auto upd = condition_gaussian(p.mean(), p.cov(), task);
  return GaussianPrior(upd.mean, upd.cov);
}

GmmPrior exact_inpaint_posterior(const GmmPrior& p, const InpaintingTask& task) {
  if (!(task.sigma_y > 0.0))
    throw std::invalid_argument("exact_inpaint_posterior: sigma_y must be > 0");
  if (task.fully_masked()) return p;
  const int k = p.components();
  std::vector<Vec> means(static_cast<std::size_t>(k));
  std::vector<Mat> covs(static_cast<std::size_t>(k));
  std::vector<double> log_w(static_cast<std::size_t>(k));
  double max_log = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    const auto upd = condition_gaussian(p.means()[j], p.covs()[j], task);
    means[j] = upd.mean;
    covs[j] = upd.cov;
    log_w[j] =
        std::log(std::max(p.weights()[j], 1e-300)) + upd.log_marginal;
    max_log = std::max(max_log, log_w[j]);
  }
  Vec w(k);
  for (int j = 0; j < k; ++j) w[j] = std::exp(log_w[j] - max_log);
  w /= w.sum();
  return GmmPrior(w, std::move(means), std::move(covs));
}

std::unique_ptr<AnalyticPrior> exact_inpaint_posterior(
    const AnalyticPrior& p, const InpaintingTask& task) {
  if (const auto* g = dynamic_cast<const GaussianPrior*>(&p))
    return std::make_unique<GaussianPrior>(exact_inpaint_posterior(*g, task));
  if (const auto* g = dynamic_cast<const GmmPrior*>(&p))
    return std::make_unique<GmmPrior>(exact_inpaint_posterior(*g, task));
  throw std::invalid_argument("exact_inpaint_posterior: unsupported prior");
}

std::vector<Vec> sample_prior(const AnalyticPrior& p, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(p.sample(rng));
  return out;
}

}  // namespace ding
