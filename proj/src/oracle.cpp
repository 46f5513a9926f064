#include "dinglab/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "dinglab/linalg.hpp"

namespace ding {

Mat gaussian_denoiser_matrix(const Mat& sigma, double t,
                             const NoiseSchedule& ns) {
  const double a = ns.alpha(t);
  const double s = ns.sigma(t);
  const auto d = sigma.rows();
  Eigen::LLT<Mat> llt(a * a * sigma + s * s * Mat::Identity(d, d));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gaussian_denoiser_matrix: solve failed");
  return llt.solve(a * sigma).transpose();
}

Vec ddim_mean_gaussian(const Mat& sigma, const Vec& x_t, double s, double t,
                       const NoiseSchedule& ns, double eta_s) {
  const double alpha_s = ns.alpha(s);
  const double sigma_s = ns.sigma(s);
  const double alpha_t = ns.alpha(t);
  const double sigma_t = ns.sigma(t);
  if (sigma_t <= 0.0)
    throw std::domain_error("ddim_mean_gaussian: sigma_t must be positive");
  const Mat d_t = gaussian_denoiser_matrix(sigma, t, ns);
  const Vec x0 = d_t * x_t;
  const Vec x1 = (x_t - alpha_t * x0) / sigma_t;
  const double coef = std::sqrt(
      std::max(0.0, sigma_s * sigma_s - eta_s * eta_s));
  return alpha_s * x0 + coef * x1;
}

TransitionMoments dps_transition_moments(const Mat& sigma, const Vec& x_t,
                                         const InpaintingTask& task, double s,
                                         double t, const NoiseSchedule& ns,
                                         double eta_s) {
  const auto d = sigma.rows();
  const Vec mu = ddim_mean_gaussian(sigma, x_t, s, t, ns, eta_s);
  TransitionMoments out;
  out.label = TransitionMoments::Label::Dps;
  if (eta_s == 0.0) {
    out.mean = mu;
    out.cov = Mat::Zero(d, d);
    return out;
  }
  const Mat d_s = gaussian_denoiser_matrix(sigma, s, ns);
  const Mat m = observed_projection(task);
  const double inv_eta2 = 1.0 / (eta_s * eta_s);
  const double inv_sy2 = 1.0 / (task.sigma_y * task.sigma_y);
  const Mat precision =
      inv_eta2 * Mat::Identity(d, d) + inv_sy2 * d_s.transpose() * m * d_s;
  Eigen::LLT<Mat> llt(precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("dps_transition_moments: precision solve failed");
  out.cov = llt.solve(Mat::Identity(d, d));
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  const Vec pty = scatter_observed_vec(task, task.y);
  out.mean = out.cov * (inv_eta2 * mu + inv_sy2 * d_s.transpose() * pty);
  return out;
}

TransitionMoments ding_transition_moments(const Mat& sigma, const Vec& x_t,
                                          const InpaintingTask& task, double s,
                                          double t, const NoiseSchedule& ns,
                                          double eta_s) {
  const auto d = sigma.rows();
  const Vec mu = ddim_mean_gaussian(sigma, x_t, s, t, ns, eta_s);
  TransitionMoments out;
  out.label = TransitionMoments::Label::Ding;
  if (eta_s == 0.0) {
    out.mean = mu;
    out.cov = Mat::Zero(d, d);
    return out;
  }
  const double alpha_s = ns.alpha(s);
  const Mat d_s = gaussian_denoiser_matrix(sigma, s, ns);
  const Mat m = observed_projection(task);
  const Mat r_s = Mat::Identity(d, d) - alpha_s * d_s;
  const double inv_eta2 = 1.0 / (eta_s * eta_s);
  const double inv_sy2 = 1.0 / (task.sigma_y * task.sigma_y);
  const double inv_a = 1.0 / alpha_s;

  // Sigma~ is diagonal: eta^2 on masked coordinates and
  // (eta^-2 + alpha^-2 sigma_y^-2)^-1 on observed ones.
  Vec tilde_diag = Vec::Constant(d, eta_s * eta_s);
  for (const int i : task.observed)
    tilde_diag[i] = 1.0 / (inv_eta2 + inv_a * inv_a * inv_sy2);
  const Mat tilde = tilde_diag.asDiagonal();

  const Vec pty = scatter_observed_vec(task, task.y);
  out.mean = tilde * (inv_eta2 * mu + inv_sy2 * inv_a * pty +
                      inv_sy2 * inv_a * inv_a * m * r_s * mu);
  const Mat w = tilde * m * r_s;
  out.cov = tilde + (eta_s * eta_s * inv_sy2 * inv_sy2 * inv_a * inv_a *
                     inv_a * inv_a) *
                        w * w.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

TransitionMoments dps_transition_moments(const Mat& sigma, const Vec& x_t,
                                         const InpaintingTask& task, double s,
                                         double t, const NoiseSchedule& ns,
                                         const EtaSchedule& es) {
  return dps_transition_moments(sigma, x_t, task, s, t, ns,
                                eval_eta(es, s, t, ns));
}

TransitionMoments ding_transition_moments(const Mat& sigma, const Vec& x_t,
                                          const InpaintingTask& task, double s,
                                          double t, const NoiseSchedule& ns,
                                          const EtaSchedule& es) {
  return ding_transition_moments(sigma, x_t, task, s, t, ns,
                                 eval_eta(es, s, t, ns));
}

std::pair<double, double> epsilon_and_bound(const Mat& sigma,
                                            const InpaintingTask& task,
                                            double s, const NoiseSchedule& ns) {
  const double alpha_s = ns.alpha(s);
  if (alpha_s == 0.0)
    throw std::domain_error("epsilon_and_bound: alpha_s = 0 (s = 1)");
  const double sigma_s = ns.sigma(s);
  const auto d = sigma.rows();
  if (sigma_s == 0.0) return {0.0, 0.0};
  const Mat d_s = gaussian_denoiser_matrix(sigma, s, ns);
  const Mat e_s = d_s - (1.0 / alpha_s) * Mat::Identity(d, d);
  const Mat m = observed_projection(task);
  const double eps = operator_norm(e_s * m);
  const double lambda_min = min_eigenvalue_sym(sigma);
  const double bound = (sigma_s * sigma_s / alpha_s) /
                       (alpha_s * alpha_s * lambda_min + sigma_s * sigma_s);
  return {eps, bound};
}

std::vector<BiasReport> bias_scan(const Mat& sigma, const Vec& x_t,
                                  const InpaintingTask& task, double s,
                                  double t, const NoiseSchedule& ns,
                                  const std::vector<double>& eta_values) {
  const double sigma_s = ns.sigma(s);
  std::vector<BiasReport> out;
  out.reserve(eta_values.size());
  const auto [eps, bound] = epsilon_and_bound(sigma, task, s, ns);
  for (const double eta : eta_values) {
    if (!(eta > 0.0 && eta <= sigma_s))
      throw std::invalid_argument(
          "bias_scan: eta values must lie in (0, sigma_s]");
    const auto dps = dps_transition_moments(sigma, x_t, task, s, t, ns, eta);
    const auto ding = ding_transition_moments(sigma, x_t, task, s, t, ns, eta);
    BiasReport rep;
    rep.eta = eta;
    rep.mean_gap = (dps.mean - ding.mean).norm();
    rep.cov_gap = operator_norm(dps.cov - ding.cov);
    rep.epsilon_s = eps;
    rep.epsilon_bound = bound;
    out.push_back(rep);
  }
  return out;
}

double fit_order(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 5)
    throw std::invalid_argument("fit_order: need >= 5 matching points");
  const auto n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw std::invalid_argument("fit_order: values must be positive");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_order: degenerate x");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace ding
