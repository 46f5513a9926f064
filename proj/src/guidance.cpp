#include "dinglab/guidance.hpp"

#include <cmath>
#include <stdexcept>

#include "dinglab/linalg.hpp"

namespace ding {

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::Ddim:
      return "ddim";
    case MethodKind::Ding:
      return "ding";
    case MethodKind::DingDelayed:
      return "ding-delayed";
    case MethodKind::Replacement:
      return "replacement";
    case MethodKind::Mcgdiff:
      return "mcgdiff";
    case MethodKind::Pnpflow:
      return "pnpflow";
    case MethodKind::Flowdps:
      return "flowdps";
    case MethodKind::Diffpir:
      return "diffpir";
    case MethodKind::Ddnm:
      return "ddnm";
    case MethodKind::DpsAnalytic:
      return "dps-analytic";
  }
  return "?";
}

MethodKind method_kind_from_string(const std::string& s) {
  if (s == "ddim") return MethodKind::Ddim;
  if (s == "ding") return MethodKind::Ding;
  if (s == "ding-delayed") return MethodKind::DingDelayed;
  if (s == "replacement") return MethodKind::Replacement;
  if (s == "mcgdiff") return MethodKind::Mcgdiff;
  if (s == "pnpflow") return MethodKind::Pnpflow;
  if (s == "flowdps") return MethodKind::Flowdps;
  if (s == "diffpir") return MethodKind::Diffpir;
  if (s == "ddnm") return MethodKind::Ddnm;
  if (s == "dps-analytic") return MethodKind::DpsAnalytic;
  throw std::invalid_argument("unknown method kind: " + s);
}

int nfe_per_step(MethodKind k) {
  return k == MethodKind::Ding ? 2 : 1;
}

namespace {

double sqrt_nonneg(double v) { return std::sqrt(std::max(0.0, v)); }

Vec ddim_mu(const DenoiserOutput& den, double alpha_s, double sigma_s,
            double eta) {
  return alpha_s * den.x0_hat +
         sqrt_nonneg(sigma_s * sigma_s - eta * eta) * den.x1_hat;
}

void record_step(StepRecord* rec, double s, double t, double eta, double gamma,
                 const Vec& x0_hat, const InpaintingTask& task) {
  if (!rec) return;
  rec->s = s;
  rec->t = t;
  rec->eta = eta;
  rec->gamma = gamma;
  rec->obs_residual =
      task.fully_masked() ? 0.0 : (task.gather_observed(x0_hat) - task.y).norm();
}

}  // namespace

DingConditional ding_conditional(const Vec& mu, const Vec& x1_proxy,
                                 const InpaintingTask& task, double alpha_s,
                                 double sigma_s, double eta_s) {
  DingConditional out;
  out.mean = mu;
  out.stddev = Vec::Constant(mu.size(), eta_s);
  const double eta2 = eta_s * eta_s;
  const double a2sy2 = alpha_s * alpha_s * task.sigma_y * task.sigma_y;
  out.gamma = eta2 > 0.0 ? eta2 / (eta2 + a2sy2) : 0.0;
  const double obs_std = alpha_s * task.sigma_y * std::sqrt(out.gamma);
  for (std::size_t i = 0; i < task.observed.size(); ++i) {
    const int c = task.observed[i];
    const double target =
        alpha_s * task.y[static_cast<Eigen::Index>(i)] + sigma_s * x1_proxy[c];
    out.mean[c] = (1.0 - out.gamma) * mu[c] + out.gamma * target;
    out.stddev[c] = obs_std;
  }
  return out;
}

double diffpir_observation_weight(double lambda, double sigma_y,
                                  double alpha_t, double sigma_t) {
  const double st2 = sigma_t * sigma_t;
  return st2 / (st2 + lambda * sigma_y * sigma_y * alpha_t * alpha_t);
}

void pnpflow_fidelity_update(Vec& x0_hat, const InpaintingTask& task,
                             double gamma_n) {
  const double ratio = gamma_n / (task.sigma_y * task.sigma_y);
  for (std::size_t i = 0; i < task.observed.size(); ++i) {
    const int c = task.observed[i];
    x0_hat[c] = (1.0 - ratio) * x0_hat[c] +
                ratio * task.y[static_cast<Eigen::Index>(i)];
  }
}

double mcgdiff_tau(double sigma_y, const NoiseSchedule& ns) {
  if (sigma_y <= 0.0) return 0.0;
  // sigma/alpha is continuous and strictly increasing from 0 to +inf.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double a = ns.alpha(mid);
    const double ratio = a > 0.0 ? ns.sigma(mid) / a
                                 : std::numeric_limits<double>::infinity();
    (ratio < sigma_y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void ddim_step(ChainState& st, double s, double t, const StepContext& ctx,
               Rng& rng, StepRecord* rec, StepFlags*) {
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  const auto den = ctx.den(st.x, t, ctx.ns);
  const Vec mu = ddim_mu(den, alpha_s, sigma_s, eta);
  const Vec w = rng.normal_vec(static_cast<int>(st.x.size()));
  st.x = mu + eta * w;
  record_step(rec, s, t, eta, 0.0, den.x0_hat, ctx.task);
}

void ding_step(ChainState& st, double s, double t, const StepContext& ctx,
               Rng& rng, StepRecord* rec, StepFlags* flags) {
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  if (sigma_s == 0.0 && s > 0.0)
    throw std::runtime_error("ding_step: sigma_s = 0 with s > 0");
  const int d = static_cast<int>(st.x.size());
  const auto den = ctx.den(st.x, t, ctx.ns);
  const Vec mu = ddim_mu(den, alpha_s, sigma_s, eta);

  const Vec w_state = rng.normal_vec(d);  // w' in the update
  const Vec w_proxy = rng.normal_vec(d);  // w, used only through z
  const Vec z = mu + eta * w_proxy;
  const Vec x1_proxy = ctx.den(z, s, ctx.ns).x1_hat;

  const auto cond = ding_conditional(mu, x1_proxy, ctx.task, alpha_s, sigma_s,
                                     eta);
  st.x = cond.mean + cond.stddev.cwiseProduct(w_state);
  if (flags && eta == 0.0 && !ctx.task.fully_masked())
    flags->eta_zero_guidance = true;
  record_step(rec, s, t, eta, cond.gamma, den.x0_hat, ctx.task);
}

void ding_delayed_step(ChainState& st, double s, double t,
                       const StepContext& ctx, Rng& rng, bool divide_by_sigma,
                       StepRecord* rec, StepFlags* flags) {
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  if (sigma_s == 0.0 && s > 0.0)
    throw std::runtime_error("ding_delayed_step: sigma_s = 0 with s > 0");
  const int d = static_cast<int>(st.x.size());
  const auto den = ctx.den(st.x, t, ctx.ns);
  const Vec mu = ddim_mu(den, alpha_s, sigma_s, eta);

  const Vec w_state = rng.normal_vec(d);
  // The proxy noise prediction reuses the time-t denoiser output of the
  // current state instead of a fresh evaluation at a proxy draw. The stated
  // rule divides by alpha_s; the alternative divides by sigma_s, which makes
  // the result a time-s noise prediction of the current state.
  const Vec x1_proxy = divide_by_sigma
                           ? Vec((st.x - alpha_s * den.x0_hat) / sigma_s)
                           : Vec((st.x - sigma_s * den.x1_hat) / alpha_s);

  const auto cond = ding_conditional(mu, x1_proxy, ctx.task, alpha_s, sigma_s,
                                     eta);
  st.x = cond.mean + cond.stddev.cwiseProduct(w_state);
  if (flags && eta == 0.0 && !ctx.task.fully_masked())
    flags->eta_zero_guidance = true;
  record_step(rec, s, t, eta, cond.gamma, den.x0_hat, ctx.task);
}

void replacement_step(ChainState& st, double s, double t,
                      const StepContext& ctx, Rng& rng, StepRecord* rec,
                      StepFlags*) {
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  const auto den = ctx.den(st.x, t, ctx.ns);
  const Vec mu = ddim_mu(den, alpha_s, sigma_s, eta);
  const Vec w = rng.normal_vec(static_cast<int>(st.x.size()));
  st.x = mu + eta * w;
  for (std::size_t i = 0; i < ctx.task.observed.size(); ++i) {
    const int c = ctx.task.observed[i];
    st.x[c] = alpha_s * ctx.task.y[static_cast<Eigen::Index>(i)] +
              sigma_s * w[c];
  }
  record_step(rec, s, t, eta, ctx.task.fully_masked() ? 0.0 : 1.0, den.x0_hat,
              ctx.task);
}

void mcgdiff_step(ChainState& st, double s, double t, const StepContext& ctx,
                  Rng& rng, StepRecord* rec, StepFlags* flags) {
  const double tau = mcgdiff_tau(ctx.task.sigma_y, ctx.ns);
  if (s <= tau) {
    // The transition is only defined for s > tau; condition through the
    // replacement update below that point.
    replacement_step(st, s, t, ctx, rng, rec, flags);
    return;
  }
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  const double alpha_t = ctx.ns.alpha(t);
  const double sigma_t = ctx.ns.sigma(t);
  const double alpha_tau = ctx.ns.alpha(tau);
  const double sigma_tau = ctx.ns.sigma(tau);
  const double ratio = alpha_tau > 0.0 ? alpha_t / alpha_tau : 0.0;
  const double var_t_tau =
      std::max(0.0, sigma_t * sigma_t - ratio * ratio * sigma_tau * sigma_tau);
  const double gamma =
      eta * eta > 0.0 ? eta * eta / (eta * eta + var_t_tau) : 0.0;

  const auto den = ctx.den(st.x, t, ctx.ns);
  const Vec mu = ddim_mu(den, alpha_s, sigma_s, eta);
  const Vec w = rng.normal_vec(static_cast<int>(st.x.size()));
  st.x = mu + eta * w;
  const double obs_std = std::sqrt(var_t_tau * gamma);
  for (std::size_t i = 0; i < ctx.task.observed.size(); ++i) {
    const int c = ctx.task.observed[i];
    st.x[c] = (1.0 - gamma) * mu[c] +
              gamma * alpha_s * ctx.task.y[static_cast<Eigen::Index>(i)] +
              obs_std * w[c];
  }
  record_step(rec, s, t, eta, gamma, den.x0_hat, ctx.task);
}

void pnpflow_step(ChainState& st, double s, double t, const StepContext& ctx,
                  double gamma_n, Rng& rng, StepRecord* rec, StepFlags* flags) {
  (void)t;
  if (gamma_n < 0.0)
    gamma_n = 0.8 * ctx.task.sigma_y * ctx.task.sigma_y;
  if (!(gamma_n >= 0.0))
    throw std::invalid_argument("pnpflow_step: step size must be >= 0");
  const double ratio = gamma_n / (ctx.task.sigma_y * ctx.task.sigma_y);
  if (ratio > 2.0 && flags) flags->pnpflow_divergent = true;

  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  Vec x0 = st.x;  // the chain carries the clean estimate
  pnpflow_fidelity_update(x0, ctx.task, gamma_n);
  const Vec w = rng.normal_vec(static_cast<int>(st.x.size()));
  const Vec renoised = alpha_s * x0 + sigma_s * w;
  st.x = ctx.den(renoised, s, ctx.ns).x0_hat;
  record_step(rec, s, t, 0.0, 0.0, st.x, ctx.task);
}

void flowdps_step(ChainState& st, double s, double t, const StepContext& ctx,
                  Rng& rng, StepRecord* rec, StepFlags*) {
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  const auto den = ctx.den(st.x, t, ctx.ns);
  Vec x0 = den.x0_hat;
  for (std::size_t i = 0; i < ctx.task.observed.size(); ++i) {
    const int c = ctx.task.observed[i];
    x0[c] = alpha_s * x0[c] +
            sigma_s * ctx.task.y[static_cast<Eigen::Index>(i)];
  }
  const Vec mu = alpha_s * x0 +
                 sqrt_nonneg(sigma_s * sigma_s - eta * eta) * den.x1_hat;
  const Vec w = rng.normal_vec(static_cast<int>(st.x.size()));
  st.x = mu + eta * w;
  record_step(rec, s, t, eta, 0.0, x0, ctx.task);
}

namespace {

void diffpir_like_step(ChainState& st, double s, double t,
                       const StepContext& ctx, double weight_on_y, Rng& rng,
                       StepRecord* rec) {
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  const double alpha_t = ctx.ns.alpha(t);
  const double sigma_t = ctx.ns.sigma(t);
  const auto den = ctx.den(st.x, t, ctx.ns);
  Vec x0 = den.x0_hat;
  for (std::size_t i = 0; i < ctx.task.observed.size(); ++i) {
    const int c = ctx.task.observed[i];
    x0[c] = weight_on_y * ctx.task.y[static_cast<Eigen::Index>(i)] +
            (1.0 - weight_on_y) * x0[c];
  }
  const Vec x1 = (st.x - alpha_t * x0) / sigma_t;
  const Vec w = rng.normal_vec(static_cast<int>(st.x.size()));
  st.x = alpha_s * x0 + sqrt_nonneg(sigma_s * sigma_s - eta * eta) * x1 +
         eta * w;
  record_step(rec, s, t, eta, weight_on_y, x0, ctx.task);
}

}  // namespace

void diffpir_step(ChainState& st, double s, double t, const StepContext& ctx,
                  double lambda, Rng& rng, StepRecord* rec, StepFlags*) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("diffpir_step: lambda must be positive");
  const double w_y = diffpir_observation_weight(lambda, ctx.task.sigma_y,
                                                ctx.ns.alpha(t),
                                                ctx.ns.sigma(t));
  diffpir_like_step(st, s, t, ctx, w_y, rng, rec);
}

void ddnm_step(ChainState& st, double s, double t, const StepContext& ctx,
               Rng& rng, StepRecord* rec, StepFlags*) {
  // Noise-free limit of DiffPIR: the observed block of x0_hat is set to y.
  diffpir_like_step(st, s, t, ctx, 1.0, rng, rec);
}

void dps_analytic_step(ChainState& st, double s, double t,
                       const StepContext& ctx, Rng& rng, StepRecord* rec,
                       StepFlags*) {
  const auto* gp = dynamic_cast<const GaussianPrior*>(&ctx.den.prior());
  if (!gp)
    throw std::invalid_argument(
        "dps_analytic_step: requires a Gaussian prior");
  const double eta = eval_eta(ctx.es, s, t, ctx.ns);
  const double alpha_s = ctx.ns.alpha(s);
  const double sigma_s = ctx.ns.sigma(s);
  const int d = static_cast<int>(st.x.size());
  const auto den = ctx.den(st.x, t, ctx.ns);
  const Vec mu = ddim_mu(den, alpha_s, sigma_s, eta);
  const Vec w = rng.normal_vec(d);

  if (ctx.task.fully_masked()) {
    st.x = mu + eta * w;
    record_step(rec, s, t, eta, 0.0, den.x0_hat, ctx.task);
    return;
  }
  if (eta == 0.0) {
    st.x = mu;  // degenerate transition collapses onto the DDIM mean
    record_step(rec, s, t, eta, 0.0, den.x0_hat, ctx.task);
    return;
  }

  const Mat d_s = gp->denoiser_matrix(s, ctx.ns);
  const Mat m = observed_projection(ctx.task);
  const double inv_eta2 = 1.0 / (eta * eta);
  const double inv_sy2 = 1.0 / (ctx.task.sigma_y * ctx.task.sigma_y);
  Eigen::LLT<Mat> llt(inv_eta2 * Mat::Identity(d, d) +
                      inv_sy2 * d_s.transpose() * m * d_s);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("dps_analytic_step: precision solve failed");
  Mat cov = llt.solve(Mat::Identity(d, d));
  cov = 0.5 * (cov + cov.transpose());
  // Nonzero prior means shift the effective observation by the affine part
  // of the potential; this vanishes for the zero-mean case.
  const Vec r_mean =
      gp->mean() - alpha_s * (d_s * gp->mean());
  Vec y_eff = ctx.task.y;
  for (std::size_t i = 0; i < ctx.task.observed.size(); ++i)
    y_eff[static_cast<Eigen::Index>(i)] -= r_mean[ctx.task.observed[i]];
  const Vec pty = scatter_observed_vec(ctx.task, y_eff);
  const Vec mean = cov * (inv_eta2 * mu + inv_sy2 * d_s.transpose() * pty);
  Eigen::LLT<Mat> cov_llt(cov);
  if (cov_llt.info() != Eigen::Success)
    throw std::runtime_error("dps_analytic_step: covariance factor failed");
  st.x = mean + Mat(cov_llt.matrixL()) * w;
  record_step(rec, s, t, eta, 0.0, den.x0_hat, ctx.task);
}

void advance(const MethodSpec& spec, ChainState& st, double s, double t,
             const StepContext& ctx, Rng& rng, StepRecord* rec,
             StepFlags* flags) {
  switch (spec.kind) {
    case MethodKind::Ddim:
      ddim_step(st, s, t, ctx, rng, rec, flags);
      break;
    case MethodKind::Ding:
      ding_step(st, s, t, ctx, rng, rec, flags);
      break;
    case MethodKind::DingDelayed:
      ding_delayed_step(st, s, t, ctx, rng, spec.delayed_divide_by_sigma, rec,
                        flags);
      break;
    case MethodKind::Replacement:
      replacement_step(st, s, t, ctx, rng, rec, flags);
      break;
    case MethodKind::Mcgdiff:
      mcgdiff_step(st, s, t, ctx, rng, rec, flags);
      break;
    case MethodKind::Pnpflow:
      pnpflow_step(st, s, t, ctx, spec.gamma_n, rng, rec, flags);
      break;
    case MethodKind::Flowdps:
      flowdps_step(st, s, t, ctx, rng, rec, flags);
      break;
    case MethodKind::Diffpir:
      diffpir_step(st, s, t, ctx, spec.lambda, rng, rec, flags);
      break;
    case MethodKind::Ddnm:
      ddnm_step(st, s, t, ctx, rng, rec, flags);
      break;
    case MethodKind::DpsAnalytic:
      dps_analytic_step(st, s, t, ctx, rng, rec, flags);
      break;
  }
}

RunResult run_sampler(const MethodSpec& spec, const AnalyticPrior& prior,
                      const InpaintingTask& task, const TimeGrid& grid,
                      const NoiseSchedule& ns, const EtaSchedule& es, Rng& rng,
                      bool record_trajectory) {
  if (task.d != prior.dim())
    throw std::invalid_argument("run_sampler: task/prior dimension mismatch");
  if (spec.kind == MethodKind::DpsAnalytic &&
      !dynamic_cast<const GaussianPrior*>(&prior))
    throw std::invalid_argument("run_sampler: dps-analytic needs a Gaussian prior");

  CountingDenoiser den(prior);
  const StepContext ctx{prior, task, ns, es, den};
  RunResult res;
  ChainState st;
  st.x = rng.normal_vec(prior.dim());
  st.k = grid.K;
  // k = K-1 down to 1: transitions (t_{k+1} -> t_k); t_0 is left to finalize.
  for (int i = 0; i < grid.K - 1; ++i) {
    const double t = grid.points[static_cast<std::size_t>(i)];
    const double s = grid.points[static_cast<std::size_t>(i) + 1];
    StepRecord rec;
    rec.k = grid.K - 1 - i;
    advance(spec, st, s, t, ctx, rng,
            record_trajectory ? &rec : nullptr, &res.flags);
    st.k = grid.K - 1 - i;
    if (record_trajectory) res.trajectory.push_back(rec);
  }
  const double t1 = grid.points[static_cast<std::size_t>(grid.K) - 1];
  res.x0 = den(st.x, t1, ns).x0_hat;
  res.nfe = den.calls();
  st.nfe = res.nfe;
  return res;
}

}  // namespace ding
