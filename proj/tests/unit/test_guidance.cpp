#include <doctest.h>

#include <cmath>

#include "dinglab/guidance.hpp"
#include "dinglab/linalg.hpp"
#include "dinglab/metrics.hpp"
#include "dinglab/oracle.hpp"
#include "dinglab/rng.hpp"

using namespace ding;

namespace {

const NoiseSchedule kLin{ScheduleKind::Linear};

struct Fixture {
  GaussianPrior prior;
  InpaintingTask task;
  EtaSchedule es;
  CountingDenoiser den;
  StepContext ctx;

  Fixture(GaussianPrior p, InpaintingTask t, EtaSchedule e)
      : prior(std::move(p)),
        task(std::move(t)),
        es(e),
        den(prior),
        ctx{prior, task, kLin, es, den} {}
};

GaussianPrior correlated_prior(double rho) {
  Mat cov(2, 2);
  cov << 1.0, rho, rho, 1.0;
  return GaussianPrior(Vec::Zero(2), cov);
}

InpaintingTask observe_first_coord(double y0, double sigma_y) {
  Vec x_star(2);
  x_star << y0, 0.0;
  return build_task(x_star, std::vector<int>{1}, sigma_y);
}

// Runs `step` n times from the same state with chained noise and returns the
// draws.
template <typename StepFn>
std::vector<Vec> one_step_draws(StepFn step, const Vec& x_t, int n,
                                std::uint64_t seed) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    ChainState st;
    st.x = x_t;
    step(st, rng);
    out.push_back(st.x);
  }
  return out;
}

void check_moments_3se(const std::vector<Vec>& draws, const Vec& mean,
                       const Mat& cov) {
  const auto n = static_cast<double>(draws.size());
  const Vec m = empirical_mean(draws);
  const Mat c = empirical_cov(draws);
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double se = std::sqrt(std::max(cov(i, i), 1e-300) / n);
    REQUIRE(std::abs(m[i] - mean[i]) <= 3.0 * se + 1e-12);
    for (Eigen::Index j = i; j < mean.size(); ++j) {
      const double se_c =
          std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
      REQUIRE(std::abs(c(i, j) - cov(i, j)) <= 3.0 * se_c + 1e-12);
    }
  }
}

}  // namespace

TEST_SUITE("guidance") {

TEST_CASE("ddim step") {
  SUBCASE("eta = 0 is deterministic") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 0.01),
              {EtaKind::Zero});
    Vec x_t(2);
    x_t << 0.4, -0.2;
    const double s = 0.3, t = 0.6;
    ChainState a, b;
    a.x = x_t;
    b.x = x_t;
    Rng r1(1), r2(2);
    ddim_step(a, s, t, f.ctx, r1);
    ddim_step(b, s, t, f.ctx, r2);
    CHECK((a.x - b.x).norm() == 0.0);
    const auto den = f.prior.denoise(x_t, t, kLin);
    const Vec expect = kLin.alpha(s) * den.x0_hat + kLin.sigma(s) * den.x1_hat;
    CHECK((a.x - expect).norm() < 1e-14);
  }
  SUBCASE("eta = sigma_s centers on the rescaled denoiser") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 0.01),
              {EtaKind::Max});
    Vec x_t(2);
    x_t << 1.0, 0.2;
    const double s = 0.4, t = 0.8;
    const auto den = f.prior.denoise(x_t, t, kLin);
    const auto draws = one_step_draws(
        [&](ChainState& st, Rng& rng) { ddim_step(st, s, t, f.ctx, rng); },
        x_t, 100000, 11);
    check_moments_3se(draws, kLin.alpha(s) * den.x0_hat,
                      kLin.sigma(s) * kLin.sigma(s) * Mat::Identity(2, 2));
  }
  SUBCASE("one-step law matches the affine gaussian push-forward") {
    Fixture f(correlated_prior(0.9), observe_first_coord(0.7, 0.01),
              {EtaKind::Default});
    Vec x_t(2);
    x_t << -0.3, 0.9;
    const double s = 0.45, t = 0.85;
    const double eta = eval_eta(f.ctx.es, s, t, kLin);
    const Vec mu = ddim_mean_gaussian(f.prior.cov(), x_t, s, t, kLin, eta);
    const auto draws = one_step_draws(
        [&](ChainState& st, Rng& rng) { ddim_step(st, s, t, f.ctx, rng); },
        x_t, 100000, 12);
    check_moments_3se(draws, mu, eta * eta * Mat::Identity(2, 2));
  }
}

TEST_CASE("ding step") {
  SUBCASE("gamma formula value") {
    const double eta = 0.1, alpha = 0.9, sigma_y = 0.01;
    const double expect =
        eta * eta / (eta * eta + alpha * alpha * sigma_y * sigma_y);
    Vec x_star(2);
    x_star << 1.0, 2.0;
    const auto task = build_task(x_star, std::vector<int>{0}, sigma_y);
    const auto cond = ding_conditional(Vec::Zero(2), Vec::Zero(2), task,
                                       alpha, 0.5, eta);
    CHECK(cond.gamma == doctest::Approx(expect).epsilon(1e-14));
    CHECK(cond.gamma == doctest::Approx(0.01 / 0.010081).epsilon(1e-12));
  }
  SUBCASE("masked-only task couples exactly with ddim") {
    Vec x_star(2);
    x_star << 0.3, -0.8;
    const auto blind = build_task(x_star, std::vector<int>{0, 1}, 0.01);
    Fixture f(correlated_prior(0.6), blind, {EtaKind::Default});
    Rng rng(21);
    for (int i = 0; i < 50; ++i) {
      Vec x_t = rng.normal_vec(2);
      const double s = 0.2 + 0.4 * rng.uniform();
      const double t = s + (0.99 - s) * std::max(0.2, rng.uniform());
      ChainState a, b;
      a.x = x_t;
      b.x = x_t;
      const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
      Rng ra(seed), rb(seed);
      ding_step(a, s, t, f.ctx, ra);
      ddim_step(b, s, t, f.ctx, rb);
      REQUIRE((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  SUBCASE("uninformative likelihood approaches the plain ddim update") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 1e6),
              {EtaKind::Default});
    Vec x_t(2);
    x_t << 0.4, 1.1;
    // linear schedule: alpha_s = 0.5 at s = 0.5; pick eta = 0.1 via a scaled
    // max schedule on a grid point where sigma_s = 0.5
    EtaSchedule es{EtaKind::Max, 0.2};  // eta = 0.2 * 0.5 = 0.1
    StepContext ctx{f.prior, f.task, kLin, es, f.den};
    ChainState a, b;
    a.x = x_t;
    b.x = x_t;
    Rng ra(77), rb(77);
    ding_step(a, 0.5, 0.9, ctx, ra);
    ddim_step(b, 0.5, 0.9, ctx, rb);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() < 1e-3);
  }
  SUBCASE("one-step law matches the closed-form moments") {
    Rng cfg_rng(31);
    for (int trial = 0; trial < 3; ++trial) {
      const Mat sigma = random_spd(3, 0.5, 2.0, cfg_rng);
      GaussianPrior prior(Vec::Zero(3), sigma);
      Vec x_star = cfg_rng.normal_vec(3);
      const double sigma_y = 0.1 + 0.3 * cfg_rng.uniform();
      const auto task = build_task(x_star, std::vector<int>{trial % 3},
                                   sigma_y);
      const double s = 0.3 + 0.3 * cfg_rng.uniform();
      const double t = s + (0.95 - s) * std::max(0.3, cfg_rng.uniform());
      EtaSchedule es{EtaKind::Default};
      const double eta = eval_eta(es, s, t, kLin);
      Fixture f(prior, task, es);
      Vec x_t = cfg_rng.normal_vec(3);
      const auto draws = one_step_draws(
          [&](ChainState& st, Rng& rng) { ding_step(st, s, t, f.ctx, rng); },
          x_t, 100000, 40 + static_cast<std::uint64_t>(trial));
      const auto mom =
          ding_transition_moments(sigma, x_t, task, s, t, kLin, eta);
      check_moments_3se(draws, mom.mean, mom.cov);
    }
  }
  SUBCASE("conditional parameters match importance sampling given the proxy") {
    Rng spd_rng(51);
    const Mat sigma = random_spd(3, 0.5, 2.0, spd_rng);
    GaussianPrior prior(Vec::Zero(3), sigma);
    Vec x_star(3);
    x_star << 0.5, -0.2, 0.9;
    const auto task = build_task(x_star, std::vector<int>{2}, 0.2);
    const double s = 0.5, t = 0.8;
    const double alpha_s = kLin.alpha(s), sigma_s = kLin.sigma(s);
    const double eta = 0.3;
    Rng rng(52);
    const Vec x_t = rng.normal_vec(3);
    const auto den_t = prior.denoise(x_t, t, kLin);
    const Vec mu = alpha_s * den_t.x0_hat +
                   std::sqrt(sigma_s * sigma_s - eta * eta) * den_t.x1_hat;
    const Vec z = mu + eta * rng.normal_vec(3);
    const Vec x1_pxy = prior.denoise(z, s, kLin).x1_hat;
    const auto cond = ding_conditional(mu, x1_pxy, task, alpha_s, sigma_s, eta);

    // Self-normalized IS: proposal = ddim gaussian, weight = decoupled
    // potential evaluated at the same proxy.
    const int n = 1000000;
    Vec w_sum = Vec::Zero(1);
    double total = 0.0;
    Vec mean = Vec::Zero(3);
    Vec m2 = Vec::Zero(3);
    std::vector<Vec> xs;
    std::vector<double> lw;
    xs.reserve(n);
    lw.reserve(n);
    double max_lw = -1e300;
    for (int i = 0; i < n; ++i) {
      const Vec x = mu + eta * rng.normal_vec(3);
      double acc = 0.0;
      for (std::size_t k = 0; k < task.observed.size(); ++k) {
        const int c = task.observed[k];
        const double pred = (x[c] - sigma_s * x1_pxy[c]) / alpha_s;
        const double r = task.y[static_cast<Eigen::Index>(k)] - pred;
        acc -= 0.5 * r * r / (task.sigma_y * task.sigma_y);
      }
      xs.push_back(x);
      lw.push_back(acc);
      max_lw = std::max(max_lw, acc);
    }
    for (int i = 0; i < n; ++i) {
      const double w = std::exp(lw[static_cast<std::size_t>(i)] - max_lw);
      total += w;
      mean += w * xs[static_cast<std::size_t>(i)];
    }
    mean /= total;
    for (int i = 0; i < n; ++i) {
      const double w = std::exp(lw[static_cast<std::size_t>(i)] - max_lw);
      const Vec dx = xs[static_cast<std::size_t>(i)] - mean;
      m2 += (w / total) * dx.cwiseProduct(dx);
    }
    CHECK((mean - cond.mean).norm() <= 0.02 * cond.mean.norm());
    const Vec var_exact = cond.stddev.cwiseProduct(cond.stddev);
    CHECK((m2 - var_exact).norm() <= 0.05 * var_exact.norm());
    (void)w_sum;
  }
}

TEST_CASE("ding delayed step") {
  SUBCASE("masked-only task couples exactly with ddim") {
    Vec x_star(2);
    x_star << 0.3, -0.8;
    const auto blind = build_task(x_star, std::vector<int>{0, 1}, 0.01);
    Fixture f(correlated_prior(0.6), blind, {EtaKind::Default});
    Rng rng(61);
    for (int i = 0; i < 50; ++i) {
      Vec x_t = rng.normal_vec(2);
      const double s = 0.2 + 0.4 * rng.uniform();
      const double t = s + (0.99 - s) * std::max(0.2, rng.uniform());
      ChainState a, b;
      a.x = x_t;
      b.x = x_t;
      const std::uint64_t seed = 2000 + static_cast<std::uint64_t>(i);
      Rng ra(seed), rb(seed);
      ding_delayed_step(a, s, t, f.ctx, ra);
      ddim_step(b, s, t, f.ctx, rb);
      REQUIRE((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  SUBCASE("both proxy variants run and differ") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 0.01),
              {EtaKind::Default});
    Vec x_t(2);
    x_t << 0.4, -0.2;
    ChainState a, b;
    a.x = x_t;
    b.x = x_t;
    Rng ra(71), rb(71);
    ding_delayed_step(a, 0.4, 0.7, f.ctx, ra, /*divide_by_sigma=*/false);
    ding_delayed_step(b, 0.4, 0.7, f.ctx, rb, /*divide_by_sigma=*/true);
    CHECK(a.x.allFinite());
    CHECK(b.x.allFinite());
    CHECK((a.x - b.x).norm() > 0.0);
  }
  SUBCASE("uses one denoiser call per step") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 0.01),
              {EtaKind::Default});
    ChainState st;
    st.x = Vec::Ones(2);
    Rng rng(72);
    const long before = f.den.calls();
    ding_delayed_step(st, 0.4, 0.7, f.ctx, rng);
    CHECK(f.den.calls() - before == 1);
  }
}

TEST_CASE("replacement step") {
  SUBCASE("observed coordinates follow alpha_s y + sigma_s w") {
    Fixture f(correlated_prior(0.9), observe_first_coord(0.7, 0.01),
              {EtaKind::Default});
    Vec x_t(2);
    x_t << 0.1, 0.2;
    const double s = 0.35, t = 0.7;
    const auto draws = one_step_draws(
        [&](ChainState& st, Rng& rng) {
          replacement_step(st, s, t, f.ctx, rng);
        },
        x_t, 100000, 81);
    double mean0 = 0.0, var0 = 0.0;
    for (const auto& x : draws) mean0 += x[0];
    mean0 /= static_cast<double>(draws.size());
    for (const auto& x : draws) var0 += (x[0] - mean0) * (x[0] - mean0);
    var0 /= static_cast<double>(draws.size() - 1);
    const double expect_mean = kLin.alpha(s) * 0.7;
    const double expect_sd = kLin.sigma(s);
    CHECK(std::abs(mean0 - expect_mean) <=
          3.0 * expect_sd / std::sqrt(1e5) + 1e-12);
    CHECK(std::abs(var0 - expect_sd * expect_sd) <= 0.01);
  }
  SUBCASE("fully observed output ignores x_t") {
    Vec x_star(2);
    x_star << 0.5, -1.0;
    const auto task = build_task(x_star, std::vector<int>{}, 0.01);
    Fixture f(correlated_prior(0.3), task, {EtaKind::Default});
    ChainState a, b;
    a.x = Vec::Ones(2);
    b.x = -5.0 * Vec::Ones(2);
    Rng ra(91), rb(91);
    replacement_step(a, 0.4, 0.8, f.ctx, ra);
    replacement_step(b, 0.4, 0.8, f.ctx, rb);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("mcgdiff step") {
  SUBCASE("tau solves sigma/alpha = sigma_y") {
    CHECK(mcgdiff_tau(0.01, kLin) ==
          doctest::Approx(0.01 / 1.01).epsilon(1e-10));
    CHECK(mcgdiff_tau(1.0, kLin) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(mcgdiff_tau(0.0, kLin) == 0.0);
  }
  SUBCASE("single-particle transition moments match the closed form") {
    const double sigma_y = 0.05;
    Fixture f(correlated_prior(0.4), observe_first_coord(0.6, sigma_y),
              {EtaKind::Max});
    Vec x_t(2);
    x_t << 0.3, 0.5;
    const double s = 0.4, t = 0.75;
    const double eta = eval_eta(f.ctx.es, s, t, kLin);
    const double tau = mcgdiff_tau(sigma_y, kLin);
    const double ratio = kLin.alpha(t) / kLin.alpha(tau);
    const double var_t_tau = kLin.sigma(t) * kLin.sigma(t) -
                             ratio * ratio * kLin.sigma(tau) * kLin.sigma(tau);
    const double gamma = eta * eta / (eta * eta + var_t_tau);
    const Vec mu = ddim_mean_gaussian(f.prior.cov(), x_t, s, t, kLin, eta);
    Vec mean = mu;
    mean[0] = (1.0 - gamma) * mu[0] + gamma * kLin.alpha(s) * 0.6;
    Mat cov = eta * eta * Mat::Identity(2, 2);
    cov(0, 0) = var_t_tau * gamma;
    const auto draws = one_step_draws(
        [&](ChainState& st, Rng& rng) { mcgdiff_step(st, s, t, f.ctx, rng); },
        x_t, 100000, 101);
    check_moments_3se(draws, mean, cov);
  }
  SUBCASE("falls back to replacement below tau") {
    const double sigma_y = 0.5;  // tau = 1/3 on the linear schedule
    Fixture f(correlated_prior(0.4), observe_first_coord(0.6, sigma_y),
              {EtaKind::Default});
    const double tau = mcgdiff_tau(sigma_y, kLin);
    REQUIRE(tau > 0.3);
    Vec x_t(2);
    x_t << 0.3, 0.5;
    ChainState a, b;
    a.x = x_t;
    b.x = x_t;
    Rng ra(111), rb(111);
    mcgdiff_step(a, 0.2, 0.9, f.ctx, ra);
    replacement_step(b, 0.2, 0.9, f.ctx, rb);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("pnpflow step") {
  Vec x_star(2);
  x_star << 0.9, -0.4;
  const auto task = build_task(x_star, std::vector<int>{1}, 0.1);
  SUBCASE("gamma = sigma_y^2 pins the observed block to y") {
    Vec x0(2);
    x0 << 5.0, 5.0;
    pnpflow_fidelity_update(x0, task, task.sigma_y * task.sigma_y);
    CHECK(x0[0] == doctest::Approx(0.9));
    CHECK(x0[1] == 5.0);
  }
  SUBCASE("gamma = 0 leaves the estimate untouched") {
    Vec x0(2);
    x0 << 5.0, 5.0;
    pnpflow_fidelity_update(x0, task, 0.0);
    CHECK(x0[0] == 5.0);
    CHECK(x0[1] == 5.0);
  }
  SUBCASE("divergent step size raises the flag but proceeds") {
    Fixture f(correlated_prior(0.2), task, {EtaKind::Default});
    ChainState st;
    st.x = Vec::Zero(2);
    StepFlags flags;
    Rng rng(121);
    pnpflow_step(st, 0.3, 0.6, f.ctx, 3.0 * task.sigma_y * task.sigma_y, rng,
                 nullptr, &flags);
    CHECK(flags.pnpflow_divergent);
    CHECK(st.x.allFinite());
  }
}

TEST_CASE("flowdps step") {
  SUBCASE("masked-only task couples exactly with ddim") {
    Vec x_star(2);
    x_star << 0.3, -0.8;
    const auto blind = build_task(x_star, std::vector<int>{0, 1}, 0.01);
    Fixture f(correlated_prior(0.6), blind, {EtaKind::Default});
    ChainState a, b;
    a.x = Vec::Ones(2);
    b.x = Vec::Ones(2);
    Rng ra(131), rb(131);
    flowdps_step(a, 0.4, 0.8, f.ctx, ra);
    ddim_step(b, 0.4, 0.8, f.ctx, rb);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("eta = sigma_s moment check") {
    Fixture f(correlated_prior(0.7), observe_first_coord(0.5, 0.01),
              {EtaKind::Max});
    Vec x_t(2);
    x_t << -0.6, 0.8;
    const double s = 0.45, t = 0.8;
    const auto den = f.prior.denoise(x_t, t, kLin);
    Vec x0 = den.x0_hat;
    x0[0] = kLin.alpha(s) * x0[0] + kLin.sigma(s) * 0.5;
    const Vec mean = kLin.alpha(s) * x0;
    const Mat cov = kLin.sigma(s) * kLin.sigma(s) * Mat::Identity(2, 2);
    const auto draws = one_step_draws(
        [&](ChainState& st, Rng& rng) { flowdps_step(st, s, t, f.ctx, rng); },
        x_t, 100000, 141);
    check_moments_3se(draws, mean, cov);
  }
  SUBCASE("s -> 0 limit drops the observation influence") {
    Fixture f(correlated_prior(0.7), observe_first_coord(0.5, 0.01),
              {EtaKind::Zero});
    Vec x_t(2);
    x_t << -0.6, 0.8;
    const double s = 1e-9, t = 0.5;
    const auto den = f.prior.denoise(x_t, t, kLin);
    ChainState st;
    st.x = x_t;
    Rng rng(151);
    flowdps_step(st, s, t, f.ctx, rng);
    // with alpha_s ~ 1 and sigma_s ~ 0 the overwrite tends to x0_hat itself
    CHECK((st.x - den.x0_hat).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("diffpir and ddnm steps") {
  SUBCASE("observation weight value") {
    CHECK(diffpir_observation_weight(1.0, 0.01, 0.5, 0.5) ==
          doctest::Approx(0.25 / (0.25 + 1.0 * 1e-4 * 0.25)).epsilon(1e-14));
    // lambda = 1 and the noise-free limit
    CHECK(diffpir_observation_weight(1.0, 0.0, 0.5, 0.5) == 1.0);
  }
  SUBCASE("masked-only task couples exactly with ddim") {
    Vec x_star(2);
    x_star << 0.3, -0.8;
    const auto blind = build_task(x_star, std::vector<int>{0, 1}, 0.01);
    Fixture f(correlated_prior(0.6), blind, {EtaKind::Default});
    ChainState a, b;
    a.x = Vec::Ones(2);
    b.x = Vec::Ones(2);
    Rng ra(161), rb(161);
    diffpir_step(a, 0.4, 0.8, f.ctx, 1.0, ra);
    ddim_step(b, 0.4, 0.8, f.ctx, rb);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("ddnm pins the observed block of x0_hat to y") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 0.01),
              {EtaKind::Zero});
    Vec x_t(2);
    x_t << 0.2, 0.4;
    const double s = 0.4, t = 0.8;
    ChainState st;
    st.x = x_t;
    Rng rng(171);
    ddnm_step(st, s, t, f.ctx, rng);
    // reconstruct the deterministic update by hand
    const auto den = f.prior.denoise(x_t, t, kLin);
    Vec x0 = den.x0_hat;
    x0[0] = 0.7;
    const Vec x1 = (x_t - kLin.alpha(t) * x0) / kLin.sigma(t);
    const Vec expect = kLin.alpha(s) * x0 + kLin.sigma(s) * x1;
    CHECK((st.x - expect).lpNorm<Eigen::Infinity>() < 1e-14);
  }
  SUBCASE("lambda must be positive") {
    Fixture f(correlated_prior(0.5), observe_first_coord(0.7, 0.01),
              {EtaKind::Default});
    ChainState st;
    st.x = Vec::Ones(2);
    Rng rng(181);
    CHECK_THROWS_AS(diffpir_step(st, 0.4, 0.8, f.ctx, 0.0, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("dps analytic step") {
  SUBCASE("moments match the oracle on a 2d instance") {
    Rng cfg(191);
    const Mat sigma = random_spd(2, 0.5, 2.0, cfg);
    GaussianPrior prior(Vec::Zero(2), sigma);
    const auto task = observe_first_coord(0.6, 0.2);
    EtaSchedule es{EtaKind::Default};
    Fixture f(prior, task, es);
    Vec x_t(2);
    x_t << 0.5, -0.7;
    const double s = 0.4, t = 0.75;
    const double eta = eval_eta(es, s, t, kLin);
    const auto mom = dps_transition_moments(sigma, x_t, task, s, t, kLin, eta);
    const auto draws = one_step_draws(
        [&](ChainState& st, Rng& rng) {
          dps_analytic_step(st, s, t, f.ctx, rng);
        },
        x_t, 100000, 201);
    check_moments_3se(draws, mom.mean, mom.cov);
  }
  SUBCASE("uninformative likelihood approaches the ddim law") {
    const Mat sigma = correlated_prior(0.8).cov();
    GaussianPrior prior(Vec::Zero(2), sigma);
    const auto task = observe_first_coord(0.6, 1e4);
    const double s = 0.4, t = 0.75, eta = 0.2;
    const auto mom = dps_transition_moments(sigma, Vec::Ones(2), task, s, t,
                                            kLin, eta);
    const Vec mu = ddim_mean_gaussian(sigma, Vec::Ones(2), s, t, kLin, eta);
    CHECK((mom.mean - mu).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((mom.cov - eta * eta * Mat::Identity(2, 2)).lpNorm<Eigen::Infinity>()
          < 1e-6);
  }
  SUBCASE("eta -> 0 becomes deterministic at the ddim mean") {
    GaussianPrior prior = correlated_prior(0.5);
    const auto task = observe_first_coord(0.6, 0.1);
    EtaSchedule es{EtaKind::Zero};
    Fixture f(prior, task, es);
    Vec x_t(2);
    x_t << 0.5, -0.7;
    ChainState a, b;
    a.x = x_t;
    b.x = x_t;
    Rng ra(211), rb(212);
    dps_analytic_step(a, 0.4, 0.75, f.ctx, ra);
    dps_analytic_step(b, 0.4, 0.75, f.ctx, rb);
    CHECK((a.x - b.x).norm() == 0.0);
  }
  SUBCASE("rejects non-gaussian priors") {
    Vec w(2);
    w << 0.5, 0.5;
    GmmPrior mix(w, {Vec::Zero(2), Vec::Ones(2)},
                 {Mat::Identity(2, 2), Mat::Identity(2, 2)});
    const auto task = observe_first_coord(0.6, 0.1);
    EtaSchedule es{EtaKind::Default};
    MethodSpec spec;
    spec.kind = MethodKind::DpsAnalytic;
    Rng rng(221);
    CHECK_THROWS_AS(run_sampler(spec, mix, task, make_grid(4), kLin, es, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("run_sampler") {
  GaussianPrior prior = correlated_prior(0.9);
  const auto task = observe_first_coord(0.7, 0.01);
  EtaSchedule es{EtaKind::Default};
  SUBCASE("K=2 ding does one guided step plus the final denoise") {
    MethodSpec spec;
    spec.kind = MethodKind::Ding;
    Rng rng(231);
    const auto res =
        run_sampler(spec, prior, task, make_grid(2), kLin, es, rng);
    CHECK(res.nfe == 3);
  }
  SUBCASE("NFE accounting for every method and budget") {
    for (const int K : {2, 5, 25, 50}) {
      for (const auto kind :
           {MethodKind::Ddim, MethodKind::Ding, MethodKind::DingDelayed,
            MethodKind::Replacement, MethodKind::Mcgdiff, MethodKind::Pnpflow,
            MethodKind::Flowdps, MethodKind::Diffpir, MethodKind::Ddnm,
            MethodKind::DpsAnalytic}) {
        MethodSpec spec;
        spec.kind = kind;
        Rng rng(241);
        const auto res =
            run_sampler(spec, prior, task, make_grid(K), kLin, es, rng);
        REQUIRE(res.nfe == nfe_per_step(kind) * (K - 1) + 1);
      }
    }
  }
  SUBCASE("fixed seed reproduces the final vector bit for bit") {
    for (const auto kind : {MethodKind::Ding, MethodKind::Replacement,
                            MethodKind::Pnpflow, MethodKind::Mcgdiff}) {
      MethodSpec spec;
      spec.kind = kind;
      Rng r1(251), r2(251);
      const auto a =
          run_sampler(spec, prior, task, make_grid(25), kLin, es, r1);
      const auto b =
          run_sampler(spec, prior, task, make_grid(25), kLin, es, r2);
      REQUIRE((a.x0 - b.x0).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  SUBCASE("trajectory records eta, gamma and the observed residual") {
    MethodSpec spec;
    spec.kind = MethodKind::Ding;
    Rng rng(261);
    const auto res =
        run_sampler(spec, prior, task, make_grid(5), kLin, es, rng, true);
    REQUIRE(res.trajectory.size() == 4);
    CHECK(res.trajectory.front().k == 4);
    CHECK(res.trajectory.back().k == 1);
    for (const auto& rec : res.trajectory) {
      CHECK(rec.eta >= 0.0);
      CHECK(rec.gamma >= 0.0);
      CHECK(rec.obs_residual >= 0.0);
    }
  }
  SUBCASE("zero eta guidance is flagged") {
    MethodSpec spec;
    spec.kind = MethodKind::Ding;
    EtaSchedule zero{EtaKind::Zero};
    Rng rng(271);
    const auto res =
        run_sampler(spec, prior, task, make_grid(5), kLin, zero, rng);
    CHECK(res.flags.eta_zero_guidance);
  }
}

TEST_CASE("degenerate-mask reduction is bit identical") {
  Rng rng(281);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(3));
    const Mat sigma = random_spd(d, 0.5, 2.0, rng);
    GaussianPrior prior(Vec::Zero(d), sigma);
    const auto task =
        build_task(rng.normal_vec(d),
                   [&] {
                     std::vector<int> all(static_cast<std::size_t>(d));
                     for (int i = 0; i < d; ++i)
                       all[static_cast<std::size_t>(i)] = i;
                     return all;
                   }(),
                   0.01);
    REQUIRE(task.fully_masked());
    EtaSchedule es{EtaKind::Default};
    CountingDenoiser den(prior);
    StepContext ctx{prior, task, kLin, es, den};
    const double s = 0.1 + 0.5 * rng.uniform();
    const double t = s + (0.99 - s) * std::max(0.2, rng.uniform());
    const Vec x_t = rng.normal_vec(d);
    const std::uint64_t seed = 5000 + static_cast<std::uint64_t>(trial);

    ChainState ref;
    ref.x = x_t;
    Rng r_ref(seed);
    ddim_step(ref, s, t, ctx, r_ref);

    MethodSpec specs[5];
    specs[0].kind = MethodKind::Ding;
    specs[1].kind = MethodKind::DingDelayed;
    specs[2].kind = MethodKind::Replacement;
    specs[3].kind = MethodKind::Flowdps;
    specs[4].kind = MethodKind::Diffpir;
    for (const auto& spec : specs) {
      ChainState st;
      st.x = x_t;
      Rng r(seed);
      advance(spec, st, s, t, ctx, r);
      REQUIRE((st.x - ref.x).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
}

TEST_CASE("randomized finiteness fuzz") {
  Rng rng(291);
  const MethodKind kinds[] = {
      MethodKind::Ddim,    MethodKind::Ding,        MethodKind::DingDelayed,
      MethodKind::Replacement, MethodKind::Mcgdiff, MethodKind::Pnpflow,
      MethodKind::Flowdps, MethodKind::Diffpir,     MethodKind::Ddnm,
      MethodKind::DpsAnalytic};
  const EtaKind eta_kinds[] = {EtaKind::Default, EtaKind::Ddpm,
                               EtaKind::DdpmScaled, EtaKind::Max,
                               EtaKind::Sqrt, EtaKind::Zero};
  for (int trial = 0; trial < 10000; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(4));
    const Mat sigma = random_spd(d, 0.2, 3.0, rng);
    GaussianPrior prior(Vec::Zero(d), sigma);
    std::vector<int> masked;
    for (int i = 0; i < d; ++i)
      if (rng.uniform() < 0.5) masked.push_back(i);
    const double sigma_y = 1e-3 + rng.uniform();
    const auto task = build_task(rng.normal_vec(d), masked, sigma_y);
    EtaSchedule es{eta_kinds[rng.below(6)],
                   eta_kinds[0] == EtaKind::Default ? 1.0 : 1.0};
    if (es.kind == EtaKind::DdpmScaled) es.scale = 0.01;
    CountingDenoiser den(prior);
    StepContext ctx{prior, task, kLin, es, den};
    const double s = 0.05 + 0.6 * rng.uniform();
    const double t = s + (0.999 - s) * std::max(0.05, rng.uniform());
    MethodSpec spec;
    spec.kind = kinds[rng.below(10)];
    ChainState st;
    st.x = 2.0 * rng.normal_vec(d);
    StepFlags flags;
    advance(spec, st, s, t, ctx, rng, nullptr, &flags);
    REQUIRE(st.x.allFinite());
  }
}

}  // TEST_SUITE
