#pragma once

#include <string>
#include <vector>

#include "dinglab/prior.hpp"
#include "dinglab/rng.hpp"
#include "dinglab/schedule.hpp"
#include "dinglab/task.hpp"

namespace ding {

enum class MethodKind {
  Ddim,
  Ding,
  DingDelayed,
  Replacement,
  Mcgdiff,
  Pnpflow,
  Flowdps,
  Diffpir,
  Ddnm,
  DpsAnalytic,
};

std::string to_string(MethodKind k);
MethodKind method_kind_from_string(const std::string& s);

struct MethodSpec {
  MethodKind kind = MethodKind::Ding;
  double lambda = 1.0;     // diffpir fidelity scaling
  double gamma_n = -1.0;   // pnpflow step size; < 0 means 0.8 * sigma_y^2
  // ding-delayed proxy rule: false = as stated (divide by alpha_s),
  // true = dimension-consistent variant (divide by sigma_s).
  bool delayed_divide_by_sigma = false;
};

// Per-step denoiser budget (NFEs), excluding the final denoise.
int nfe_per_step(MethodKind k);

struct ChainState {
  Vec x;
  int k = 0;        // paper-style grid index of the current time
  long nfe = 0;     // filled by the driver from the instrumented count
};

// Counts denoiser evaluations so NFE accounting is measured, not declared.
class CountingDenoiser {
 public:
  explicit CountingDenoiser(const AnalyticPrior& prior) : prior_(&prior) {}

  DenoiserOutput operator()(const Vec& x, double t,
                            const NoiseSchedule& ns) const {
    ++calls_;
    return prior_->denoise(x, t, ns);
  }

  long calls() const { return calls_; }
  const AnalyticPrior& prior() const { return *prior_; }

 private:
  const AnalyticPrior* prior_;
  mutable long calls_ = 0;
};

struct StepContext {
  const AnalyticPrior& prior;
  const InpaintingTask& task;
  const NoiseSchedule& ns;
  const EtaSchedule& es;
  const CountingDenoiser& den;
};

struct StepRecord {
  int k = 0;
  double s = 0.0;
  double t = 0.0;
  double eta = 0.0;
  double gamma = 0.0;
  double obs_residual = 0.0;  // || x0_hat[observed] - y ||_2 at this step
};

struct StepFlags {
  bool eta_zero_guidance = false;
  bool pnpflow_divergent = false;
};

// Per-coordinate Gaussian parameters of the decoupled conditional given the
// DDIM mean and the proxy noise prediction.
struct DingConditional {
  Vec mean;
  Vec stddev;
  double gamma = 0.0;
};
DingConditional ding_conditional(const Vec& mu, const Vec& x1_proxy,
                                 const InpaintingTask& task, double alpha_s,
                                 double sigma_s, double eta_s);

// Weight placed on y in the DiffPIR data-consistency combination.
double diffpir_observation_weight(double lambda, double sigma_y,
                                  double alpha_t, double sigma_t);

// In-place PnP-Flow fidelity update of a clean estimate.
void pnpflow_fidelity_update(Vec& x0_hat, const InpaintingTask& task,
                             double gamma_n);

// Time tau with sigma_tau / alpha_tau = sigma_y (bisection on the monotone
// ratio).
double mcgdiff_tau(double sigma_y, const NoiseSchedule& ns);

// One reverse transition from time t to time s < t. Every step draws its
// state noise first so that masked-only tasks couple exactly with ddim_step
// under a shared generator.
void ddim_step(ChainState& st, double s, double t, const StepContext& ctx,
               Rng& rng, StepRecord* rec = nullptr, StepFlags* flags = nullptr);
void ding_step(ChainState& st, double s, double t, const StepContext& ctx,
               Rng& rng, StepRecord* rec = nullptr, StepFlags* flags = nullptr);
void ding_delayed_step(ChainState& st, double s, double t,
                       const StepContext& ctx, Rng& rng,
                       bool divide_by_sigma = false, StepRecord* rec = nullptr,
                       StepFlags* flags = nullptr);
void replacement_step(ChainState& st, double s, double t,
                      const StepContext& ctx, Rng& rng,
                      StepRecord* rec = nullptr, StepFlags* flags = nullptr);
void mcgdiff_step(ChainState& st, double s, double t, const StepContext& ctx,
                  Rng& rng, StepRecord* rec = nullptr,
                  StepFlags* flags = nullptr);
void pnpflow_step(ChainState& st, double s, double t, const StepContext& ctx,
                  double gamma_n, Rng& rng, StepRecord* rec = nullptr,
                  StepFlags* flags = nullptr);
void flowdps_step(ChainState& st, double s, double t, const StepContext& ctx,
                  Rng& rng, StepRecord* rec = nullptr,
                  StepFlags* flags = nullptr);
void diffpir_step(ChainState& st, double s, double t, const StepContext& ctx,
                  double lambda, Rng& rng, StepRecord* rec = nullptr,
                  StepFlags* flags = nullptr);
void ddnm_step(ChainState& st, double s, double t, const StepContext& ctx,
               Rng& rng, StepRecord* rec = nullptr, StepFlags* flags = nullptr);
void dps_analytic_step(ChainState& st, double s, double t,
                       const StepContext& ctx, Rng& rng,
                       StepRecord* rec = nullptr, StepFlags* flags = nullptr);

void advance(const MethodSpec& spec, ChainState& st, double s, double t,
             const StepContext& ctx, Rng& rng, StepRecord* rec = nullptr,
             StepFlags* flags = nullptr);

struct RunResult {
  Vec x0;
  long nfe = 0;
  std::vector<StepRecord> trajectory;
  StepFlags flags;
};

// Initializes x ~ N(0, I), iterates the method's step over consecutive grid
// pairs down to t_1, and finalizes with the denoiser at t_1.
RunResult run_sampler(const MethodSpec& spec, const AnalyticPrior& prior,
                      const InpaintingTask& task, const TimeGrid& grid,
                      const NoiseSchedule& ns, const EtaSchedule& es, Rng& rng,
                      bool record_trajectory = false);

}  // namespace ding
