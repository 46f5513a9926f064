#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ding {

// Raised when an eta schedule produces a standard deviation above the
// admissible ceiling sigma_s.
class schedule_violation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScheduleKind { Linear, VariancePreserving };

// Interpolation schedule (alpha_t, sigma_t) on [0, 1] with alpha(0)=1,
// sigma(0)=0, alpha(1)=0, sigma(1)=1.
//   linear:              alpha = 1 - t,       sigma = t
//   variance-preserving: alpha = cos(pi t/2), sigma = sin(pi t/2)
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::Linear;

  double alpha(double t) const;
  double sigma(double t) const;
};

enum class EtaKind { Default, Ddpm, DdpmScaled, Max, Sqrt, Zero };

// DDIM standard-deviation schedule eta_s <= sigma_s. `scale` multiplies the
// base formula; the ddpm-scaled kind is ddpm with scale c (default 0.01).
struct EtaSchedule {
  EtaKind kind = EtaKind::Default;
  double scale = 1.0;

  static EtaSchedule ddpm_scaled(double c = 0.01) {
    return EtaSchedule{EtaKind::DdpmScaled, c};
  }
};

// Strictly decreasing time points t_K = 1 > ... > t_1 > t_0 = 0.
// points[i] = t_{K-i}; t(k) maps the ascending index k to its value.
struct TimeGrid {
  std::vector<double> points;
  int K = 0;

  double t(int k) const { return points[static_cast<std::size_t>(K - k)]; }
};

// Uniform grid t_k = k/K with endpoints forced exactly to 0 and 1.
TimeGrid make_grid(int K);

// Evaluates eta_s for the pair s < t without the admissibility check.
double eval_eta_raw(const EtaSchedule& es, double s, double t,
                    const NoiseSchedule& ns);

// As above but throws schedule_violation when the result exceeds
// sigma_s + 1e-12.
double eval_eta(const EtaSchedule& es, double s, double t,
                const NoiseSchedule& ns);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Checks every schedule invariant on the grid and reports all violations.
ValidationReport validate_schedule(const NoiseSchedule& ns,
                                   const EtaSchedule& es, const TimeGrid& g);

std::string to_string(ScheduleKind k);
std::string to_string(EtaKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);
EtaKind eta_kind_from_string(const std::string& s);

}  // namespace ding
