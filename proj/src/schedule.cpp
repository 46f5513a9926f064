#include "dinglab/schedule.hpp"

#include <cmath>
#include <sstream>

namespace ding {

double NoiseSchedule::alpha(double t) const {
  switch (kind) {
    case ScheduleKind::Linear:
      return 1.0 - t;
    case ScheduleKind::VariancePreserving:
      return std::cos(0.5 * M_PI * t);
  }
  return 0.0;
}

double NoiseSchedule::sigma(double t) const {
  switch (kind) {
    case ScheduleKind::Linear:
      return t;
    case ScheduleKind::VariancePreserving:
      return std::sin(0.5 * M_PI * t);
  }
  return 0.0;
}

TimeGrid make_grid(int K) {
  if (K < 2) throw std::invalid_argument("make_grid: K must be >= 2");
  TimeGrid g;
  g.K = K;
  g.points.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k)
    g.points[static_cast<std::size_t>(K - k)] = static_cast<double>(k) / K;
  g.points.front() = 1.0;
  g.points.back() = 0.0;
  return g;
}

double eval_eta_raw(const EtaSchedule& es, double s, double t,
                    const NoiseSchedule& ns) {
  if (!(s >= 0.0 && s < t && t <= 1.0))
    throw std::invalid_argument("eval_eta: requires 0 <= s < t <= 1");
  const double sig_s = ns.sigma(s);
  const double alp_s = ns.alpha(s);
  double base = 0.0;
  switch (es.kind) {
    case EtaKind::Default:
      base = sig_s * (1.0 - alp_s);
      break;
    case EtaKind::Max:
      base = sig_s;
      break;
    case EtaKind::Sqrt:
      base = sig_s * std::sqrt(1.0 - alp_s);
      break;
    case EtaKind::Zero:
      base = 0.0;
      break;
    case EtaKind::Ddpm:
    case EtaKind::DdpmScaled: {
      const double sig_t = ns.sigma(t);
      if (sig_t == 0.0)
        throw std::domain_error("eval_eta: ddpm kind requires sigma_t > 0");
      const double alp_t = ns.alpha(t);
      const double ratio = alp_s > 0.0 ? alp_t / alp_s : 0.0;
      const double var = sig_t * sig_t - ratio * ratio * sig_s * sig_s;
      base = sig_s * std::sqrt(std::max(var, 0.0)) / sig_t;
      break;
    }
  }
  return es.scale * base;
}

double eval_eta(const EtaSchedule& es, double s, double t,
                const NoiseSchedule& ns) {
  const double eta = eval_eta_raw(es, s, t, ns);
  const double ceiling = ns.sigma(s) + 1e-12;
  if (eta > ceiling) {
    std::ostringstream msg;
    msg << "eta schedule violation: eta(" << s << ") = " << eta
        << " exceeds sigma_s = " << ns.sigma(s);
    throw schedule_violation(msg.str());
  }
  return eta;
}

namespace {

void check(std::vector<std::string>& out, bool ok, const std::string& what) {
  if (!ok) out.push_back(what);
}

}  // namespace

ValidationReport validate_schedule(const NoiseSchedule& ns,
                                   const EtaSchedule& es, const TimeGrid& g) {
  ValidationReport rep;
  auto& v = rep.violations;
  const double tol = 1e-12;

  check(v, g.K >= 2, "grid: K must be >= 2");
  check(v, g.points.size() == static_cast<std::size_t>(g.K) + 1,
        "grid: point count must be K + 1");
  if (!g.points.empty()) {
    check(v, g.points.front() == 1.0, "grid: first point must be exactly 1");
    check(v, g.points.back() == 0.0, "grid: last point must be exactly 0");
  }
  for (std::size_t i = 0; i + 1 < g.points.size(); ++i)
    check(v, g.points[i] > g.points[i + 1],
          "grid: points must be strictly decreasing");

  check(v, std::abs(ns.alpha(0.0) - 1.0) <= tol, "schedule: alpha(0) != 1");
  check(v, std::abs(ns.sigma(0.0)) <= tol, "schedule: sigma(0) != 0");
  check(v, std::abs(ns.alpha(1.0)) <= tol, "schedule: alpha(1) != 0");
  check(v, std::abs(ns.sigma(1.0) - 1.0) <= tol, "schedule: sigma(1) != 1");

  for (std::size_t i = 0; i + 1 < g.points.size(); ++i) {
    const double t = g.points[i];
    const double s = g.points[i + 1];
    std::ostringstream at;
    at << " at (s=" << s << ", t=" << t << ")";
    check(v, ns.alpha(s) >= ns.alpha(t) - tol,
          "schedule: alpha not non-increasing" + at.str());
    check(v, ns.sigma(s) <= ns.sigma(t) + tol,
          "schedule: sigma not non-decreasing" + at.str());
    if (ns.kind == ScheduleKind::Linear) {
      check(v, ns.alpha(t) == 1.0 - t && ns.sigma(t) == t,
            "schedule: linear kind must satisfy alpha=1-t, sigma=t exactly" +
                at.str());
    } else {
      const double a = ns.alpha(t);
      const double sg = ns.sigma(t);
      check(v, std::abs(a * a + sg * sg - 1.0) <= tol,
            "schedule: VP identity alpha^2+sigma^2=1 violated" + at.str());
    }
    double eta = 0.0;
    bool eta_ok = true;
    try {
      eta = eval_eta_raw(es, s, t, ns);
    } catch (const std::exception& e) {
      eta_ok = false;
      v.push_back(std::string("eta: evaluation failed") + at.str() + ": " +
                  e.what());
    }
    if (eta_ok) {
      check(v, eta >= 0.0, "eta: negative value" + at.str());
      check(v, eta <= ns.sigma(s) + tol,
            "eta: exceeds sigma_s" + at.str());
    }
  }
  return rep;
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::Linear ? "linear" : "vp";
}

std::string to_string(EtaKind k) {
  switch (k) {
    case EtaKind::Default:
      return "default";
    case EtaKind::Ddpm:
      return "ddpm";
    case EtaKind::DdpmScaled:
      return "ddpm-scaled";
    case EtaKind::Max:
      return "max";
    case EtaKind::Sqrt:
      return "sqrt";
    case EtaKind::Zero:
      return "zero";
  }
  return "?";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "vp" || s == "variance-preserving")
    return ScheduleKind::VariancePreserving;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

EtaKind eta_kind_from_string(const std::string& s) {
  if (s == "default") return EtaKind::Default;
  if (s == "ddpm") return EtaKind::Ddpm;
  if (s == "ddpm-scaled") return EtaKind::DdpmScaled;
  if (s == "max") return EtaKind::Max;
  if (s == "sqrt") return EtaKind::Sqrt;
  if (s == "zero") return EtaKind::Zero;
  throw std::invalid_argument("unknown eta kind: " + s);
}

}  // namespace ding
