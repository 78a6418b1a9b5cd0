#include "mongeflow/schedule.hpp"

#include <cmath>

namespace mongeflow {

NoiseSchedule::NoiseSchedule(double bmin, double bmax, double tmax, double eps_)
    : beta_min(bmin), beta_max(bmax), t_max(tmax), eps(eps_) {
  if (!(beta_min > 0.0)) throw UsageError("schedule: beta_min must be > 0");
  if (!(beta_max >= beta_min))
    throw UsageError("schedule: beta_max must be >= beta_min");
  if (!(t_max > 0.0)) throw UsageError("schedule: t_max must be > 0");
  if (!(eps > 0.0 && eps < t_max))
    throw UsageError("schedule: eps must lie in (0, t_max)");
}

void NoiseSchedule::check(double t) const {
  if (!(t >= 0.0 && t <= t_max))
    throw std::domain_error("schedule: t outside [0, t_max]");
}

double NoiseSchedule::beta(double t) const {
  check(t);
  return beta_min + (beta_max - beta_min) * (t / t_max);
}

double NoiseSchedule::drift(double t) const { return 0.5 * beta(t); }

double NoiseSchedule::diffusion(double t) const { return std::sqrt(beta(t)); }

double NoiseSchedule::beta_integral(double t) const {
  check(t);
  double slope = (beta_max - beta_min) / t_max;
  return beta_min * t + 0.5 * slope * t * t;
}

double NoiseSchedule::mean_scale(double t) const {
  return std::exp(-0.5 * beta_integral(t));
}

double NoiseSchedule::variance(double t) const {
  return -std::expm1(-beta_integral(t));
}

double NoiseSchedule::log_snr(double t) const {
  double B = beta_integral(t);
  if (B <= 0.0) throw SingularTimeError("log_snr undefined at t = 0");
  return -B - std::log(-std::expm1(-B));
}

double NoiseSchedule::time_of_log_snr(double lambda) const {
  // B = softplus(-lambda), then invert the quadratic B(t).
  double B = lambda > 0.0 ? std::log1p(std::exp(-lambda))
                          : -lambda + std::log1p(std::exp(lambda));
  double slope = (beta_max - beta_min) / t_max;
  double t;
  if (slope == 0.0) {
    t = B / beta_min;
  } else {
    t = (-beta_min + std::sqrt(beta_min * beta_min + 2.0 * slope * B)) / slope;
  }
  return std::min(std::max(t, 0.0), t_max);
}

double NoiseSchedule::dlog_snr_dt(double t) const {
  return -beta(t) / variance(t);
}

NoiseSchedule NoiseSchedule::extended(double new_t_max) const {
  if (!(new_t_max >= t_max))
    throw UsageError("schedule: extended() needs new_t_max >= t_max");
  double slope = (beta_max - beta_min) / t_max;
  return NoiseSchedule(beta_min, beta_min + slope * new_t_max, new_t_max, eps);
}

std::pair<double, double> coefficients(const NoiseSchedule& s, double t) {
  return {s.drift(t), s.diffusion(t)};
}

IntegratingFactors IntegratingFactors::with_constant_bound(
    const NoiseSchedule& s, double L) {
  if (!(L >= 0.0)) throw UsageError("integrating factors: L must be >= 0");
  return IntegratingFactors{s, [L](double) { return L; }, 1024};
}

IntegratingFactors IntegratingFactors::with_default_bound(const NoiseSchedule& s) {
  return with_constant_bound(s, 1.0 / s.variance(s.eps));
}

double IntegratingFactors::log_factor(double t) const {
  const NoiseSchedule& s = schedule;
  auto f = [&](double tau) {
    double b = s.beta(tau);
    return 0.5 * b * (1.0 + lipschitz_bound(tau));
  };
  return simpson(f, 0.0, t, quadrature_panels);
}

double IntegratingFactors::factor(double t) const { return std::exp(log_factor(t)); }

double IntegratingFactors::log_factor_bar(double t) const {
  return 0.25 * schedule.beta_integral(t);
}

double IntegratingFactors::factor_bar(double t) const {
  return std::exp(log_factor_bar(t));
}

double IntegratingFactors::log_weight(double t) const {
  return 2.0 * std::log(schedule.beta(t)) + 2.0 * log_factor(t);
}

double IntegratingFactors::weight(double t) const { return std::exp(log_weight(t)); }

}  // namespace mongeflow
