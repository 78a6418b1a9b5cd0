#pragma once

#include <functional>
#include <utility>

#include "mongeflow/common.hpp"

namespace mongeflow {

// Variance-preserving schedule with beta linear in t on [0, t_max].
// Time is normalized: the reference DDPM table (beta_1=2e-4, beta_T=0.01,
// T=1000 steps) becomes beta_min=0.2, beta_max=10 on t_max=1.
struct NoiseSchedule {
  double beta_min = 0.2;
  double beta_max = 10.0;
  double t_max = 1.0;
  double eps = 1e-3;  // supported lower end of sampling time

  NoiseSchedule() = default;
  NoiseSchedule(double bmin, double bmax, double tmax, double eps_ = 1e-3);

  double beta(double t) const;       // domain-checked
  double drift(double t) const;      // f = beta/2
  double diffusion(double t) const;  // g = sqrt(beta)

  double beta_integral(double t) const;  // closed-form int_0^t beta
  double mean_scale(double t) const;     // m(t) = exp(-1/2 int f... ) = exp(-B/2)
  double variance(double t) const;       // 1 - m^2

  // log signal-to-noise ratio log(m^2/sigma^2); strictly decreasing in t.
  // The flow integrator steps uniformly in this clock.
  double log_snr(double t) const;
  double time_of_log_snr(double lambda) const;
  double dlog_snr_dt(double t) const;  // = -beta/sigma^2  (negative)

  // Same beta(.) on the common range, horizon stretched to new_t_max.
  NoiseSchedule extended(double new_t_max) const;

 private:
  void check(double t) const;
};

std::pair<double, double> coefficients(const NoiseSchedule& s, double t);

// Integrating factors of the transport-error bounds.
//   I(t)    = exp(int_0^t (f + g^2 L / 2))        (log_factor)
//   Ibar(t) = exp(1/2 int_0^t f) = m(t)^{-1/2}    (log_factor_bar)
//   phi(t)  = g(t)^4 I(t)^2                       (log_weight)
// L can be enormous (the worst-case mixture score stiffness at eps is
// ~1/sigma^2(eps)), so everything is exposed in log space; the plain
// accessors may legitimately overflow to +inf.
struct IntegratingFactors {
  NoiseSchedule schedule;
  std::function<double(double)> lipschitz_bound;  // L(t) >= 0
  int quadrature_panels = 1024;

  static IntegratingFactors with_constant_bound(const NoiseSchedule& s, double L);
  // Default bound: constant L = 1/sigma^2(eps), the conservative
  // worst-case Gaussian-component stiffness at the reference end time.
  static IntegratingFactors with_default_bound(const NoiseSchedule& s);

  double log_factor(double t) const;
  double factor(double t) const;
  double log_factor_bar(double t) const;
  double factor_bar(double t) const;
  double log_weight(double t) const;
  double weight(double t) const;
};

}  // namespace mongeflow
