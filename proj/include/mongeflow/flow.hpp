#pragma once

#include <Eigen/Core>
#include <optional>

#include "mongeflow/mixture.hpp"
#include "mongeflow/schedule.hpp"

namespace mongeflow {

// Deterministic score perturbation S_theta = score + delta * e(x,t) with
// unit-norm field e. The field is a fixed function of (x,t), never
// resampled, so a perturbed flow is a bona fide map.
struct ScorePerturbation {
  enum class Mode { kConstantVector, kSmoothField };

  Mode mode = Mode::kConstantVector;
  double magnitude = 0.0;  // delta >= 0
  std::uint64_t field_seed = 1;
  int dim = 1;

  static ScorePerturbation constant_vector(int dim, double delta,
                                           std::uint64_t field_seed = 1);
  static ScorePerturbation smooth_field(int dim, double delta,
                                        std::uint64_t field_seed = 1);

  // |e(x,t)|_2 <= 1 everywhere, = 1 identically in constant-vector mode.
  Eigen::VectorXd field(const Eigen::VectorXd& x, double t) const;
  double field_lipschitz() const;  // bound on the spatial Lipschitz constant

 private:
  Eigen::VectorXd unit_;     // constant-vector mode
  Eigen::MatrixXd wave_;     // smooth mode: rows a_k
  Eigen::VectorXd omega_, phase_;
  void init();
};

// Solution map M^{s,t} of the probability flow ODE (or its perturbed
// variant). Integration is classical RK4 with `steps` fixed steps, taken
// uniformly in the schedule's log-SNR clock; in that clock the dynamics
// are uniformly non-stiff, which uniform-in-t stepping cannot achieve
// near the collapse end.
struct FlowMap {
  NoiseSchedule schedule;
  PointCloud cloud;
  double t_start = 1.0;
  double t_end = 1e-3;
  int steps = 512;
  std::optional<ScorePerturbation> perturbation;

  FlowMap(NoiseSchedule s, PointCloud c, double t0, double t1, int steps_ = 512,
          std::optional<ScorePerturbation> pert = std::nullopt);

  Eigen::VectorXd velocity_at(const Eigen::VectorXd& x, double t) const;
};

Eigen::VectorXd transport(const FlowMap& map, const Eigen::VectorXd& x);
Eigen::MatrixXd transport_batch(const FlowMap& map, const Eigen::MatrixXd& pts,
                                int workers = 1);

// Per-step trace (t, state) including both endpoints, for trajectory dumps.
std::vector<std::pair<double, Eigen::VectorXd>> transport_trace(
    const FlowMap& map, const Eigen::VectorXd& x);

void write_trajectories_csv(const std::string& path, const FlowMap& map,
                            const Eigen::MatrixXd& pts);

// Monte Carlo J_SM = 1/2 int_{t_lo}^{t_hi} phi(t) E_{p_t} |S - score|^2 dt
// with phi from `factors`. Computed in log space: with the faithful
// worst-case Lipschitz bound, phi overflows doubles on most of [eps, T].
// score_matching_loss returns exp(log value) and may be +inf; the log
// variant is exact. 64 uniform panels, exponential interpolation of the
// log-integrand on each panel, mc_samples marginal draws per node.
double log_score_matching_loss(const FlowMap& map, const IntegratingFactors& factors,
                               double t_lo, double t_hi, int mc_samples,
                               std::uint64_t seed, int panels = 64);
double score_matching_loss(const FlowMap& map, const IntegratingFactors& factors,
                           double t_lo, double t_hi, int mc_samples,
                           std::uint64_t seed, int panels = 64);

// RMS of pointwise output differences over init_samples (rows).
double map_deviation(const FlowMap& exact, const FlowMap& perturbed,
                     const Eigen::MatrixXd& init_samples);

// First-order response of the transport endpoint to the perturbation,
// from the variational ODE along the exact trajectories. Multiplying by
// delta predicts map_deviation in the linear regime.
double linear_response_deviation(const FlowMap& exact_map,
                                 const ScorePerturbation& pert,
                                 const Eigen::MatrixXd& init_samples);

}  // namespace mongeflow
