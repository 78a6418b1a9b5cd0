#pragma once

#include <Eigen/Core>

#include "mongeflow/point_cloud.hpp"
#include "mongeflow/schedule.hpp"

namespace mongeflow {

// Exact marginal p_t of the VP process started from a point cloud:
// a Gaussian mixture with means m(t) x_i and shared covariance
// sigma^2(t) I. Immutable after construction.
struct MixtureMarginal {
  PointCloud cloud;
  double t = 0.0;
  double mean_scale = 1.0;
  double variance = 0.0;

  int dim() const { return cloud.dim(); }
  int components() const { return cloud.size(); }
};

// Throws SingularTimeError for t <= 0 (the score does not exist there);
// the supported sampling boundary is schedule.eps.
MixtureMarginal marginal(const NoiseSchedule& schedule, const PointCloud& cloud,
                         double t);

double log_density(const MixtureMarginal& m, const Eigen::VectorXd& x);
Eigen::VectorXd score(const MixtureMarginal& m, const Eigen::VectorXd& x);

// Optimal probability-flow velocity: -f(t) x - g(t)^2/2 * score.
Eigen::VectorXd velocity(const NoiseSchedule& schedule, const MixtureMarginal& m,
                         const Eigen::VectorXd& x, double t);

// i.i.d. draws; deterministic under (seed).
Eigen::MatrixXd sample(const MixtureMarginal& m, int count, std::uint64_t seed);

// 1D CDF/quantile oracles (quantile solved to |cdf(q)-p| <= 1e-12).
double cdf_1d(const MixtureMarginal& m, double x);
double quantile_1d(const MixtureMarginal& m, double p);

// Spatial Jacobian of the score, Cov_r(mu)/v^2 - I/v with responsibility-
// weighted component means mu_i = m x_i.
Eigen::MatrixXd score_jacobian(const MixtureMarginal& m, const Eigen::VectorXd& x);

// Internal kernel shared with the flow integrator: the score of a mixture
// with means ms*points, shared variance v, evaluated without building a
// MixtureMarginal.
void score_into(const Eigen::MatrixXd& points, double ms, double v,
                const Eigen::VectorXd& x, Eigen::VectorXd& out);

}  // namespace mongeflow
