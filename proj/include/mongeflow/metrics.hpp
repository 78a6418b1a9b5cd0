#pragma once

#include <Eigen/Core>
#include <functional>
#include <tuple>
#include <vector>

#include "mongeflow/common.hpp"

namespace mongeflow {

struct EmpiricalLaw {
  Eigen::MatrixXd points;   // one row per atom
  Eigen::VectorXd weights;  // nonnegative, sums to 1

  static EmpiricalLaw uniform(Eigen::MatrixXd pts);
  static EmpiricalLaw weighted(Eigen::MatrixXd pts, Eigen::VectorXd w);
  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
};

struct CouplingResult {
  double cost = 0.0;  // squared W2 = sum mass * |x_i - y_j|^2
  std::vector<std::tuple<int, int, double>> plan;
  enum class Method { kExact, kEntropic } method = Method::kExact;
  int iterations = 0;
  double tolerance = 0.0;
  bool upper_bound_estimate = false;  // entropic cost is not debiased

  double w2() const;
};

// Exact optimal coupling. Dispatch: 1D quantile coupling for dim==1,
// dense assignment (Jonker-Volgonant style shortest augmenting paths)
// for equal-size uniform laws, successive-shortest-paths transportation
// otherwise. |a|*|b| is capped at 4e6 pairs.
CouplingResult w2_exact(const EmpiricalLaw& a, const EmpiricalLaw& b);

// Log-domain Sinkhorn with epsilon scaling down to `reg`; the returned
// plan is rounded to exact marginal feasibility and the cost is reported
// from that plan without debiasing (an upper-bound estimate).
CouplingResult w2_entropic(const EmpiricalLaw& a, const EmpiricalLaw& b, double reg,
                           int max_iters = 200000);

using PointMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// || map1 - map2 ||_{L2(mu)} over the given mu samples (rows).
double map_l2(const PointMap& map1, const PointMap& map2,
              const Eigen::MatrixXd& mu_samples);

// Bootstrap standard error of a statistic of two sample sets, resampled
// jointly with replacement (200-resample default used by verify).
double bootstrap_se(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const std::function<double(const Eigen::MatrixXd&,
                                               const Eigen::MatrixXd&)>& stat,
                    int resamples, std::uint64_t seed);

}  // namespace mongeflow
