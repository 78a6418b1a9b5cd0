#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "mongeflow/mixture.hpp"
#include "mongeflow/point_cloud.hpp"

namespace mongeflow {

// Continuous source of the semi-discrete problem: the Gibbs state
// N(0, I) by default, or any exact mixture marginal.
class SourceLaw {
 public:
  static SourceLaw standard_normal(int dim);
  static SourceLaw from_marginal(NoiseSchedule schedule, MixtureMarginal m);

  int dim() const;
  bool is_standard_normal() const { return !marginal_.has_value(); }
  const MixtureMarginal& mixture() const;
  const NoiseSchedule& mixture_schedule() const;

  void sample_into(Rng& rng, Eigen::VectorXd& z) const;
  double cdf_1d(double x) const;
  double quantile_1d(double p) const;

 private:
  int dim_ = 0;
  std::optional<MixtureMarginal> marginal_;
  std::optional<NoiseSchedule> schedule_;
};

struct FitReport {
  int iterations = 0;
  double residual = 0.0;  // best max_i |w_i - 1/|I|| seen
  bool converged = false;
  long long mc_samples = 0;
  std::uint64_t seed = 0;
  std::vector<int> empty_cells;            // empty at termination
  std::vector<double> residual_trajectory; // one entry per iteration
};

// Max-form Brenier potential u_h(z) = max_i (<z, y_i> + h_i) for the
// semi-discrete map from `source` onto the target cloud. Heights are
// gauge-normalized to sum(h) = 0.
struct BrenierPotential {
  PointCloud targets;
  Eigen::VectorXd heights;
  SourceLaw source;
  std::optional<FitReport> fit_report;

  int assign(const Eigen::VectorXd& z) const;  // ties -> lowest index
  double value(const Eigen::VectorXd& z) const;

  void save_json(const std::string& path) const;
  static BrenierPotential load_json(const std::string& path);
};

struct CellStats {
  Eigen::VectorXd measures;  // empirical frequencies, sums to 1
  std::vector<std::optional<Eigen::VectorXd>> centroids;  // absent if empty
  long long sample_count = 0;
  std::uint64_t seed = 0;

  bool all_nonempty() const;
};

CellStats estimate_cells(const BrenierPotential& potential, long long mc_samples,
                         std::uint64_t seed, int workers = 1);

struct FitOptions {
  double tol = 5e-3;
  long long mc_samples = 0;   // 0 -> 4000 * |targets|
  int max_iters = 2000;
  double step0 = 0.0;         // 0 -> max-abs target coordinate
  // Descent continues past tol toward polish_factor*tol (or a plateau):
  // the stated tolerance controls per-cell residuals, while downstream
  // W2 checks respond to cumulative cell-mass errors, which keep
  // improving well past the first tol hit.
  double polish_factor = 0.25;
  int workers = 1;
};

BrenierPotential fit(const PointCloud& targets, SourceLaw source,
                     const FitOptions& options, std::uint64_t seed);

struct PushforwardSamples {
  Eigen::MatrixXd outputs;  // assigned targets, one row per draw
  Eigen::MatrixXd latents;  // the source draws z
  std::vector<int> indices; // assigned target index per draw
};

PushforwardSamples pushforward(const BrenierPotential& potential, int count,
                               std::uint64_t seed);

// Streaming variant: only per-target draw counts (for measure-level
// checks at sample sizes where storing draws is pointless).
std::vector<long long> pushforward_counts(const BrenierPotential& potential,
                                          long long count, std::uint64_t seed,
                                          int workers = 1);

}  // namespace mongeflow
