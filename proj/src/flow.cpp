#include "mongeflow/flow.hpp"

#include <cmath>
#include <fstream>

namespace mongeflow {

ScorePerturbation ScorePerturbation::constant_vector(int dim, double delta,
                                                     std::uint64_t field_seed) {
  ScorePerturbation p;
  p.mode = Mode::kConstantVector;
  p.magnitude = delta;
  p.field_seed = field_seed;
  p.dim = dim;
  p.init();
  return p;
}

ScorePerturbation ScorePerturbation::smooth_field(int dim, double delta,
                                                  std::uint64_t field_seed) {
  ScorePerturbation p;
  p.mode = Mode::kSmoothField;
  p.magnitude = delta;
  p.field_seed = field_seed;
  p.dim = dim;
  p.init();
  return p;
}

void ScorePerturbation::init() {
  if (magnitude < 0.0) throw UsageError("perturbation magnitude must be >= 0");
  Rng rng(field_seed, 0xf1e1d);
  if (mode == Mode::kConstantVector) {
    unit_.resize(dim);
    for (int k = 0; k < dim; ++k) unit_[k] = rng.normal();
    double n = unit_.norm();
    if (n == 0.0) unit_[0] = 1.0; else unit_ /= n;
  } else {
    wave_.resize(dim, dim);
    omega_.resize(dim);
    phase_.resize(dim);
    for (int k = 0; k < dim; ++k) {
      for (int j = 0; j < dim; ++j) wave_(k, j) = 1.5 * rng.normal();
      omega_[k] = 0.5 + 2.5 * rng.uniform();
      phase_[k] = 2.0 * M_PI * rng.uniform();
    }
  }
}

Eigen::VectorXd ScorePerturbation::field(const Eigen::VectorXd& x, double t) const {
  if (mode == Mode::kConstantVector) return unit_;
  Eigen::VectorXd e(dim);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int k = 0; k < dim; ++k)
    e[k] = inv * std::sin(wave_.row(k).dot(x) + omega_[k] * t + phase_[k]);
  return e;
}

double ScorePerturbation::field_lipschitz() const {
  if (mode == Mode::kConstantVector) return 0.0;
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += wave_.row(k).squaredNorm();
  return std::sqrt(s / dim);
}

FlowMap::FlowMap(NoiseSchedule s, PointCloud c, double t0, double t1, int steps_,
                 std::optional<ScorePerturbation> pert)
    : schedule(std::move(s)),
      cloud(std::move(c)),
      t_start(t0),
      t_end(t1),
      steps(steps_),
      perturbation(std::move(pert)) {
  if (steps < 1) throw UsageError("flow: steps must be >= 1");
  auto in_range = [&](double t) {
    return t >= schedule.eps - 1e-15 && t <= schedule.t_max + 1e-15;
  };
  if (!in_range(t_start) || !in_range(t_end))
    throw UsageError("flow: endpoints must lie in [eps, t_max]");
  if (perturbation && perturbation->dim != cloud.dim())
    throw UsageError("flow: perturbation dimension mismatch");
}

Eigen::VectorXd FlowMap::velocity_at(const Eigen::VectorXd& x, double t) const {
  double f = schedule.drift(t);
  double g2 = schedule.beta(t);
  double ms = schedule.mean_scale(t);
  double v = schedule.variance(t);
  Eigen::VectorXd s;
  score_into(cloud.points, ms, v, x, s);
  if (perturbation && perturbation->magnitude != 0.0)
    s += perturbation->magnitude * perturbation->field(x, t);
  return -f * x - 0.5 * g2 * s;
}

namespace {

// RK4 step count shared by transport paths; dx/dlambda = v(x,t) / (dlambda/dt)
struct LambdaClock {
  const NoiseSchedule& s;
  double t(double lam) const { return s.time_of_log_snr(lam); }
  double dt_dlam(double t) const { return 1.0 / s.dlog_snr_dt(t); }
};

}  // namespace

Eigen::VectorXd transport(const FlowMap& map, const Eigen::VectorXd& x) {
  if (!x.allFinite()) throw UsageError("transport: non-finite input");
  if (x.size() != map.cloud.dim()) throw UsageError("transport: dimension mismatch");
  if (map.t_start == map.t_end) return x;
  LambdaClock clock{map.schedule};
  const double l0 = map.schedule.log_snr(map.t_start);
  const double l1 = map.schedule.log_snr(map.t_end);
  const double h = (l1 - l0) / map.steps;
  auto rhs = [&](const Eigen::VectorXd& y, double lam) {
    double t = clock.t(lam);
    return (map.velocity_at(y, t) * clock.dt_dlam(t)).eval();
  };
  Eigen::VectorXd y = x;
  double lam = l0;
  for (int k = 0; k < map.steps; ++k) {
    Eigen::VectorXd k1 = rhs(y, lam);
    Eigen::VectorXd k2 = rhs(y + 0.5 * h * k1, lam + 0.5 * h);
    Eigen::VectorXd k3 = rhs(y + 0.5 * h * k2, lam + 0.5 * h);
    Eigen::VectorXd k4 = rhs(y + h * k3, lam + h);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite())
      throw DivergenceError("transport diverged at step " + std::to_string(k + 1) +
                            " of " + std::to_string(map.steps));
    lam = l0 + (k + 1) * h;
  }
  return y;
}

Eigen::MatrixXd transport_batch(const FlowMap& map, const Eigen::MatrixXd& pts,
                                int workers) {
  Eigen::MatrixXd out(pts.rows(), pts.cols());
  const int chunk = 64;
  int chunks = static_cast<int>((pts.rows() + chunk - 1) / chunk);
  run_chunks(chunks, workers, [&](int c) {
    int lo = c * chunk;
    int hi = std::min<int>(lo + chunk, static_cast<int>(pts.rows()));
    for (int i = lo; i < hi; ++i)
      out.row(i) = transport(map, pts.row(i).transpose()).transpose();
  });
  return out;
}

std::vector<std::pair<double, Eigen::VectorXd>> transport_trace(
    const FlowMap& map, const Eigen::VectorXd& x) {
  std::vector<std::pair<double, Eigen::VectorXd>> trace;
  trace.reserve(map.steps + 1);
  trace.emplace_back(map.t_start, x);
  if (map.t_start == map.t_end) return trace;
  LambdaClock clock{map.schedule};
  const double l0 = map.schedule.log_snr(map.t_start);
  const double l1 = map.schedule.log_snr(map.t_end);
  const double h = (l1 - l0) / map.steps;
  auto rhs = [&](const Eigen::VectorXd& y, double lam) {
    double t = clock.t(lam);
    return (map.velocity_at(y, t) * clock.dt_dlam(t)).eval();
  };
  Eigen::VectorXd y = x;
  for (int k = 0; k < map.steps; ++k) {
    double lam = l0 + k * h;
    Eigen::VectorXd k1 = rhs(y, lam);
    Eigen::VectorXd k2 = rhs(y + 0.5 * h * k1, lam + 0.5 * h);
    Eigen::VectorXd k3 = rhs(y + 0.5 * h * k2, lam + 0.5 * h);
    Eigen::VectorXd k4 = rhs(y + h * k3, lam + h);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite())
      throw DivergenceError("transport diverged at step " + std::to_string(k + 1));
    double tk = (k + 1 == map.steps) ? map.t_end : clock.t(l0 + (k + 1) * h);
    trace.emplace_back(tk, y);
  }
  return trace;
}

void write_trajectories_csv(const std::string& path, const FlowMap& map,
                            const Eigen::MatrixXd& pts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  out << "t";
  for (int k = 0; k < map.cloud.dim(); ++k) out << ",x" << k;
  out << "\n";
  for (int i = 0; i < pts.rows(); ++i) {
    auto trace = transport_trace(map, pts.row(i).transpose());
    for (auto& [t, y] : trace) {
      out << format_double(t);
      for (int k = 0; k < y.size(); ++k) out << "," << format_double(y[k]);
      out << "\n";
    }
    if (i + 1 < pts.rows()) out << "\n";  // block separator per particle
  }
}

namespace {

// log((e^d - 1)/d), stable for |d| small and either sign
double log_expm1_ratio(double d) {
  if (std::abs(d) < 1e-9) return 0.5 * d;
  if (d > 0.0) return std::log(std::expm1(d)) - std::log(d);
  return std::log1p(-std::exp(d)) - std::log(-d);
}

}  // namespace

double log_score_matching_loss(const FlowMap& map, const IntegratingFactors& factors,
                               double t_lo, double t_hi, int mc_samples,
                               std::uint64_t seed, int panels) {
  if (!(t_lo < t_hi)) throw UsageError("score_matching_loss: need t_lo < t_hi");
  if (mc_samples < 1) throw UsageError("score_matching_loss: mc_samples >= 1");
  if (!map.perturbation || map.perturbation->magnitude == 0.0)
    return -std::numeric_limits<double>::infinity();
  const auto& pert = *map.perturbation;
  const double h = (t_hi - t_lo) / panels;

  std::vector<double> node_log(panels + 1);
  for (int j = 0; j <= panels; ++j) {
    double t = t_lo + j * h;
    auto marg = marginal(map.schedule, map.cloud, t);
    Eigen::MatrixXd xs = sample(marg, mc_samples, seed + 7919 * j);
    double acc = 0.0;
    for (int i = 0; i < xs.rows(); ++i) {
      Eigen::VectorXd e = pert.field(xs.row(i).transpose(), t);
      acc += (pert.magnitude * e).squaredNorm();
    }
    double est = acc / mc_samples;
    node_log[j] = factors.log_weight(t) +
                  (est > 0.0 ? std::log(est) : -std::numeric_limits<double>::infinity());
  }
  std::vector<double> panel_log(panels);
  for (int j = 0; j < panels; ++j) {
    double L0 = node_log[j], L1 = node_log[j + 1];
    if (!std::isfinite(L0) && !std::isfinite(L1)) {
      panel_log[j] = -std::numeric_limits<double>::infinity();
    } else if (!std::isfinite(L0) || !std::isfinite(L1)) {
      // trapezoid on the finite side only; occurs only for degenerate fields
      panel_log[j] = std::log(0.5 * h) + std::max(L0, L1);
    } else {
      panel_log[j] = std::log(h) + L0 + log_expm1_ratio(L1 - L0);
    }
  }
  return std::log(0.5) + logsumexp(panel_log);
}

double score_matching_loss(const FlowMap& map, const IntegratingFactors& factors,
                           double t_lo, double t_hi, int mc_samples,
                           std::uint64_t seed, int panels) {
  double lv = log_score_matching_loss(map, factors, t_lo, t_hi, mc_samples, seed,
                                      panels);
  return std::isfinite(lv) ? std::exp(lv) : (lv > 0 ? lv : 0.0);
}

double map_deviation(const FlowMap& exact, const FlowMap& perturbed,
                     const Eigen::MatrixXd& init_samples) {
  if (exact.t_start != perturbed.t_start || exact.t_end != perturbed.t_end)
    throw UsageError("map_deviation: maps must share endpoints");
  Eigen::MatrixXd a = transport_batch(exact, init_samples);
  Eigen::MatrixXd b = transport_batch(perturbed, init_samples);
  return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

double linear_response_deviation(const FlowMap& exact_map,
                                 const ScorePerturbation& pert,
                                 const Eigen::MatrixXd& init_samples) {
  // co-integrate (x, D) with dD/dt = Jv(x,t) D - g^2/2 e(x,t), D(t_start)=0
  const NoiseSchedule& s = exact_map.schedule;
  const double l0 = s.log_snr(exact_map.t_start);
  const double l1 = s.log_snr(exact_map.t_end);
  const double h = (l1 - l0) / exact_map.steps;
  const int d = exact_map.cloud.dim();
  double acc = 0.0;
  for (int i = 0; i < init_samples.rows(); ++i) {
    Eigen::VectorXd x = init_samples.row(i).transpose();
    Eigen::VectorXd D = Eigen::VectorXd::Zero(d);
    auto rhs = [&](const Eigen::VectorXd& y, const Eigen::VectorXd& Dy, double lam,
                   Eigen::VectorXd& dy, Eigen::VectorXd& dD) {
      double t = s.time_of_log_snr(lam);
      double dt = 1.0 / s.dlog_snr_dt(t);
      auto marg = marginal(s, exact_map.cloud, t);
      Eigen::VectorXd v = velocity(s, marg, y, t);
      Eigen::MatrixXd H = score_jacobian(marg, y);
      double f = s.drift(t), g2 = s.beta(t);
      Eigen::MatrixXd Jv = -f * Eigen::MatrixXd::Identity(d, d) - 0.5 * g2 * H;
      dy = v * dt;
      dD = (Jv * Dy - 0.5 * g2 * pert.field(y, t)) * dt;
    };
    double lam = l0;
    Eigen::VectorXd k1x(d), k1D(d), k2x(d), k2D(d), k3x(d), k3D(d), k4x(d), k4D(d);
    for (int k = 0; k < exact_map.steps; ++k) {
      rhs(x, D, lam, k1x, k1D);
      rhs(x + 0.5 * h * k1x, D + 0.5 * h * k1D, lam + 0.5 * h, k2x, k2D);
      rhs(x + 0.5 * h * k2x, D + 0.5 * h * k2D, lam + 0.5 * h, k3x, k3D);
      rhs(x + h * k3x, D + h * k3D, lam + h, k4x, k4D);
      x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      D += (h / 6.0) * (k1D + 2.0 * k2D + 2.0 * k3D + k4D);
      lam = l0 + (k + 1) * h;
    }
    acc += D.squaredNorm();
  }
  return std::sqrt(acc / init_samples.rows());
}

}  // namespace mongeflow
