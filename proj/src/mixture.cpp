#include "mongeflow/mixture.hpp"

#include <cmath>

namespace mongeflow {

MixtureMarginal marginal(const NoiseSchedule& schedule, const PointCloud& cloud,
                         double t) {
  if (!(t > 0.0))
    throw SingularTimeError("marginal: t <= 0 hits the initial-data singularity");
  MixtureMarginal m;
  m.cloud = cloud;
  m.t = t;
  m.mean_scale = schedule.mean_scale(t);
  m.variance = schedule.variance(t);
  return m;
}

double log_density(const MixtureMarginal& m, const Eigen::VectorXd& x) {
  const int n = m.components();
  const int d = m.dim();
  if (x.size() != d) throw UsageError("log_density: dimension mismatch");
  const double inv2v = 0.5 / m.variance;
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> ll(n);
  for (int i = 0; i < n; ++i) {
    double d2 = (m.mean_scale * m.cloud.points.row(i).transpose() - x).squaredNorm();
    ll[i] = -d2 * inv2v;
    mx = std::max(mx, ll[i]);
  }
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(ll[i] - mx);
  return mx + std::log(s / n) - 0.5 * d * std::log(2.0 * M_PI * m.variance);
}

void score_into(const Eigen::MatrixXd& points, double ms, double v,
                const Eigen::VectorXd& x, Eigen::VectorXd& out) {
  const int n = static_cast<int>(points.rows());
  const double inv2v = 0.5 / v;
  // responsibilities in log space with max subtraction; sigma^2 can be
  // ~1e-4 near eps and naive exponentials underflow
  double mx = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> ll;
  ll.resize(n);
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < x.size(); ++k) {
      double diff = ms * points(i, k) - x[k];
      d2 += diff * diff;
    }
    ll[i] = -d2 * inv2v;
    mx = std::max(mx, ll[i]);
  }
  double tot = 0.0;
  out.setZero(x.size());
  for (int i = 0; i < n; ++i) {
    double r = std::exp(ll[i] - mx);
    tot += r;
    for (int k = 0; k < x.size(); ++k) out[k] += r * (ms * points(i, k) - x[k]);
  }
  out /= (tot * v);
}

Eigen::VectorXd score(const MixtureMarginal& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) throw UsageError("score: dimension mismatch");
  Eigen::VectorXd out;
  score_into(m.cloud.points, m.mean_scale, m.variance, x, out);
  return out;
}

Eigen::MatrixXd score_jacobian(const MixtureMarginal& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) throw UsageError("score_jacobian: dimension mismatch");
  const int n = m.components();
  const int d = m.dim();
  const double v = m.variance;
  std::vector<double> ll(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double d2 = (m.mean_scale * m.cloud.points.row(i).transpose() - x).squaredNorm();
    ll[i] = -0.5 * d2 / v;
    mx = std::max(mx, ll[i]);
  }
  double tot = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    double r = std::exp(ll[i] - mx);
    tot += r;
    Eigen::VectorXd mu = m.mean_scale * m.cloud.points.row(i).transpose();
    mean += r * mu;
    second += r * mu * mu.transpose();
  }
  mean /= tot;
  second /= tot;
  Eigen::MatrixXd cov = second - mean * mean.transpose();
  return cov / (v * v) - Eigen::MatrixXd::Identity(d, d) / v;
}

Eigen::VectorXd velocity(const NoiseSchedule& schedule, const MixtureMarginal& m,
                         const Eigen::VectorXd& x, double t) {
  double f = schedule.drift(t);
  double g2 = schedule.beta(t);
  return -f * x - 0.5 * g2 * score(m, x);
}

Eigen::MatrixXd sample(const MixtureMarginal& m, int count, std::uint64_t seed) {
  if (count < 1) throw UsageError("sample: count must be >= 1");
  Rng rng(seed);
  const double sd = std::sqrt(m.variance);
  Eigen::MatrixXd out(count, m.dim());
  for (int i = 0; i < count; ++i) {
    int c = rng.uniform_int(m.components());
    for (int k = 0; k < m.dim(); ++k)
      out(i, k) = m.mean_scale * m.cloud.points(c, k) + sd * rng.normal();
  }
  return out;
}

double cdf_1d(const MixtureMarginal& m, double x) {
  if (m.dim() != 1) throw UsageError("cdf_1d requires a 1D marginal");
  const double sd = std::sqrt(m.variance);
  double acc = 0.0;
  for (int i = 0; i < m.components(); ++i)
    acc += normal_cdf((x - m.mean_scale * m.cloud.points(i, 0)) / sd);
  return acc / m.components();
}

double quantile_1d(const MixtureMarginal& m, double p) {
  if (m.dim() != 1) throw UsageError("quantile_1d requires a 1D marginal");
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("quantile_1d: p outside (0,1)");
  const double sd = std::sqrt(m.variance);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < m.components(); ++i) {
    double mu = m.mean_scale * m.cloud.points(i, 0);
    lo = std::min(lo, mu);
    hi = std::max(hi, mu);
  }
  // bracket generously, then expand if the tail quantile escapes
  double w = 10.0 * sd + 1.0;
  lo -= w;
  hi += w;
  while (cdf_1d(m, lo) > p) lo -= w;
  while (cdf_1d(m, hi) < p) hi += w;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double c = cdf_1d(m, x);
    double err = c - p;
    if (std::abs(err) <= 1e-12) break;
    if (err > 0) hi = x; else lo = x;
    // Newton step with density, clipped to the bracket
    double dens = 0.0;
    for (int i = 0; i < m.components(); ++i) {
      double z = (x - m.mean_scale * m.cloud.points(i, 0)) / sd;
      dens += std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
    }
    dens /= m.components();
    double nx = dens > 0.0 ? x - err / dens : 0.5 * (lo + hi);
    x = (nx > lo && nx < hi) ? nx : 0.5 * (lo + hi);
  }
  return x;
}

}  // namespace mongeflow
