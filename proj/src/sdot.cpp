#include "mongeflow/sdot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mongeflow {

using nlohmann::json;

SourceLaw SourceLaw::standard_normal(int dim) {
  if (dim < 1) throw UsageError("source: dim must be >= 1");
  SourceLaw s;
  s.dim_ = dim;
  return s;
}

SourceLaw SourceLaw::from_marginal(NoiseSchedule schedule, MixtureMarginal m) {
  SourceLaw s;
  s.dim_ = m.dim();
  s.schedule_ = std::move(schedule);
  s.marginal_ = std::move(m);
  return s;
}

int SourceLaw::dim() const { return dim_; }

const MixtureMarginal& SourceLaw::mixture() const {
  if (!marginal_) throw UsageError("source: not a mixture law");
  return *marginal_;
}

const NoiseSchedule& SourceLaw::mixture_schedule() const {
  if (!schedule_) throw UsageError("source: not a mixture law");
  return *schedule_;
}

void SourceLaw::sample_into(Rng& rng, Eigen::VectorXd& z) const {
  z.resize(dim_);
  if (!marginal_) {
    for (int k = 0; k < dim_; ++k) z[k] = rng.normal();
    return;
  }
  const auto& m = *marginal_;
  int c = rng.uniform_int(m.components());
  double sd = std::sqrt(m.variance);
  for (int k = 0; k < dim_; ++k)
    z[k] = m.mean_scale * m.cloud.points(c, k) + sd * rng.normal();
}

double SourceLaw::cdf_1d(double x) const {
  if (dim_ != 1) throw UsageError("source cdf_1d: dim != 1");
  if (!marginal_) return normal_cdf(x);
  return mongeflow::cdf_1d(*marginal_, x);
}

double SourceLaw::quantile_1d(double p) const {
  if (dim_ != 1) throw UsageError("source quantile_1d: dim != 1");
  if (!marginal_) return normal_quantile(p);
  return mongeflow::quantile_1d(*marginal_, p);
}

int BrenierPotential::assign(const Eigen::VectorXd& z) const {
  if (!z.allFinite()) throw UsageError("assign: non-finite input");
  int best = 0;
  double best_v = targets.points.row(0).dot(z) + heights[0];
  for (int i = 1; i < targets.size(); ++i) {
    double v = targets.points.row(i).dot(z) + heights[i];
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

double BrenierPotential::value(const Eigen::VectorXd& z) const {
  int i = assign(z);
  return targets.points.row(i).dot(z) + heights[i];
}

bool CellStats::all_nonempty() const {
  for (const auto& c : centroids)
    if (!c) return false;
  return true;
}

namespace {

constexpr int kChunk = 8192;

// One pass over `total` source draws: per-cell counts and coordinate sums.
// Chunk index, not worker identity, seeds the stream, so results do not
// depend on the worker count; partials reduce in chunk order.
void accumulate_cells(const BrenierPotential& pot, long long total,
                      std::uint64_t seed, int workers,
                      std::vector<long long>& counts, Eigen::MatrixXd* sums) {
  const int n = pot.targets.size();
  const int d = pot.targets.dim();
  int chunks = static_cast<int>((total + kChunk - 1) / kChunk);
  std::vector<std::vector<long long>> pc(chunks);
  std::vector<Eigen::MatrixXd> ps(sums ? chunks : 0);
  run_chunks(chunks, workers, [&](int c) {
    long long lo = static_cast<long long>(c) * kChunk;
    long long hi = std::min(total, lo + kChunk);
    Rng rng(seed, static_cast<std::uint64_t>(c) + 1);
    std::vector<long long> cnt(n, 0);
    Eigen::MatrixXd sm;
    if (sums) sm = Eigen::MatrixXd::Zero(n, d);
    Eigen::VectorXd z;
    for (long long s = lo; s < hi; ++s) {
      pot.source.sample_into(rng, z);
      int i = pot.assign(z);
      ++cnt[i];
      if (sums) sm.row(i) += z.transpose();
    }
    pc[c] = std::move(cnt);
    if (sums) ps[c] = std::move(sm);
  });
  counts.assign(n, 0);
  if (sums) sums->setZero(n, d);
  for (int c = 0; c < chunks; ++c) {
    for (int i = 0; i < n; ++i) counts[i] += pc[c][i];
    if (sums) *sums += ps[c];
  }
}

}  // namespace

CellStats estimate_cells(const BrenierPotential& potential, long long mc_samples,
                         std::uint64_t seed, int workers) {
  const int n = potential.targets.size();
  if (mc_samples < n) throw UsageError("estimate_cells: mc_samples < |targets|");
  std::vector<long long> counts;
  Eigen::MatrixXd sums;
  accumulate_cells(potential, mc_samples, seed, workers, counts, &sums);
  CellStats stats;
  stats.sample_count = mc_samples;
  stats.seed = seed;
  stats.measures.resize(n);
  stats.centroids.resize(n);
  for (int i = 0; i < n; ++i) {
    stats.measures[i] = static_cast<double>(counts[i]) / mc_samples;
    if (counts[i] > 0)
      stats.centroids[i] = (sums.row(i) / counts[i]).transpose();
  }
  return stats;
}

BrenierPotential fit(const PointCloud& targets, SourceLaw source,
                     const FitOptions& options, std::uint64_t seed) {
  if (source.dim() != targets.dim()) throw UsageError("fit: dimension mismatch");
  if (!(options.tol > 0.0)) throw UsageError("fit: tol must be > 0");
  const int n = targets.size();
  const int d = targets.dim();
  long long mc = options.mc_samples > 0 ? options.mc_samples : 4000LL * n;
  if (mc < n) throw UsageError("fit: mc_samples < |targets|");
  double step0 = options.step0 > 0.0 ? options.step0
                                     : targets.points.cwiseAbs().maxCoeff();
  const double nu = 1.0 / n;
  const double polish = std::max(0.0, options.polish_factor) * options.tol;

  // Common random numbers: one fixed sample set across iterations makes
  // the empirical measures a deterministic function of h and lets the
  // descent converge well below tol.
  Eigen::MatrixXd Z(mc, d);
  {
    int chunks = static_cast<int>((mc + kChunk - 1) / kChunk);
    run_chunks(chunks, options.workers, [&](int c) {
      long long lo = static_cast<long long>(c) * kChunk;
      long long hi = std::min(mc, lo + kChunk);
      Rng rng(seed, static_cast<std::uint64_t>(c) + 1);
      Eigen::VectorXd z;
      for (long long s = lo; s < hi; ++s) {
        source.sample_into(rng, z);
        Z.row(s) = z.transpose();
      }
    });
  }

  BrenierPotential pot;
  pot.targets = targets;
  pot.source = std::move(source);
  pot.heights = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd best_h = h;
  double best_res = std::numeric_limits<double>::infinity();
  int stall = 0;
  FitReport report;
  report.mc_samples = mc;
  report.seed = seed;

  Eigen::VectorXd w(n);
  for (int it = 1; it <= options.max_iters; ++it) {
    // empirical cell measures under current heights
    std::vector<long long> counts(n, 0);
    {
      int chunks = static_cast<int>((mc + kChunk - 1) / kChunk);
      std::vector<std::vector<long long>> pc(chunks);
      const auto& Y = targets.points;
      run_chunks(chunks, options.workers, [&](int c) {
        long long lo = static_cast<long long>(c) * kChunk;
        long long hi = std::min(mc, lo + kChunk);
        std::vector<long long> cnt(n, 0);
        for (long long s = lo; s < hi; ++s) {
          int best = 0;
          double bv = Y.row(0).dot(Z.row(s)) + h[0];
          for (int i = 1; i < n; ++i) {
            double v = Y.row(i).dot(Z.row(s)) + h[i];
            if (v > bv) {
              bv = v;
              best = i;
            }
          }
          ++cnt[best];
        }
        pc[c] = std::move(cnt);
      });
      for (auto& cnt : pc)
        for (int i = 0; i < n; ++i) counts[i] += cnt[i];
    }
    for (int i = 0; i < n; ++i) w[i] = static_cast<double>(counts[i]) / mc;
    double res = (w.array() - nu).abs().maxCoeff();
    report.residual_trajectory.push_back(res);
    report.iterations = it;
    if (res < best_res - 1e-15) {
      best_res = res;
      best_h = h;
      stall = 0;
    } else {
      ++stall;
    }
    if (best_res <= polish) break;
    if (best_res <= options.tol && stall > 200) break;
    // descent direction nu - w; an empty cell gets +step/|I| so it
    // regains mass
    h += (step0 / std::sqrt(static_cast<double>(it))) * (Eigen::VectorXd::Constant(n, nu) - w);
    h.array() -= h.mean();
  }

  pot.heights = best_h;
  pot.heights.array() -= pot.heights.mean();
  report.residual = best_res;
  report.converged = best_res <= options.tol;

  // empty cells at the accepted heights
  {
    std::vector<long long> counts(n, 0);
    const auto& Y = targets.points;
    for (long long s = 0; s < mc; ++s) {
      int best = 0;
      double bv = Y.row(0).dot(Z.row(s)) + pot.heights[0];
      for (int i = 1; i < n; ++i) {
        double v = Y.row(i).dot(Z.row(s)) + pot.heights[i];
        if (v > bv) {
          bv = v;
          best = i;
        }
      }
      ++counts[best];
    }
    for (int i = 0; i < n; ++i)
      if (counts[i] == 0) report.empty_cells.push_back(i);
  }
  pot.fit_report = std::move(report);
  return pot;
}

PushforwardSamples pushforward(const BrenierPotential& potential, int count,
                               std::uint64_t seed) {
  if (count < 0) throw UsageError("pushforward: negative count");
  const int d = potential.targets.dim();
  PushforwardSamples out;
  out.outputs.resize(count, d);
  out.latents.resize(count, d);
  out.indices.resize(count);
  Rng rng(seed, 1);
  Eigen::VectorXd z;
  for (int s = 0; s < count; ++s) {
    potential.source.sample_into(rng, z);
    int i = potential.assign(z);
    out.outputs.row(s) = potential.targets.points.row(i);
    out.latents.row(s) = z.transpose();
    out.indices[s] = i;
  }
  return out;
}

std::vector<long long> pushforward_counts(const BrenierPotential& potential,
                                          long long count, std::uint64_t seed,
                                          int workers) {
  std::vector<long long> counts;
  accumulate_cells(potential, count, seed, workers, counts, nullptr);
  return counts;
}

namespace {

json cloud_to_json(const PointCloud& c) {
  json pts = json::array();
  for (int i = 0; i < c.size(); ++i) {
    json row = json::array();
    for (int k = 0; k < c.dim(); ++k) row.push_back(c.points(i, k));
    pts.push_back(row);
  }
  json j{{"points", pts}};
  if (c.labeled()) j["labels"] = c.labels;
  return j;
}

PointCloud cloud_from_json(const json& j) {
  const auto& pts = j.at("points");
  if (pts.empty()) throw IoError("cloud json: empty points");
  Eigen::MatrixXd m(pts.size(), pts[0].size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t k = 0; k < pts[i].size(); ++k) m(i, k) = pts[i][k];
  std::vector<int> labels;
  if (j.contains("labels")) labels = j.at("labels").get<std::vector<int>>();
  return PointCloud(std::move(m), std::move(labels));
}

}  // namespace

void BrenierPotential::save_json(const std::string& path) const {
  json j;
  j["format"] = "mongeflow-potential-v1";
  j["dim"] = targets.dim();
  j["targets"] = cloud_to_json(targets);
  j["heights"] = std::vector<double>(heights.data(), heights.data() + heights.size());
  if (source.is_standard_normal()) {
    j["source"] = {{"kind", "standard_normal"}, {"dim", source.dim()}};
  } else {
    const auto& s = source.mixture_schedule();
    j["source"] = {{"kind", "mixture"},
                   {"t", source.mixture().t},
                   {"schedule",
                    {{"beta_min", s.beta_min},
                     {"beta_max", s.beta_max},
                     {"t_max", s.t_max},
                     {"eps", s.eps}}},
                   {"cloud", cloud_to_json(source.mixture().cloud)}};
  }
  if (fit_report) {
    j["fit_report"] = {{"iterations", fit_report->iterations},
                       {"residual", fit_report->residual},
                       {"converged", fit_report->converged},
                       {"mc_samples", fit_report->mc_samples},
                       {"seed", fit_report->seed},
                       {"empty_cells", fit_report->empty_cells}};
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write potential file: " + path);
  out << j.dump(2) << "\n";
}

BrenierPotential BrenierPotential::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open potential file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("potential file " + path + ": " + e.what());
  }
  if (j.value("format", "") != "mongeflow-potential-v1")
    throw IoError("potential file " + path + ": unknown format");
  BrenierPotential pot;
  pot.targets = cloud_from_json(j.at("targets"));
  auto hv = j.at("heights").get<std::vector<double>>();
  if (static_cast<int>(hv.size()) != pot.targets.size())
    throw IoError("potential file " + path + ": heights length mismatch");
  pot.heights = Eigen::Map<Eigen::VectorXd>(hv.data(), hv.size());
  double gauge = std::abs(pot.heights.sum());
  double scale = std::max(1.0, pot.heights.cwiseAbs().maxCoeff());
  if (gauge > 1e-9 * scale * pot.targets.size())
    throw IoError("potential file " + path + ": heights violate sum(h)=0 gauge");
  const auto& src = j.at("source");
  if (src.at("kind") == "standard_normal") {
    pot.source = SourceLaw::standard_normal(src.at("dim"));
  } else if (src.at("kind") == "mixture") {
    const auto& sj = src.at("schedule");
    NoiseSchedule sched(sj.at("beta_min"), sj.at("beta_max"), sj.at("t_max"),
                        sj.at("eps"));
    PointCloud cloud = cloud_from_json(src.at("cloud"));
    pot.source = SourceLaw::from_marginal(sched, marginal(sched, cloud, src.at("t")));
  } else {
    throw IoError("potential file " + path + ": unknown source kind");
  }
  if (j.contains("fit_report")) {
    const auto& r = j.at("fit_report");
    FitReport rep;
    rep.iterations = r.at("iterations");
    rep.residual = r.at("residual");
    rep.converged = r.at("converged");
    rep.mc_samples = r.at("mc_samples");
    rep.seed = r.at("seed");
    rep.empty_cells = r.at("empty_cells").get<std::vector<int>>();
    pot.fit_report = std::move(rep);
  }
  return pot;
}

}  // namespace mongeflow
