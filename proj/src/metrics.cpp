#include "mongeflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mongeflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

EmpiricalLaw EmpiricalLaw::uniform(Eigen::MatrixXd pts) {
  EmpiricalLaw law;
  law.weights = Eigen::VectorXd::Constant(pts.rows(), 1.0 / pts.rows());
  law.points = std::move(pts);
  return law;
}

EmpiricalLaw EmpiricalLaw::weighted(Eigen::MatrixXd pts, Eigen::VectorXd w) {
  if (pts.rows() != w.size()) throw UsageError("law: weight count mismatch");
  if ((w.array() < 0.0).any()) throw UsageError("law: negative weight");
  if (std::abs(w.sum() - 1.0) > 1e-12)
    throw UsageError("law: weights must sum to 1 within 1e-12");
  if (!pts.allFinite()) throw UsageError("law: non-finite point");
  EmpiricalLaw law;
  law.points = std::move(pts);
  law.weights = std::move(w);
  return law;
}

double CouplingResult::w2() const { return std::sqrt(std::max(cost, 0.0)); }

namespace {

// ---- 1D: quantile coupling is the unique optimal plan ----
CouplingResult w2_exact_1d(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  std::vector<int> ia(a.size()), ib(b.size());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::sort(ia.begin(), ia.end(),
            [&](int i, int j) { return a.points(i, 0) < a.points(j, 0); });
  std::sort(ib.begin(), ib.end(),
            [&](int i, int j) { return b.points(i, 0) < b.points(j, 0); });
  CouplingResult res;
  res.method = CouplingResult::Method::kExact;
  std::size_t i = 0, j = 0;
  double ra = a.weights[ia[0]], rb = b.weights[ib[0]];
  while (i < ia.size() && j < ib.size()) {
    double m = std::min(ra, rb);
    if (m > 0.0) {
      double d = a.points(ia[i], 0) - b.points(ib[j], 0);
      res.cost += m * d * d;
      res.plan.emplace_back(ia[i], ib[j], m);
    }
    ra -= m;
    rb -= m;
    if (ra <= 1e-16) {
      if (++i < ia.size()) ra = a.weights[ia[i]];
    }
    if (rb <= 1e-16) {
      if (++j < ib.size()) rb = b.weights[ib[j]];
    }
  }
  return res;
}

// ---- dense assignment, shortest augmenting paths with JV-style
// initialization (column reduction + augmenting row reduction) ----
double lap_dense(const Eigen::MatrixXd& C, std::vector<int>& rowsol) {
  const int n = static_cast<int>(C.rows());
  std::vector<int> colsol(n, -1), freerows(n), collist(n), pred(n), matches(n, 0);
  std::vector<double> v(n), d(n);
  rowsol.assign(n, -1);

  // column reduction
  for (int j = n - 1; j >= 0; --j) {
    double mn = C(0, j);
    int imin = 0;
    for (int i = 1; i < n; ++i)
      if (C(i, j) < mn) {
        mn = C(i, j);
        imin = i;
      }
    v[j] = mn;
    if (++matches[imin] == 1) {
      rowsol[imin] = j;
      colsol[j] = imin;
    }
  }

  int numfree = 0;
  for (int i = 0; i < n; ++i) {
    if (matches[i] == 0) {
      freerows[numfree++] = i;
    } else if (matches[i] == 1) {
      int j1 = rowsol[i];
      double mn = kInf;
      for (int j = 0; j < n; ++j)
        if (j != j1) mn = std::min(mn, C(i, j) - v[j]);
      v[j1] -= mn;
    }
  }

  // two rounds of augmenting row reduction
  for (int loop = 0; loop < 2; ++loop) {
    int k = 0;
    int prevnumfree = numfree;
    numfree = 0;
    while (k < prevnumfree) {
      int i = freerows[k++];
      double umin = C(i, 0) - v[0], usubmin = kInf;
      int j1 = 0, j2 = -1;
      for (int j = 1; j < n; ++j) {
        double h = C(i, j) - v[j];
        if (h < usubmin) {
          if (h >= umin) {
            usubmin = h;
            j2 = j;
          } else {
            usubmin = umin;
            j2 = j1;
            umin = h;
            j1 = j;
          }
        }
      }
      int i0 = colsol[j1];
      if (umin < usubmin) {
        v[j1] -= usubmin - umin;
      } else if (i0 >= 0) {
        j1 = j2;
        i0 = colsol[j1];
      }
      rowsol[i] = j1;
      colsol[j1] = i;
      if (i0 >= 0) {
        if (umin < usubmin)
          freerows[--k] = i0;
        else
          freerows[numfree++] = i0;
      }
    }
  }

  // augment remaining free rows via Dijkstra-style shortest paths
  for (int f = 0; f < numfree; ++f) {
    int freerow = freerows[f];
    for (int j = 0; j < n; ++j) {
      d[j] = C(freerow, j) - v[j];
      pred[j] = freerow;
      collist[j] = j;
    }
    int low = 0, up = 0, last = -1, endofpath = -1;
    double mn = 0.0;
    bool found = false;
    while (!found) {
      if (up == low) {
        last = low - 1;
        mn = d[collist[up++]];
        for (int k = up; k < n; ++k) {
          int j = collist[k];
          double h = d[j];
          if (h <= mn) {
            if (h < mn) {
              up = low;
              mn = h;
            }
            collist[k] = collist[up];
            collist[up++] = j;
          }
        }
        for (int k = low; k < up; ++k) {
          if (colsol[collist[k]] < 0) {
            endofpath = collist[k];
            found = true;
            break;
          }
        }
      }
      if (!found) {
        int j1 = collist[low++];
        int i = colsol[j1];
        double h = C(i, j1) - v[j1] - mn;
        for (int k = up; k < n; ++k) {
          int j = collist[k];
          double red = C(i, j) - v[j] - h;
          if (red < d[j]) {
            pred[j] = i;
            if (red == mn) {
              if (colsol[j] < 0) {
                endofpath = j;
                found = true;
                break;
              }
              collist[k] = collist[up];
              collist[up++] = j;
            }
            d[j] = red;
          }
        }
      }
    }
    for (int k = 0; k <= last; ++k) {
      int j1 = collist[k];
      v[j1] += d[j1] - mn;
    }
    int i, j = endofpath;
    do {
      i = pred[j];
      colsol[j] = i;
      std::swap(j, rowsol[i]);
    } while (i != freerow);
  }

  double total = 0.0;
  for (int i = 0; i < n; ++i) total += C(i, rowsol[i]);
  return total;
}

Eigen::MatrixXd cost_matrix(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  Eigen::MatrixXd C(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j)
      C(i, j) = (a.points.row(i) - b.points.row(j)).squaredNorm();
  return C;
}

// ---- successive shortest paths for general discrete transportation ----
CouplingResult transport_ssp(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  const int n = a.size(), m = b.size();
  Eigen::MatrixXd C = cost_matrix(a, b);
  std::vector<double> supply(a.weights.data(), a.weights.data() + n);
  std::vector<double> demand(b.weights.data(), b.weights.data() + m);
  std::vector<double> pu(n, 0.0), pv(m, 0.0);  // potentials
  // flow stored sparsely per column as (row, mass)
  std::vector<std::vector<std::pair<int, double>>> flow(m);

  auto flow_ref = [&](int i, int j) -> double& {
    for (auto& e : flow[j])
      if (e.first == i) return e.second;
    flow[j].emplace_back(i, 0.0);
    return flow[j].back().second;
  };

  const double mass_eps = 1e-15;
  int guard = 8 * (n + m) + 64;
  CouplingResult res;
  res.method = CouplingResult::Method::kExact;

  while (guard-- > 0) {
    int src = -1;
    for (int i = 0; i < n; ++i)
      if (supply[i] > mass_eps) {
        src = i;
        break;
      }
    if (src < 0) break;

    // Dijkstra over rows/cols with reduced costs
    std::vector<double> du(n, kInf), dv(m, kInf);
    std::vector<int> prev_col_of_row(n, -1), prev_row_of_col(m, -1);
    std::vector<bool> done_u(n, false), done_v(m, false);
    du[src] = 0.0;
    int sink = -1;
    while (true) {
      // pick unsettled node of smallest distance
      double best = kInf;
      int bu = -1, bv = -1;
      for (int i = 0; i < n; ++i)
        if (!done_u[i] && du[i] < best) {
          best = du[i];
          bu = i;
          bv = -1;
        }
      for (int j = 0; j < m; ++j)
        if (!done_v[j] && dv[j] < best) {
          best = dv[j];
          bv = j;
          bu = -1;
        }
      if (bu < 0 && bv < 0) break;
      if (bv >= 0) {
        done_v[bv] = true;
        if (demand[bv] > mass_eps) {
          sink = bv;
          break;
        }
        // backward edges j -> i with positive flow (reduced length 0 on
        // the support; clamp float noise)
        for (auto& e : flow[bv]) {
          int i = e.first;
          if (done_u[i] || e.second <= mass_eps) continue;
          double red = std::max(0.0, -(C(i, bv) - pu[i] - pv[bv]));
          if (dv[bv] + red < du[i]) {
            du[i] = dv[bv] + red;
            prev_col_of_row[i] = bv;
          }
        }
      } else {
        done_u[bu] = true;
        for (int j = 0; j < m; ++j) {
          if (done_v[j]) continue;
          double red = std::max(0.0, C(bu, j) - pu[bu] - pv[j]);
          if (du[bu] + red < dv[j]) {
            dv[j] = du[bu] + red;
            prev_row_of_col[j] = bu;
          }
        }
      }
    }
    if (sink < 0) throw NumericalError("transportation: no augmenting path");

    // potential update keeping dual feasibility and making the path tight:
    // u_i += dist - min(du_i, dist), v_j -= dist - min(dv_j, dist)
    double dist = dv[sink];
    for (int i = 0; i < n; ++i) pu[i] += dist - std::min(du[i], dist);
    for (int j = 0; j < m; ++j) pv[j] -= dist - std::min(dv[j], dist);

    // trace path sink <- ... <- src, find bottleneck
    double bottleneck = std::min(supply[src], demand[sink]);
    {
      int j = sink;
      while (true) {
        int i = prev_row_of_col[j];
        if (i == src) break;
        int jprev = prev_col_of_row[i];
        bottleneck = std::min(bottleneck, flow_ref(i, jprev));
        j = jprev;
      }
    }
    // apply augmentation
    {
      int j = sink;
      while (true) {
        int i = prev_row_of_col[j];
        flow_ref(i, j) += bottleneck;
        if (i == src) break;
        int jprev = prev_col_of_row[i];
        flow_ref(i, jprev) -= bottleneck;
        j = jprev;
      }
    }
    supply[src] -= bottleneck;
    demand[sink] -= bottleneck;
    ++res.iterations;
  }
  if (guard <= 0) throw NumericalError("transportation: iteration guard tripped");

  for (int j = 0; j < m; ++j)
    for (auto& e : flow[j])
      if (e.second > 1e-14) {
        res.cost += e.second * C(e.first, j);
        res.plan.emplace_back(e.first, j, e.second);
      }
  std::sort(res.plan.begin(), res.plan.end());
  return res;
}

bool uniform_weights(const EmpiricalLaw& a) {
  double w = 1.0 / a.size();
  for (int i = 0; i < a.size(); ++i)
    if (std::abs(a.weights[i] - w) > 1e-12) return false;
  return true;
}

}  // namespace

CouplingResult w2_exact(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  if (a.dim() != b.dim()) throw UsageError("w2: dimension mismatch");
  if (a.dim() == 1) return w2_exact_1d(a, b);
  double pairs = static_cast<double>(a.size()) * static_cast<double>(b.size());
  if (pairs > 4e6)
    throw CapacityError(
        "w2_exact: instance exceeds 4e6 pairs; use w2_entropic instead");
  if (a.size() == b.size() && uniform_weights(a) && uniform_weights(b)) {
    std::vector<int> rowsol;
    Eigen::MatrixXd C = cost_matrix(a, b);
    double total = lap_dense(C, rowsol);
    CouplingResult res;
    res.method = CouplingResult::Method::kExact;
    res.cost = total / a.size();
    res.plan.reserve(a.size());
    for (int i = 0; i < a.size(); ++i)
      res.plan.emplace_back(i, rowsol[i], 1.0 / a.size());
    return res;
  }
  return transport_ssp(a, b);
}

CouplingResult w2_entropic(const EmpiricalLaw& a, const EmpiricalLaw& b, double reg,
                           int max_iters) {
  if (a.dim() != b.dim()) throw UsageError("w2: dimension mismatch");
  if (!(reg > 0.0)) throw UsageError("w2_entropic: reg must be > 0");
  const int n = a.size(), m = b.size();
  Eigen::MatrixXd C = cost_matrix(a, b);
  Eigen::VectorXd la = a.weights.array().max(1e-300).log();
  Eigen::VectorXd lb = b.weights.array().max(1e-300).log();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);

  const double final_tol = 1e-7;
  std::vector<double> ladder;
  for (double r = reg * 1024.0; r > reg; r /= 4.0) ladder.push_back(r);
  ladder.push_back(reg);

  int total_it = 0;
  double err = kInf;
  Eigen::MatrixXd P(n, m);
  auto compute_plan = [&](double rg) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        P(i, j) = std::exp((-C(i, j) + f[i] + g[j]) / rg);
  };
  for (double rg : ladder) {
    double tol = (rg == reg) ? final_tol : 1e-5;
    while (total_it < max_iters) {
      // f update (rows), then g update (cols), log-domain
      for (int i = 0; i < n; ++i) {
        double mx = -kInf;
        for (int j = 0; j < m; ++j)
          mx = std::max(mx, (-C(i, j) + f[i] + g[j]) / rg);
        double s = 0.0;
        for (int j = 0; j < m; ++j)
          s += std::exp((-C(i, j) + f[i] + g[j]) / rg - mx);
        f[i] += rg * (la[i] - (std::log(s) + mx));
      }
      for (int j = 0; j < m; ++j) {
        double mx = -kInf;
        for (int i = 0; i < n; ++i)
          mx = std::max(mx, (-C(i, j) + f[i] + g[j]) / rg);
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          s += std::exp((-C(i, j) + f[i] + g[j]) / rg - mx);
        g[j] += rg * (lb[j] - (std::log(s) + mx));
      }
      ++total_it;
      compute_plan(rg);
      err = (P.rowwise().sum() - a.weights).cwiseAbs().sum() +
            (P.colwise().sum().transpose() - b.weights).cwiseAbs().sum();
      if (err < tol) break;
    }
  }

  // round to exact marginal feasibility (scale rows/cols down, then patch
  // the deficit with a rank-one correction)
  compute_plan(reg);
  for (int i = 0; i < n; ++i) {
    double r = P.row(i).sum();
    if (r > a.weights[i] && r > 0.0) P.row(i) *= a.weights[i] / r;
  }
  for (int j = 0; j < m; ++j) {
    double c = P.col(j).sum();
    if (c > b.weights[j] && c > 0.0) P.col(j) *= b.weights[j] / c;
  }
  Eigen::VectorXd ea = a.weights - P.rowwise().sum();
  Eigen::VectorXd eb = b.weights - P.colwise().sum().transpose();
  double ta = ea.sum();
  if (ta > 1e-300) P += (ea * eb.transpose()) / ta;

  CouplingResult res;
  res.method = CouplingResult::Method::kEntropic;
  res.iterations = total_it;
  res.tolerance = err;
  res.upper_bound_estimate = true;
  if (err >= final_tol * 10.0 && total_it >= max_iters)
    throw NumericalError("w2_entropic: no convergence, marginal residual " +
                         format_double(err));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (P(i, j) > 1e-15) {
        res.cost += P(i, j) * C(i, j);
        res.plan.emplace_back(i, j, P(i, j));
      }
  return res;
}

double map_l2(const PointMap& map1, const PointMap& map2,
              const Eigen::MatrixXd& mu_samples) {
  double acc = 0.0;
  for (int i = 0; i < mu_samples.rows(); ++i) {
    Eigen::VectorXd x = mu_samples.row(i).transpose();
    acc += (map1(x) - map2(x)).squaredNorm();
  }
  return std::sqrt(acc / mu_samples.rows());
}

double bootstrap_se(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const std::function<double(const Eigen::MatrixXd&,
                                               const Eigen::MatrixXd&)>& stat,
                    int resamples, std::uint64_t seed) {
  std::vector<double> vals(resamples);
  Eigen::MatrixXd ra(a.rows(), a.cols()), rb(b.rows(), b.cols());
  for (int r = 0; r < resamples; ++r) {
    Rng rng(seed, 1000003ULL * (r + 1));
    for (int i = 0; i < a.rows(); ++i)
      ra.row(i) = a.row(rng.uniform_int(static_cast<int>(a.rows())));
    for (int i = 0; i < b.rows(); ++i)
      rb.row(i) = b.row(rng.uniform_int(static_cast<int>(b.rows())));
    vals[r] = stat(ra, rb);
  }
  double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / resamples;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / std::max(1, resamples - 1));
}

}  // namespace mongeflow
