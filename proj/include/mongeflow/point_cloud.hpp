#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mongeflow/common.hpp"

namespace mongeflow {

// Discrete initial distribution: points with implicit uniform weights,
// optionally carrying integer labels.
struct PointCloud {
  Eigen::MatrixXd points;   // one row per point
  std::vector<int> labels;  // empty, or one entry per point

  PointCloud() = default;
  PointCloud(Eigen::MatrixXd pts, std::vector<int> lbls = {});

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  bool labeled() const { return !labels.empty(); }
  double diameter() const;
  std::vector<int> label_set() const;  // sorted distinct labels

  // CSV with header "x0,...,x{d-1}[,label]", one point per row,
  // 17 significant digits so a round-trip is bit-exact.
  static PointCloud from_csv(const std::string& path);
  void to_csv(const std::string& path) const;
};

}  // namespace mongeflow
