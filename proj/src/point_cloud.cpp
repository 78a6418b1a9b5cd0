#include "mongeflow/point_cloud.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mongeflow {

PointCloud::PointCloud(Eigen::MatrixXd pts, std::vector<int> lbls)
    : points(std::move(pts)), labels(std::move(lbls)) {
  if (points.rows() == 0) throw UsageError("point cloud must be nonempty");
  if (!points.allFinite()) throw UsageError("point cloud has non-finite entries");
  if (!labels.empty() && static_cast<int>(labels.size()) != points.rows())
    throw UsageError("label count does not match point count");
}

double PointCloud::diameter() const {
  double d2 = 0.0;
  for (int i = 0; i < size(); ++i)
    for (int j = i + 1; j < size(); ++j)
      d2 = std::max(d2, (points.row(i) - points.row(j)).squaredNorm());
  return std::sqrt(d2);
}

std::vector<int> PointCloud::label_set() const {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

PointCloud PointCloud::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cloud file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw IoError(path + ":1: missing header row");
  auto header = split_csv_line(line);
  bool has_label = !header.empty() && header.back() == "label";
  int dim = static_cast<int>(header.size()) - (has_label ? 1 : 0);
  if (dim < 1) throw IoError(path + ":1: header has no coordinate columns");
  for (int k = 0; k < dim; ++k) {
    if (header[k] != "x" + std::to_string(k))
      throw IoError(path + ":1: expected column 'x" + std::to_string(k) +
                    "', got '" + header[k] + "'");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != dim + (has_label ? 1 : 0))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(dim + (has_label ? 1 : 0)) + " columns, got " +
                    std::to_string(cells.size()));
    std::vector<double> row(dim);
    for (int k = 0; k < dim; ++k) {
      try {
        row[k] = parse_double(cells[k]);
      } catch (const IoError&) {
        throw IoError(path + ":" + std::to_string(lineno) + ": bad number '" +
                      cells[k] + "'");
      }
    }
    if (has_label) {
      try {
        std::size_t pos = 0;
        labels.push_back(std::stoi(cells[dim], &pos));
        if (pos != cells[dim].size()) throw std::invalid_argument("");
      } catch (...) {
        throw IoError(path + ":" + std::to_string(lineno) + ": bad label '" +
                      cells[dim] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");
  Eigen::MatrixXd pts(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < dim; ++k) pts(i, k) = rows[i][k];
  return PointCloud(std::move(pts), std::move(labels));
}

void PointCloud::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write cloud file: " + path);
  for (int k = 0; k < dim(); ++k) out << (k ? "," : "") << "x" << k;
  if (labeled()) out << ",label";
  out << "\n";
  for (int i = 0; i < size(); ++i) {
    for (int k = 0; k < dim(); ++k) out << (k ? "," : "") << format_double(points(i, k));
    if (labeled()) out << "," << labels[i];
    out << "\n";
  }
}

}  // namespace mongeflow
