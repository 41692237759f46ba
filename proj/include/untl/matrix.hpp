#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace untl {

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> values);

  static Matrix scalar(double v);

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

  size_t numel() const { return data.size(); }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  std::string shape_str() const;  // e.g. "3x4"
};

}  // namespace untl
