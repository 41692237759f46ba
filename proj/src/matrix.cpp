#include "untl/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace untl {

Matrix::Matrix(int r, int c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != static_cast<size_t>(r) * c)
    throw std::invalid_argument("Matrix: value count does not match shape " + shape_str());
}

Matrix Matrix::scalar(double v) {
  Matrix m(1, 1);
  m.data[0] = v;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Matrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace untl
