#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace tabsense {

// Dense row-major matrix of doubles. Deliberately minimal: the models here
// are small enough that naive loops beat the complexity of a BLAS dependency,
// and row-major doubles map 1:1 onto the serialized tensor format.
struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t i, size_t j) {
    assert(i < rows && j < cols);
    return data[i * cols + j];
  }
  double operator()(size_t i, size_t j) const {
    assert(i < rows && j < cols);
    return data[i * cols + j];
  }

  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool operator==(const Mat& o) const = default;
};

}  // namespace tabsense
