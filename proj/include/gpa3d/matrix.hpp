#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace gpa3d {

// Dense row-major matrix of doubles. Just enough for the affine layers here.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  void add_scaled(const Matrix& other, double scale) {
    assert(rows == other.rows && cols == other.cols);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * other.a[i];
  }
};

inline void add_scaled(std::vector<double>& dst, const std::vector<double>& src,
                       double scale) {
  assert(dst.size() == src.size());
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace gpa3d
