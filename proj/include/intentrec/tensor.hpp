#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace intentrec {

// Dense row-major parameter tensor with a gradient buffer of identical shape.
struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::string n, int r, int c)
      : name(std::move(n)),
        rows(r),
        cols(c),
        value(static_cast<std::size_t>(r) * c, 0.0),
        grad(static_cast<std::size_t>(r) * c, 0.0) {}

  int size() const { return rows * cols; }
  double& at(int r, int c) { return value[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return value[static_cast<std::size_t>(r) * cols + c]; }
  const double* row_ptr(int r) const { return value.data() + static_cast<std::size_t>(r) * cols; }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

}  // namespace intentrec
