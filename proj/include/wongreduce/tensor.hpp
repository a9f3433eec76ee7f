#pragma once

#include <cassert>
#include <vector>

#include <Eigen/Dense>

namespace wongreduce {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Dense rank-3 array, row-major in (i, j, k).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int n0, int n1, int n2) : n_{n0, n1, n2}, data_(static_cast<size_t>(n0) * n1 * n2, 0.0) {}

  int dim(int axis) const { return n_[axis]; }

  double& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  double operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Slice with the first index fixed, as an n1 x n2 matrix.
  Mat slice(int i) const {
    Mat out(n_[1], n_[2]);
    for (int j = 0; j < n_[1]; ++j)
      for (int k = 0; k < n_[2]; ++k) out(j, k) = (*this)(i, j, k);
    return out;
  }

 private:
  size_t index(int i, int j, int k) const {
    assert(i >= 0 && i < n_[0] && j >= 0 && j < n_[1] && k >= 0 && k < n_[2]);
    return (static_cast<size_t>(i) * n_[1] + j) * n_[2] + k;
  }

  int n_[3] = {0, 0, 0};
  std::vector<double> data_;
};

}  // namespace wongreduce
