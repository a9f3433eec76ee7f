#pragma once

#include "wongreduce/tensor.hpp"

namespace wongreduce {

struct PseudoInverse {
  Mat inverse;
  double condition = 0.0;  ///< ratio of largest to smallest retained singular value
  int rank = 0;
};

/// SVD pseudo-inverse. The `deflate` smallest singular values are always dropped,
/// as is anything below relative * sigma_max.
PseudoInverse pseudo_inverse(const Mat& a, int deflate = 0, double relative = 1e-10);

/// Symmetric-eigen pseudo-inverse of a symmetric positive semidefinite matrix.
PseudoInverse spd_pseudo_inverse(const Mat& a, int deflate = 0, double relative = 1e-10);

}  // namespace wongreduce
