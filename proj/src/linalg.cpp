#include "wongreduce/linalg.hpp"

#include <limits>

namespace wongreduce {

namespace {

int retained(const Vec& s_desc, int deflate, double relative) {
  const int n = static_cast<int>(s_desc.size());
  if (n == 0) return 0;
  const double cut = relative * s_desc(0);
  int r = std::max(0, n - deflate);
  while (r > 0 && s_desc(r - 1) <= cut) --r;
  return r;
}

}  // namespace

PseudoInverse pseudo_inverse(const Mat& a, int deflate, double relative) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  PseudoInverse out;
  out.rank = retained(s, deflate, relative);
  out.inverse = Mat::Zero(a.cols(), a.rows());
  for (int i = 0; i < out.rank; ++i)
    out.inverse += svd.matrixV().col(i) * (1.0 / s(i)) * svd.matrixU().col(i).transpose();
  out.condition = out.rank > 0 ? s(0) / s(out.rank - 1) : std::numeric_limits<double>::infinity();
  return out;
}

PseudoInverse spd_pseudo_inverse(const Mat& a, int deflate, double relative) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a + a.transpose()));
  const int n = static_cast<int>(a.rows());
  Vec desc = eig.eigenvalues().reverse().cwiseMax(0.0);
  PseudoInverse out;
  out.rank = retained(desc, deflate, relative);
  out.inverse = Mat::Zero(n, n);
  for (int i = 0; i < out.rank; ++i) {
    const int j = n - 1 - i;
    out.inverse += eig.eigenvectors().col(j) * (1.0 / eig.eigenvalues()(j)) * eig.eigenvectors().col(j).transpose();
  }
  out.condition = out.rank > 0 ? desc(0) / desc(out.rank - 1) : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace wongreduce
