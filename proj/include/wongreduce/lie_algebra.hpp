#pragma once

#include <string>
#include <vector>

#include "wongreduce/tensor.hpp"

namespace wongreduce {

/// A compact semisimple Lie algebra given by its structure constants
/// c(g, a, b) = c^g_{ab}, i.e. [e_a, e_b] = c^g_{ab} e_g.
///
/// The Cartan-Killing form k_{ab} = c^t_{ma} c^m_{tb} is negative definite for
/// the algebras accepted here. Downstream positive-definite constructions use
/// the normalized form khat = -k / kk_scale, where kk_scale is chosen so that
/// khat is the identity for so(3) in the Levi-Civita basis.
class LieAlgebra {
 public:
  int dim() const { return dim_; }
  const Tensor3& structure() const { return c_; }
  double c(int g, int a, int b) const { return c_(g, a, b); }
  /// Raw Cartan-Killing form k_{ab}.
  const Mat& killing() const { return k_; }
  /// Inverse k^{ab}.
  const Mat& killing_inv() const { return k_inv_; }
  /// Normalized positive-definite form -k / kk_scale.
  const Mat& khat() const { return khat_; }
  const Mat& khat_inv() const { return khat_inv_; }
  double kk_scale() const { return kk_scale_; }
  const std::string& name() const { return name_; }

  struct Entry {
    int g, a, b;
    double value;
  };
  /// Nonzero structure constants, for sparse contractions.
  const std::vector<Entry>& nonzeros() const { return nonzeros_; }

  /// ad(x)^g_b = c^g_{ab} x^a.
  Mat ad(const Vec& x) const;
  /// [x, y]^g = c^g_{ab} x^a y^b.
  Vec bracket(const Vec& x, const Vec& y) const;

  friend LieAlgebra make_algebra(const Tensor3& c, double kk_scale, std::string name);
  friend LieAlgebra direct_sum(const LieAlgebra& a, int copies);

 private:
  int dim_ = 0;
  Tensor3 c_;
  Mat k_, k_inv_, khat_, khat_inv_;
  double kk_scale_ = 1.0;
  std::string name_;
  std::vector<Entry> nonzeros_;
};

/// Absolute tolerance used by every algebraic identity check on unit-normalized
/// structure constants.
inline constexpr double kAlgebraTolerance = 1e-12;

/// Builds an algebra from its structure constants.
/// Throws NotAntisymmetric, JacobiViolation or IndefiniteKilling.
/// kk_scale <= 0 selects the default normalization: the scale that makes the
/// mean eigenvalue of khat equal to one (exactly 2 for so(3)).
LieAlgebra make_algebra(const Tensor3& c, double kk_scale = 0.0, std::string name = "custom");

/// copies-fold direct sum of a validated algebra; block index s * dim + a.
/// Skips re-validation, which is implied by the summand.
LieAlgebra direct_sum(const LieAlgebra& a, int copies);

/// so(3) with c^g_{ab} = epsilon_{abg}; k = -2 I, khat = I.
LieAlgebra so3();

/// Looks up a built-in algebra by name ("so3", "su2").
LieAlgebra builtin_algebra(const std::string& name);

/// Max over (s, m, e) of |c^m_{sn} k^{ne} + c^e_{sn} k^{nm}|.
double ad_antisymmetry_residual(const Tensor3& c, const Mat& k_inv);

/// True iff the identity c^m_{sn} k^{ne} = -c^e_{sn} k^{nm} holds to 1e-12.
bool ad_antisymmetry_check(const LieAlgebra& algebra);

/// Max violation of the Jacobi identity.
double jacobi_residual(const Tensor3& c);

}  // namespace wongreduce
