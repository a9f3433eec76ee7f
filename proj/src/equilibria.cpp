#include "wongreduce/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wongreduce/errors.hpp"

namespace wongreduce {

std::vector<EigenPair> momentum_eigenproblem(const LieAlgebra& alg, const Mat& gamma_inv) {
  // k gamma^-1 e = lambda e  <=>  gamma^-1 e = mu khat^-1 e with lambda = -kk_scale mu.
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(0.5 * (gamma_inv + gamma_inv.transpose()), alg.khat_inv());
  if (es.info() != Eigen::Success) throw SingularFP("momentum eigenproblem failed", 0.0);
  const int n = alg.dim();
  std::vector<EigenPair> out;
  for (int i = 0; i < n; ++i) {
    Vec e = es.eigenvectors().col(i);
    e /= std::sqrt(e.dot(alg.khat_inv() * e));
    Eigen::Index k;
    e.cwiseAbs().maxCoeff(&k);
    if (e(k) < 0) e = -e;
    out.push_back({-alg.kk_scale() * es.eigenvalues()(i), e});
  }
  std::stable_sort(out.begin(), out.end(), [](const EigenPair& a, const EigenPair& b) { return a.lambda < b.lambda; });
  return out;
}

std::vector<EigenPair> momentum_eigenproblem(const MechanicalSystem& sys, const Vec& q) {
  return momentum_eigenproblem(*sys.algebra, orbit_fields(sys, q).gamma_inv);
}

namespace {

Vec vertical_from(const Tensor3& c, const Mat& gamma_inv, const Vec& p) {
  const int n = static_cast<int>(p.size());
  const Vec pi = gamma_inv * p;
  Vec r = Vec::Zero(n);
  for (int m = 0; m < n; ++m)
    for (int s = 0; s < n; ++s)
      for (int v = 0; v < n; ++v) r(s) += c(m, s, v) * pi(v) * p(m);
  return r;
}

}  // namespace

Vec vertical_residual(const MechanicalSystem& sys, const Vec& q, const Vec& p) {
  return vertical_from(sys.connection_structure(), orbit_fields(sys, q).gamma_inv, p);
}

Vec horizontal_residual(const MechanicalSystem& sys, const Vec& q, const Vec& p) {
  const OrbitFields f = orbit_fields(sys, q);
  const FieldDerivatives d = field_derivatives(sys, q, f);
  const auto [Dg, Dgi] = covariant_derivative_gamma_from(sys.connection_structure(), f, d.gamma);
  const Vec pi = f.gamma_inv * p;
  Vec g(sys.n_p);
  for (int e = 0; e < sys.n_p; ++e) g(e) = -pi.dot(Dg.slice(e) * pi);
  return f.N_proj * (0.5 * f.G_inv * (f.N_proj.transpose() * g) + f.G_inv * sys.grad_potential(q));
}

namespace {

struct Cluster {
  std::vector<int> members;
  double lambda;
};

Cluster cluster_of(const std::vector<EigenPair>& pairs, int index, double rel) {
  const double scale = std::max(1.0, std::abs(pairs[index].lambda));
  Cluster c{{}, pairs[index].lambda};
  for (int i = 0; i < static_cast<int>(pairs.size()); ++i)
    if (std::abs(pairs[i].lambda - pairs[index].lambda) <= rel * scale) c.members.push_back(i);
  return c;
}

// Eigenbasis of the tracked cluster at q, rotated to best match `ref` in the
// khat^-1 inner product. Windows are widened over eigenvalues that have become
// degenerate with their edges. Returns the smallest principal overlap.
double tracked_basis(const MechanicalSystem& sys, const Vec& q, int index, int size, const Mat& ref, Mat& basis,
                     double& lambda) {
  const auto pairs = momentum_eigenproblem(sys, q);
  const Mat& B = sys.algebra->khat_inv();
  const int n = static_cast<int>(pairs.size());
  auto close = [&](int i, int j) {
    return std::abs(pairs[i].lambda - pairs[j].lambda) <= 1e-6 * std::max(1.0, std::abs(pairs[i].lambda));
  };
  const int lo = std::clamp(index - size + 1, 0, n - size);
  const int hi = std::clamp(index, 0, n - size);
  double best = -1.0;
  for (int start = lo; start <= hi; ++start) {
    int a = start, b = start + size - 1;
    while (a > 0 && close(a - 1, a)) --a;
    while (b < n - 1 && close(b + 1, b)) ++b;
    Mat U(n, b - a + 1);
    for (int j = a; j <= b; ++j) U.col(j - a) = pairs[j].e;
    const Mat M = U.transpose() * B * ref;
    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double overlap = svd.singularValues().minCoeff();
    if (overlap > best) {
      best = overlap;
      basis = U * (svd.matrixU() * svd.matrixV().transpose());
      lambda = pairs[start].lambda;
    }
  }
  return best;
}

}  // namespace

RelativeEquilibrium attempt_equilibrium(const MechanicalSystem& sys, const Vec& q_guess, int eigen_index,
                                        double scale_guess, const EquilibriumOptions& opt) {
  const int ng = sys.n_g(), np = sys.n_p;
  if (eigen_index < 0 || eigen_index >= ng) throw Error("eigen_index out of range");
  Vec q = sys.chi(q_guess).norm() < sys.tol.sigma ? q_guess : project_to_sigma(sys, q_guess).q;

  const auto pairs0 = momentum_eigenproblem(sys, q);
  const Cluster cl = cluster_of(pairs0, eigen_index, opt.degeneracy);
  const int m = static_cast<int>(cl.members.size());
  const int first = cl.members.front();
  Mat ref(ng, m);
  for (int j = 0; j < m; ++j) ref.col(j) = pairs0[first + j].e;

  // Initial coordinates: the cluster direction with the smallest horizontal residual.
  Vec y = Vec::Zero(m);
  {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      const double r = horizontal_residual(sys, q, scale_guess * ref.col(j)).norm();
      if (r < best) {
        best = r;
        y.setZero();
        y(j) = scale_guess;
      }
    }
  }

  const int nx = np + m;
  auto residual = [&](const Vec& x, const Mat& reference, Mat* basis_out, double* lambda_out) -> Vec {
    const Vec qx = x.head(np);
    Mat basis;
    double lambda;
    const double ov = tracked_basis(sys, qx, first + m - 1, m, reference, basis, lambda);
    // The direction of p only matters while p is nonzero.
    if (ov < opt.min_overlap && x.tail(m).norm() > 0.0) throw EigenCrossing("tracked momentum eigenvector crossed another branch", ov);
    if (basis_out) *basis_out = basis;
    if (lambda_out) *lambda_out = lambda;
    Vec r(np + ng);
    r.head(np) = horizontal_residual(sys, qx, basis * x.tail(m));
    r.tail(ng) = sys.chi(qx);
    return r;
  };

  Vec x(nx);
  x << q, y;
  Mat basis;
  double lambda = cl.lambda;
  Vec r = residual(x, ref, &basis, &lambda);
  ref = basis;
  double rn = r.norm();
  RelativeEquilibrium out;
  out.residual_history.push_back(rn);
  double mu = 1e-3;
  int it = 0;
  for (; it < opt.max_iterations && rn >= opt.tolerance; ++it) {
    Mat Jm(np + ng, nx);
    for (int i = 0; i < nx; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      Jm.col(i) = (residual(xp, ref, nullptr, nullptr) - residual(xm, ref, nullptr, nullptr)) / (2 * h);
    }
    const Mat JtJ = Jm.transpose() * Jm;
    const Vec g = Jm.transpose() * r;
    bool accepted = false;
    double crossing = -1.0;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Mat Amat = JtJ;
      Amat.diagonal().array() += mu * (1.0 + JtJ.diagonal().array());
      const Vec dx = -Amat.ldlt().solve(g);
      Vec xn = x + dx;
      try {
        Vec qn = xn.head(np);
        if (sys.chi(qn).norm() >= sys.tol.sigma) qn = project_to_sigma(sys, qn).q;
        xn.head(np) = qn;
        Mat bn;
        double ln;
        const Vec rn_vec = residual(xn, ref, &bn, &ln);
        if (rn_vec.norm() < rn) {
          x = xn;
          r = rn_vec;
          rn = r.norm();
          ref = bn;
          lambda = ln;
          mu = std::max(mu / 3.0, 1e-12);
          accepted = true;
        } else {
          mu *= 4.0;
        }
      } catch (const EigenCrossing& e) {
        crossing = e.overlap();
        mu *= 4.0;
      } catch (const Error&) {
        mu *= 4.0;
      }
    }
    if (!accepted) {
      if (crossing >= 0.0) throw EigenCrossing("tracked momentum eigenvector crossed another branch", crossing);
      break;
    }
    out.residual_history.push_back(rn);
  }
  out.iterations = it;
  out.q = PointOnSigma{x.head(np)};
  out.p = ref * x.tail(m);
  out.lambda = lambda;
  out.scale = m == 1 ? x(np) : x.tail(m).norm();
  out.eigen_index = eigen_index;
  out.cluster_size = m;
  out.residual_h = horizontal_residual(sys, out.q.q, out.p).norm();
  out.residual_v = vertical_residual(sys, out.q.q, out.p).norm();
  out.converged = rn < opt.tolerance;
  return out;
}

RelativeEquilibrium solve_equilibrium(const MechanicalSystem& sys, const Vec& q_guess, int eigen_index,
                                      double scale_guess, const EquilibriumOptions& opt) {
  RelativeEquilibrium r = attempt_equilibrium(sys, q_guess, eigen_index, scale_guess, opt);
  if (!r.converged)
    throw NoConvergence("relative-equilibrium solve did not converge", r.iterations, r.residual_history.back());
  return r;
}

}  // namespace wongreduce
