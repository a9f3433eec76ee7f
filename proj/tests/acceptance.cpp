// Acceptance criteria: one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "wongreduce/cli.hpp"
#include "wongreduce/dynamics.hpp"
#include "wongreduce/equilibria.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/geometry.hpp"
#include "wongreduce/lattice.hpp"

using namespace wongreduce;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// ------------------------------------------------------------------ 1

double identity_residual(const MechanicalSystem& sys, const Vec& q) {
  const OrbitFields f = orbit_fields(sys, q);
  const Mat& N = f.N_proj;
  const Mat& P = f.P_perp;
  const Mat& Pi = f.Pi_proj;
  double r = 0.0;
  r = std::max(r, max_abs(N * N - N));
  r = std::max(r, max_abs(N * f.K * f.Phi_inv * f.Phi));
  r = std::max(r, max_abs(N * P - P));
  r = std::max(r, max_abs(P * N - N));
  r = std::max(r, max_abs(Pi * N - Pi));
  r = std::max(r, max_abs(N * Pi - N));
  r = std::max(r, max_abs(f.A_conn * Pi));
  r = std::max(r, pseudoinverse_blocks(f).orthogonality_residual);
  return r;
}

Outcome criterion1() {
  double worst = 0.0;
  int points = 0;
  for (const MechanicalSystem& sys : {builtin_system("two_vector_so3"), builtin_system("kaluza_klein")}) {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 100; ++i, ++points) worst = std::max(worst, identity_residual(sys, sys.sampler(rng)));
  }
  return {worst < 1e-9, std::to_string(points) + " points, max residual " + sci(worst)};
}

// ------------------------------------------------------------------ 2

Outcome criterion2() {
  const MechanicalSystem sys = builtin_two_vector_so3();
  std::mt19937_64 rng(202);
  std::normal_distribution<double> n;
  double dq = 0.0, dp = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Vec Q(6), Qd(6);
    for (int i = 0; i < 6; ++i) Q(i) = n(rng), Qd(i) = 0.5 * n(rng);
    if (Q(2) < 0) Q.head<3>() *= -1.0;
    IntegrateOptions opt;
    opt.dt = 1e-4;
    opt.sample_every = 100;
    const OracleResult o = full_space_oracle(sys, Q, Qd, opt);
    const Trajectory tr = integrate(sys, o.gauge_fixed.samples.front(), opt);
    for (size_t i = 0; i < tr.samples.size(); ++i) {
      dq = std::max(dq, (tr.samples[i].q.q - o.gauge_fixed.samples[i].q.q).cwiseAbs().maxCoeff());
      const Vec e = tr.samples[i].p - o.gauge_fixed.samples[i].p;
      dp = std::max(dp, std::sqrt(e.dot(sys.algebra->khat_inv() * e)));
    }
  }
  return {dq < 1e-5 && dp < 1e-6, "5 trajectories, max |dq| " + sci(dq) + ", max |dp| " + sci(dp)};
}

// ------------------------------------------------------------------ 3

Outcome criterion3() {
  const MechanicalSystem sys = builtin_two_vector_so3();
  oracle::TwoVectorHarmonic o{Vec(6), Vec(6)};
  o.Q0 << 0.3, -0.2, 1.1, 0.9, 0.4, -0.3;
  o.Qd0 << 0.2, 0.5, -0.1, -0.3, 0.2, 0.4;
  const ReducedState s0 = reduce_state(sys, o.Q0, o.Qd0);
  IntegrateOptions opt;
  opt.dt = 1e-3;
  opt.t_end = 10.0;
  opt.sample_every = 10;
  const Trajectory tr = integrate(sys, s0, opt);
  const double e0 = tr.invariants_log.front().energy;
  double drift = 0.0, chi = 0.0;
  for (const InvariantSample& v : tr.invariants_log) {
    drift = std::max(drift, std::abs(v.energy - e0) / std::abs(e0));
    chi = std::max(chi, v.chi);
  }
  auto error_at = [&](double dt) {
    IntegrateOptions c;
    c.dt = dt;
    c.t_end = 1.0;
    c.sample_every = 1000000;
    const Trajectory t = integrate(sys, s0, c);
    return (t.samples.back().q.q - o.q(1.0)).norm();
  };
  const double ratio = error_at(0.04) / error_at(0.02);
  const bool ok = drift < 1e-7 && chi < 1e-9 && ratio >= 12.0 && ratio <= 20.0;
  return {ok, "10^4 steps: energy drift " + sci(drift) + ", max |chi| " + sci(chi) + ", dt-halving ratio " +
                  std::to_string(ratio)};
}

// ------------------------------------------------------------------ 4

Outcome criterion4() {
  double worst_v = 0.0;
  for (const MechanicalSystem& sys : {builtin_system("two_vector_so3"), builtin_system("kaluza_klein")}) {
    std::mt19937_64 rng(404);
    for (int i = 0; i < 50; ++i) {
      const Vec q = sys.sampler(rng);
      for (const EigenPair& pr : momentum_eigenproblem(sys, q))
        worst_v = std::max(worst_v, vertical_residual(sys, q, 1.7 * pr.e).cwiseAbs().maxCoeff());
    }
  }
  const MechanicalSystem sys = builtin_two_vector_so3();
  Vec guess(6);
  guess << 0, 0, 1.0, 0.8, 0, 0.3;
  const RelativeEquilibrium r = solve_equilibrium(sys, guess, 2, 1.0);
  IntegrateOptions opt;
  opt.dt = 1e-3;
  const Trajectory tr = integrate(sys, {r.q, Vec::Zero(6), r.p}, opt);
  double qd = 0.0, dp = 0.0;
  for (const ReducedState& s : tr.samples) {
    qd = std::max(qd, s.q_dot.cwiseAbs().maxCoeff());
    dp = std::max(dp, (s.p - r.p).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_v < 1e-10 && r.converged && qd < 1e-6 && dp < 1e-8;
  return {ok, "vertical residual " + sci(worst_v) + ", equilibrium max |q_dot| " + sci(qd) + ", |dp| " + sci(dp)};
}

// ------------------------------------------------------------------ 5

Outcome criterion5() {
  double conn_err = 0.0, curv_err = 0.0;
  {
    const ConnectionField conn = default_kaluza_klein_connection(2);
    const MechanicalSystem sys = builtin_kaluza_klein(conn);
    std::mt19937_64 rng(505);
    for (int i = 0; i < 50; ++i) {
      const Vec q = sys.sampler(rng);
      const OrbitFields f = orbit_fields(sys, q);
      conn_err = std::max(conn_err, max_abs(f.A_conn.leftCols(2) - conn.value(q.head(2))));
    }
  }
  Mat a0(3, 2), s0(3, 2), s1(3, 2);
  a0 << 0.3, -0.1, 0.2, 0.5, -0.4, 0.25;
  s0 << 0.1, 0.2, -0.3, 0.0, 0.05, 0.4;
  s1 << -0.2, 0.1, 0.15, -0.25, 0.3, 0.0;
  for (const ConnectionField& conn : {ConnectionField::constant(a0), ConnectionField::linear(a0, {s0, s1})}) {
    for (DerivativeMode mode : {DerivativeMode::Analytic, DerivativeMode::FiniteDifference}) {
      MechanicalSystem sys = builtin_kaluza_klein(conn);
      sys.derivative_mode = mode;
      std::mt19937_64 rng(506);
      for (int i = 0; i < 10; ++i) {
        const Vec q = sys.sampler(rng);
        const Tensor3 F = curvature(sys, q), ref = oracle::kk_curvature(conn, q.head(2), 5);
        for (size_t k = 0; k < F.data().size(); ++k)
          curv_err = std::max(curv_err, std::abs(F.data()[k] - ref.data()[k]));
      }
    }
  }
  return {conn_err < 1e-8 && curv_err < 1e-6, "connection error " + sci(conn_err) + ", curvature error " + sci(curv_err)};
}

// ------------------------------------------------------------------ 6

Outcome criterion6() {
  const GaugeLattice lat = make_lattice(2, 1.0, builtin_algebra("su2"));
  const MechanicalSystem sys = lattice_system(lat);
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n;
  double cross = 0.0, rot = 0.0, grad = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const Vec a = random_coulomb_field(lat, 0.4, rng);
    const OrbitFields f = orbit_fields(sys, a);
    const LatticeOperators ops = lattice_operators(lat, a);
    cross = std::max(cross, max_abs(f.gamma - fp_operator(lat, a)));
    cross = std::max(cross, max_abs(f.A_conn - coulomb_connection(lat, a)));
    Vec ad(lat.flat_dim()), p(lat.gauge_dim());
    for (int i = 0; i < ad.size(); ++i) ad(i) = 0.5 * n(rng);
    for (int i = 0; i < p.size(); ++i) p(i) = 0.5 * n(rng);
    ad = ops.apply_N(ad);
    const WongRates g = wong_rhs_unchecked(sys, a, ad, p), y = ym_rhs(ops, ad, p);
    cross = std::max({cross, max_abs(g.q_ddot - y.q_ddot), max_abs(g.p_dot - y.p_dot)});

    Eigen::SelfAdjointEigenSolver<Mat> e1(fp_operator(lat, a));
    Eigen::SelfAdjointEigenSolver<Mat> e2(fp_operator(lat, rotate_field_globally(lat, a, Eigen::Vector3d(n(rng), n(rng), n(rng)))));
    rot = std::max(rot, max_abs(e1.eigenvalues() - e2.eigenvalues()));

    const Vec gv = potential_and_gradient(lat, a).second;
    const double h = 1e-4;
    Vec fd(lat.flat_dim());
    for (int e = 0; e < lat.flat_dim(); ++e) {
      auto V = [&](double s) {
        Vec x = a;
        x(e) += s;
        return potential_and_gradient(lat, x).first;
      };
      fd(e) = (-V(2 * h) + 8 * V(h) - 8 * V(-h) + V(-2 * h)) / (12 * h);
    }
    grad = std::max(grad, (fd - gv).norm() / gv.norm());
  }
  return {cross < 1e-8 && rot < 1e-10 && grad < 1e-6,
          "generic vs lattice " + sci(cross) + ", rotated spectrum " + sci(rot) + ", gradient rel. error " + sci(grad)};
}

// ------------------------------------------------------------------ 7

Outcome criterion7() {
  const GaugeLattice lat = make_lattice(2);
  const LatticeEquilibrium vac = ym_solve_equilibrium(lat, Vec::Zero(lat.flat_dim()), 0, 0.0);
  const YmResiduals vres = ym_equilibrium_residuals(lat, vac.a, vac.p);
  const double vacuum = std::max(max_abs(vres.horizontal), max_abs(vres.vertical));
  std::mt19937_64 rng(707);
  double vert = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Vec a = random_coulomb_field(lat, 0.1, rng);
    for (const EigenPair& pr : ym_momentum_eigenproblem(lat, a))
      vert = std::max(vert, max_abs(ym_equilibrium_residuals(lat, a, pr.e).vertical));
  }
  std::string branch;
  bool branch_ok = false;
  EquilibriumOptions opt;
  opt.max_iterations = 30;
  const Vec a = random_coulomb_field(lat, 0.2, rng);
  try {
    const LatticeEquilibrium r = ym_solve_equilibrium(lat, a, 3, 0.3, opt);
    branch_ok = true;
    for (size_t i = 1; i < r.residual_history.size(); ++i) branch_ok &= r.residual_history[i] <= r.residual_history[i - 1];
    branch = "converged monotonically in " + std::to_string(r.iterations) + " iterations";
  } catch (const NoConvergence& e) {
    branch_ok = true;
    branch = "flagged NoConvergence";
  } catch (const EigenCrossing& e) {
    branch_ok = true;
    branch = "flagged EigenCrossing";
  }
  const bool ok = vac.converged && vacuum < 1e-10 && vert < 1e-9 && branch_ok;
  return {ok, "vacuum residual " + sci(vacuum) + ", eigenvector vertical residual " + sci(vert) + ", nontrivial branch " + branch};
}

// ------------------------------------------------------------------ 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion8() {
  const fs::path dir = fs::temp_directory_path() / "wong_reduce_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ostringstream log;
  auto run = [&](const std::string& sub, const fs::path& cfg, const fs::path& out) {
    return wongreduce::cli::run({sub, cfg.string(), out.string(), std::nullopt}, log);
  };
  bool ok = true;
  int compared = 0;
  const std::vector<std::pair<std::string, json>> cases = {
      {"integrate", {{"system", "two_vector_so3"}, {"t_end", 0.5}, {"seed", 11}}},
      {"integrate", {{"system", "kaluza_klein"}, {"t_end", 0.2}, {"seed", 12}}},
      {"lattice-integrate", {{"L", 2}, {"t_end", 0.05}, {"seed", 13}}}};
  for (size_t k = 0; k < cases.size(); ++k) {
    const fs::path cfg = dir / ("config" + std::to_string(k) + ".json");
    std::ofstream(cfg) << cases[k].second.dump();
    const fs::path a = dir / ("a" + std::to_string(k)), b = dir / ("b" + std::to_string(k));
    ok &= run(cases[k].first, cfg, a) == 0;
    ok &= run(cases[k].first, a / "manifest.json", b) == 0;
    for (const auto& entry : fs::directory_iterator(a)) {
      if (entry.path().extension() != ".csv") continue;
      ok &= slurp(entry.path()) == slurp(b / entry.path().filename());
      ++compared;
    }
  }
  // Lattice eigen data after sign fixing.
  const fs::path cfg = dir / "lattice_eq.json";
  std::ofstream(cfg) << json{{"L", 2}, {"field", {{"init", "random"}, {"amplitude", 0.1}}}, {"scale_guess", 0.0}}.dump();
  run("lattice-equilibria", cfg, dir / "ea");
  run("lattice-equilibria", dir / "ea" / "manifest.json", dir / "eb");
  const json ea = json::parse(slurp(dir / "ea" / "lattice_equilibria.json"));
  const json eb = json::parse(slurp(dir / "eb" / "lattice_equilibria.json"));
  double diff = 0.0;
  for (const char* key : {"green_eigenvalues", "p", "a"})
    for (size_t i = 0; i < ea[key].size(); ++i)
      diff = std::max(diff, std::abs(ea[key][i].get<double>() - eb[key][i].get<double>()));
  ok &= diff < 1e-12 && ea["green_eigenvalues"].size() > 0;
  return {ok, std::to_string(compared) + " CSV files byte-identical on manifest rerun, lattice eigen data difference " +
                  sci(diff)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"projector and identity suite", criterion1},
      {"reduced vs full-space oracle", criterion2},
      {"conservation and 4th-order convergence", criterion3},
      {"relative-equilibrium theorem", criterion4},
      {"Kaluza-Klein oracle", criterion5},
      {"lattice master cross-check", criterion6},
      {"lattice equilibrium", criterion7},
      {"determinism", criterion8}};
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %zu %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
