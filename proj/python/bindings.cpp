#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <sstream>

#include "wongreduce/cli.hpp"
#include "wongreduce/dynamics.hpp"
#include "wongreduce/equilibria.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/geometry.hpp"
#include "wongreduce/lattice.hpp"

namespace py = pybind11;
using namespace wongreduce;

namespace {

py::array_t<double> tensor_array(const Tensor3& t) {
  py::array_t<double> a({t.dim(0), t.dim(1), t.dim(2)});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::dict geometry_dict(const MechanicalSystem& sys, const Vec& q) {
  const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, q));
  py::dict d;
  d["q"] = g.q.q;
  d["G"] = g.G;
  d["K"] = g.K;
  d["J"] = g.J;
  d["Phi"] = g.Phi;
  d["Phi_inv"] = g.Phi_inv;
  d["gamma"] = g.gamma;
  d["gamma_inv"] = g.gamma_inv;
  d["A_conn"] = g.A_conn;
  d["Pi"] = g.Pi_proj;
  d["N"] = g.N_proj;
  d["chiT"] = g.chiT;
  d["P_perp"] = g.P_perp;
  d["G_H"] = g.G_H;
  d["curvature"] = tensor_array(g.F_curv);
  d["D_gamma"] = tensor_array(g.D_gamma);
  d["christoffel_H"] = tensor_array(g.christoffel_H);
  py::dict inv;
  for (const auto& [name, value] : geometry_invariants(sys, g).entries) inv[py::str(name)] = value;
  d["invariants"] = inv;
  return d;
}

py::dict trajectory_dict(const Trajectory& tr) {
  const size_t n = tr.samples.size();
  const int np = static_cast<int>(tr.samples.front().q.q.size()), ng = static_cast<int>(tr.samples.front().p.size());
  Vec t(n), e(n), chi(n);
  Mat q(n, np), qd(n, np), p(n, ng);
  for (size_t i = 0; i < n; ++i) {
    t(i) = tr.samples[i].t;
    q.row(i) = tr.samples[i].q.q.transpose();
    qd.row(i) = tr.samples[i].q_dot.transpose();
    p.row(i) = tr.samples[i].p.transpose();
    e(i) = tr.invariants_log[i].energy;
    chi(i) = tr.invariants_log[i].chi;
  }
  py::dict d;
  d["t"] = t;
  d["q"] = q;
  d["q_dot"] = qd;
  d["p"] = p;
  d["energy"] = e;
  d["chi"] = chi;
  return d;
}

std::pair<Vec, Mat> eigen_arrays(const std::vector<EigenPair>& pairs) {
  if (pairs.empty()) return {Vec(), Mat()};
  Vec l(pairs.size());
  Mat v(pairs.front().e.size(), pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    l(i) = pairs[i].lambda;
    v.col(i) = pairs[i].e;
  }
  return {l, v};
}

}  // namespace

PYBIND11_MODULE(_wongreduce, m) {
  m.doc() = "Symmetry reduction of mechanical systems and Coulomb-gauge lattice fields";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<NoConvergence>(m, "NoConvergence", base.ptr());
  py::register_exception<EigenCrossing>(m, "EigenCrossing", base.ptr());
  py::register_exception<NotOnSigma>(m, "NotOnSigma", base.ptr());
  py::register_exception<SingularFP>(m, "SingularFP", base.ptr());
  py::register_exception<IllConditioned>(m, "IllConditioned", base.ptr());
  py::register_exception<ConfigInvalid>(m, "ConfigInvalid", base.ptr());

  py::class_<LieAlgebra>(m, "LieAlgebra")
      .def_property_readonly("dim", &LieAlgebra::dim)
      .def_property_readonly("name", &LieAlgebra::name)
      .def_property_readonly("killing", &LieAlgebra::killing)
      .def_property_readonly("khat", &LieAlgebra::khat)
      .def_property_readonly("kk_scale", &LieAlgebra::kk_scale)
      .def_property_readonly("structure", [](const LieAlgebra& a) { return tensor_array(a.structure()); })
      .def("bracket", &LieAlgebra::bracket);
  m.def("builtin_algebra", &builtin_algebra, py::arg("name"));

  py::class_<MechanicalSystem>(m, "MechanicalSystem")
      .def_readonly("name", &MechanicalSystem::name)
      .def_readonly("n_p", &MechanicalSystem::n_p)
      .def_property_readonly("n_g", &MechanicalSystem::n_g)
      .def("sample", [](const MechanicalSystem& s, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return s.sampler(rng);
      }, py::arg("seed") = 0)
      .def("chi", &MechanicalSystem::chi)
      .def("__repr__", [](const MechanicalSystem& s) { return "<MechanicalSystem " + s.name + ">"; });
  m.def("builtin_system", &builtin_system, py::arg("name"));

  m.def("geometry", &geometry_dict, py::arg("system"), py::arg("q"));
  m.def("wong_rhs", [](const MechanicalSystem& s, const Vec& q, const Vec& qd, const Vec& p) {
    const WongRates r = wong_rhs(s, {on_sigma(s, q), qd, p, 0.0});
    return std::make_pair(r.q_ddot, r.p_dot);
  }, py::arg("system"), py::arg("q"), py::arg("q_dot"), py::arg("p"));
  m.def("energy", [](const MechanicalSystem& s, const Vec& q, const Vec& qd, const Vec& p) {
    return energy(s, {on_sigma(s, q), qd, p, 0.0});
  }, py::arg("system"), py::arg("q"), py::arg("q_dot"), py::arg("p"));
  m.def("integrate", [](const MechanicalSystem& s, const Vec& q, const Vec& qd, const Vec& p, double t_end, double dt,
                        int sample_every) {
    IntegrateOptions opt;
    opt.t_end = t_end;
    opt.dt = dt;
    opt.sample_every = sample_every;
    return trajectory_dict(integrate(s, {on_sigma(s, q), qd, p, 0.0}, opt));
  }, py::arg("system"), py::arg("q"), py::arg("q_dot"), py::arg("p"), py::arg("t_end") = 1.0, py::arg("dt") = 1e-3,
        py::arg("sample_every") = 1);
  m.def("momentum_eigenproblem", [](const MechanicalSystem& s, const Vec& q) {
    return eigen_arrays(momentum_eigenproblem(s, q));
  }, py::arg("system"), py::arg("q"));
  m.def("vertical_residual", &vertical_residual, py::arg("system"), py::arg("q"), py::arg("p"));
  m.def("solve_equilibrium", [](const MechanicalSystem& s, const Vec& q, int index, double scale) {
    const RelativeEquilibrium r = solve_equilibrium(s, q, index, scale);
    py::dict d;
    d["q"] = r.q.q;
    d["p"] = r.p;
    d["lambda"] = r.lambda;
    d["scale"] = r.scale;
    d["residual_h"] = r.residual_h;
    d["residual_v"] = r.residual_v;
    d["iterations"] = r.iterations;
    d["residual_history"] = r.residual_history;
    return d;
  }, py::arg("system"), py::arg("q_guess"), py::arg("eigen_index"), py::arg("scale_guess"));

  py::class_<GaugeLattice>(m, "GaugeLattice")
      .def_readonly("L", &GaugeLattice::L)
      .def_readonly("spacing", &GaugeLattice::spacing)
      .def_property_readonly("flat_dim", &GaugeLattice::flat_dim)
      .def_property_readonly("gauge_dim", &GaugeLattice::gauge_dim)
      .def_property_readonly("n_sites", &GaugeLattice::n_sites);
  m.def("make_lattice", [](int L, double spacing) { return make_lattice(L, spacing); }, py::arg("L"),
        py::arg("spacing") = 1.0);
  m.def("random_coulomb_field", [](const GaugeLattice& lat, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_coulomb_field(lat, amp, rng);
  }, py::arg("lattice"), py::arg("amplitude"), py::arg("seed") = 0);
  m.def("coulomb_project", [](const GaugeLattice& lat, const Vec& a) { return coulomb_project(lat, a).a; });
  m.def("divergence", &divergence);
  m.def("fp_operator", &fp_operator);
  m.def("coulomb_connection", &coulomb_connection);
  m.def("potential_and_gradient", &potential_and_gradient);
  m.def("ym_rhs", [](const GaugeLattice& lat, const Vec& a, const Vec& ad, const Vec& p) {
    const WongRates r = ym_rhs(lat, a, ad, p);
    return std::make_pair(r.q_ddot, r.p_dot);
  }, py::arg("lattice"), py::arg("a"), py::arg("a_dot"), py::arg("p"));
  m.def("ym_momentum_eigenproblem", [](const GaugeLattice& lat, const Vec& a) {
    return eigen_arrays(ym_momentum_eigenproblem(lat, a));
  });
  m.def("ym_equilibrium_residuals", [](const GaugeLattice& lat, const Vec& a, const Vec& p) {
    const YmResiduals r = ym_equilibrium_residuals(lat, a, p);
    return std::make_pair(r.horizontal, r.vertical);
  });
  m.def("lattice_system", &lattice_system, py::arg("lattice"));
  m.def("wong_rhs_unchecked", [](const MechanicalSystem& s, const Vec& q, const Vec& qd, const Vec& p) {
    const WongRates r = wong_rhs_unchecked(s, q, qd, p);
    return std::make_pair(r.q_ddot, r.p_dot);
  });

  m.def("run_cli", [](const std::string& sub, const std::string& config, std::optional<std::string> out,
                      std::optional<std::uint64_t> seed) {
    std::ostringstream log;
    const int code = cli::run({sub, config, out, seed}, log);
    return std::make_pair(code, log.str());
  }, py::arg("subcommand"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none());
  m.attr("__version__") = cli::kToolVersion;
}
