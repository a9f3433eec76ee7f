#include "wongreduce/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/Core>

#include "wongreduce/dynamics.hpp"
#include "wongreduce/equilibria.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/geometry.hpp"
#include "wongreduce/lattice.hpp"

namespace wongreduce::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kIndexMap =
    "field index (a, i, x) -> (x * 3 + i) * n_color + a; momentum index (m, x) -> x * n_color + m; "
    "site x = (x0 * L + x1) * L + x2";

// ------------------------------------------------------------------ defaults

json system_tolerances() {
  const Tolerances t;
  return {{"sigma", t.sigma},
          {"killing", t.killing},
          {"fp_condition", t.fp_condition},
          {"pinv_relative", t.pinv_relative},
          {"identity", t.identity}};
}

json field_defaults(const char* init) { return {{"init", init}, {"amplitude", 0.3}, {"path", nullptr}}; }

json defaults_for(const std::string& sub) {
  json d = {{"seed", 0}, {"out", "wong_reduce_out"}};
  if (sub == "geometry" || sub == "integrate" || sub == "equilibria") {
    d["system"] = nullptr;
    d["system_params"] = json::object();
    d["derivative_mode"] = "analytic";
    d["tolerances"] = system_tolerances();
  }
  if (sub == "geometry") {
    d["point"] = nullptr;
    d["tolerances"]["report"] = 1e-9;
  } else if (sub == "integrate") {
    d["initial"] = {{"mode", "random"}, {"amplitude", 0.5}, {"q", nullptr},  {"q_dot", nullptr},
                    {"p", nullptr},     {"Q", nullptr},      {"Q_dot", nullptr}};
    d["t_end"] = 1.0;
    d["dt"] = 1e-3;
    d["method"] = "rk4";
    d["sample_every"] = 1;
    d["blow_up"] = 1e12;
    d["tolerances"]["energy_drift"] = 1e-7;
    d["tolerances"]["chi"] = 1e-9;
    d["tolerances"]["tangency"] = 1e-9;
  } else if (sub == "equilibria") {
    d["eigen_index"] = 2;
    d["scale_guess"] = 1.0;
    d["starts"] = 4;
    d["guesses"] = nullptr;
    d["max_iterations"] = 200;
    d["tolerance"] = 1e-8;
    d["min_overlap"] = 0.5;
    d["verify"] = {{"t_end", 1.0}, {"dt", 1e-3}};
    d["tolerances"]["vertical"] = 1e-10;
    d["tolerances"]["velocity"] = 1e-6;
    d["tolerances"]["momentum"] = 1e-8;
  } else if (sub.rfind("lattice-", 0) == 0) {
    d["L"] = 2;
    d["spacing"] = 1.0;
    if (sub == "lattice-geometry") {
      d["field"] = field_defaults("random");
      d["cross_check"] = false;
      d["rotation"] = {0.3, -0.5, 0.8};
      d["tolerances"] = {{"divergence", 1e-12}, {"pinv", 1e-8}, {"symmetry", 1e-10},
                         {"rotation", 1e-10},   {"cross_check", 1e-8}};
    } else if (sub == "lattice-integrate") {
      d["field"] = field_defaults("random");
      d["velocity"] = {{"init", "random"}, {"amplitude", 0.1}};
      d["momentum"] = {{"init", "random"}, {"amplitude", 0.1}};
      d["t_end"] = 0.1;
      d["dt"] = 1e-2;
      d["sample_every"] = 1;
      d["blow_up"] = 1e12;
      d["tolerances"] = {{"divergence", 1e-12}};
    } else {
      d["field"] = field_defaults("zero");
      d["eigen_index"] = 0;
      d["scale_guess"] = 0.0;
      d["max_iterations"] = 50;
      d["tolerance"] = 1e-10;
      d["min_overlap"] = 0.5;
      d["tolerances"] = {{"horizontal", 1e-10}, {"vertical", 1e-9}};
    }
  } else if (sub == "report") {
    d = {{"out", "wong_reduce_report"}, {"seed", 0}, {"run", nullptr}, {"tolerance", nullptr}};
  }
  return d;
}

json system_param_defaults(const std::string& system) {
  if (system == "two_vector_so3") return {{"potential", "harmonic"}};
  if (system == "kaluza_klein") {
    const KaluzaKleinOptions o;
    return {{"base_dim", o.base_dim},
            {"fiber_metric", {o.fiber_metric(0), o.fiber_metric(1), o.fiber_metric(2)}},
            {"chart_radius", o.chart_radius},
            {"base_frequency", o.base_frequency},
            {"connection", {{"type", "default"}, {"value", nullptr}}}};
  }
  return nullptr;
}

// Merges `raw` into `defaults`, rejecting keys absent from the defaults and
// values whose JSON type differs. Null defaults accept any value.
void merge_checked(json& out, const json& raw, const std::string& file, const std::string& prefix) {
  if (!raw.is_object()) throw ConfigInvalid(file, prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : raw.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!out.contains(key)) throw ConfigInvalid(file, name, "unknown key");
    json& slot = out[key];
    if (slot.is_null()) {
      slot = value;
    } else if (slot.is_object()) {
      if (slot.empty()) {
        slot = value;  // validated later against a context-dependent schema
        if (!value.is_object()) throw ConfigInvalid(file, name, "expected an object");
      } else {
        merge_checked(slot, value, file, name);
      }
    } else if (slot.is_number_integer()) {
      if (!value.is_number_integer()) throw ConfigInvalid(file, name, "expected an integer");
      slot = value;
    } else if (slot.is_number()) {
      if (!value.is_number()) throw ConfigInvalid(file, name, "expected a number");
      slot = value.get<double>();
    } else if (slot.is_string()) {
      if (!value.is_string()) throw ConfigInvalid(file, name, "expected a string");
      slot = value;
    } else if (slot.is_boolean()) {
      if (!value.is_boolean()) throw ConfigInvalid(file, name, "expected a boolean");
      slot = value;
    } else if (slot.is_array()) {
      if (!value.is_array()) throw ConfigInvalid(file, name, "expected an array");
      slot = value;
    }
  }
}

void require_one_of(const json& cfg, const std::string& key, std::initializer_list<const char*> allowed,
                    const std::string& file) {
  const json* v = &cfg;
  std::string rest = key;
  for (size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1)) v = &(*v)[rest.substr(0, dot)];
  const std::string s = (*v)[rest].get<std::string>();
  for (const char* a : allowed)
    if (s == a) return;
  throw ConfigInvalid(file, key, "unsupported value '" + s + "'");
}

// ------------------------------------------------------------------ helpers

Vec to_vec(const json& j, const std::string& file, const std::string& key) {
  if (!j.is_array()) throw ConfigInvalid(file, key, "expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigInvalid(file, key, "expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json from_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json from_mat(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(from_vec(m.row(r).transpose()));
  return rows;
}

json from_tensor(const Tensor3& t) {
  return {{"shape", {t.dim(0), t.dim(1), t.dim(2)}}, {"data", t.data()}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> columns) : columns_(std::move(columns)) {
    for (size_t i = 0; i < columns_.size(); ++i) text_ << (i ? "," : "") << columns_[i];
    text_ << "\n";
  }
  void row(const std::vector<double>& values) {
    for (size_t i = 0; i < values.size(); ++i) text_ << (i ? "," : "") << fmt(values[i]);
    text_ << "\n";
  }
  const std::vector<std::string>& columns() const { return columns_; }
  std::string str() const { return text_.str(); }

 private:
  std::vector<std::string> columns_;
  std::ostringstream text_;
};

std::vector<std::string> indexed(const std::string& name, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(name + std::to_string(i));
  return out;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

enum class Verbosity { Quiet, Info, Debug };

Verbosity verbosity() {
  const char* v = std::getenv("WONG_REDUCE_LOG");
  if (!v) return Verbosity::Info;
  const std::string s = v;
  if (s == "quiet") return Verbosity::Quiet;
  if (s == "debug") return Verbosity::Debug;
  return Verbosity::Info;
}

// State shared by one run: resolved config, output location, manifest pieces.
struct Run {
  std::string sub;
  json config;
  fs::path out;
  std::ostream& log;
  json outputs = json::object();
  json invariants = json::array();
  json extra = json::object();

  void info(const std::string& msg) const {
    if (verbosity() != Verbosity::Quiet) log << msg << "\n";
  }
  void output(const std::string& file, const std::string& text, json description) {
    write_atomic((out / file).string(), text);
    outputs[file] = std::move(description);
  }
  void invariant(const std::string& name, double value, double tolerance) {
    invariants.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"ok", value < tolerance}});
    if (verbosity() == Verbosity::Debug) log << "  " << name << " = " << fmt(value) << " (tol " << tolerance << ")\n";
  }
  double tol(const std::string& key) const { return config["tolerances"][key].get<double>(); }
};

// ------------------------------------------------------------------ systems

MechanicalSystem make_system(const json& cfg, const std::string& file) {
  const std::string name = cfg["system"].get<std::string>();
  const json& sp = cfg["system_params"];
  MechanicalSystem sys;
  if (name == "two_vector_so3") {
    const std::string pot = sp["potential"].get<std::string>();
    if (pot == "harmonic")
      sys = builtin_two_vector_so3(InvariantPotential::harmonic());
    else if (pot == "orthonormal_well")
      sys = builtin_two_vector_so3(InvariantPotential::orthonormal_well());
    else
      throw ConfigInvalid(file, "system_params.potential", "unsupported value '" + pot + "'");
  } else {
    KaluzaKleinOptions o;
    o.base_dim = sp["base_dim"].get<int>();
    if (o.base_dim < 1) throw ConfigInvalid(file, "system_params.base_dim", "must be positive");
    const Vec fm = to_vec(sp["fiber_metric"], file, "system_params.fiber_metric");
    if (fm.size() != 3) throw ConfigInvalid(file, "system_params.fiber_metric", "expected 3 entries");
    o.fiber_metric = fm;
    o.chart_radius = sp["chart_radius"].get<double>();
    o.base_frequency = sp["base_frequency"].get<double>();
    const json& c = sp["connection"];
    const std::string type = c["type"].get<std::string>();
    ConnectionField conn;
    if (type == "default") {
      conn = default_kaluza_klein_connection(o.base_dim);
    } else if (type == "zero") {
      conn = ConnectionField::zero(o.base_dim);
    } else if (type == "constant") {
      const json& v = c["value"];
      if (!v.is_array() || v.size() != 3)
        throw ConfigInvalid(file, "system_params.connection.value", "expected 3 rows of base_dim entries");
      Mat a(3, o.base_dim);
      for (int r = 0; r < 3; ++r) {
        const Vec row = to_vec(v[r], file, "system_params.connection.value");
        if (row.size() != o.base_dim)
          throw ConfigInvalid(file, "system_params.connection.value", "expected 3 rows of base_dim entries");
        a.row(r) = row.transpose();
      }
      conn = ConnectionField::constant(a);
    } else {
      throw ConfigInvalid(file, "system_params.connection.type", "unsupported value '" + type + "'");
    }
    sys = builtin_kaluza_klein(conn, o);
  }
  const json& t = cfg["tolerances"];
  sys.tol.sigma = t["sigma"].get<double>();
  sys.tol.killing = t["killing"].get<double>();
  sys.tol.fp_condition = t["fp_condition"].get<double>();
  sys.tol.pinv_relative = t["pinv_relative"].get<double>();
  sys.tol.identity = t["identity"].get<double>();
  sys.derivative_mode =
      cfg["derivative_mode"] == "analytic" ? DerivativeMode::Analytic : DerivativeMode::FiniteDifference;
  return sys;
}

Vec vec_of_size(const json& j, int n, const std::string& file, const std::string& key) {
  const Vec v = to_vec(j, file, key);
  if (v.size() != n) throw ConfigInvalid(file, key, "expected " + std::to_string(n) + " entries");
  return v;
}

Vec normal_vec(int n, double amp, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = amp * d(rng);
  return v;
}

// ---------------------------------------------------------------- pipelines

int run_geometry(Run& r, const std::string& file) {
  const MechanicalSystem sys = make_system(r.config, file);
  std::mt19937_64 rng(r.config["seed"].get<std::uint64_t>());
  const json& pt = r.config["point"];
  Vec q;
  if (pt.is_null() || pt == "random")
    q = sys.sampler(rng);
  else
    q = vec_of_size(pt, sys.n_p, file, "point");
  const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, q));
  const InvariantReport rep = geometry_invariants(sys, g);
  for (const auto& [name, value] : rep.entries) r.invariant(name, value, r.tol("report"));
  json doc = {{"system", sys.name},
              {"q", from_vec(g.q.q)},
              {"G", from_mat(g.G)},
              {"K", from_mat(g.K)},
              {"J", from_mat(g.J)},
              {"Phi", from_mat(g.Phi)},
              {"Phi_inv", from_mat(g.Phi_inv)},
              {"gamma", from_mat(g.gamma)},
              {"gamma_inv", from_mat(g.gamma_inv)},
              {"A_conn", from_mat(g.A_conn)},
              {"Pi", from_mat(g.Pi_proj)},
              {"N", from_mat(g.N_proj)},
              {"chiT", from_mat(g.chiT)},
              {"P_perp", from_mat(g.P_perp)},
              {"G_H", from_mat(g.G_H)},
              {"fp_condition", g.fp_condition},
              {"G_H_condition", g.G_H_condition},
              {"curvature", from_tensor(g.F_curv)},
              {"D_gamma", from_tensor(g.D_gamma)},
              {"christoffel_H", from_tensor(g.christoffel_H)},
              {"invariants", r.invariants}};
  r.output("geometry.json", doc.dump(2), {{"format", "json"}, {"content", "GeometryAtPoint and invariant residuals"}});
  r.info("geometry: max invariant residual " + fmt(rep.max()));
  return kOk;
}

int run_integrate(Run& r, const std::string& file) {
  const MechanicalSystem sys = make_system(r.config, file);
  std::mt19937_64 rng(r.config["seed"].get<std::uint64_t>());
  const json& ini = r.config["initial"];
  const std::string mode = ini["mode"].get<std::string>();
  const double amp = ini["amplitude"].get<double>();
  ReducedState s0;
  if (mode == "random") {
    const Vec q = sys.sampler(rng);
    const OrbitFields f = orbit_fields(sys, q);
    s0 = {on_sigma(sys, q), f.N_proj * normal_vec(sys.n_p, amp, rng), normal_vec(sys.n_g(), amp, rng), 0.0};
  } else if (mode == "explicit") {
    s0 = {on_sigma(sys, vec_of_size(ini["q"], sys.n_p, file, "initial.q")),
          vec_of_size(ini["q_dot"], sys.n_p, file, "initial.q_dot"),
          vec_of_size(ini["p"], sys.n_g(), file, "initial.p"), 0.0};
  } else if (mode == "full") {
    s0 = reduce_state(sys, vec_of_size(ini["Q"], sys.n_p, file, "initial.Q"),
                      vec_of_size(ini["Q_dot"], sys.n_p, file, "initial.Q_dot"));
  } else {
    throw ConfigInvalid(file, "initial.mode", "unsupported value '" + mode + "'");
  }
  IntegrateOptions opt;
  opt.t_end = r.config["t_end"].get<double>();
  opt.dt = r.config["dt"].get<double>();
  opt.sample_every = r.config["sample_every"].get<int>();
  opt.blow_up = r.config["blow_up"].get<double>();
  if (opt.t_end < 0) throw ConfigInvalid(file, "t_end", "must be non-negative");
  const Trajectory tr = integrate(sys, s0, opt);

  std::vector<std::string> cols{"t"};
  for (const auto* pre : {"q", "q_dot", "p"}) {
    const auto c = indexed(pre, pre[0] == 'p' ? sys.n_g() : sys.n_p);
    cols.insert(cols.end(), c.begin(), c.end());
  }
  for (const auto* c : {"energy", "chi", "tangency", "vertical", "p_norm"}) cols.push_back(c);
  Csv csv(cols);
  double drift = 0.0, chi = 0.0, tan = 0.0;
  const double e0 = tr.invariants_log.front().energy;
  for (size_t i = 0; i < tr.samples.size(); ++i) {
    const ReducedState& s = tr.samples[i];
    const InvariantSample& v = tr.invariants_log[i];
    std::vector<double> row{s.t};
    for (const Vec* x : {&s.q.q, &s.q_dot, &s.p}) row.insert(row.end(), x->data(), x->data() + x->size());
    row.insert(row.end(), {v.energy, v.chi, v.tangency, v.vertical, v.p_norm});
    csv.row(row);
    drift = std::max(drift, std::abs(v.energy - e0) / std::max(1.0, std::abs(e0)));
    chi = std::max(chi, v.chi);
    tan = std::max(tan, v.tangency);
  }
  r.invariant("energy_drift_relative", drift, r.tol("energy_drift"));
  r.invariant("chi_max", chi, r.tol("chi"));
  r.invariant("tangency_max", tan, r.tol("tangency"));
  r.output("trajectory.csv", csv.str(), {{"format", "csv"}, {"columns", csv.columns()}});
  r.info("integrate: " + std::to_string(tr.samples.size()) + " samples, energy drift " + fmt(drift));
  return kOk;
}

int run_equilibria(Run& r, const std::string& file) {
  const MechanicalSystem sys = make_system(r.config, file);
  std::mt19937_64 rng(r.config["seed"].get<std::uint64_t>());
  std::vector<Vec> guesses;
  if (r.config["guesses"].is_array()) {
    for (size_t i = 0; i < r.config["guesses"].size(); ++i)
      guesses.push_back(vec_of_size(r.config["guesses"][i], sys.n_p, file, "guesses"));
  } else {
    const int starts = r.config["starts"].get<int>();
    if (starts < 1) throw ConfigInvalid(file, "starts", "must be positive");
    for (int i = 0; i < starts; ++i) guesses.push_back(sys.sampler(rng));
  }
  EquilibriumOptions opt;
  opt.max_iterations = r.config["max_iterations"].get<int>();
  opt.tolerance = r.config["tolerance"].get<double>();
  opt.min_overlap = r.config["min_overlap"].get<double>();
  const int index = r.config["eigen_index"].get<int>();
  if (index < 0 || index >= sys.n_g()) throw ConfigInvalid(file, "eigen_index", "out of range");
  const double scale = r.config["scale_guess"].get<double>();
  IntegrateOptions vopt;
  vopt.t_end = r.config["verify"]["t_end"].get<double>();
  vopt.dt = r.config["verify"]["dt"].get<double>();

  json solutions = json::array();
  int converged = 0;
  double worst_v = 0.0, worst_qd = 0.0, worst_dp = 0.0;
  for (size_t k = 0; k < guesses.size(); ++k) {
    json entry = {{"start", k}, {"guess", from_vec(guesses[k])}};
    try {
      const RelativeEquilibrium e = attempt_equilibrium(sys, guesses[k], index, scale, opt);
      entry.update({{"q", from_vec(e.q.q)},
                    {"p", from_vec(e.p)},
                    {"lambda", e.lambda},
                    {"scale", e.scale},
                    {"residual_h", e.residual_h},
                    {"residual_v", e.residual_v},
                    {"eigen_index", e.eigen_index},
                    {"cluster_size", e.cluster_size},
                    {"iterations", e.iterations},
                    {"converged", e.converged},
                    {"residual_history", e.residual_history}});
      json eig = json::array();
      for (const EigenPair& pr : momentum_eigenproblem(sys, e.q.q))
        eig.push_back({{"lambda", pr.lambda}, {"e", from_vec(pr.e)}});
      entry["eigen"] = eig;
      if (e.converged) {
        ++converged;
        const Trajectory tr = integrate(sys, {e.q, Vec::Zero(sys.n_p), e.p}, vopt);
        double qd = 0.0, dp = 0.0;
        for (const ReducedState& s : tr.samples) {
          qd = std::max(qd, s.q_dot.cwiseAbs().maxCoeff());
          dp = std::max(dp, (s.p - e.p).cwiseAbs().maxCoeff());
        }
        entry["dynamic_check"] = {{"max_q_dot", qd}, {"max_p_change", dp}, {"t_end", vopt.t_end}};
        worst_v = std::max(worst_v, e.residual_v);
        worst_qd = std::max(worst_qd, qd);
        worst_dp = std::max(worst_dp, dp);
      }
    } catch (const EigenCrossing& ex) {
      entry.update({{"converged", false}, {"failure", ex.what()}});
    }
    solutions.push_back(entry);
  }
  if (converged > 0) {
    r.invariant("vertical_residual_max", worst_v, r.tol("vertical"));
    r.invariant("dynamic_q_dot_max", worst_qd, r.tol("velocity"));
    r.invariant("dynamic_p_change_max", worst_dp, r.tol("momentum"));
  }
  r.extra["converged"] = converged;
  r.output("equilibria.json", json{{"system", sys.name}, {"solutions", solutions}}.dump(2),
           {{"format", "json"}, {"content", "relative equilibria per start"}});
  r.info("equilibria: " + std::to_string(converged) + " of " + std::to_string(guesses.size()) + " starts converged");
  return converged > 0 ? kOk : kNoConvergence;
}

GaugeLattice lattice_from(const Run& r, const std::string& file) {
  const int L = r.config["L"].get<int>();
  if (L < 2 || L > 6) throw ConfigInvalid(file, "L", "must lie in [2, 6]");
  const double a = r.config["spacing"].get<double>();
  if (!(a > 0)) throw ConfigInvalid(file, "spacing", "must be positive");
  return make_lattice(L, a);
}

Vec lattice_field(const Run& r, const GaugeLattice& lat, std::mt19937_64& rng, const std::string& file) {
  const json& f = r.config["field"];
  const std::string init = f["init"].get<std::string>();
  if (init == "zero") return Vec::Zero(lat.flat_dim());
  if (init == "random") return random_coulomb_field(lat, f["amplitude"].get<double>(), rng);
  if (init == "file") {
    if (!f["path"].is_string()) throw ConfigInvalid(file, "field.path", "required when field.init is 'file'");
    const std::string path = f["path"].get<std::string>();
    std::ifstream in(path);
    if (!in) throw ConfigInvalid(file, "field.path", "cannot read '" + path + "'");
    const json doc = json::parse(in);
    if (!doc.contains("a")) throw ConfigInvalid(file, "field.path", "file has no 'a' array");
    const Vec a = vec_of_size(doc["a"], lat.flat_dim(), file, "field.path");
    return coulomb_project(lat, a).a;
  }
  throw ConfigInvalid(file, "field.init", "unsupported value '" + init + "'");
}

Vec lattice_random_part(const json& part, int n, std::mt19937_64& rng, const std::string& file, const std::string& key) {
  const std::string init = part["init"].get<std::string>();
  if (init == "zero") return Vec::Zero(n);
  if (init == "random") return normal_vec(n, part["amplitude"].get<double>(), rng);
  throw ConfigInvalid(file, key + ".init", "unsupported value '" + init + "'");
}

int run_lattice_geometry(Run& r, const std::string& file) {
  const GaugeLattice lat = lattice_from(r, file);
  std::mt19937_64 rng(r.config["seed"].get<std::uint64_t>());
  const Vec a = lattice_field(r, lat, rng, file);
  const Mat gamma = fp_operator(lat, a);
  const GreenFunction g = green_function(lat, a);
  const Mat gi = g.inverse / lat.volume_weight();
  const auto [v, grad] = potential_and_gradient(lat, a);
  Eigen::SelfAdjointEigenSolver<Mat> es(gamma);
  const Vec rot_xi = vec_of_size(r.config["rotation"], 3, file, "rotation");
  Eigen::SelfAdjointEigenSolver<Mat> esr(fp_operator(lat, rotate_field_globally(lat, a, rot_xi)));
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());

  r.invariant("divergence", divergence(lat, a).cwiseAbs().maxCoeff(), r.tol("divergence"));
  r.invariant("gamma_pinv_identity", (gamma * gi * gamma - gamma).cwiseAbs().maxCoeff() / scale, r.tol("pinv"));
  r.invariant("green_symmetry", (gi - gi.transpose()).cwiseAbs().maxCoeff(), r.tol("symmetry"));
  r.invariant("rotation_spectrum", (es.eigenvalues() - esr.eigenvalues()).cwiseAbs().maxCoeff(), r.tol("rotation"));

  json doc = {{"L", lat.L},
              {"spacing", lat.spacing},
              {"index_map", kIndexMap},
              {"a", from_vec(a)},
              {"potential", v},
              {"potential_gradient", from_vec(grad)},
              {"fp_spectrum", from_vec(es.eigenvalues())},
              {"kernel_dim", g.kernel_dim},
              {"condition", g.condition}};
  if (r.config["cross_check"].get<bool>()) {
    if (lat.L > 3) throw ConfigInvalid(file, "cross_check", "only available for L <= 3");
    const MechanicalSystem sys = lattice_system(lat);
    const OrbitFields f = orbit_fields(sys, a);
    const LatticeOperators ops = lattice_operators(lat, a);
    const Vec ad = ops.apply_N(normal_vec(lat.flat_dim(), 0.3, rng));
    const Vec p = normal_vec(lat.gauge_dim(), 0.3, rng);
    const WongRates gen = wong_rhs_unchecked(sys, a, ad, p);
    const WongRates ym = ym_rhs(ops, ad, p);
    const double dg = (f.gamma - gamma).cwiseAbs().maxCoeff();
    const double dc = (f.A_conn - coulomb_connection(lat, a)).cwiseAbs().maxCoeff();
    const double dr = std::max((gen.q_ddot - ym.q_ddot).cwiseAbs().maxCoeff(), (gen.p_dot - ym.p_dot).cwiseAbs().maxCoeff());
    r.invariant("generic_vs_lattice_fp_operator", dg, r.tol("cross_check"));
    r.invariant("generic_vs_lattice_connection", dc, r.tol("cross_check"));
    r.invariant("generic_vs_lattice_rhs", dr, r.tol("cross_check"));
    doc["cross_check"] = {{"fp_operator", dg}, {"connection", dc}, {"rhs", dr}};
  }
  doc["invariants"] = r.invariants;
  r.extra["index_map"] = kIndexMap;
  r.output("lattice_geometry.json", doc.dump(2), {{"format", "json"}, {"content", "lattice FP data and checks"}});
  r.info("lattice-geometry: kernel " + std::to_string(g.kernel_dim) + ", condition " + fmt(g.condition));
  return kOk;
}

int run_lattice_integrate(Run& r, const std::string& file) {
  const GaugeLattice lat = lattice_from(r, file);
  std::mt19937_64 rng(r.config["seed"].get<std::uint64_t>());
  const Vec a = lattice_field(r, lat, rng, file);
  const LatticeOperators ops = lattice_operators(lat, a);
  const Vec ad = ops.apply_N(lattice_random_part(r.config["velocity"], lat.flat_dim(), rng, file, "velocity"));
  const Vec p = lattice_random_part(r.config["momentum"], lat.gauge_dim(), rng, file, "momentum");
  IntegrateOptions opt;
  opt.t_end = r.config["t_end"].get<double>();
  opt.dt = r.config["dt"].get<double>();
  opt.sample_every = r.config["sample_every"].get<int>();
  opt.blow_up = r.config["blow_up"].get<double>();
  if (opt.t_end < 0) throw ConfigInvalid(file, "t_end", "must be non-negative");
  const LatticeTrajectory tr = ym_integrate(lat, {a, ad, p, 0.0}, opt);

  std::vector<std::string> cols{"t", "energy", "divergence"};
  for (const auto& c : {indexed("a", lat.flat_dim()), indexed("a_dot", lat.flat_dim()), indexed("p", lat.gauge_dim())})
    cols.insert(cols.end(), c.begin(), c.end());
  Csv csv(cols);
  double div = 0.0;
  for (size_t i = 0; i < tr.samples.size(); ++i) {
    const LatticeState& s = tr.samples[i];
    std::vector<double> row{s.t, tr.energy[i], tr.divergence[i]};
    for (const Vec* x : {&s.a, &s.a_dot, &s.p}) row.insert(row.end(), x->data(), x->data() + x->size());
    csv.row(row);
    div = std::max(div, tr.divergence[i]);
  }
  r.invariant("divergence_max", div, r.tol("divergence"));
  const LatticeState& last = tr.samples.back();
  r.extra["index_map"] = kIndexMap;
  r.output("lattice_trajectory.csv", csv.str(), {{"format", "csv"}, {"columns", csv.columns()}});
  r.output("lattice_final.json",
           json{{"t", last.t}, {"index_map", kIndexMap}, {"a", from_vec(last.a)}, {"a_dot", from_vec(last.a_dot)},
                {"p", from_vec(last.p)}}
               .dump(2),
           {{"format", "json"}, {"content", "final lattice state"}});
  r.info("lattice-integrate: " + std::to_string(tr.samples.size()) + " samples");
  return kOk;
}

int run_lattice_equilibria(Run& r, const std::string& file) {
  const GaugeLattice lat = lattice_from(r, file);
  std::mt19937_64 rng(r.config["seed"].get<std::uint64_t>());
  const Vec a = lattice_field(r, lat, rng, file);
  EquilibriumOptions opt;
  opt.max_iterations = r.config["max_iterations"].get<int>();
  opt.tolerance = r.config["tolerance"].get<double>();
  opt.min_overlap = r.config["min_overlap"].get<double>();
  const int index = r.config["eigen_index"].get<int>();
  if (index < 0 || index >= lat.gauge_dim()) throw ConfigInvalid(file, "eigen_index", "out of range");
  json doc = {{"L", lat.L}, {"spacing", lat.spacing}, {"index_map", kIndexMap}, {"guess", from_vec(a)}};
  int code = kOk;
  try {
    const LatticeEquilibrium e = ym_attempt_equilibrium(lat, a, index, r.config["scale_guess"].get<double>(), opt);
    json eig = json::array();
    for (const EigenPair& pr : ym_momentum_eigenproblem(lat, e.a)) eig.push_back(pr.lambda);
    doc.update({{"a", from_vec(e.a)},
                {"p", from_vec(e.p)},
                {"lambda", e.lambda},
                {"scale", e.scale},
                {"residual_h", e.residual_h},
                {"residual_v", e.residual_v},
                {"iterations", e.iterations},
                {"converged", e.converged},
                {"residual_history", e.residual_history},
                {"green_eigenvalues", eig}});
    r.invariant("horizontal_residual", e.residual_h, r.tol("horizontal"));
    r.invariant("vertical_residual", e.residual_v, r.tol("vertical"));
    if (!e.converged) code = kNoConvergence;
  } catch (const EigenCrossing& ex) {
    doc.update({{"converged", false}, {"failure", ex.what()}});
    code = kNoConvergence;
  }
  r.extra["index_map"] = kIndexMap;
  r.output("lattice_equilibria.json", doc.dump(2), {{"format", "json"}, {"content", "lattice equilibrium solve"}});
  r.info(std::string("lattice-equilibria: ") + (code == kOk ? "converged" : "no convergence"));
  return code;
}

int run_report(Run& r, const std::string& file) {
  if (!r.config["run"].is_string()) throw ConfigInvalid(file, "run", "required: path of a run directory");
  const fs::path dir = r.config["run"].get<std::string>();
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw MissingArtifact("missing run manifest " + mpath.string());
  const json m = json::parse(in);
  const json outputs = m.value("outputs", json::object());
  for (const auto& item : outputs.items())
    if (!fs::exists(dir / item.key())) throw MissingArtifact("missing run output " + (dir / item.key()).string());
  const json& override_tol = r.config["tolerance"];
  if (!override_tol.is_null() && !override_tol.is_number()) throw ConfigInvalid(file, "tolerance", "expected a number");
  json rows = json::array();
  bool all_ok = true;
  std::ostringstream table;
  table << std::left << std::setw(36) << "invariant" << std::setw(26) << "value" << std::setw(12) << "tolerance"
        << "status\n";
  const json invariants = m.value("invariants", json::array());
  for (const json& inv : invariants) {
    const double value = inv["value"].get<double>();
    const double tol = override_tol.is_null() ? inv["tolerance"].get<double>() : override_tol.get<double>();
    const bool ok = value < tol;
    all_ok = all_ok && ok;
    rows.push_back({{"name", inv["name"]}, {"value", value}, {"tolerance", tol}, {"ok", ok}});
    table << std::setw(36) << inv["name"].get<std::string>() << std::setw(26) << fmt(value) << std::setw(12) << tol
          << (ok ? "ok" : "FLAGGED") << "\n";
  }
  r.extra["all_ok"] = all_ok;
  r.output("report.json",
           json{{"run", dir.string()}, {"subcommand", m.value("subcommand", "")}, {"all_ok", all_ok}, {"rows", rows}}
               .dump(2),
           {{"format", "json"}, {"content", "invariant summary"}});
  r.info(table.str());
  return kOk;
}

}  // namespace

// ------------------------------------------------------------------ public

bool known_subcommand(const std::string& s) {
  for (const char* k : {"geometry", "integrate", "equilibria", "lattice-geometry", "lattice-integrate",
                        "lattice-equilibria", "report"})
    if (s == k) return true;
  return false;
}

json resolve_config(const std::string& sub, const json& raw_in, const std::string& file) {
  if (!known_subcommand(sub)) throw ConfigInvalid(file, "subcommand", "unknown subcommand '" + sub + "'");
  json raw = raw_in;
  if (raw.is_object() && raw.contains("tool") && raw.contains("config")) {
    if (raw.contains("subcommand") && raw["subcommand"] != sub)
      throw ConfigInvalid(file, "subcommand", "manifest was written by '" + raw["subcommand"].get<std::string>() + "'");
    raw = raw["config"];
  }
  if (raw.is_object() && raw.contains("subcommand")) {
    if (raw["subcommand"] != sub) throw ConfigInvalid(file, "subcommand", "does not match the command line");
    raw.erase("subcommand");
  }
  json cfg = defaults_for(sub);
  merge_checked(cfg, raw, file, "");
  if (cfg.contains("system")) {
    if (cfg["system"].is_null()) throw ConfigInvalid(file, "system", "required key is missing");
    if (!cfg["system"].is_string()) throw ConfigInvalid(file, "system", "expected a string");
    const json sp = system_param_defaults(cfg["system"].get<std::string>());
    if (sp.is_null()) throw ConfigInvalid(file, "system", "unknown system '" + cfg["system"].get<std::string>() + "'");
    json params = sp;
    merge_checked(params, cfg["system_params"], file, "system_params");
    cfg["system_params"] = params;
    require_one_of(cfg, "derivative_mode", {"analytic", "finite_difference"}, file);
  }
  if (sub == "integrate") require_one_of(cfg, "method", {"rk4"}, file);
  if (sub == "report" && cfg["run"].is_null()) throw ConfigInvalid(file, "run", "required key is missing");
  if (!cfg["seed"].is_number_integer() || cfg["seed"].get<long long>() < 0) throw ConfigInvalid(file, "seed", "expected a non-negative integer");
  cfg["subcommand"] = sub;
  return cfg;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw Error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

int run(const RunRequest& req, std::ostream& log) {
  const std::string started = timestamp();
  json cfg;
  try {
    std::ifstream in(req.config_path);
    if (!in) throw ConfigInvalid(req.config_path, "<file>", "cannot open config");
    json raw;
    try {
      raw = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigInvalid(req.config_path, "<file>", std::string("malformed JSON: ") + e.what());
    }
    if (req.seed) raw["seed"] = *req.seed;
    if (req.out_dir) raw["out"] = *req.out_dir;
    if (raw.is_object() && raw.contains("tool") && raw.contains("config")) {
      if (req.seed) raw["config"]["seed"] = *req.seed;
      if (req.out_dir) raw["config"]["out"] = *req.out_dir;
      raw.erase("seed");
      raw.erase("out");
    }
    cfg = resolve_config(req.subcommand, raw, req.config_path);
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kFailure;
  }

  Run r{req.subcommand, cfg, fs::path(cfg["out"].get<std::string>()), log};
  int code = kOk;
  std::string error;
  try {
    fs::create_directories(r.out);
    if (r.sub == "geometry") code = run_geometry(r, req.config_path);
    else if (r.sub == "integrate") code = run_integrate(r, req.config_path);
    else if (r.sub == "equilibria") code = run_equilibria(r, req.config_path);
    else if (r.sub == "lattice-geometry") code = run_lattice_geometry(r, req.config_path);
    else if (r.sub == "lattice-integrate") code = run_lattice_integrate(r, req.config_path);
    else if (r.sub == "lattice-equilibria") code = run_lattice_equilibria(r, req.config_path);
    else code = run_report(r, req.config_path);
  } catch (const NoConvergence& e) {
    error = e.what();
    code = kNoConvergence;
  } catch (const EigenCrossing& e) {
    error = e.what();
    code = kNoConvergence;
  } catch (const std::exception& e) {
    error = e.what();
    code = kFailure;
  }
  if (!error.empty()) log << "error: " << error << "\n";

  json inv_summary = {{"count", r.invariants.size()}, {"max_value", 0.0}, {"all_ok", true}};
  for (const json& i : r.invariants) {
    inv_summary["max_value"] = std::max(inv_summary["max_value"].get<double>(), i["value"].get<double>());
    if (!i["ok"].get<bool>()) inv_summary["all_ok"] = false;
  }
  json manifest = {{"tool", kToolName},
                   {"version", kToolVersion},
                   {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                         "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"subcommand", r.sub},
                   {"config", cfg},
                   {"config_hash", config_hash(cfg)},
                   {"started", started},
                   {"finished", timestamp()},
                   {"outputs", r.outputs},
                   {"invariants", r.invariants},
                   {"invariant_summary", inv_summary},
                   {"details", r.extra},
                   {"exit_status", code}};
  if (!error.empty()) manifest["error"] = error;
  try {
    fs::create_directories(r.out);
    write_atomic((r.out / "manifest.json").string(), manifest.dump(2));
  } catch (const std::exception& e) {
    log << "error: cannot write manifest: " << e.what() << "\n";
    return kFailure;
  }
  return code;
}

}  // namespace wongreduce::cli
