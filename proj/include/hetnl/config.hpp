#pragma once

#include <toml.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hetnl/problem.hpp"

namespace hetnl {

/// Fully resolved run configuration (see configs/*.toml for the file layout).
struct RunConfig {
  std::string preset = "interval";

  // [domain]
  std::string shape = "interval";
  std::vector<double> bounds{0.0, 1.0};

  // [profile]
  std::string q = "identity"; ///< identity | arctan | mollified_power | table:<csv>
  double q_scale = 1.0;
  int q_power = 2;
  double q_knee = 0.2;
  std::string lambda = "distance"; ///< distance | smoothed
  double lambda_width = 0.25;
  double delta = 0.05;

  // [kernel]
  double p = 2.0;
  double beta = 0.5;
  std::string rho = "indicator"; ///< indicator | quartic | table:<csv>
  double rho_c = 1.0;
  std::string psi = "quartic"; ///< quartic | smooth_bump
  double psi_radius = 0.9;

  // [energy]
  double power_coef = 0.0;
  double m = 2.0;
  std::string f = "zero";
  std::string f_tilde = "zero";
  std::string g_boundary = "zero";
  double double_well = 0.0;
  double well_m = 4.0;
  std::string robin_b = "zero";
  double robin_floor = 0.0;
  double theta = 0.5;
  double Theta = 1.0;

  // [constraint]
  std::string constraint = "dirichlet";
  std::string g = "zero";

  // [mesh]
  GradingParams grading{0.005, 0.5, 1e-4, 0.25, 4'000'000};

  // [quadrature]
  QuadratureSettings quadrature;
  ConvolutionOptions convolution;

  // [solver]
  std::string mode = "auto"; ///< auto | quadratic | lbfgs
  SolverSettings solver;
  std::string initial = "default"; ///< default | random

  // [sweep]
  std::vector<double> deltas{0.1, 0.05, 0.025};
  std::string reference = "none"; ///< none | local | catalogue name of the exact solution
  double reference_h = 0.0;       ///< local reference mesh width (0: same grading as each entry)

  // [poincare]
  std::vector<std::string> poincare_constraints{"dirichlet", "neumann", "robin"};
  double poincare_b = 1.0;

  // [output]
  std::string out_dir = "out";

  std::filesystem::path base_dir = "."; ///< relative table paths resolve here
};

namespace detail {

inline std::vector<std::pair<double, double>> read_two_columns(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open table file '" + path.string() + "'");
  std::vector<std::pair<double, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char &c : line)
      if (c == ',') c = ' ';
    std::istringstream ss(line);
    double a = 0, b = 0;
    if (!(ss >> a >> b)) {
      if (rows.empty()) continue; // header
      throw ConfigError("table '" + path.string() + "': bad row '" + line + "'");
    }
    rows.emplace_back(a, b);
  }
  if (rows.size() < 2) throw ConfigError("table '" + path.string() + "' needs at least two rows");
  return rows;
}

inline std::string table_path(const std::string &name) {
  return name.rfind("table:", 0) == 0 ? name.substr(6) : std::string{};
}

inline std::vector<double> parse_numbers(const std::string &s) {
  std::vector<double> v;
  std::string tok;
  std::istringstream ss(s);
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception &) {
      throw ConfigError("bad number '" + tok + "' in '" + s + "'");
    }
  }
  return v;
}

} // namespace detail

/// Named scalar fields used for forcing, boundary data, weights and references.
///   zero, one, x, y, sin_pi, cos_pi, manufactured_sin (ρ̄π²·sin_pi, the
///   forcing whose local solution is sin_pi), const:c, affine:a,b,c (ax+by+c).
/// sin_pi is sin(πx) in 1-D and sin(πx)sin(πy) in 2-D; cos_pi likewise.
inline std::function<double(const Point &)> catalogue_function(const std::string &name, int d,
                                                               double rho_bar_value) {
  if (name == "zero") return [](const Point &) { return 0.0; };
  if (name == "one") return [](const Point &) { return 1.0; };
  if (name == "x") return [](const Point &x) { return x.x; };
  if (name == "y") return [](const Point &x) { return x.y; };
  if (name == "sin_pi") {
    if (d == 1) return [](const Point &x) { return std::sin(pi * x.x); };
    return [](const Point &x) { return std::sin(pi * x.x) * std::sin(pi * x.y); };
  }
  if (name == "cos_pi") {
    if (d == 1) return [](const Point &x) { return std::cos(pi * x.x); };
    return [](const Point &x) { return std::cos(pi * x.x) * std::cos(pi * x.y); };
  }
  if (name == "manufactured_sin") {
    const auto s = catalogue_function("sin_pi", d, rho_bar_value);
    const double c = rho_bar_value * pi * pi;
    return [s, c](const Point &x) { return c * s(x); };
  }
  if (name.rfind("const:", 0) == 0) {
    const auto v = detail::parse_numbers(name.substr(6));
    if (v.size() != 1) throw ConfigError("const: needs one value");
    return [c = v[0]](const Point &) { return c; };
  }
  if (name.rfind("affine:", 0) == 0) {
    const auto v = detail::parse_numbers(name.substr(7));
    if (v.size() != 3) throw ConfigError("affine: needs a,b,c");
    return [a = v[0], b = v[1], c = v[2]](const Point &x) { return a * x.x + b * x.y + c; };
  }
  throw ConfigError("unknown function '" + name + "'");
}

/// Preset starting points; file keys override them.
inline RunConfig preset_config(const std::string &name) {
  RunConfig c;
  c.preset = name;
  if (name == "interval") return c;
  if (name == "example1") {
    // Dirichlet, m-power term and forcing paired with K_δu.
    c.delta = 0.05;
    c.power_coef = 1.0;
    c.m = 3.0;
    c.f = "const:10";
    c.constraint = "dirichlet";
    c.grading.h_int = 0.005;
    return c;
  }
  if (name == "example2") {
    // Neumann with interior and boundary linear functionals.
    c.delta = 0.05;
    c.f = "cos_pi";
    c.g_boundary = "one";
    c.constraint = "neumann";
    c.grading.h_int = 0.005;
    return c;
  }
  if (name == "example3") {
    // Robin, double well, β = d + 2s with s = 0.8.
    c.delta = 0.05;
    c.beta = 1.0 + 2 * 0.8;
    c.double_well = 1.0;
    // small forcing: larger data push every state past the well's barrier
    c.f = "const:0.5";
    c.g_boundary = "const:0.5";
    c.robin_b = "one";
    c.robin_floor = 1.0;
    c.constraint = "robin";
    c.grading.h_int = 0.005;
    // the hypersingular kernel (α < 0) puts the gradient's roundoff floor near 1e-7
    c.solver.tolerance = 1e-6;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (interval | example1 | example2 | example3)");
}

namespace detail {

class TomlReader {
public:
  TomlReader(const toml::table &root, RunConfig &cfg) : root_(root), cfg_(cfg) {}

  void read() {
    static const std::set<std::string> blocks{"preset",     "domain", "profile", "kernel",
                                              "energy",     "constraint", "mesh", "quadrature",
                                              "solver",     "sweep",  "poincare", "output"};
    for (const auto &[k, v] : root_) {
      (void)v;
      if (!blocks.count(std::string(k.str())))
        throw ConfigError("config: unknown block '" + std::string(k.str()) + "'");
    }
    block("domain", {{"shape", str(cfg_.shape)}, {"bounds", vec(cfg_.bounds)}});
    block("profile", {{"q", str(cfg_.q)},
                      {"q_scale", num(cfg_.q_scale)},
                      {"q_power", integer(cfg_.q_power)},
                      {"q_knee", num(cfg_.q_knee)},
                      {"lambda", str(cfg_.lambda)},
                      {"lambda_width", num(cfg_.lambda_width)},
                      {"delta", num(cfg_.delta)}});
    block("kernel", {{"p", num(cfg_.p)},
                     {"beta", num(cfg_.beta)},
                     {"rho", str(cfg_.rho)},
                     {"rho_c", num(cfg_.rho_c)},
                     {"psi", str(cfg_.psi)},
                     {"psi_radius", num(cfg_.psi_radius)}});
    block("energy", {{"power_coef", num(cfg_.power_coef)},
                     {"m", num(cfg_.m)},
                     {"f", str(cfg_.f)},
                     {"f_tilde", str(cfg_.f_tilde)},
                     {"g_boundary", str(cfg_.g_boundary)},
                     {"double_well", num(cfg_.double_well)},
                     {"well_m", num(cfg_.well_m)},
                     {"robin_b", str(cfg_.robin_b)},
                     {"robin_floor", num(cfg_.robin_floor)},
                     {"theta", num(cfg_.theta)},
                     {"Theta", num(cfg_.Theta)}});
    block("constraint", {{"kind", str(cfg_.constraint)}, {"g", str(cfg_.g)}});
    block("mesh", {{"h_int", num(cfg_.grading.h_int)},
                   {"ratio", num(cfg_.grading.ratio)},
                   {"h_min", num(cfg_.grading.h_min)},
                   {"resolution", num(cfg_.grading.resolution)},
                   {"node_budget", size(cfg_.grading.node_budget)}});
    block("quadrature", {{"radial", integer(cfg_.quadrature.radial)},
                         {"piece_points", integer(cfg_.quadrature.piece_points)},
                         {"angular", integer(cfg_.quadrature.angular)},
                         {"cell_points", integer(cfg_.quadrature.cell_points)},
                         {"sub_resolution_factor", num(cfg_.quadrature.sub_resolution_factor)},
                         {"split_at_mesh", boolean(cfg_.quadrature.split_at_mesh)},
                         {"conv_gauss_points", integer(cfg_.convolution.gauss_points)},
                         {"conv_radial", integer(cfg_.convolution.min_radial)},
                         {"conv_angular", integer(cfg_.convolution.min_angular)}});
    block("solver", {{"mode", str(cfg_.mode)},
                     {"tolerance", num(cfg_.solver.tolerance)},
                     {"max_iterations", integer(cfg_.solver.max_iterations)},
                     {"history", integer(cfg_.solver.history)},
                     {"cg_tolerance", num(cfg_.solver.cg_tolerance)},
                     {"initial", str(cfg_.initial)},
                     {"seed", seed(cfg_.solver.seed)}});
    block("sweep", {{"deltas", vec(cfg_.deltas)},
                    {"reference", str(cfg_.reference)},
                    {"reference_h", num(cfg_.reference_h)}});
    block("poincare", {{"constraints", strvec(cfg_.poincare_constraints)}, {"b", num(cfg_.poincare_b)}});
    block("output", {{"dir", str(cfg_.out_dir)}});
  }

private:
  using Setter = std::function<void(const toml::node &, const std::string &)>;

  void block(const std::string &name, const std::map<std::string, Setter> &keys) {
    const toml::node *n = root_.get(name);
    if (!n) return;
    const toml::table *t = n->as_table();
    if (!t) throw ConfigError("config: '" + name + "' must be a table");
    for (const auto &[k, v] : *t) {
      const std::string key(k.str());
      auto it = keys.find(key);
      if (it == keys.end()) throw ConfigError("config: unknown key '" + name + "." + key + "'");
      it->second(v, name + "." + key);
    }
  }

  static Setter num(double &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      if (auto v = n.value<double>()) dst = *v;
      else throw ConfigError("config: '" + key + "' must be a number");
    };
  }
  static Setter integer(int &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      if (auto v = n.value<std::int64_t>(); v && n.is_integer()) dst = static_cast<int>(*v);
      else throw ConfigError("config: '" + key + "' must be an integer");
    };
  }
  static Setter size(std::size_t &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      if (auto v = n.value<std::int64_t>(); v && n.is_integer() && *v > 0) dst = static_cast<std::size_t>(*v);
      else throw ConfigError("config: '" + key + "' must be a positive integer");
    };
  }
  static Setter seed(std::uint64_t &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      if (auto v = n.value<std::int64_t>(); v && n.is_integer() && *v >= 0) dst = static_cast<std::uint64_t>(*v);
      else throw ConfigError("config: '" + key + "' must be a nonnegative integer");
    };
  }
  static Setter boolean(bool &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      if (auto v = n.value<bool>()) dst = *v;
      else throw ConfigError("config: '" + key + "' must be true or false");
    };
  }
  static Setter str(std::string &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      if (auto v = n.value<std::string>()) dst = *v;
      else throw ConfigError("config: '" + key + "' must be a string");
    };
  }
  static Setter vec(std::vector<double> &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      const toml::array *a = n.as_array();
      if (!a) throw ConfigError("config: '" + key + "' must be an array of numbers");
      dst.clear();
      for (const auto &e : *a) {
        auto v = e.value<double>();
        if (!v) throw ConfigError("config: '" + key + "' must be an array of numbers");
        dst.push_back(*v);
      }
    };
  }
  static Setter strvec(std::vector<std::string> &dst) {
    return [&dst](const toml::node &n, const std::string &key) {
      const toml::array *a = n.as_array();
      if (!a) throw ConfigError("config: '" + key + "' must be an array of strings");
      dst.clear();
      for (const auto &e : *a) {
        auto v = e.value<std::string>();
        if (!v) throw ConfigError("config: '" + key + "' must be an array of strings");
        dst.push_back(*v);
      }
    };
  }

  const toml::table &root_;
  RunConfig &cfg_;
};

} // namespace detail

inline RunConfig parse_config(const std::string &text, const std::filesystem::path &base_dir = ".") {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error &e) {
    std::ostringstream os;
    os << "config: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  std::string preset = "interval";
  if (const toml::node *n = root.get("preset")) {
    auto v = n->value<std::string>();
    if (!v) throw ConfigError("config: 'preset' must be a string");
    preset = *v;
  }
  RunConfig cfg = preset_config(preset);
  detail::TomlReader(root, cfg).read();
  cfg.base_dir = base_dir;
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

/// Resolved config as TOML (round-trips through parse_config).
inline std::string config_toml(const RunConfig &c) {
  auto arr = [](const std::vector<double> &v) {
    toml::array a;
    for (double x : v) a.push_back(x);
    return a;
  };
  toml::array pc;
  for (const auto &s : c.poincare_constraints) pc.push_back(s);
  toml::table t{
      {"preset", c.preset},
      {"domain", toml::table{{"shape", c.shape}, {"bounds", arr(c.bounds)}}},
      {"profile", toml::table{{"q", c.q},
                              {"q_scale", c.q_scale},
                              {"q_power", c.q_power},
                              {"q_knee", c.q_knee},
                              {"lambda", c.lambda},
                              {"lambda_width", c.lambda_width},
                              {"delta", c.delta}}},
      {"kernel", toml::table{{"p", c.p},
                             {"beta", c.beta},
                             {"rho", c.rho},
                             {"rho_c", c.rho_c},
                             {"psi", c.psi},
                             {"psi_radius", c.psi_radius}}},
      {"energy", toml::table{{"power_coef", c.power_coef},
                             {"m", c.m},
                             {"f", c.f},
                             {"f_tilde", c.f_tilde},
                             {"g_boundary", c.g_boundary},
                             {"double_well", c.double_well},
                             {"well_m", c.well_m},
                             {"robin_b", c.robin_b},
                             {"robin_floor", c.robin_floor},
                             {"theta", c.theta},
                             {"Theta", c.Theta}}},
      {"constraint", toml::table{{"kind", c.constraint}, {"g", c.g}}},
      {"mesh", toml::table{{"h_int", c.grading.h_int},
                           {"ratio", c.grading.ratio},
                           {"h_min", c.grading.h_min},
                           {"resolution", c.grading.resolution},
                           {"node_budget", static_cast<std::int64_t>(c.grading.node_budget)}}},
      {"quadrature", toml::table{{"radial", c.quadrature.radial},
                                 {"piece_points", c.quadrature.piece_points},
                                 {"angular", c.quadrature.angular},
                                 {"cell_points", c.quadrature.cell_points},
                                 {"sub_resolution_factor", c.quadrature.sub_resolution_factor},
                                 {"split_at_mesh", c.quadrature.split_at_mesh},
                                 {"conv_gauss_points", c.convolution.gauss_points},
                                 {"conv_radial", c.convolution.min_radial},
                                 {"conv_angular", c.convolution.min_angular}}},
      {"solver", toml::table{{"mode", c.mode},
                             {"tolerance", c.solver.tolerance},
                             {"max_iterations", c.solver.max_iterations},
                             {"history", c.solver.history},
                             {"cg_tolerance", c.solver.cg_tolerance},
                             {"initial", c.initial},
                             {"seed", static_cast<std::int64_t>(c.solver.seed)}}},
      {"sweep", toml::table{{"deltas", arr(c.deltas)},
                            {"reference", c.reference},
                            {"reference_h", c.reference_h}}},
      {"poincare", toml::table{{"constraints", pc}, {"b", c.poincare_b}}},
      {"output", toml::table{{"dir", c.out_dir}}},
  };
  std::ostringstream os;
  os << t << "\n";
  return os.str();
}

// ---- builders ----------------------------------------------------------

inline Domain make_domain(const RunConfig &c) {
  const auto &b = c.bounds;
  auto need = [&](std::size_t n) {
    if (b.size() != n)
      throw ConfigError("domain." + c.shape + " needs " + std::to_string(n) + " bounds, got " +
                        std::to_string(b.size()));
  };
  if (c.shape == "interval") {
    need(2);
    return Domain::interval(b[0], b[1]);
  }
  if (c.shape == "rectangle") {
    need(4);
    return Domain::rectangle(b[0], b[1], b[2], b[3]);
  }
  if (c.shape == "disc") {
    need(3);
    return Domain::disc(b[0], b[1], b[2]);
  }
  throw ConfigError("unknown domain shape '" + c.shape + "' (interval | rectangle | disc)");
}

inline QSpec make_q(const RunConfig &c) {
  if (c.q == "identity") return QSpec::identity();
  if (c.q == "arctan") return QSpec::arctan(c.q_scale);
  if (c.q == "mollified_power") return QSpec::mollified_power(c.q_power, c.q_knee);
  if (const auto path = detail::table_path(c.q); !path.empty()) {
    std::vector<double> r, v;
    for (const auto &[a, b] : detail::read_two_columns(c.base_dir / path)) r.push_back(a), v.push_back(b);
    return QSpec::table(std::move(r), std::move(v));
  }
  throw ConfigError("unknown q '" + c.q + "' (identity | arctan | mollified_power | table:<csv>)");
}

inline LambdaSpec make_lambda(const RunConfig &c) {
  if (c.lambda == "distance") return LambdaSpec::distance();
  if (c.lambda == "smoothed") return LambdaSpec::smoothed(c.lambda_width);
  throw ConfigError("unknown lambda '" + c.lambda + "' (distance | smoothed)");
}

inline ExponentPair make_exponents(const RunConfig &c) {
  ExponentPair e{c.p, c.beta, make_domain(c).dim()};
  e.validate();
  return e;
}

inline RhoSpec make_rho(const RunConfig &c) {
  if (c.rho == "indicator") return RhoSpec::indicator(c.rho_c);
  if (c.rho == "quartic") return RhoSpec::quartic(c.rho_c);
  if (const auto path = detail::table_path(c.rho); !path.empty()) {
    std::vector<double> r, v;
    for (const auto &[a, b] : detail::read_two_columns(c.base_dir / path)) r.push_back(a), v.push_back(b);
    return RhoSpec::table(std::move(r), std::move(v));
  }
  throw ConfigError("unknown rho '" + c.rho + "' (indicator | quartic | table:<csv>)");
}

inline PsiSpec make_psi(const RunConfig &c) {
  const int d = make_domain(c).dim();
  if (c.psi == "quartic") return PsiSpec::quartic(d, c.psi_radius);
  if (c.psi == "smooth_bump") return PsiSpec::smooth_bump(d, c.psi_radius);
  throw ConfigError("unknown psi '" + c.psi + "' (quartic | smooth_bump)");
}

inline ConstraintKind make_constraint_kind(const std::string &s) {
  if (s == "dirichlet") return ConstraintKind::Dirichlet;
  if (s == "neumann") return ConstraintKind::Neumann;
  if (s == "robin") return ConstraintKind::Robin;
  throw ConfigError("unknown constraint '" + s + "' (dirichlet | neumann | robin)");
}

inline LocalizationProfile make_profile(const RunConfig &c, double delta) {
  return {make_domain(c), make_q(c), make_lambda(c), delta};
}

inline MeshPtr make_mesh(const RunConfig &c, const LocalizationProfile &prof) {
  return std::make_shared<const Mesh>(build_graded_mesh(prof.domain(), c.grading, &prof));
}

inline std::vector<double> nodal(const Mesh &m, const std::function<double(const Point &)> &f) {
  std::vector<double> v(m.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(m.node(i));
  return v;
}

/// ProblemSpec at bulk horizon delta on a mesh graded for that delta.
inline ProblemSpec make_problem(const RunConfig &c, double delta, MeshPtr mesh = nullptr) {
  const LocalizationProfile prof = make_profile(c, delta);
  prof.require_admissible("config");
  if (!mesh) mesh = make_mesh(c, prof);
  const ExponentPair e = make_exponents(c);
  const RhoSpec rho = make_rho(c);
  const double rb = rho_bar(rho, e);
  const int d = e.d;
  auto field = [&](const std::string &name) {
    return name == "zero" ? std::vector<double>{} : nodal(*mesh, catalogue_function(name, d, rb));
  };
  ProblemSpec s{mesh, e, prof};
  s.phi = PhiSpec::power(c.p);
  s.rho = rho;
  s.psi = make_psi(c);
  s.lower.power_coef = c.power_coef;
  s.lower.m = c.m;
  s.lower.f = field(c.f);
  s.lower.f_tilde = field(c.f_tilde);
  s.lower.g_boundary = field(c.g_boundary);
  s.lower.double_well = c.double_well;
  s.lower.well_m = c.well_m;
  s.lower.robin_b = field(c.robin_b);
  s.lower.robin_floor = c.robin_floor;
  s.lower.theta = c.theta;
  s.lower.Theta = c.Theta;
  s.constraint.kind = make_constraint_kind(c.constraint);
  s.constraint.g = field(c.g);
  s.solver = c.solver;
  s.quadrature = c.quadrature;
  s.convolution = c.convolution;
  return s;
}

/// True when the run can use the exact quadratic path.
inline bool quadratic_run(const RunConfig &c) {
  if (c.mode == "quadratic") return true;
  if (c.mode == "lbfgs") return false;
  if (c.mode != "auto") throw ConfigError("unknown solver mode '" + c.mode + "' (auto | quadratic | lbfgs)");
  return c.p == 2.0 && c.double_well == 0.0 && (c.power_coef == 0.0 || c.m == 2.0);
}

} // namespace hetnl
