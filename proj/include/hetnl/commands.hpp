#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hetnl/config.hpp"
#include "hetnl/solver.hpp"

namespace hetnl {

namespace fs = std::filesystem;

/// Write through a temporary file and rename, so readers never see partial output.
inline void write_atomic(const fs::path &path, const std::string &content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline void echo_config(const RunConfig &cfg, const fs::path &out) {
  write_atomic(out / "config.toml", config_toml(cfg));
}

namespace detail {

inline std::string sweep_tag(double delta) {
  std::ostringstream os;
  os << "delta_" << delta;
  return os.str();
}

// Each suite runs guarded so one failure becomes a red row instead of an abort.
template <class F> void guarded(Report &rep, const std::string &name, F &&f) {
  try {
    f();
  } catch (const std::exception &e) {
    rep.add(name, std::numeric_limits<double>::quiet_NaN(), 0, false, e.what());
  }
}

inline std::vector<Point> interior_points(const Domain &dom, int n) {
  std::vector<Point> pts;
  const auto grid = validation_grid(dom, 64, 0);
  std::vector<Point> inner;
  for (const Point &x : grid)
    if (dom.contains(x) && dom.boundary_distance(x) > 0.02 * dom.diameter()) inner.push_back(x);
  const std::size_t step = std::max<std::size_t>(1, inner.size() / n);
  for (std::size_t i = 0; i < inner.size() && static_cast<int>(pts.size()) < n; i += step) pts.push_back(inner[i]);
  return pts;
}

} // namespace detail

/// All invariant suites for the configured domain, profile and kernel.
inline Report verify_report(const RunConfig &cfg) {
  Report rep;
  const Domain dom = make_domain(cfg);
  const ExponentPair e = make_exponents(cfg);
  const LocalizationProfile prof = make_profile(cfg, cfg.delta);

  detail::guarded(rep, "profile", [&] { rep.append(validate_profile(prof, validation_grid(dom))); });

  detail::guarded(rep, "normalization", [&] {
    const double cb = cbar(e.d, e.p);
    double worst = 0;
    std::string wit;
    for (const Point &x : detail::interior_points(dom, 50)) {
      const double r = std::abs(kernel_moment(e, prof, x) - cb) / cb;
      if (r > worst) worst = r, wit = "x=" + fmt_num(x.x) + "," + fmt_num(x.y);
    }
    rep.add("normalization", worst, 1e-6, worst <= 1e-6, wit);
  });

  detail::guarded(rep, "capital_psi_bound", [&] {
    const PsiSpec psi = make_psi(cfg);
    double worst = 0;
    bool ok = true;
    for (const Point &x : detail::interior_points(dom, 10)) {
      const CapitalPsi cp = capital_psi(psi, prof, x);
      worst = std::max(worst, cp.value / cp.bound);
      ok = ok && cp.within_bound();
    }
    rep.add("capital_psi_bound", worst, 1.0, ok);
  });

  if (!prof.admissible()) return rep; // mesh-based suites need an admissible δ

  detail::guarded(rep, "mesh_suites", [&] {
    const MeshPtr mesh = make_mesh(cfg, prof);
    const RhoSpec rho = make_rho(cfg);
    const double rb = rho_bar(rho, e);
    const PhiSpec phi = PhiSpec::power(e.p);

    // affine exactness
    const Point a = e.d == 1 ? Point{1.7, 0} : Point{1.2, -0.7};
    const auto affine = DiscreteField::from_function(mesh, [&](const Point &x) { return dot(a, x) + 0.3; });
    const double semi = nonlocal_seminorm(affine, e, prof, cfg.quadrature);
    const double gnorm = norm(a) * std::pow(dom.measure(), 1.0 / e.p);
    rep.add("affine_seminorm", std::abs(semi - gnorm) / gnorm, 1e-6, std::abs(semi - gnorm) <= 1e-6 * gnorm);
    const double Ed = energy_E_delta(affine, phi, rho, e, prof, cfg.quadrature);
    const double E0 = energy_E0(affine, phi, rb, e.d, cfg.quadrature.angular, cfg.quadrature.cell_points);
    rep.add("affine_energy", std::abs(Ed - E0) / E0, 1e-6, std::abs(Ed - E0) <= 1e-6 * E0);

    // horizon invariance against the doubled horizon (when admissible)
    const double d2 = 2 * cfg.delta;
    const LocalizationProfile prof2 = prof.with_delta(d2);
    if (prof2.admissible()) {
      const auto [lo, hi] = horizon_bounds(e, cfg.delta, d2);
      double rmin = 1e300, rmax = 0;
      for (const auto &[name, f] : field_suite(e.d)) {
        const auto u = DiscreteField::from_function(mesh, f);
        const double r = nonlocal_seminorm(u, e, prof, cfg.quadrature) /
                         nonlocal_seminorm(u, e, prof2, cfg.quadrature);
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
      }
      rep.add("horizon_lower", rmin, lo, rmin >= lo);
      rep.add("horizon_upper", rmax, hi, rmax <= hi);
    }

    // kernel independence: [u]_𝔙 / [u]_𝔚 on the suite (reported)
    {
      double lo = 1e300, hi = 0;
      for (const auto &[name, f] : field_suite(e.d)) {
        const auto u = DiscreteField::from_function(mesh, f);
        const double r = general_seminorm(u, e, prof, rho, cfg.quadrature) /
                         nonlocal_seminorm(u, e, prof, cfg.quadrature);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      rep.add("kernel_comparison_low", lo, 0.0, lo > 0);
      rep.add("kernel_comparison_high", hi, std::numeric_limits<double>::infinity(), std::isfinite(hi));
    }

    // convolution
    const ConvolutionOperator K = assemble_K(mesh, prof, make_psi(cfg), cfg.convolution);
    const auto Ka = K.apply(affine.values());
    double aff = 0, row = 0, neg = 0;
    const auto one = K.apply(std::vector<double>(mesh->num_nodes(), 1.0));
    for (std::size_t i = 0; i < Ka.size(); ++i) {
      aff = std::max(aff, std::abs(Ka[i] - affine[i]));
      row = std::max(row, std::abs(one[i] - 1.0));
    }
    const auto M = K.matrix();
    for (int k = 0; k < M.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(M, k); it; ++it) neg = std::min(neg, it.value());
    rep.add("conv_row_sum", row, 1e-12, row <= 1e-12);
    rep.add("conv_nonnegative", neg, 0.0, neg >= 0.0);
    if (e.d == 1) rep.add("conv_affine", aff, 1e-8, aff <= 1e-8);
    else rep.add("conv_affine", aff, std::numeric_limits<double>::infinity(), true, "reported (2-D rows are not symmetric near the boundary)");
    const auto u = DiscreteField::from_function(mesh, catalogue_function("sin_pi", e.d, rb));
    const auto Ku = apply_K(K, u);
    double tr = 0;
    for (int i : mesh->boundary_nodes()) tr = std::max(tr, std::abs(Ku[i] - u[i]));
    rep.add("conv_trace", tr, 0.0, tr == 0.0);
    // measured ratio ‖u−K_δu‖ / (δ q(diam) [u]) (reported; the constant is not explicit)
    std::vector<double> diff(u.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = u[i] - Ku[i];
    const double ratio = lp_norm(DiscreteField(mesh, diff), e.p) /
                         (cfg.delta * prof.q().eval(dom.diameter()).value *
                          nonlocal_seminorm(u, e, prof, cfg.quadrature));
    rep.add("conv_error_ratio", ratio, std::numeric_limits<double>::infinity(), std::isfinite(ratio));
  });
  return rep;
}

inline int cmd_verify(const RunConfig &cfg, const fs::path &out) {
  const Report rep = verify_report(cfg);
  echo_config(cfg, out);
  write_atomic(out / "verify.csv", rep.csv());
  for (const auto &r : rep.rows)
    if (!r.pass) std::cerr << "FAILED " << r.name << " measured=" << fmt_num(r.measured) << " bound=" << fmt_num(r.bound) << (r.witness.empty() ? "" : " (" + r.witness + ")") << "\n";
  return rep.passed() ? 0 : 1;
}

/// One solve at the config's δ (or the given one).
inline SolveResult run_solve(const RunConfig &cfg, double delta, MeshPtr mesh = nullptr,
                             bool local = false) {
  RunConfig c = cfg;
  if (local) c.quadrature.local_only = true;
  const ProblemSpec spec = make_problem(c, delta, std::move(mesh));
  const Problem P(spec);
  if (quadratic_run(c)) return quadratic_solve(P);
  std::optional<std::vector<double>> init;
  if (c.initial == "random") init = random_field(spec.mesh->num_nodes(), c.solver.seed);
  else if (c.initial != "default") throw ConfigError("unknown initial '" + c.initial + "' (default | random)");
  return minimize(P, init);
}

inline nlohmann::ordered_json result_json(const RunConfig &cfg, const SolveResult &r, double delta) {
  nlohmann::ordered_json j;
  j["config"] = config_toml(cfg);
  j["delta"] = delta;
  j["method"] = quadratic_run(cfg) ? "conjugate_gradient" : "lbfgs";
  j["converged"] = r.converged;
  j["minimizer"] = r.local_minimizer_only ? "local minimizer" : "minimizer";
  j["seed"] = cfg.solver.seed;
  j["iterations"] = r.iterations;
  j["gradient_norm"] = r.gradient_norm;
  j["message"] = r.message;
  j["nodes"] = r.field.size();
  j["mean"] = mean_value(r.field);
  j["energy"] = {{"E_delta", r.energy.E_delta}, {"G", r.energy.G},
                 {"Gtilde", r.energy.G_tilde},  {"Gbeta", r.energy.G_beta},
                 {"robin", r.energy.robin},     {"total", r.energy.total},
                 {"surrogate_share", r.energy.surrogate_share}};
  return j;
}

inline int cmd_solve(const RunConfig &cfg, const fs::path &out) {
  echo_config(cfg, out);
  const SolveResult r = run_solve(cfg, cfg.delta);
  write_atomic(out / "solution.csv", field_csv(r.field));
  std::string trace = "iteration,energy\n";
  for (std::size_t k = 0; k < r.energy_trace.size(); ++k)
    trace += std::to_string(k) + "," + fmt_num(r.energy_trace[k]) + "\n";
  write_atomic(out / "trace.csv", trace);
  write_atomic(out / "energy.csv", EnergyReport::csv_header() + "\n" + r.energy.csv_row() + "\n");
  write_atomic(out / "report.json", result_json(cfg, r, cfg.delta).dump(2) + "\n");
  if (!r.converged) {
    std::cerr << "solve did not converge: " << r.message << " (gradient norm " << fmt_num(r.gradient_norm) << ")\n";
    return 2;
  }
  return 0;
}

struct StudyRow {
  double delta = 0;
  std::size_t nodes = 0;
  double min_F = 0;
  double lp_error = 0;
  double E_delta_ref = 0;
  double E0_ref = 0;
  double local_min_F = 0;
  double surrogate_share = 0;
  bool converged = false;
  int iterations = 0;

  static std::string header() {
    return "delta,nodes,min_F,lp_error,E_delta_ref,E0_ref,local_min_F,surrogate_share,converged,iterations";
  }
  [[nodiscard]] std::string csv() const {
    return fmt_num(delta) + "," + std::to_string(nodes) + "," + fmt_num(min_F) + "," + fmt_num(lp_error) +
           "," + fmt_num(E_delta_ref) + "," + fmt_num(E0_ref) + "," + fmt_num(local_min_F) + "," +
           fmt_num(surrogate_share) + "," + (converged ? "1" : "0") + "," + std::to_string(iterations);
  }
};

/// Γ-convergence sweep. The local reference is a solve with the local density
/// everywhere, a horizon a quarter of the smallest δ, on the finest sweep mesh.
inline std::vector<StudyRow> gamma_study(const RunConfig &cfg) {
  if (cfg.deltas.size() < 3) throw ConfigError("gamma-study: the sweep needs at least 3 deltas");
  for (double d : cfg.deltas) make_profile(cfg, d).require_admissible("gamma-study sweep");
  const ExponentPair e = make_exponents(cfg);
  const RhoSpec rho = make_rho(cfg);
  const double rb = rho_bar(rho, e);
  const PhiSpec phi = PhiSpec::power(e.p);

  const double dmin = *std::min_element(cfg.deltas.begin(), cfg.deltas.end());
  RunConfig lc = cfg;
  if (cfg.reference_h > 0) lc.grading.h_int = cfg.reference_h;
  const MeshPtr ref_mesh = make_mesh(lc, make_profile(lc, dmin));
  const SolveResult local = run_solve(lc, dmin / 4, ref_mesh, true);

  std::function<double(const Point &)> ref;
  if (cfg.reference == "local" || cfg.reference == "none") {
    const DiscreteField lf = local.field;
    ref = [lf](const Point &x) { return interpolate(lf, x); };
  } else {
    ref = catalogue_function(cfg.reference, e.d, rb);
  }

  std::vector<StudyRow> rows(cfg.deltas.size());
  parallel_for(cfg.deltas.size(), [&](std::size_t k) {
    const double delta = cfg.deltas[k];
    const LocalizationProfile prof = make_profile(cfg, delta);
    const MeshPtr mesh = make_mesh(cfg, prof);
    const SolveResult r = run_solve(cfg, delta, mesh);
    const auto uref = DiscreteField::from_function(mesh, ref);
    StudyRow &row = rows[k];
    row.delta = delta;
    row.nodes = mesh->num_nodes();
    row.min_F = r.energy.total;
    row.lp_error = lp_distance(r.field, ref, e.p);
    row.E_delta_ref = energy_E_delta(uref, phi, rho, e, prof, cfg.quadrature);
    row.E0_ref = energy_E0(uref, phi, rb, e.d, cfg.quadrature.angular, cfg.quadrature.cell_points);
    row.local_min_F = local.energy.total;
    row.surrogate_share = r.energy.surrogate_share;
    row.converged = r.converged;
    row.iterations = r.iterations;
  });
  return rows;
}

inline int cmd_gamma_study(const RunConfig &cfg, const fs::path &out) {
  echo_config(cfg, out);
  const auto rows = gamma_study(cfg);
  std::string csv = StudyRow::header() + "\n";
  bool ok = true;
  for (const auto &r : rows) {
    csv += r.csv() + "\n";
    ok = ok && r.converged;
  }
  write_atomic(out / "study.csv", csv);
  return ok ? 0 : 2;
}

struct PoincareRow {
  double delta;
  std::string constraint;
  double constant;
  double lambda_min;
  int iterations;
  bool converged;
};

inline std::vector<PoincareRow> poincare_study(const RunConfig &cfg) {
  const ExponentPair e = make_exponents(cfg);
  std::vector<double> deltas = cfg.deltas.empty() ? std::vector<double>{cfg.delta} : cfg.deltas;
  std::vector<PoincareRow> rows;
  std::mutex mu;
  std::vector<std::vector<PoincareRow>> per(deltas.size());
  parallel_for(deltas.size(), [&](std::size_t k) {
    const LocalizationProfile prof = make_profile(cfg, deltas[k]);
    prof.require_admissible("poincare");
    const MeshPtr mesh = make_mesh(cfg, prof);
    for (const auto &cname : cfg.poincare_constraints) {
      PoincareSpec ps{mesh, e, prof};
      ps.kind = make_constraint_kind(cname);
      ps.quadrature = cfg.quadrature;
      if (ps.kind == ConstraintKind::Robin) ps.robin_b.assign(mesh->num_nodes(), cfg.poincare_b);
      if (e.p == 2.0) {
        const PoincareResult r = poincare_estimate(ps);
        per[k].push_back({deltas[k], cname, r.constant, r.lambda_min, r.iterations, r.converged});
      } else {
        std::vector<std::pair<std::string, DiscreteField>> fields;
        for (const auto &[name, f] : field_suite(e.d)) {
          auto u = DiscreteField::from_function(mesh, f);
          if (ps.kind == ConstraintKind::Dirichlet)
            for (int i : mesh->boundary_nodes()) u.values()[i] = 0.0;
          fields.emplace_back(name, std::move(u));
        }
        double best = 0;
        for (const auto &row : poincare_suite(ps, fields)) best = std::max(best, row.ratio);
        per[k].push_back({deltas[k], cname, best, std::numeric_limits<double>::quiet_NaN(), 0, true});
      }
    }
  });
  for (auto &v : per) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

inline int cmd_poincare(const RunConfig &cfg, const fs::path &out) {
  echo_config(cfg, out);
  const auto rows = poincare_study(cfg);
  std::string csv = "delta,constraint,constant,lambda_min,iterations,converged\n";
  for (const auto &r : rows)
    csv += fmt_num(r.delta) + "," + r.constraint + "," + fmt_num(r.constant) + "," + fmt_num(r.lambda_min) +
           "," + std::to_string(r.iterations) + "," + (r.converged ? "1" : "0") + "\n";
  write_atomic(out / "poincare.csv", csv);
  return 0;
}

} // namespace hetnl
