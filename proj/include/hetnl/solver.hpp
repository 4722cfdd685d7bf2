#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hetnl/problem.hpp"

namespace hetnl {

struct SolveResult {
  DiscreteField field;
  EnergyReport energy;
  double gradient_norm = 0;
  int iterations = 0;
  bool converged = false;
  bool local_minimizer_only = false;
  std::vector<double> energy_trace;
  std::string message;
};

struct CGResult {
  int iterations = 0;
  double residual = 0; ///< relative
  bool converged = false;
};

/// Jacobi-preconditioned CG on y = A(x). Throws SolverError on negative
/// curvature, reporting the smallest Ritz value of the Lanczos tridiagonal.
template <class Op>
CGResult pcg(Op &&A, const Eigen::VectorXd &diag, const Eigen::VectorXd &b, Eigen::VectorXd &x,
             double tol, int max_iter) {
  const int n = static_cast<int>(b.size());
  Eigen::VectorXd dinv(n);
  for (int i = 0; i < n; ++i) dinv(i) = diag(i) > 0 ? 1.0 / diag(i) : 1.0;
  Eigen::VectorXd r = b - A(x);
  const double bn = std::max(b.norm(), 1e-300);
  Eigen::VectorXd z = dinv.cwiseProduct(r), p = z;
  double rz = r.dot(z);
  std::vector<double> alphas, betas;
  CGResult out;
  for (int k = 0; k < max_iter; ++k) {
    out.residual = r.norm() / bn;
    if (out.residual <= tol) {
      out.converged = true;
      return out;
    }
    const Eigen::VectorXd Ap = A(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0)) {
      double ritz = pAp / std::max(p.squaredNorm(), 1e-300);
      if (!alphas.empty()) {
        const int m = static_cast<int>(alphas.size());
        Eigen::VectorXd dg(m), off(std::max(m - 1, 0));
        for (int i = 0; i < m; ++i) {
          dg(i) = 1.0 / alphas[i] + (i > 0 ? betas[i - 1] / alphas[i - 1] : 0.0);
          if (i + 1 < m) off(i) = -std::sqrt(std::max(betas[i], 0.0)) / alphas[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(dg, off, Eigen::EigenvaluesOnly);
        ritz = std::min(ritz, es.eigenvalues()(0));
      }
      throw SolverError("quadratic_solve: operator is not positive definite (curvature " +
                        fmt_num(pAp) + ", smallest Ritz estimate " + fmt_num(ritz) + ")");
    }
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    z = dinv.cwiseProduct(r);
    const double rz_new = r.dot(z);
    const double beta = rz_new / rz;
    alphas.push_back(alpha);
    betas.push_back(beta);
    rz = rz_new;
    p = z + beta * p;
    out.iterations = k + 1;
  }
  out.residual = r.norm() / bn;
  out.converged = out.residual <= tol;
  return out;
}

namespace detail {

inline SparseMatrix selection(const std::vector<int> &rows, int n) {
  SparseMatrix S(static_cast<int>(rows.size()), n);
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t k = 0; k < rows.size(); ++k) t.emplace_back(static_cast<int>(k), rows[k], 1.0);
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

/// Coordinates x of the admissible set and the map x -> u.
class Reduction {
public:
  Reduction(const Problem &P) : kind_(P.spec().constraint.kind), n_(P.mesh().num_nodes()) {
    const auto lm = P.lumped_mass();
    if (kind_ == ConstraintKind::Dirichlet) {
      const auto dn = P.dirichlet_nodes();
      std::vector<char> fixed(n_, 0);
      for (int i : dn) fixed[i] = 1;
      base_.assign(n_, 0.0);
      const auto &g = P.spec().constraint.g;
      for (int i : dn) base_[i] = g.empty() ? 0.0 : g[i];
      for (std::size_t i = 0; i < n_; ++i)
        if (!fixed[i]) free_.push_back(static_cast<int>(i));
    } else {
      for (std::size_t i = 0; i < n_; ++i) free_.push_back(static_cast<int>(i));
    }
    w_ = P.mass_weights();
    W_ = w_.sum();
    m_.resize(free_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) m_[k] = lm[free_[k]];
  }

  [[nodiscard]] std::size_t size() const { return free_.size(); }
  [[nodiscard]] const std::vector<int> &free() const { return free_; }
  [[nodiscard]] ConstraintKind kind() const { return kind_; }

  [[nodiscard]] std::vector<double> to_u(const Eigen::VectorXd &x) const {
    std::vector<double> u;
    if (kind_ == ConstraintKind::Dirichlet) {
      u = base_;
      for (std::size_t k = 0; k < free_.size(); ++k) u[free_[k]] = x(static_cast<int>(k));
      return u;
    }
    u.assign(x.data(), x.data() + x.size());
    if (kind_ == ConstraintKind::Neumann) {
      const double mean = w_.dot(x) / W_;
      for (double &v : u) v -= mean;
    }
    return u;
  }

  [[nodiscard]] Eigen::VectorXd to_x(const std::vector<double> &u) const {
    Eigen::VectorXd x(static_cast<int>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) x(static_cast<int>(k)) = u[free_[k]];
    return x;
  }

  /// Gradient with respect to x of F(u(x)).
  [[nodiscard]] Eigen::VectorXd pull_back(const std::vector<double> &gu) const {
    Eigen::VectorXd g = to_x(gu);
    if (kind_ == ConstraintKind::Neumann) g -= w_ * (g.sum() / W_);
    return g;
  }

  /// Lumped-mass dual norm (Σ g_i²/m_i)^{1/2}.
  [[nodiscard]] double dual_norm(const Eigen::VectorXd &g) const {
    double s = 0;
    for (int k = 0; k < g.size(); ++k) s += g(k) * g(k) / m_[k];
    return std::sqrt(s);
  }

  [[nodiscard]] SparseMatrix restrict(const SparseMatrix &A) const {
    if (kind_ != ConstraintKind::Dirichlet) return A;
    const SparseMatrix S = selection(free_, static_cast<int>(n_));
    SparseMatrix r = S * A * SparseMatrix(S.transpose());
    r.makeCompressed();
    return r;
  }

  [[nodiscard]] const std::vector<double> &base() const { return base_; }

private:
  ConstraintKind kind_;
  std::size_t n_;
  std::vector<int> free_;
  std::vector<double> base_, m_;
  Eigen::VectorXd w_;
  double W_ = 1;
};

/// Harmonic-type extension of boundary data: linear in 1-D, a Coons patch on
/// rectangles, radial blend toward the boundary mean on discs.
inline std::vector<double> extend_boundary_data(const Mesh &m, const std::vector<double> &g) {
  const std::size_t n = m.num_nodes();
  std::vector<double> u(n, 0.0);
  if (g.empty()) return u;
  const auto &ax = m.axis_x();
  switch (m.kind()) {
  case MeshKind::Interval: {
    const double a = g.front(), b = g.back(), L = ax.back() - ax.front();
    for (std::size_t i = 0; i < n; ++i) u[i] = a + (b - a) * (ax[i] - ax.front()) / L;
    break;
  }
  case MeshKind::Tensor: {
    const auto &ay = m.axis_y();
    const int nx = static_cast<int>(ax.size()), ny = static_cast<int>(ay.size());
    auto G = [&](int i, int j) { return g[m.grid_node(i, j)]; };
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double s = (ax[i] - ax[0]) / (ax[nx - 1] - ax[0]);
        const double t = (ay[j] - ay[0]) / (ay[ny - 1] - ay[0]);
        const double v = (1 - s) * G(0, j) + s * G(nx - 1, j) + (1 - t) * G(i, 0) + t * G(i, ny - 1) -
                         ((1 - s) * (1 - t) * G(0, 0) + s * (1 - t) * G(nx - 1, 0) +
                          s * t * G(nx - 1, ny - 1) + (1 - s) * t * G(0, ny - 1));
        u[m.grid_node(i, j)] = v;
      }
    break;
  }
  case MeshKind::Polar: {
    const int nr = static_cast<int>(ax.size()), nt = m.n_theta();
    double mean = 0;
    for (int j = 0; j < nt; ++j) mean += g[m.grid_node(nr - 1, j)] / nt;
    const double R = ax.back();
    u[0] = mean;
    for (int i = 1; i < nr; ++i)
      for (int j = 0; j < nt; ++j)
        u[m.grid_node(i, j)] = mean + ax[i] / R * (g[m.grid_node(nr - 1, j)] - mean);
    break;
  }
  }
  return u;
}

inline SolveResult make_result(const Problem &P, std::vector<double> u) {
  SolveResult r{DiscreteField(P.spec().mesh, std::move(u)), {}, 0, 0, false, false, {}, {}};
  return r;
}

} // namespace detail

/// Exact minimizer of the quadratic F by preconditioned CG.
inline SolveResult quadratic_solve(const Problem &P) {
  const QuadraticForm qf = P.quadratic();
  const detail::Reduction red(P);
  const auto &cfg = P.spec().solver;
  const int n = static_cast<int>(P.mesh().num_nodes());
  SparseMatrix A;
  Eigen::VectorXd b;
  if (red.kind() == ConstraintKind::Dirichlet) {
    const Eigen::VectorXd ub = Problem::to_eigen(red.base());
    const Eigen::VectorXd rhs = qf.b - qf.A * ub;
    A = red.restrict(qf.A);
    b = red.to_x(std::vector<double>(rhs.data(), rhs.data() + n));
  } else {
    A = qf.A;
    b = qf.b;
  }
  const Eigen::VectorXd w = P.mass_weights();
  const double W = w.sum();
  const bool neumann = red.kind() == ConstraintKind::Neumann;
  // Neumann: solve PᵀAP v = Pᵀb with P = I − 1wᵀ/W, then u = Pv.
  auto proj = [&](const Eigen::VectorXd &v) -> Eigen::VectorXd {
    return v.array() - w.dot(v) / W;
  };
  auto proj_t = [&](const Eigen::VectorXd &v) -> Eigen::VectorXd { return v - w * (v.sum() / W); };
  auto op = [&](const Eigen::VectorXd &v) -> Eigen::VectorXd {
    if (!neumann) return A * v;
    return proj_t(A * proj(v));
  };
  const Eigen::VectorXd rhs = neumann ? proj_t(b) : b;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
  const CGResult cg = pcg(op, A.diagonal(), rhs, x, cfg.cg_tolerance,
                          std::max(cfg.max_iterations, 10 * static_cast<int>(rhs.size())));
  if (neumann) x = proj(x);
  SolveResult out = detail::make_result(P, red.to_u(x));
  out.iterations = cg.iterations;
  out.converged = cg.converged;
  out.energy = P.evaluate(out.field.values());
  out.energy_trace = {out.energy.total};
  out.gradient_norm = red.dual_norm(red.pull_back(P.gradient(out.field.values())));
  out.message = cg.converged ? "cg converged" : "cg hit the iteration limit";
  return out;
}

inline SolveResult quadratic_solve(const ProblemSpec &spec) { return quadratic_solve(Problem(spec)); }

/// Preconditioned L-BFGS with Armijo backtracking.
inline SolveResult minimize(const Problem &P, const std::optional<std::vector<double>> &initial = {}) {
  const auto &cfg = P.spec().solver;
  const detail::Reduction red(P);
  const Mesh &m = P.mesh();
  const std::size_t n = m.num_nodes();

  std::vector<double> u0;
  if (initial) {
    if (initial->size() != n) throw ConfigError("minimize: initial field has the wrong size");
    u0 = *initial;
  } else if (red.kind() == ConstraintKind::Dirichlet) {
    u0 = detail::extend_boundary_data(m, P.spec().constraint.g);
  } else {
    u0.assign(n, 0.0);
  }
  Eigen::VectorXd x = red.to_x(u0);

  // H0: the p = 2 form (or its lagged-diffusivity analogue for other Φ)
  // plus Robin and power-term mass and a small multiple of M, restricted.
  const bool lagged = !P.spec().phi.quadratic();
  const SparseMatrix &M = P.mass();
  const SparseMatrix Q = P.principal_form();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  auto factor = [&](const std::vector<double> &u) {
    SparseMatrix H = lagged ? P.secant_form(u) : Q;
    if (!P.spec().lower.robin_b.empty()) H += 2.0 * P.robin_mass();
    if (P.spec().lower.power_coef != 0.0) H += P.spec().lower.power_coef * M;
    if (P.spec().lower.double_well > 0.0) H += 2.0 * P.spec().lower.double_well * M;
    const double scale = H.diagonal().sum() / std::max(M.diagonal().sum(), 1e-300);
    H += (red.kind() == ConstraintKind::Neumann ? 1e-6 : 1e-10) * scale * M;
    ldlt.compute(red.restrict(H));
    if (ldlt.info() != Eigen::Success) throw SolverError("minimize: preconditioner factorization failed");
  };
  factor(red.to_u(x));
  constexpr int refresh = 8;
  constexpr double max_step = 0.1;

  auto eval = [&](const Eigen::VectorXd &v) { return P.value(red.to_u(v)); };
  auto grad = [&](const Eigen::VectorXd &v) { return red.pull_back(P.gradient(red.to_u(v))); };

  double F = eval(x);
  Eigen::VectorXd g = grad(x);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;
  SolveResult out = detail::make_result(P, red.to_u(x));
  out.energy_trace.push_back(F);
  out.local_minimizer_only = !P.convex();
  double gn = red.dual_norm(g);
  int it = 0, stalled = 0;
  double best_gn = gn;
  for (; it < cfg.max_iterations && gn > cfg.tolerance; ++it) {
    if (lagged && it > 0 && it % refresh == 0) factor(red.to_u(x));
    // two-loop recursion with H0⁻¹ = γ·ldlt⁻¹
    Eigen::VectorXd q = g;
    std::vector<double> a(mem.size());
    for (int k = static_cast<int>(mem.size()) - 1; k >= 0; --k) {
      const auto &[s, y] = mem[k];
      a[k] = s.dot(q) / y.dot(s);
      q -= a[k] * y;
    }
    double gamma = 1.0;
    if (!mem.empty()) {
      const auto &[s, y] = mem.back();
      const Eigen::VectorXd Hy = ldlt.solve(y);
      gamma = s.dot(y) / y.dot(Hy);
    }
    Eigen::VectorXd d = gamma * ldlt.solve(q);
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const auto &[s, y] = mem[k];
      const double bk = y.dot(d) / y.dot(s);
      d += (a[k] - bk) * s;
    }
    d = -d;
    double slope = g.dot(d);
    if (!(slope < 0)) {
      mem.clear();
      d = -ldlt.solve(g);
      slope = g.dot(d);
    }
    // Non-convex specs: cap the nodal step so descent stays in the current basin.
    double step = 1.0, Fn = F;
    if (!P.convex()) step = std::min(1.0, max_step / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300));
    Eigen::VectorXd xn, gnew;
    bool ok = false, have_g = false;
    // Energy differences below this are roundoff; there the directional
    // derivative decides instead (approximate Wolfe conditions).
    const double noise = 1e-12 * std::max(std::abs(F), 1e-300);
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + step * d;
      Fn = eval(xn);
      if (std::isfinite(Fn) && Fn <= F + 1e-4 * step * slope) {
        ok = true;
        break;
      }
      if (std::isfinite(Fn) && std::abs(Fn - F) <= noise) {
        gnew = grad(xn);
        const double dphi = gnew.dot(d);
        if (dphi >= 0.9 * slope && dphi <= (2e-4 - 1) * slope) {
          ok = have_g = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!ok || !(Fn <= F + noise)) {
      if (!mem.empty()) {
        mem.clear();
        continue;
      }
      out.message = "line search stalled";
      break;
    }
    if (!have_g) gnew = grad(xn);
    Eigen::VectorXd s = xn - x, y = gnew - g;
    if (s.dot(y) > 1e-14 * s.norm() * y.norm()) {
      mem.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(mem.size()) > cfg.history) mem.pop_front();
    }
    // energy flat at roundoff and the gradient no longer improving: further steps cannot help
    const double gn_new = red.dual_norm(gnew);
    const bool flat = F - Fn <= 4 * std::numeric_limits<double>::epsilon() * std::abs(F);
    best_gn = std::min(best_gn, gn);
    stalled = (flat && gn_new >= 0.5 * best_gn) ? stalled + 1 : 0;
    x = std::move(xn);
    g = gnew;
    F = Fn;
    gn = gn_new;
    out.energy_trace.push_back(F);
    if (stalled >= 20) {
      ++it;
      out.message = "energy stagnated at roundoff level";
      break;
    }
  }
  out.field = DiscreteField(P.spec().mesh, red.to_u(x));
  out.iterations = it;
  out.gradient_norm = gn;
  out.converged = gn <= cfg.tolerance;
  if (out.converged) out.message = "gradient tolerance reached";
  else if (out.message.empty()) out.message = "iteration limit reached";
  out.energy = P.evaluate(out.field.values());
  return out;
}

inline SolveResult minimize(const ProblemSpec &spec, const std::optional<std::vector<double>> &initial = {}) {
  return minimize(Problem(spec), initial);
}

/// Uniform random field in [lo, hi] (boundary values left to the constraint).
inline std::vector<double> random_field(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  std::vector<double> v(n);
  for (double &x : v) x = U(rng);
  return v;
}

struct PoincareSpec {
  PoincareSpec(MeshPtr m, ExponentPair e, LocalizationProfile prof)
      : mesh(std::move(m)), exponents(e), profile(std::move(prof)) {}

  MeshPtr mesh;
  ExponentPair exponents{2.0, 0.5, 1};
  LocalizationProfile profile;
  ConstraintKind kind = ConstraintKind::Dirichlet;
  std::vector<int> dirichlet_nodes; ///< empty means every boundary node
  std::vector<double> robin_b;
  QuadratureSettings quadrature;
};

struct PoincareResult {
  double constant = 0;   ///< C = λ_min^{-1/2}
  double lambda_min = 0; ///< smallest generalized eigenvalue of ([u]² (+ Robin), ‖u‖²)
  int iterations = 0;
  bool converged = false;
  DiscreteField eigenvector;
};

/// Smallest eigenpair by shifted inverse iteration (p = 2).
inline PoincareResult poincare_estimate(const PoincareSpec &ps, double tol = 1e-10, int max_iter = 2000) {
  if (ps.exponents.p != 2.0) throw ConfigError("poincare_estimate: eigen mode needs p = 2; use poincare_suite");
  ProblemSpec spec{ps.mesh, ps.exponents, ps.profile};
  spec.rho = RhoSpec::indicator(1.0);
  spec.quadrature = ps.quadrature;
  spec.constraint.kind = ps.kind;
  spec.constraint.dirichlet_nodes = ps.dirichlet_nodes;
  spec.lower.robin_b = ps.robin_b;
  const Problem P(spec);
  const double c = normalization_constant(ps.exponents);
  SparseMatrix S = c * P.principal_form();
  if (ps.kind == ConstraintKind::Robin) S += P.robin_mass();
  const detail::Reduction red(P);
  const SparseMatrix Sr = red.restrict(S), Mr = red.restrict(P.mass());
  const bool neumann = ps.kind == ConstraintKind::Neumann;
  const double scale = Sr.diagonal().sum() / Mr.diagonal().sum();
  SparseMatrix shifted = Sr;
  if (neumann) shifted += 1e-8 * scale * Mr;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw SolverError("poincare_estimate: factorization failed");
  const Eigen::VectorXd w = Mr * Eigen::VectorXd::Ones(Mr.rows());
  const double W = w.sum();
  auto deflate = [&](Eigen::VectorXd &v) {
    if (neumann) v.array() -= w.dot(v) / W;
  };
  Eigen::VectorXd x = Eigen::VectorXd::Ones(Sr.rows());
  {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < x.size(); ++i) x(i) += 0.1 * U(rng);
  }
  deflate(x);
  x /= std::sqrt(x.dot(Mr * x));
  PoincareResult out{0, 0, 0, false, DiscreteField::constant(ps.mesh, 0.0)};
  double lam = x.dot(Sr * x);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd y = ldlt.solve(Mr * x);
    deflate(y);
    y /= std::sqrt(y.dot(Mr * y));
    const double ln = y.dot(Sr * y);
    x = std::move(y);
    out.iterations = it + 1;
    const bool done = std::abs(ln - lam) <= tol * std::abs(ln);
    lam = ln;
    if (done) {
      out.converged = true;
      break;
    }
  }
  out.lambda_min = lam;
  out.constant = 1.0 / std::sqrt(lam);
  std::vector<double> u(ps.mesh->num_nodes(), 0.0);
  for (std::size_t k = 0; k < red.free().size(); ++k) u[red.free()[k]] = x(static_cast<int>(k));
  out.eigenvector = DiscreteField(ps.mesh, std::move(u));
  return out;
}

struct PoincareSuiteRow {
  std::string name;
  double ratio; ///< ‖u − c‖_p / ([u]^p + ∫b|Tu|^p)^{1/p}
};

/// Poincaré ratios of given fields for general p (c = mean under Neumann, else 0).
inline std::vector<PoincareSuiteRow>
poincare_suite(const PoincareSpec &ps,
               const std::vector<std::pair<std::string, DiscreteField>> &fields) {
  const double p = ps.exponents.p;
  std::vector<PoincareSuiteRow> rows;
  for (const auto &[name, f] : fields) {
    require_same_mesh(f, *ps.mesh, "poincare_suite");
    DiscreteField u = f;
    if (ps.kind == ConstraintKind::Neumann) {
      const double mv = mean_value(u);
      for (double &v : u.values()) v -= mv;
    }
    const double semi = nonlocal_seminorm(u, ps.exponents, ps.profile, ps.quadrature);
    double den = std::pow(semi, p);
    if (ps.kind == ConstraintKind::Robin) {
      const Mesh &m = *ps.mesh;
      if (m.dim() == 1) {
        for (const auto &fc : m.boundary_facets()) den += ps.robin_b[fc.a] * std::pow(std::abs(u[fc.a]), p);
      } else {
        const Rule r = gauss_legendre(3, 0.0, 1.0);
        for (const auto &fc : m.boundary_facets())
          for (std::size_t k = 0; k < r.size(); ++k) {
            const double t = r.nodes[k];
            const double bb = (1 - t) * ps.robin_b[fc.a] + t * ps.robin_b[fc.b];
            den += r.weights[k] * fc.length * bb * std::pow(std::abs((1 - t) * u[fc.a] + t * u[fc.b]), p);
          }
      }
    }
    rows.push_back({name, lp_norm(u, p) / std::pow(den, 1.0 / p)});
  }
  return rows;
}

} // namespace hetnl
