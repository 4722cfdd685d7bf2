#pragma once

#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hetnl/convolution.hpp"
#include "hetnl/energy.hpp"
#include "hetnl/field.hpp"
#include "hetnl/kernels.hpp"
#include "hetnl/localization.hpp"

namespace hetnl {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Lower-order terms of F_δ. Nodal vectors are sized to the mesh; empty means absent.
struct LowerOrderSpec {
  // G(v) = (power_coef/m)∫|v|^m − ∫ f v, evaluated at v = K_δu.
  double power_coef = 0.0;
  double m = 2.0;
  std::vector<double> f;
  // G̃(u) = −∫_{∂Ω} g Tu dσ − ∫ f̃ u.
  std::vector<double> g_boundary;
  std::vector<double> f_tilde;
  // G_{β>d}(u) = double_well·∫u²(1−u²); growth exponent well_m (4 for this integrand).
  double double_well = 0.0;
  double well_m = 4.0;
  // Robin term ∫_{∂Ω} b|Tu|^p dσ with floor b₀ on ∂Ω_R.
  std::vector<double> robin_b;
  double robin_floor = 0.0;
  // Growth metadata (θ, Θ) of the lower-order bounds; recorded only.
  double theta = 0.5;
  double Theta = 1.0;

  [[nodiscard]] bool uses_convolution() const { return power_coef != 0.0 || !f.empty(); }
};

enum class ConstraintKind { Dirichlet, Neumann, Robin };

inline std::string to_string(ConstraintKind k) {
  switch (k) {
  case ConstraintKind::Dirichlet: return "dirichlet";
  case ConstraintKind::Neumann: return "neumann";
  case ConstraintKind::Robin: return "robin";
  }
  return "?";
}

struct Constraint {
  ConstraintKind kind = ConstraintKind::Dirichlet;
  std::vector<double> g;            ///< nodal Dirichlet data; empty means zero
  std::vector<int> dirichlet_nodes; ///< ∂Ω_D; empty means every boundary node
};

struct SolverSettings {
  double tolerance = 1e-8; ///< on the lumped-mass dual norm of the gradient
  int max_iterations = 2000;
  int history = 10;
  double cg_tolerance = 1e-10;
  std::uint64_t seed = 0;
};

struct ProblemSpec {
  ProblemSpec(MeshPtr m, ExponentPair e, LocalizationProfile prof)
      : mesh(std::move(m)), exponents(e), profile(std::move(prof)) {}

  MeshPtr mesh;
  ExponentPair exponents;
  LocalizationProfile profile;
  PhiSpec phi = PhiSpec::power(2.0);
  RhoSpec rho = RhoSpec::indicator(1.0);
  std::optional<LocalizationProfile> conv_profile; ///< λ̄ for K_δ; defaults to `profile`
  std::optional<PsiSpec> psi;                      ///< defaults to the quartic bump
  LowerOrderSpec lower;
  Constraint constraint;
  SolverSettings solver;
  QuadratureSettings quadrature;
  ConvolutionOptions convolution;
};

struct EnergyReport {
  double delta = 0;
  double E_delta = 0;
  double G = 0;
  double G_tilde = 0;
  double G_beta = 0;
  double robin = 0;
  double total = 0;
  double quadrature_error = 0;
  double surrogate_share = 0;

  static std::string csv_header() {
    return "delta,E_delta,G,Gtilde,Gbeta,robin,total,surrogate_share";
  }
  [[nodiscard]] std::string csv_row() const {
    return fmt_num(delta) + "," + fmt_num(E_delta) + "," + fmt_num(G) + "," + fmt_num(G_tilde) +
           "," + fmt_num(G_beta) + "," + fmt_num(robin) + "," + fmt_num(total) + "," +
           fmt_num(surrogate_share);
  }
};

/// Quadratic model F(u) = ½uᵀAu − bᵀu.
struct QuadraticForm {
  SparseMatrix A;
  Eigen::VectorXd b;
};

/// p*_β = dp/(2d−β) for d < β < 2d, ∞ for β >= 2d.
inline double embedding_exponent(const ExponentPair &e) {
  if (e.beta >= 2.0 * e.d) return std::numeric_limits<double>::infinity();
  return e.d * e.p / (2.0 * e.d - e.beta);
}

/// ProblemSpec with its quadrature stencil, K_δ and mass matrices built once.
class Problem {
public:
  explicit Problem(ProblemSpec spec) : spec_(std::move(spec)) {
    validate();
    const Mesh &m = *spec_.mesh;
    nq_ = std::make_unique<NonlocalQuadrature>(spec_.mesh, spec_.profile, spec_.exponents, spec_.rho,
                                               spec_.quadrature);
    if (spec_.lower.uses_convolution())
      K_ = std::make_unique<ConvolutionOperator>(
          assemble_K(spec_.mesh, spec_.conv_profile.value_or(spec_.profile), psi(),
                     spec_.convolution));
    mass_ = assemble_mass(m);
    ones_mass_ = mass_ * Eigen::VectorXd::Ones(static_cast<int>(m.num_nodes()));
    bmass_ = assemble_boundary_mass(m, nullptr);
    if (!spec_.lower.robin_b.empty()) robin_mass_ = assemble_boundary_mass(m, &spec_.lower.robin_b);
  }

  [[nodiscard]] const ProblemSpec &spec() const { return spec_; }
  [[nodiscard]] const Mesh &mesh() const { return *spec_.mesh; }
  [[nodiscard]] const NonlocalQuadrature &quadrature() const { return *nq_; }
  [[nodiscard]] const ConvolutionOperator *convolution() const { return K_.get(); }
  [[nodiscard]] const SparseMatrix &mass() const { return mass_; }
  /// w_i = ∫ φ_i; Σ w_i = |Ω|.
  [[nodiscard]] const Eigen::VectorXd &mass_weights() const { return ones_mass_; }
  [[nodiscard]] const SparseMatrix &boundary_mass() const { return bmass_; }

  [[nodiscard]] PsiSpec psi() const { return spec_.psi.value_or(PsiSpec::quartic(spec_.exponents.d)); }

  /// False when a non-convex term (the double well) is present.
  [[nodiscard]] bool convex() const { return spec_.lower.double_well == 0.0; }

  [[nodiscard]] EnergyReport evaluate(const std::vector<double> &u) const {
    const LowerOrderSpec &lo = spec_.lower;
    EnergyReport r;
    r.delta = spec_.profile.delta();
    r.surrogate_share = nq_->surrogate_share();
    const PhiSpec &phi = spec_.phi;
    r.E_delta = nq_->integrate(u, [&](double t) { return phi.value(t); });
    if (K_) {
      const std::vector<double> v = K_->apply(u);
      if (lo.power_coef != 0.0) {
        const double m = lo.m;
        r.G += lo.power_coef / m *
               integrate_nodal(v, [m](double s) { return std::pow(std::abs(s), m); });
      }
      if (!lo.f.empty()) r.G -= dot_mass(mass_, lo.f, v);
    }
    if (!lo.g_boundary.empty()) r.G_tilde -= dot_mass(bmass_, lo.g_boundary, u);
    if (!lo.f_tilde.empty()) r.G_tilde -= dot_mass(mass_, lo.f_tilde, u);
    if (lo.double_well != 0.0)
      r.G_beta = lo.double_well *
                 integrate_nodal(u, [](double s) { return s * s * (1.0 - s * s); });
    if (!lo.robin_b.empty()) r.robin = robin_value(u);
    r.total = r.E_delta + r.G + r.G_tilde + r.G_beta + r.robin;
    return r;
  }

  [[nodiscard]] double value(const std::vector<double> &u) const { return evaluate(u).total; }

  /// ∇F at the nodes (exact derivative of the discrete F).
  [[nodiscard]] std::vector<double> gradient(const std::vector<double> &u) const {
    const LowerOrderSpec &lo = spec_.lower;
    const std::size_t n = u.size();
    std::vector<double> g(n, 0.0);
    const PhiSpec &phi = spec_.phi;
    if (!phi.differentiable())
      throw SolverError("gradient_F: Phi is not differentiable; use a derivative-free solver mode");
    nq_->add_gradient(u, [&](double t) { return phi.deriv(t); }, 1.0, g);
    if (K_) {
      const std::vector<double> v = K_->apply(u);
      std::vector<double> gv(n, 0.0);
      if (lo.power_coef != 0.0) {
        const double m = lo.m;
        add_nodal_gradient(v, [m](double s) { return std::pow(std::abs(s), m - 2.0) * s; },
                           lo.power_coef, gv);
      }
      if (!lo.f.empty()) axpy_mass(mass_, lo.f, -1.0, gv);
      const std::vector<double> back = K_->apply_transpose(gv);
      for (std::size_t i = 0; i < n; ++i) g[i] += back[i];
    }
    if (!lo.g_boundary.empty()) axpy_mass(bmass_, lo.g_boundary, -1.0, g);
    if (!lo.f_tilde.empty()) axpy_mass(mass_, lo.f_tilde, -1.0, g);
    if (lo.double_well != 0.0)
      add_nodal_gradient(u, [](double s) { return 2.0 * s - 4.0 * s * s * s; }, lo.double_well, g);
    if (!lo.robin_b.empty()) add_robin_gradient(u, g);
    return g;
  }

  /// Exact quadratic representation; requires Φ = t²/2 and quadratic lower-order terms.
  [[nodiscard]] QuadraticForm quadratic() const {
    const LowerOrderSpec &lo = spec_.lower;
    if (!spec_.phi.quadratic())
      throw ConfigError("quadratic_assemble: needs p = 2 and power Phi = t^2/2");
    if (lo.power_coef != 0.0 && lo.m != 2.0)
      throw ConfigError("quadratic_assemble: the power term must have m = 2");
    if (lo.double_well != 0.0) throw ConfigError("quadratic_assemble: the double well is not quadratic");
    const int n = static_cast<int>(mesh().num_nodes());
    std::vector<Eigen::Triplet<double>> t;
    nq_->add_quadratic_form(1.0, t);
    SparseMatrix A(n, n);
    A.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    if (K_) {
      const SparseMatrix K = K_->matrix();
      if (lo.power_coef != 0.0) {
        SparseMatrix KtMK = SparseMatrix(K.transpose()) * (mass_ * K);
        A += lo.power_coef * KtMK;
      }
      if (!lo.f.empty()) b += K.transpose() * (mass_ * to_eigen(lo.f));
    }
    if (!lo.g_boundary.empty()) b += bmass_ * to_eigen(lo.g_boundary);
    if (!lo.f_tilde.empty()) b += mass_ * to_eigen(lo.f_tilde);
    if (!lo.robin_b.empty()) A += 2.0 * robin_mass_;
    A.makeCompressed();
    return {std::move(A), std::move(b)};
  }

  /// Q with uᵀQu = Σ W·D² over the principal stencil.
  [[nodiscard]] SparseMatrix principal_form() const {
    const int n = static_cast<int>(mesh().num_nodes());
    std::vector<Eigen::Triplet<double>> t;
    nq_->add_quadratic_form(1.0, t);
    SparseMatrix Q(n, n);
    Q.setFromTriplets(t.begin(), t.end());
    return Q;
  }
  [[nodiscard]] const SparseMatrix &robin_mass() const { return robin_mass_; }

  /// Lagged-diffusivity form Σ W·(Φ'(|D|)/|D|)·D² at u, plus a small multiple
  /// of Q so that flat regions stay definite.
  [[nodiscard]] SparseMatrix secant_form(const std::vector<double> &u) const {
    const int n = static_cast<int>(mesh().num_nodes());
    const PhiSpec &phi = spec_.phi;
    std::vector<Eigen::Triplet<double>> t;
    nq_->add_weighted_form(u, [&](double a) {
      const double s = std::max(a, 1e-8);
      return phi.deriv(s) / s;
    }, 1.0, t);
    SparseMatrix H(n, n);
    H.setFromTriplets(t.begin(), t.end());
    const SparseMatrix Q = principal_form();
    const double tau = 1e-3 * H.diagonal().sum() / std::max(Q.diagonal().sum(), 1e-300);
    H += std::max(tau, 1e-12) * Q;
    return H;
  }

  [[nodiscard]] std::vector<double> lumped_mass() const {
    std::vector<double> m(mesh().num_nodes());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = ones_mass_(static_cast<int>(i));
    return m;
  }

  /// Dirichlet node set (∂Ω_D).
  [[nodiscard]] std::vector<int> dirichlet_nodes() const {
    const auto &c = spec_.constraint;
    return c.dirichlet_nodes.empty() ? mesh().boundary_nodes() : c.dirichlet_nodes;
  }

  static Eigen::VectorXd to_eigen(const std::vector<double> &v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
  }

  static SparseMatrix assemble_mass(const Mesh &m) {
    const int n = static_cast<int>(m.num_nodes());
    std::vector<Eigen::Triplet<double>> t;
    const Rule r = gauss_legendre(3, 0.0, 1.0);
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
      std::array<int, 4> nd{};
      const int k = m.cell_nodes(static_cast<int>(c), nd);
      for (const QuadPoint &q : m.cell_quadrature(static_cast<int>(c), r)) {
        const auto phi = Mesh::basis(m.dim(), q.xi, q.eta);
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) t.emplace_back(nd[a], nd[b], q.weight * phi[a] * phi[b]);
      }
    }
    SparseMatrix M(n, n);
    M.setFromTriplets(t.begin(), t.end());
    return M;
  }

  /// ∫_{∂Ω} b φ_i φ_j dσ (b = 1 when null); counting measure in 1-D.
  static SparseMatrix assemble_boundary_mass(const Mesh &m, const std::vector<double> *b) {
    const int n = static_cast<int>(m.num_nodes());
    std::vector<Eigen::Triplet<double>> t;
    auto bw = [&](int i) { return b ? (*b)[i] : 1.0; };
    if (m.dim() == 1) {
      for (const auto &f : m.boundary_facets()) t.emplace_back(f.a, f.a, bw(f.a));
    } else {
      const Rule r = gauss_legendre(3, 0.0, 1.0);
      for (const auto &f : m.boundary_facets())
        for (std::size_t k = 0; k < r.size(); ++k) {
          const double s = r.nodes[k], w = r.weights[k] * f.length;
          const double pa = 1 - s, pb = s, bb = pa * bw(f.a) + pb * bw(f.b);
          t.emplace_back(f.a, f.a, w * bb * pa * pa);
          t.emplace_back(f.a, f.b, w * bb * pa * pb);
          t.emplace_back(f.b, f.a, w * bb * pb * pa);
          t.emplace_back(f.b, f.b, w * bb * pb * pb);
        }
    }
    SparseMatrix M(n, n);
    M.setFromTriplets(t.begin(), t.end());
    return M;
  }

private:
  void validate() const {
    const ProblemSpec &s = spec_;
    if (!s.mesh) throw ConfigError("problem: mesh is missing");
    s.exponents.validate();
    if (s.exponents.d != s.mesh->dim()) throw ConfigError("problem: dimension mismatch");
    if (s.profile.domain().shape() != s.mesh->domain().shape())
      throw ConfigError("problem: profile and mesh use different domains");
    s.profile.require_admissible("problem");
    if (s.phi.p() != s.exponents.p) throw ConfigError("problem: Phi growth exponent must equal p");
    const std::size_t n = s.mesh->num_nodes();
    const LowerOrderSpec &lo = s.lower;
    for (const auto *v : {&lo.f, &lo.g_boundary, &lo.f_tilde, &lo.robin_b, &s.constraint.g})
      if (!v->empty() && v->size() != n)
        throw ConfigError("problem: nodal data of size " + std::to_string(v->size()) +
                          " does not match " + std::to_string(n) + " nodes");
    if (lo.power_coef < 0) throw ConfigError("problem: power term coefficient must be >= 0");
    if (lo.power_coef != 0.0 && !(lo.m >= 1.0)) throw ConfigError("problem: power term needs m >= 1");
    if (lo.double_well != 0.0) {
      if (!(s.exponents.beta > s.exponents.d))
        throw ConfigError("problem: the beta > d term requires beta > d (beta=" +
                          fmt_num(s.exponents.beta) + ")");
      if (!(lo.well_m < embedding_exponent(s.exponents)))
        throw ConfigError("problem: double-well exponent m=" + fmt_num(lo.well_m) +
                          " must be below p*_beta=" + fmt_num(embedding_exponent(s.exponents)));
    }
    if (s.constraint.kind == ConstraintKind::Dirichlet) {
      const auto nodes = s.constraint.dirichlet_nodes.empty() ? s.mesh->boundary_nodes()
                                                              : s.constraint.dirichlet_nodes;
      if (nodes.empty()) throw ConfigError("problem: Dirichlet set has no boundary node");
      for (int i : nodes)
        if (i < 0 || static_cast<std::size_t>(i) >= n || !s.mesh->is_boundary(i))
          throw ConfigError("problem: Dirichlet node " + std::to_string(i) + " is not on the boundary");
    }
    if (s.constraint.kind == ConstraintKind::Robin && lo.robin_b.empty())
      throw ConfigError("problem: Robin constraint needs a weight b");
    if (!lo.robin_b.empty()) {
      double region = 0;
      for (int i : s.mesh->boundary_nodes()) {
        if (lo.robin_b[i] < 0) throw ConfigError("problem: Robin weight must be nonnegative");
      }
      for (const auto &f : s.mesh->boundary_facets()) {
        const bool a = lo.robin_b[f.a] >= lo.robin_floor && lo.robin_b[f.a] > 0;
        const bool b = f.b < 0 || (lo.robin_b[f.b] >= lo.robin_floor && lo.robin_b[f.b] > 0);
        if (a && b) region += f.length;
      }
      if (s.constraint.kind == ConstraintKind::Robin && !(region > 0))
        throw ConfigError("problem: Robin region {b >= b0 > 0} has zero boundary measure");
    }
  }

  template <class F> double integrate_nodal(const std::vector<double> &v, F &&f) const {
    const Mesh &m = mesh();
    const Rule r = gauss_legendre(3, 0.0, 1.0);
    return ordered_sum(m.num_cells(), [&](std::size_t c) {
      std::array<int, 4> nd{};
      const int k = m.cell_nodes(static_cast<int>(c), nd);
      double s = 0;
      for (const QuadPoint &q : m.cell_quadrature(static_cast<int>(c), r)) {
        const auto phi = Mesh::basis(m.dim(), q.xi, q.eta);
        double val = 0;
        for (int a = 0; a < k; ++a) val += phi[a] * v[nd[a]];
        s += q.weight * f(val);
      }
      return s;
    }, 64);
  }

  // g_j += scale ∫ df(v_h) φ_j
  template <class DF>
  void add_nodal_gradient(const std::vector<double> &v, DF &&df, double scale,
                          std::vector<double> &g) const {
    const Mesh &m = mesh();
    const Rule r = gauss_legendre(3, 0.0, 1.0);
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
      std::array<int, 4> nd{};
      const int k = m.cell_nodes(static_cast<int>(c), nd);
      for (const QuadPoint &q : m.cell_quadrature(static_cast<int>(c), r)) {
        const auto phi = Mesh::basis(m.dim(), q.xi, q.eta);
        double val = 0;
        for (int a = 0; a < k; ++a) val += phi[a] * v[nd[a]];
        const double w = scale * q.weight * df(val);
        for (int a = 0; a < k; ++a) g[nd[a]] += w * phi[a];
      }
    }
  }

  static double dot_mass(const SparseMatrix &M, const std::vector<double> &a,
                         const std::vector<double> &b) {
    return to_eigen(a).dot(M * to_eigen(b));
  }
  static void axpy_mass(const SparseMatrix &M, const std::vector<double> &a, double s,
                        std::vector<double> &g) {
    const Eigen::VectorXd v = M * to_eigen(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * v(static_cast<int>(i));
  }

  [[nodiscard]] double robin_value(const std::vector<double> &u) const {
    const double p = spec_.exponents.p;
    const auto &b = spec_.lower.robin_b;
    const Mesh &m = mesh();
    double s = 0;
    if (m.dim() == 1) {
      for (const auto &f : m.boundary_facets()) s += b[f.a] * std::pow(std::abs(u[f.a]), p);
      return s;
    }
    const Rule r = gauss_legendre(3, 0.0, 1.0);
    for (const auto &f : m.boundary_facets())
      for (std::size_t k = 0; k < r.size(); ++k) {
        const double t = r.nodes[k];
        const double bb = (1 - t) * b[f.a] + t * b[f.b], uu = (1 - t) * u[f.a] + t * u[f.b];
        s += r.weights[k] * f.length * bb * std::pow(std::abs(uu), p);
      }
    return s;
  }

  void add_robin_gradient(const std::vector<double> &u, std::vector<double> &g) const {
    const double p = spec_.exponents.p;
    const auto &b = spec_.lower.robin_b;
    const Mesh &m = mesh();
    auto dpow = [p](double s) { return p * std::pow(std::abs(s), p - 2.0) * s; };
    if (m.dim() == 1) {
      for (const auto &f : m.boundary_facets()) g[f.a] += b[f.a] * dpow(u[f.a]);
      return;
    }
    const Rule r = gauss_legendre(3, 0.0, 1.0);
    for (const auto &f : m.boundary_facets())
      for (std::size_t k = 0; k < r.size(); ++k) {
        const double t = r.nodes[k];
        const double bb = (1 - t) * b[f.a] + t * b[f.b], uu = (1 - t) * u[f.a] + t * u[f.b];
        const double w = r.weights[k] * f.length * bb * dpow(uu);
        g[f.a] += w * (1 - t);
        g[f.b] += w * t;
      }
  }

  ProblemSpec spec_;
  std::unique_ptr<NonlocalQuadrature> nq_;
  std::unique_ptr<ConvolutionOperator> K_;
  SparseMatrix mass_, bmass_, robin_mass_;
  Eigen::VectorXd ones_mass_;
};

/// F_δ(u) and its parts; the quadrature error estimate compares against a
/// rule with half the radial order.
inline EnergyReport functional_F(const DiscreteField &u, const ProblemSpec &spec) {
  require_same_mesh(u, *spec.mesh, "functional_F");
  const Problem prob(spec);
  EnergyReport r = prob.evaluate(u.values());
  QuadratureSettings coarse = spec.quadrature;
  coarse.radial = std::max(2, coarse.radial / 2);
  coarse.piece_points = std::max(1, coarse.piece_points - 1);
  const NonlocalQuadrature nq(spec.mesh, spec.profile, spec.exponents, spec.rho, coarse);
  const double Ec = nq.integrate(u.values(), [&](double t) { return spec.phi.value(t); });
  r.quadrature_error = std::abs(Ec - r.E_delta);
  return r;
}

inline DiscreteField gradient_F(const DiscreteField &u, const ProblemSpec &spec) {
  require_same_mesh(u, *spec.mesh, "gradient_F");
  const Problem prob(spec);
  return {spec.mesh, prob.gradient(u.values())};
}

inline QuadraticForm quadratic_assemble(const ProblemSpec &spec) { return Problem(spec).quadratic(); }

} // namespace hetnl
