#pragma once

#include <Eigen/SparseCore>

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hetnl/core.hpp"
#include "hetnl/field.hpp"
#include "hetnl/kernels.hpp"
#include "hetnl/localization.hpp"
#include "hetnl/mesh.hpp"
#include "hetnl/parallel.hpp"
#include "hetnl/report.hpp"

namespace hetnl {

// ---------------------------------------------------------------- Φ ----

enum class PhiKind { Power, Custom };

/// Convex integrand Φ with p-growth.
class PhiSpec {
public:
  /// Φ(t) = t^p / p.
  static PhiSpec power(double p) {
    if (!(p >= 1)) throw ConfigError("phi: p must be >= 1");
    PhiSpec f(PhiKind::Power, p);
    f.c_ = f.C_ = 1.0 / p;
    return f;
  }
  static PhiSpec custom(std::function<double(double)> value, std::function<double(double)> deriv,
                        double p, double c, double C, std::string name = "custom") {
    PhiSpec f(PhiKind::Custom, p);
    f.value_ = std::move(value);
    f.deriv_ = std::move(deriv);
    f.c_ = c;
    f.C_ = C;
    f.name_ = std::move(name);
    return f;
  }

  [[nodiscard]] PhiKind kind() const { return kind_; }
  [[nodiscard]] double p() const { return p_; }
  [[nodiscard]] double growth_c() const { return c_; }
  [[nodiscard]] double growth_C() const { return C_; }
  [[nodiscard]] bool differentiable() const {
    return kind_ == PhiKind::Power ? p_ > 1.0 : static_cast<bool>(deriv_);
  }
  [[nodiscard]] bool quadratic() const { return kind_ == PhiKind::Power && p_ == 2.0; }

  [[nodiscard]] double value(double t) const {
    if (kind_ == PhiKind::Custom) return value_(t);
    if (p_ == 2.0) return 0.5 * t * t;
    return std::pow(t, p_) / p_;
  }
  /// Φ'(t) for t >= 0.
  [[nodiscard]] double deriv(double t) const {
    if (!differentiable())
      throw SolverError("phi: integrand has no derivative; use a derivative-free solver mode");
    if (kind_ == PhiKind::Custom) return deriv_(t);
    if (p_ == 2.0) return t;
    return std::pow(t, p_ - 1.0);
  }

  [[nodiscard]] std::string describe() const {
    return kind_ == PhiKind::Power ? "power(p=" + fmt_num(p_) + ")" : name_;
  }

  /// (A_Φ) on a grid of t values: nonnegativity, growth bounds, midpoint convexity.
  [[nodiscard]] Report check_growth(const std::vector<double> &grid) const {
    Report r;
    double lower = 0, upper = 0, convex = 0, neg = 0;
    for (double t : grid) {
      const double v = value(t), tp = std::pow(t, p_);
      neg = std::min(neg, v);
      lower = std::max(lower, std::max(0.0, c_ * (tp - 1)) - v);
      upper = std::max(upper, v - C_ * (tp + 1));
      const double h = 0.1 * (1 + t);
      if (t >= h) convex = std::max(convex, value(t) - 0.5 * (value(t - h) + value(t + h)));
    }
    const double tol = 1e-12;
    r.add("phi_nonnegative", neg, 0.0, neg >= -tol);
    r.add("phi_lower_growth", lower, 0.0, lower <= tol);
    r.add("phi_upper_growth", upper, 0.0, upper <= tol);
    r.add("phi_midpoint_convexity", convex, 0.0, convex <= tol);
    return r;
  }

private:
  PhiSpec(PhiKind k, double p) : kind_(k), p_(p) {}
  PhiKind kind_;
  double p_;
  double c_ = 0, C_ = 0;
  std::function<double(double)> value_, deriv_;
  std::string name_;
};

// ------------------------------------------------------- quadrature ----

struct QuadratureSettings {
  int radial = 8;        ///< Gauss-Jacobi points on the piece touching z = 0
  int piece_points = 3;  ///< Gauss-Legendre points on later pieces
  int angular = 16;      ///< directions in 2-D
  int cell_points = 2;   ///< Gauss points per axis in x
  double sub_resolution_factor = 2.0;
  bool split_at_mesh = true; ///< split rays where they cross mesh lines
  bool local_only = false;   ///< every point uses the local density (E_0)
  std::size_t max_pairs = 20'000'000; ///< stencil memory guard (64 bytes per pair)
};

/// Precomputed pair stencil for integrals of the form
///   ∫_Ω ∫_{B(0,1)} ρ(|z|)|z|^{p-β} F(D) dz dx,  D = (u(x+ηz)-u(x))/(η|z|),
/// in the coordinates y = x + η(x)z. Points with η < factor·h use the
/// local density Σ_ω W_ω F(|∇u·ω|) instead.
class NonlocalQuadrature {
public:
  struct XPoint {
    std::array<int, 4> nodes;
    std::array<double, 4> phi;
    std::array<Point, 4> grad;
    int count;
    double weight;
    bool surrogate;
    std::size_t begin, end;
  };
  struct Pair {
    std::array<int, 4> nodes;
    std::array<double, 4> phi;
    double weight;  ///< dz weight times x weight
    double inv_len; ///< 1/(η|z|)
  };

  NonlocalQuadrature(MeshPtr mesh, const LocalizationProfile &prof, const ExponentPair &e,
                     const RhoSpec &rho, const QuadratureSettings &s = {})
      : mesh_(std::move(mesh)), e_(e), settings_(s) {
    e.validate();
    if (e.d != mesh_->dim()) throw ConfigError("quadrature: exponent dimension does not match the mesh");
    prof.require_admissible("nonlocal quadrature");
    build(prof, rho);
  }

  [[nodiscard]] const Mesh &mesh() const { return *mesh_; }
  [[nodiscard]] const MeshPtr &mesh_ptr() const { return mesh_; }
  [[nodiscard]] const ExponentPair &exponents() const { return e_; }
  [[nodiscard]] const std::vector<XPoint> &points() const { return xs_; }
  [[nodiscard]] const std::vector<Pair> &pairs() const { return pairs_; }
  [[nodiscard]] std::size_t num_pairs() const { return pairs_.size(); }
  /// Fraction of |Ω| (by x-quadrature weight) handled by the local density.
  [[nodiscard]] double surrogate_share() const { return share_; }
  /// Σ of the z-weights over the unit ball, i.e. ρ̄ as seen by the rule.
  [[nodiscard]] double rule_mass() const { return mass_; }

  /// Σ pairs W·F(|D|).
  template <class F> [[nodiscard]] double integrate(const std::vector<double> &u, F &&f) const {
    check(u);
    return ordered_sum(xs_.size(), [&](std::size_t q) {
      const XPoint &x = xs_[q];
      const double ux = value_at(x, u);
      if (x.surrogate) {
        const Point g = grad_at(x, u);
        double s = 0;
        for (const auto &dir : sdirs_) s += dir.weight * f(std::abs(dot(g, dir.omega)));
        return x.weight * s;
      }
      double s = 0;
      for (std::size_t k = x.begin; k < x.end; ++k) {
        const Pair &pr = pairs_[k];
        s += pr.weight * f(std::abs((value_at(pr, u) - ux) * pr.inv_len));
      }
      return s;
    }, 256);
  }

  /// g += scale · ∂/∂u Σ W·F(|D|), with df = F'.
  template <class DF>
  void add_gradient(const std::vector<double> &u, DF &&df, double scale,
                    std::vector<double> &g) const {
    check(u);
    for (const XPoint &x : xs_) {
      const double ux = value_at(x, u);
      if (x.surrogate) {
        const Point gu = grad_at(x, u);
        for (const auto &dir : sdirs_) {
          const double t = dot(gu, dir.omega);
          const double c = scale * x.weight * dir.weight * df(std::abs(t)) * (t >= 0 ? 1.0 : -1.0);
          if (c == 0.0) continue;
          for (int a = 0; a < x.count; ++a) g[x.nodes[a]] += c * dot(x.grad[a], dir.omega);
        }
        continue;
      }
      double cx = 0;
      for (std::size_t k = x.begin; k < x.end; ++k) {
        const Pair &pr = pairs_[k];
        const double D = (value_at(pr, u) - ux) * pr.inv_len;
        const double c = scale * pr.weight * df(std::abs(D)) * (D >= 0 ? 1.0 : -1.0) * pr.inv_len;
        if (c == 0.0) continue;
        for (int a = 0; a < x.count; ++a) g[pr.nodes[a]] += c * pr.phi[a];
        cx += c;
      }
      for (int a = 0; a < x.count; ++a) g[x.nodes[a]] -= cx * x.phi[a];
    }
  }

  /// Triplets of the matrix Q with uᵀQu = Σ W·D² (times scale).
  void add_quadratic_form(double scale, std::vector<Eigen::Triplet<double>> &t) const {
    add_weighted_form({}, [](double) { return 1.0; }, scale, t);
  }

  /// Triplets of Σ W·c(|D(u)|)·D², c evaluated at the frozen field u (u may be
  /// empty when c is constant).
  template <class C>
  void add_weighted_form(const std::vector<double> &u, C &&c, double scale,
                         std::vector<Eigen::Triplet<double>> &t) const {
    if (!u.empty()) check(u);
    std::array<int, 8> idx{};
    std::array<double, 8> b{};
    for (const XPoint &x : xs_) {
      if (x.surrogate) {
        const Point gu = u.empty() ? Point{} : grad_at(x, u);
        for (const auto &dir : sdirs_) {
          const double w = scale * x.weight * dir.weight * c(std::abs(dot(gu, dir.omega)));
          for (int a = 0; a < x.count; ++a)
            for (int e = 0; e < x.count; ++e)
              t.emplace_back(x.nodes[a], x.nodes[e],
                             w * dot(x.grad[a], dir.omega) * dot(x.grad[e], dir.omega));
        }
        continue;
      }
      const double ux = u.empty() ? 0.0 : value_at(x, u);
      for (std::size_t k = x.begin; k < x.end; ++k) {
        const Pair &pr = pairs_[k];
        int n = 0;
        for (int a = 0; a < x.count; ++a) idx[n] = pr.nodes[a], b[n++] = pr.phi[a] * pr.inv_len;
        for (int a = 0; a < x.count; ++a) idx[n] = x.nodes[a], b[n++] = -x.phi[a] * pr.inv_len;
        const double D = u.empty() ? 0.0 : (value_at(pr, u) - ux) * pr.inv_len;
        const double w = scale * pr.weight * c(std::abs(D));
        for (int a = 0; a < n; ++a)
          for (int e = 0; e < n; ++e) t.emplace_back(idx[a], idx[e], w * b[a] * b[e]);
      }
    }
  }

private:
  static double value_at(const XPoint &x, const std::vector<double> &u) {
    double v = 0;
    for (int a = 0; a < x.count; ++a) v += x.phi[a] * u[x.nodes[a]];
    return v;
  }
  static double value_at(const Pair &p, const std::vector<double> &u) {
    return p.phi[0] * u[p.nodes[0]] + p.phi[1] * u[p.nodes[1]] + p.phi[2] * u[p.nodes[2]] +
           p.phi[3] * u[p.nodes[3]];
  }
  static Point grad_at(const XPoint &x, const std::vector<double> &u) {
    Point g{};
    for (int a = 0; a < x.count; ++a) g += x.grad[a] * u[x.nodes[a]];
    return g;
  }
  void check(const std::vector<double> &u) const {
    if (u.size() != mesh_->num_nodes())
      throw ConfigError("quadrature: field size does not match the mesh");
  }

  void build(const LocalizationProfile &prof, const RhoSpec &rho) {
    const Mesh &m = *mesh_;
    const int d = e_.d;
    const double alpha = e_.alpha();
    const auto dirs = sphere_directions(d, settings_.angular);
    const RadialPieces first(settings_.radial, alpha, settings_.piece_points);
    const Rule fixed = radial_rule(rho, alpha, settings_.radial);
    const std::vector<double> rho_breaks = rho.breakpoints();
    const double support = rho.support();

    // Surrogate directions carry the full radial mass.
    mass_ = 0;
    for (double w : fixed.weights) mass_ += w;
    sdirs_.clear();
    for (const auto &dir : dirs) sdirs_.push_back({dir.omega, dir.weight * mass_});
    mass_ *= sphere_measure(d);

    const Rule cell_rule = gauss_legendre(settings_.cell_points, 0.0, 1.0);
    const std::size_t ncell = m.num_cells();
    std::vector<std::vector<XPoint>> cx(ncell);
    std::vector<std::vector<Pair>> cp(ncell);
    std::atomic<std::size_t> emitted{0};
    std::atomic<bool> over{false};

    parallel_for(ncell, [&](std::size_t ci) {
      if (over.load(std::memory_order_relaxed)) return;
      const int c = static_cast<int>(ci);
      std::array<int, 4> nd{};
      const int count = m.cell_nodes(c, nd);
      for (const QuadPoint &q : m.cell_quadrature(c, cell_rule)) {
        XPoint xp{};
        xp.nodes = nd;
        xp.count = count;
        xp.phi = Mesh::basis(d, q.xi, q.eta);
        xp.grad = m.basis_grad(c, q.xi, q.eta);
        for (int a = count; a < 4; ++a) xp.nodes[a] = nd[0], xp.phi[a] = 0.0;
        xp.weight = q.weight;
        const double eta = prof.eta(q.x);
        xp.surrogate = settings_.local_only || eta < settings_.sub_resolution_factor * m.cell_size(c);
        auto &pairs = cp[ci];
        xp.begin = pairs.size();
        if (!xp.surrogate) {
          for (const auto &dir : dirs) {
            // Pieces in r: ρ breakpoints and, optionally, mesh crossings.
            std::vector<double> cuts{0.0};
            for (double b : rho_breaks) cuts.push_back(b);
            if (settings_.split_at_mesh)
              for (double s : m.ray_crossings(q.x, dir.omega, eta * support)) cuts.push_back(s / eta);
            std::sort(cuts.begin(), cuts.end());
            cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
            auto emit = [&](double r, double w) {
              if (w == 0.0) return;
              const CellRef y = m.locate(q.x + dir.omega * (eta * r));
              Pair pr{};
              std::array<int, 4> yn{};
              const int yc = m.cell_nodes(y.cell, yn);
              const auto yphi = Mesh::basis(d, y.xi, y.eta);
              for (int a = 0; a < 4; ++a) {
                pr.nodes[a] = a < yc ? yn[a] : yn[0];
                pr.phi[a] = a < yc ? yphi[a] : 0.0;
              }
              pr.weight = q.weight * dir.weight * w;
              pr.inv_len = 1.0 / (eta * r);
              pairs.push_back(pr);
            };
            for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
              const double a = cuts[k], b = cuts[k + 1];
              if (b - a <= 1e-15 * support) continue;
              if (a == 0.0) {
                const Rule r = first.first(b);
                for (std::size_t i = 0; i < r.size(); ++i) emit(r.nodes[i], r.weights[i] * rho(r.nodes[i]));
              } else {
                const Rule r = first.later(a, b);
                for (std::size_t i = 0; i < r.size(); ++i) emit(r.nodes[i], r.weights[i] * rho(r.nodes[i]));
              }
            }
          }
        }
        xp.end = pairs.size();
        cx[ci].push_back(xp);
      }
      if (emitted.fetch_add(cp[ci].size()) + cp[ci].size() > settings_.max_pairs) over = true;
    });
    if (over)
      throw SizeError("nonlocal quadrature: stencil exceeds " + std::to_string(settings_.max_pairs) +
                      " pairs; coarsen the mesh or lower the quadrature orders");

    double total = 0, sur = 0;
    for (std::size_t ci = 0; ci < ncell; ++ci) {
      const std::size_t off = pairs_.size();
      for (XPoint xp : cx[ci]) {
        xp.begin += off;
        xp.end += off;
        total += xp.weight;
        if (xp.surrogate) sur += xp.weight;
        xs_.push_back(xp);
      }
      pairs_.insert(pairs_.end(), cp[ci].begin(), cp[ci].end());
    }
    share_ = total > 0 ? sur / total : 0.0;
  }

  MeshPtr mesh_;
  ExponentPair e_;
  QuadratureSettings settings_;
  std::vector<XPoint> xs_;
  std::vector<Pair> pairs_;
  std::vector<Direction> sdirs_;
  double share_ = 0.0;
  double mass_ = 0.0;
};

// ---------------------------------------------------- seminorms / E ----

/// [u] for a general ρ with constant C_{d,β,p}(ρ).
inline double general_seminorm(const DiscreteField &u, const ExponentPair &e,
                               const LocalizationProfile &prof, const RhoSpec &rho,
                               const QuadratureSettings &s = {}) {
  const NonlocalQuadrature nq(u.mesh_ptr(), prof, e, rho, s);
  const double C = normalization_constant(e, &rho);
  const double p = e.p;
  const double I = nq.integrate(u.values(), [p](double t) { return std::pow(t, p); });
  return std::pow(C * I, 1.0 / p);
}

/// [u]_{𝔚^{β,p}[δ;q]} (indicator kernel).
inline double nonlocal_seminorm(const DiscreteField &u, const ExponentPair &e,
                                const LocalizationProfile &prof, const QuadratureSettings &s = {}) {
  const NonlocalQuadrature nq(u.mesh_ptr(), prof, e, RhoSpec::indicator(1.0), s);
  const double p = e.p;
  const double I = nq.integrate(u.values(), [p](double t) { return std::pow(t, p); });
  return std::pow(normalization_constant(e) * I, 1.0 / p);
}

/// E_δ(u) = ∫∫ ρ(|z|)|z|^{p-β} Φ(D) dz dx (no normalization constant).
inline double energy_E_delta(const DiscreteField &u, const PhiSpec &phi, const RhoSpec &rho,
                             const ExponentPair &e, const LocalizationProfile &prof,
                             const QuadratureSettings &s = {}) {
  const NonlocalQuadrature nq(u.mesh_ptr(), prof, e, rho, s);
  return nq.integrate(u.values(), [&](double t) { return phi.value(t); });
}

/// E_0(u) = ρ̄ ∫ ⨏_{S^{d-1}} Φ(|∇u·ω|) dσ dx.
inline double energy_E0(const DiscreteField &u, const PhiSpec &phi, double rho_bar_value, int d,
                        int angular = 16, int cell_points = 2) {
  if (d != u.mesh().dim()) throw ConfigError("energy_E0: dimension does not match the mesh");
  const auto dirs = sphere_directions(d, std::max(16, angular));
  const double sig = sphere_measure(d);
  const double s = detail::integrate_cells(u.mesh(), cell_points, [&](int c, const QuadPoint &q) {
    const Point g = u.gradient_in_cell(c, q.xi, q.eta);
    double avg = 0;
    for (const auto &dir : dirs) avg += dir.weight * phi.value(std::abs(dot(g, dir.omega)));
    return avg / sig;
  });
  return rho_bar_value * s;
}

/// Two-sided factors (lo, hi) with lo·[u]_{δ₂} ≤ [u]_{δ₁} ≤ hi·[u]_{δ₂} for δ₁ ≤ δ₂.
inline std::pair<double, double> horizon_bounds(const ExponentPair &e, double delta1, double delta2) {
  if (!(0 < delta1 && delta1 <= delta2)) throw ConfigError("horizon_bounds: need 0 < delta1 <= delta2");
  const double lo = std::pow((1 - delta2) / (2 * (1 + delta2)), (e.d + e.p - e.beta) / e.p);
  const double hi = std::pow(delta2 / delta1, 1 + (e.d - e.beta) / e.p);
  return {lo, hi};
}

/// Ten smooth and rough test fields on [0,1]^d (unit-scale coordinates).
inline std::vector<std::pair<std::string, std::function<double(const Point &)>>> field_suite(int d) {
  auto s = [d](const Point &x) { return d == 1 ? x.x : 0.6 * x.x + 0.4 * x.y; };
  using F = std::function<double(const Point &)>;
  std::vector<std::pair<std::string, F>> out{
      {"sin_pi", [s](const Point &x) { return std::sin(pi * s(x)); }},
      {"cos_2pi", [s](const Point &x) { return std::cos(2 * pi * s(x)); }},
      {"square", [s](const Point &x) { return s(x) * s(x); }},
      {"exp", [s](const Point &x) { return std::exp(s(x)); }},
      {"sin_6pi", [s](const Point &x) { return std::sin(6 * pi * s(x)); }},
      {"tanh_front", [s](const Point &x) { return std::tanh(20 * (s(x) - 0.5)); }},
      {"kink", [s](const Point &x) { return std::abs(s(x) - 0.5); }},
      {"cusp", [s](const Point &x) { return std::pow(std::abs(s(x) - 0.37), 0.6); }},
      {"sqrt_wall", [s](const Point &x) { return std::sqrt(std::max(s(x), 0.0)); }},
      {"bump", [s](const Point &x) {
         const double t = s(x) - 0.5;
         return std::abs(t) < 0.25 ? std::pow(1 - 16 * t * t, 2) : 0.0;
       }},
  };
  if (d == 2) out[0].second = [](const Point &x) { return std::sin(pi * x.x) * std::sin(pi * x.y); };
  return out;
}

} // namespace hetnl
