#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hetnl/core.hpp"
#include "hetnl/localization.hpp"
#include "hetnl/quadrature.hpp"

namespace hetnl {

/// (p, β, d) with p >= 1 and 0 <= β < d + p.
struct ExponentPair {
  double p = 2.0;
  double beta = 0.0;
  int d = 1;

  void validate() const {
    if (d != 1 && d != 2) throw ConfigError("exponents: d must be 1 or 2");
    if (!(p >= 1.0)) throw ConfigError("exponents: p must be >= 1");
    if (!(beta >= 0.0) || !(beta < d + p))
      throw ConfigError("exponents: need 0 <= beta < d + p (beta=" + fmt_num(beta) +
                        ", d+p=" + fmt_num(d + p) + ")");
  }
  /// Radial weight exponent d-1+p-β of the transformed quadrature.
  [[nodiscard]] double alpha() const { return d - 1 + p - beta; }
};

/// σ(S^{d-1}).
inline double sphere_measure(int d) {
  return 2.0 * std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d);
}
/// |B(0,1)| in ℝ^d.
inline double ball_volume(int d) { return sphere_measure(d) / d; }

/// C̄_{d,p} = √π Γ((d+p)/2) / (Γ((p+1)/2) Γ(d/2)).
inline double cbar(int d, double p) {
  if (d < 1 || !(p >= 1.0)) throw ConfigError("cbar: need d >= 1 and p >= 1");
  return std::sqrt(pi) * std::tgamma(0.5 * (d + p)) /
         (std::tgamma(0.5 * (p + 1)) * std::tgamma(0.5 * d));
}

// ---------------------------------------------------------------- ρ ----

enum class RhoKind { Indicator, Quartic, Table };

/// Radial interaction profile ρ(|ξ|) for the general energy.
class RhoSpec {
public:
  /// 1 on [0, c); c = 1 gives the standard kernel.
  static RhoSpec indicator(double c = 1.0) {
    if (!(c > 0 && c <= 1)) throw ConfigError("rho indicator: support must lie in (0,1]");
    RhoSpec r(RhoKind::Indicator);
    r.c_ = c;
    return r;
  }
  /// (1 - (r/c)²)² on [0, c).
  static RhoSpec quartic(double c = 0.9) {
    if (!(c > 0 && c <= 1)) throw ConfigError("rho quartic: support must lie in (0,1]");
    RhoSpec r(RhoKind::Quartic);
    r.c_ = c;
    return r;
  }
  /// Piecewise linear through (r_i, v_i), zero beyond the last knot.
  static RhoSpec table(std::vector<double> r, std::vector<double> v) {
    if (r.size() < 2 || r.size() != v.size())
      throw ConfigError("rho table: need at least two (r, value) rows");
    if (r.front() != 0.0) throw ConfigError("rho table: first radius must be 0");
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (v[i] < 0) throw ConfigError("rho table: values must be nonnegative");
      if (i > 0 && !(r[i] > r[i - 1])) throw ConfigError("rho table: radii must increase");
    }
    if (r.back() > 1.0) throw ConfigError("rho table: support must lie in [0,1]");
    RhoSpec s(RhoKind::Table);
    s.c_ = r.back();
    s.tr_ = std::move(r);
    s.tv_ = std::move(v);
    return s;
  }

  [[nodiscard]] RhoKind kind() const { return kind_; }
  [[nodiscard]] double support() const { return c_; }
  /// supp ρ ⋐ (-1,1).
  [[nodiscard]] bool strictly_inside() const { return c_ < 1.0; }

  [[nodiscard]] double operator()(double r) const {
    r = std::abs(r);
    if (r >= c_) return 0.0;
    switch (kind_) {
    case RhoKind::Indicator: return scale_;
    case RhoKind::Quartic: {
      const double s = 1.0 - (r / c_) * (r / c_);
      return scale_ * s * s;
    }
    case RhoKind::Table: {
      const auto it = std::upper_bound(tr_.begin(), tr_.end(), r);
      const std::size_t k = static_cast<std::size_t>(it - tr_.begin()) - 1;
      const double t = (r - tr_[k]) / (tr_[k + 1] - tr_[k]);
      return scale_ * ((1 - t) * tv_[k] + t * tv_[k + 1]);
    }
    }
    return 0.0;
  }

  [[nodiscard]] double sup_norm() const {
    if (kind_ == RhoKind::Table) return scale_ * *std::max_element(tv_.begin(), tv_.end());
    return scale_;
  }

  [[nodiscard]] bool nonincreasing() const {
    if (kind_ != RhoKind::Table) return true;
    for (std::size_t i = 1; i < tv_.size(); ++i)
      if (tv_[i] > tv_[i - 1]) return false;
    return true;
  }

  /// Radii in (0, support] splitting ρ into polynomial pieces.
  [[nodiscard]] std::vector<double> breakpoints() const {
    if (kind_ != RhoKind::Table) return {c_};
    return {tr_.begin() + 1, tr_.end()};
  }

  [[nodiscard]] RhoSpec scaled(double s) const {
    if (!(s > 0)) throw ConfigError("rho: scale must be positive");
    RhoSpec r = *this;
    r.scale_ *= s;
    return r;
  }

  [[nodiscard]] std::string describe() const {
    std::string base = kind_ == RhoKind::Indicator ? "indicator"
                       : kind_ == RhoKind::Quartic ? "quartic"
                                                   : "table";
    return base + "(support=" + fmt_num(c_) + (scale_ != 1.0 ? ", scale=" + fmt_num(scale_) : "") +
           ")";
  }

private:
  explicit RhoSpec(RhoKind k) : kind_(k) {}
  RhoKind kind_;
  double c_ = 1.0;
  double scale_ = 1.0;
  std::vector<double> tr_, tv_;
};

/// Rule for ∫_0^1 ρ(r) r^alpha f(r) dr with ρ folded into the weights.
/// First piece: Gauss-Jacobi in r; later pieces: Gauss-Legendre in r^(alpha+1).
inline Rule radial_rule(const RhoSpec &rho, double alpha, int n) {
  Rule out;
  double lo = 0.0;
  for (double hi : rho.breakpoints()) {
    const Rule piece =
        lo == 0.0 ? jacobi_radial(n, alpha, hi) : power_mapped_legendre(n, alpha, lo, hi);
    for (std::size_t i = 0; i < piece.size(); ++i) {
      out.nodes.push_back(piece.nodes[i]);
      out.weights.push_back(piece.weights[i] * rho(piece.nodes[i]));
    }
    lo = hi;
  }
  return out;
}

/// ∫_0^1 ρ(r) r^alpha dr, refined until successive orders agree to 1e-12.
inline double radial_moment(const RhoSpec &rho, double alpha) {
  double prev = radial_rule(rho, alpha, 4).apply([](double) { return 1.0; });
  for (int n = 8; n <= 256; n *= 2) {
    const double cur = radial_rule(rho, alpha, n).apply([](double) { return 1.0; });
    if (std::abs(cur - prev) <= 1e-12 * std::abs(cur)) return cur;
    prev = cur;
  }
  return prev;
}

/// C_{d,β,p} for the indicator kernel, or C_{d,β,p}(ρ) for a general ρ.
inline double normalization_constant(const ExponentPair &e, const RhoSpec *rho = nullptr) {
  e.validate();
  if (rho == nullptr) return cbar(e.d, e.p) * (e.d + e.p - e.beta) / sphere_measure(e.d);
  const double m = radial_moment(*rho, e.alpha());
  if (!(m > 0)) throw DegenerateKernelError("normalization_constant: rho has zero mass");
  return cbar(e.d, e.p) / (sphere_measure(e.d) * m);
}

/// ρ̄_{p,β} = ∫_{B(0,1)} |z|^{p-β} ρ(|z|) dz.
inline double rho_bar(const RhoSpec &rho, const ExponentPair &e) {
  e.validate();
  return sphere_measure(e.d) * radial_moment(rho, e.alpha());
}

namespace detail {
inline double gamma_with_constant(double C, const ExponentPair &e, const LocalizationProfile &prof,
                                  const Point &x, const Point &y, const RhoSpec *rho) {
  const double eta = prof.eta(x);
  (void)prof.domain().boundary_distance(y);
  const double r = norm(y - x);
  if (r == 0.0 && e.beta > 0) return std::numeric_limits<double>::infinity();
  if (eta <= 0.0) return 0.0;
  const double shape = rho ? (*rho)(r / eta) : (r < eta ? 1.0 : 0.0);
  if (shape == 0.0) return 0.0;
  return C * shape * std::pow(r, -e.beta) * std::pow(eta, -(e.d + e.p - e.beta));
}
} // namespace detail

/// γ(x,y); +∞ on the diagonal when β > 0.
inline double gamma_kernel(const ExponentPair &e, const LocalizationProfile &prof, const Point &x,
                           const Point &y, const RhoSpec *rho = nullptr) {
  return detail::gamma_with_constant(normalization_constant(e, rho), e, prof, x, y, rho);
}

/// ∫ γ(x,y)|x-y|^p dy by the transformed radial rule (weight r^{d-1+p-β}).
inline double kernel_moment(const ExponentPair &e, const LocalizationProfile &prof,
                            const Point &x, const RhoSpec *rho = nullptr, int n_radial = 12,
                            int n_angles = 64) {
  e.validate();
  const double eta = prof.eta(x);
  if (!(eta > 0)) throw DegenerateKernelError("kernel_moment: x lies on the boundary");
  const Rule rr = rho ? radial_rule(*rho, e.alpha(), n_radial)
                      : jacobi_radial(n_radial, e.alpha(), 1.0);
  const double C = normalization_constant(e, rho);
  const auto dirs = sphere_directions(e.d, n_angles);
  double total = 0.0;
  for (std::size_t k = 0; k < rr.size(); ++k) {
    const double r = rr.nodes[k];
    // ρ is folded into the rule weights; γ supplies it again.
    const double rv = rho ? (*rho)(r) : 1.0;
    if (rv == 0.0) continue;
    const double w = rr.weights[k] / rv;
    for (const auto &dir : dirs) {
      const Point y = x + dir.omega * (eta * r);
      total += w * dir.weight * detail::gamma_with_constant(C, e, prof, x, y, rho) *
               std::pow(r, e.beta);
    }
  }
  return total * std::pow(eta, e.d + e.p);
}

// ---------------------------------------------------------------- ψ ----

enum class PsiKind { Quartic, SmoothBump };

/// Radial mollifier ψ with unit mass in ℝ^d and support radius < 1.
class PsiSpec {
public:
  /// c(1 - (t/R)²)² on |t| < R.
  static PsiSpec quartic(int d, double radius = 0.9) { return PsiSpec(PsiKind::Quartic, d, radius); }
  /// c·exp(1 - 1/(1 - (t/R)²)) on |t| < R.
  static PsiSpec smooth_bump(int d, double radius = 0.9) {
    return PsiSpec(PsiKind::SmoothBump, d, radius);
  }

  [[nodiscard]] PsiKind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return d_; }
  [[nodiscard]] double support() const { return R_; }
  /// c_ψ: [-c_ψ, c_ψ] ⊂ supp ψ.
  [[nodiscard]] double inner_radius() const { return R_; }
  [[nodiscard]] int smoothness() const { return kind_ == PsiKind::Quartic ? 1 : 1000; }
  [[nodiscard]] double normalization() const { return c_; }
  [[nodiscard]] double sup_norm() const { return c_; }

  [[nodiscard]] double value(double t) const { return c_ * shape(std::abs(t)); }
  /// dψ/dt at t >= 0.
  [[nodiscard]] double deriv(double t) const {
    const double s = t / R_;
    if (s >= 1.0) return 0.0;
    if (kind_ == PsiKind::Quartic) return c_ * 2.0 * (1.0 - s * s) * (-2.0 * s) / R_;
    const double g = 1.0 - s * s;
    return c_ * std::exp(1.0 - 1.0 / g) * (-2.0 * s / (g * g)) / R_;
  }

  [[nodiscard]] std::string describe() const {
    return (kind_ == PsiKind::Quartic ? "quartic" : "smooth_bump") + std::string("(radius=") +
           fmt_num(R_) + ")";
  }

private:
  PsiSpec(PsiKind k, int d, double R) : kind_(k), d_(d), R_(R) {
    if (d != 1 && d != 2) throw ConfigError("psi: d must be 1 or 2");
    if (!(R > 0 && R < 1)) throw ConfigError("psi: support radius must lie in (0,1)");
    const double mass = sphere_measure(d) *
                        integrate_adaptive([&](double r) { return shape(r) * std::pow(r, d - 1); },
                                           0.0, R, 1e-14);
    c_ = 1.0 / mass;
  }
  [[nodiscard]] double shape(double t) const {
    const double s = t / R_;
    if (s >= 1.0) return 0.0;
    const double g = 1.0 - s * s;
    return kind_ == PsiKind::Quartic ? g * g : std::exp(1.0 - 1.0 / g);
  }

  PsiKind kind_;
  int d_;
  double R_;
  double c_ = 1.0;
};

/// ψ_δ(x,y) = η(x)^{-d} ψ(|y-x|/η(x)).
inline double psi_delta(const PsiSpec &psi, const LocalizationProfile &prof, const Point &x,
                        const Point &y) {
  const double eta = prof.eta(x);
  if (!(eta > 0)) throw DegenerateKernelError("psi_delta: x lies on the boundary (eta = 0)");
  return std::pow(eta, -psi.dim()) * psi.value(norm(y - x) / eta);
}

/// ∇_x ψ_δ(x,y) by the product rule through η(x).
inline Point psi_delta_grad_x(const PsiSpec &psi, const LocalizationProfile &prof, const Point &x,
                              const Point &y) {
  const EtaValue e = prof.eta_grad(x);
  if (!(e.value > 0)) throw DegenerateKernelError("psi_delta_grad_x: x lies on the boundary");
  if (!e.differentiable)
    throw NonSmoothError("psi_delta_grad_x: lambda is not differentiable at x; use a smoothed lambda");
  const int d = psi.dim();
  const Point diff = x - y;
  const double r = norm(diff), eta = e.value, t = r / eta;
  const double scale = std::pow(eta, -d);
  Point g = e.grad * (-d * scale * psi.value(t) / eta);
  const double dpsi = psi.deriv(t) * scale;
  if (dpsi != 0.0) {
    Point dt = e.grad * (-r / (eta * eta));
    if (r > 0) dt += diff * (1.0 / (r * eta));
    g += dt * dpsi;
  }
  return g;
}

struct CapitalPsi {
  double value;
  double bound; ///< ‖ψ‖_∞ ω_d ((1+κ_1δ)/(1-κ_1δ))^d
  [[nodiscard]] bool within_bound() const { return value <= bound; }
};

/// Ψ_δ(x) = ∫_Ω ψ_δ(y,x) dy by adaptive quadrature.
inline CapitalPsi capital_psi(const PsiSpec &psi, const LocalizationProfile &prof, const Point &x) {
  const Domain &dom = prof.domain();
  const int d = psi.dim();
  const double k1d = prof.kappa1() * prof.delta();
  const double bound = psi.sup_norm() * ball_volume(d) * std::pow((1 + k1d) / (1 - k1d), d);
  const double eta_x = prof.eta(x);
  if (!(eta_x > 0)) return {0.0, bound};
  // y reaches x only if |x-y| < R η(y) <= R(η(x) + κ_1δ|x-y|).
  const double reach = 1.01 * psi.support() * eta_x / (1.0 - psi.support() * k1d);
  auto kernel = [&](const Point &y) {
    if (!dom.contains(y)) return 0.0;
    const double ey = prof.eta(y);
    if (!(ey > 0)) return 0.0;
    return std::pow(ey, -d) * psi.value(norm(x - y) / ey);
  };
  double v = 0.0;
  if (d == 1) {
    auto f = [&](double t) { return kernel({t, 0}); };
    v = integrate_adaptive(f, std::max(dom.p0(), x.x - reach), x.x, 1e-13) +
        integrate_adaptive(f, x.x, std::min(dom.p1(), x.x + reach), 1e-13);
  } else {
    const Rule ang = circle_rule(64);
    for (std::size_t k = 0; k < ang.size(); ++k) {
      const Point w{std::cos(ang.nodes[k]), std::sin(ang.nodes[k])};
      const double top = std::min(reach, dom.ray_exit(x, w));
      v += ang.weights[k] *
           integrate_adaptive([&](double r) { return r * kernel(x + w * r); }, 0.0, top, 1e-9, 12);
    }
  }
  return {v, bound};
}

} // namespace hetnl
