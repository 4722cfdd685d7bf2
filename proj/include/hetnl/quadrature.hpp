#pragma once

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <vector>

#include "hetnl/core.hpp"

namespace hetnl {

/// Nodes and weights of a 1-D rule.
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
  template <class F> [[nodiscard]] double apply(F &&f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

/// Gauss-Jacobi rule on [-1,1] for the weight (1-t)^a (1+t)^b, a,b > -1.
/// Golub-Welsch on the monic three-term recurrence.
inline Rule gauss_jacobi(int n, double a, double b) {
  if (n < 1) throw ConfigError("gauss_jacobi: n must be >= 1");
  if (!(a > -1.0) || !(b > -1.0))
    throw ConfigError("gauss_jacobi: exponents must exceed -1");
  const double ab = a + b;
  Eigen::VectorXd diag(n), off(std::max(n - 1, 1));
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + ab;
    diag(k) = (k == 0) ? (b - a) / (ab + 2.0) : (b * b - a * a) / (s * (s + 2.0));
  }
  for (int k = 1; k < n; ++k) {
    const double s = 2.0 * k + ab;
    double beta;
    if (k == 1)
      beta = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
    else
      beta = 4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0));
    off(k - 1) = std::sqrt(beta);
  }
  const double mu0 = std::exp((ab + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) +
                              std::lgamma(b + 1.0) - std::lgamma(ab + 2.0));
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  if (n == 1) {
    r.nodes[0] = diag(0);
    r.weights[0] = mu0;
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, off.head(n - 1), Eigen::ComputeEigenvectors);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    r.weights[i] = mu0 * v0 * v0;
  }
  return r;
}

inline Rule gauss_legendre(int n) { return gauss_jacobi(n, 0.0, 0.0); }

/// Gauss-Legendre on [lo, hi].
inline Rule gauss_legendre(int n, double lo, double hi) {
  Rule r = gauss_legendre(n);
  const double h = 0.5 * (hi - lo);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r.nodes[i] = lo + h * (r.nodes[i] + 1.0);
    r.weights[i] *= h;
  }
  return r;
}

/// Rule for ∫_0^b r^alpha f(r) dr (weight absorbed into the weights).
inline Rule jacobi_radial(int n, double alpha, double b = 1.0) {
  Rule r = gauss_jacobi(n, 0.0, alpha);
  const double scale = std::pow(0.5 * b, alpha + 1.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r.nodes[i] = 0.5 * b * (r.nodes[i] + 1.0);
    r.weights[i] *= scale;
  }
  return r;
}

/// Rule for ∫_a^b r^alpha f(r) dr with 0 < a < b: Gauss-Legendre in t = r^(alpha+1).
inline Rule power_mapped_legendre(int n, double alpha, double a, double b) {
  const double e = alpha + 1.0;
  Rule t = gauss_legendre(n, std::pow(a, e), std::pow(b, e));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.nodes[i] = std::pow(t.nodes[i], 1.0 / e);
    t.weights[i] /= e;
  }
  return t;
}

/// Cached reference rules for ∫_a^b r^alpha f(r) dr on many intervals.
class RadialPieces {
public:
  RadialPieces(int n, double alpha, int n_later = 0)
      : alpha_(alpha), jac_(gauss_jacobi(n, 0.0, alpha)),
        leg_(gauss_legendre(n_later > 0 ? n_later : n)) {}

  /// Piece starting at r = 0 (Gauss-Jacobi).
  [[nodiscard]] Rule first(double b) const {
    Rule r = jac_;
    const double scale = std::pow(0.5 * b, alpha_ + 1.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r.nodes[i] = 0.5 * b * (r.nodes[i] + 1.0);
      r.weights[i] *= scale;
    }
    return r;
  }
  /// Piece [a, b] with a > 0 (Gauss-Legendre in r^(alpha+1)).
  [[nodiscard]] Rule later(double a, double b) const {
    const double e = alpha_ + 1.0, ta = std::pow(a, e), tb = std::pow(b, e);
    const double h = 0.5 * (tb - ta);
    Rule r = leg_;
    for (std::size_t i = 0; i < r.size(); ++i) {
      r.nodes[i] = std::pow(ta + h * (r.nodes[i] + 1.0), 1.0 / e);
      r.weights[i] *= h / e;
    }
    return r;
  }
  [[nodiscard]] Rule piece(double a, double b) const { return a == 0.0 ? first(b) : later(a, b); }

private:
  double alpha_;
  Rule jac_, leg_;
};

/// Equal-weight rule on the circle; weights sum to 2π.
inline Rule circle_rule(int n) {
  if (n < 1) throw ConfigError("circle_rule: n must be >= 1");
  Rule r;
  for (int k = 0; k < n; ++k) {
    r.nodes.push_back(2.0 * pi * (k + 0.5) / n);
    r.weights.push_back(2.0 * pi / n);
  }
  return r;
}

/// Directions ω on S^{d-1} with weights summing to σ(S^{d-1}).
struct Direction {
  Point omega;
  double weight;
};
inline std::vector<Direction> sphere_directions(int d, int n_angles) {
  if (d == 1) return {{{1.0, 0.0}, 1.0}, {{-1.0, 0.0}, 1.0}};
  std::vector<Direction> out;
  const Rule c = circle_rule(n_angles);
  for (std::size_t k = 0; k < c.size(); ++k)
    out.push_back({{std::cos(c.nodes[k]), std::sin(c.nodes[k])}, c.weights[k]});
  return out;
}

/// Adaptive Gauss-Kronrod integration on [a, b].
template <class F>
double integrate_adaptive(F &&f, double a, double b, double tol = 1e-11,
                          unsigned max_depth = 18) {
  if (b <= a) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, max_depth, tol, &err);
}

} // namespace hetnl
