#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "hetnl/core.hpp"
#include "hetnl/domain.hpp"
#include "hetnl/quadrature.hpp"
#include "hetnl/report.hpp"

namespace hetnl {

namespace detail {

/// C² even approximation of |u|: equals |u| for |u| >= w, smooth quartic inside.
struct SmoothAbs {
  double w;
  [[nodiscard]] double value(double u) const {
    const double a = std::abs(u);
    if (a >= w) return a;
    return 3.0 * w / 8.0 + 3.0 * u * u / (4.0 * w) - u * u * u * u / (8.0 * w * w * w);
  }
  [[nodiscard]] double deriv(double u) const {
    if (std::abs(u) >= w) return u > 0 ? 1.0 : -1.0;
    return 1.5 * u / w - 0.5 * u * u * u / (w * w * w);
  }
};

/// C² smoothstep on [0,1].
inline double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

} // namespace detail

// ---------------------------------------------------------------- q ----

enum class QKind { Identity, Arctan, MollifiedPower, Table };

struct QValue {
  double value;
  double derivative;
};

/// Localization rate q: [0,∞) -> [0,∞).
class QSpec {
public:
  static QSpec identity() { return QSpec(QKind::Identity); }

  /// q(r) = s·arctan(r/s).
  static QSpec arctan(double scale = 1.0) {
    if (!(scale > 0)) throw ConfigError("arctan q: scale must be positive");
    QSpec q(QKind::Arctan);
    q.params_ = {scale};
    return q;
  }

  /// q(r) = r^N/N for r <= 1-w, flattened by a C² smoothstep on [1-w, 1] and
  /// constant beyond r = 1.
  static QSpec mollified_power(int N, double knee_width = 0.2) {
    if (N < 1) throw ConfigError("mollified_power q: N must be >= 1");
    if (!(knee_width > 0 && knee_width < 1))
      throw ConfigError("mollified_power q: knee width must lie in (0,1)");
    QSpec q(QKind::MollifiedPower);
    q.params_ = {static_cast<double>(N), knee_width};
    q.knee_rule_ = gauss_legendre(16);
    q.saturation_ = q.eval(1.0).value;
    return q;
  }

  /// Monotone cubic through (r_i, q_i) with slopes clamped to [0,1].
  static QSpec table(std::vector<double> r, std::vector<double> v) {
    if (r.size() < 2 || r.size() != v.size())
      throw ConfigError("table q: need at least two (r, q) pairs");
    if (r.front() != 0.0 || v.front() != 0.0) throw ConfigError("table q: must start at (0, 0)");
    const std::size_t n = r.size();
    std::vector<double> sec(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double h = r[k + 1] - r[k];
      if (!(h > 0)) throw ConfigError("table q: radii must increase strictly");
      sec[k] = (v[k + 1] - v[k]) / h;
      if (sec[k] < 0 || sec[k] > 1 + 1e-14)
        throw ConfigError("table q: secant slopes must lie in [0,1]");
      if (v[k + 1] > r[k + 1] * (1 + 1e-14)) throw ConfigError("table q: requires q(r) <= r");
    }
    std::vector<double> m(n);
    m[0] = sec[0];
    m[n - 1] = sec[n - 2];
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (sec[k - 1] * sec[k] <= 0) {
        m[k] = 0;
        continue;
      }
      const double h0 = r[k] - r[k - 1], h1 = r[k + 1] - r[k];
      m[k] = 3 * (h0 + h1) / ((2 * h1 + h0) / sec[k - 1] + (h1 + 2 * h0) / sec[k]);
    }
    for (auto &s : m) s = std::clamp(s, 0.0, 1.0);
    // Hermite pieces can overshoot slope 1 (or dip below 0) even when every
    // secant lies in [0,1]; pull the knot slopes back until neither happens.
    auto range = [&](std::size_t k) {
      const double a = 3 * m[k] + 3 * m[k + 1] - 6 * sec[k], b = -4 * m[k] - 2 * m[k + 1] + 6 * sec[k];
      double lo = std::min(m[k], m[k + 1]), hi = std::max(m[k], m[k + 1]);
      if (a != 0) {
        const double t = -b / (2 * a);
        if (t > 0 && t < 1) {
          const double g = a * t * t + b * t + m[k];
          lo = std::min(lo, g);
          hi = std::max(hi, g);
        }
      }
      return std::pair{lo, hi};
    };
    bool ok = false;
    for (int sweep = 0; sweep < 100 && !ok; ++sweep) {
      ok = true;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto [lo, hi] = range(k);
        if (hi > 1 + 1e-12) {
          m[k] = std::max(m[k], sec[k]);
          m[k + 1] = std::max(m[k + 1], sec[k]);
          ok = false;
        } else if (lo < -1e-12) {
          m[k] = std::min(m[k], 3 * sec[k]);
          m[k + 1] = std::min(m[k + 1], 3 * sec[k]);
          ok = false;
        }
      }
    }
    if (!ok) throw ConfigError("table q: no C1 interpolant with 0 <= q' <= 1 through these knots; add knots");
    QSpec q(QKind::Table);
    q.tr_ = std::move(r);
    q.tv_ = std::move(v);
    q.tm_ = std::move(m);
    q.c_q_ = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < n; ++k)
      if (sec[k] == 0) {
        q.c_q_ = q.tr_[k];
        break;
      }
    return q;
  }

  [[nodiscard]] QKind kind() const { return kind_; }
  [[nodiscard]] const std::vector<double> &params() const { return params_; }

  /// Smoothness order k_q (a large number stands for C^∞).
  [[nodiscard]] int smoothness() const {
    switch (kind_) {
    case QKind::Identity:
    case QKind::Arctan: return 1000;
    case QKind::MollifiedPower: return 3;
    case QKind::Table: return 1;
    }
    return 0;
  }

  /// Positivity radius c_q: q' > 0 on (0, c_q]. For the mollified power this
  /// is the recorded knee start 1-w.
  [[nodiscard]] double positivity_radius() const {
    switch (kind_) {
    case QKind::Identity:
    case QKind::Arctan: return std::numeric_limits<double>::infinity();
    case QKind::MollifiedPower: return 1.0 - params_[1];
    case QKind::Table: return c_q_;
    }
    return 0.0;
  }

  /// Doubling constant measured on r ∈ {2^-k, k=0..40}.
  [[nodiscard]] double doubling_constant() const;

  [[nodiscard]] QValue eval(double r) const {
    if (!(r >= 0.0)) throw DomainError("q_eval: r must be >= 0");
    switch (kind_) {
    case QKind::Identity: return {r, 1.0};
    case QKind::Arctan: {
      const double s = params_[0], t = r / s;
      return {s * std::atan(t), 1.0 / (1.0 + t * t)};
    }
    case QKind::MollifiedPower: {
      const int N = static_cast<int>(params_[0]);
      const double w = params_[1], lo = 1.0 - w;
      auto dq = [&](double t) {
        return std::pow(t, N - 1) * (1.0 - detail::smoothstep((t - lo) / w));
      };
      if (r <= lo) return {std::pow(r, N) / N, std::pow(r, N - 1)};
      if (r >= 1.0 && saturation_ > 0) return {saturation_, 0.0};
      const double top = std::min(r, 1.0), half = 0.5 * (top - lo);
      double v = std::pow(lo, N) / N;
      for (std::size_t i = 0; i < knee_rule_.size(); ++i)
        v += knee_rule_.weights[i] * half * dq(lo + half * (knee_rule_.nodes[i] + 1.0));
      return {v, r >= 1.0 ? 0.0 : dq(r)};
    }
    case QKind::Table: {
      const std::size_t n = tr_.size();
      if (r >= tr_[n - 1]) return {tv_[n - 1] + tm_[n - 1] * (r - tr_[n - 1]), tm_[n - 1]};
      const auto it = std::upper_bound(tr_.begin(), tr_.end(), r);
      const std::size_t k = static_cast<std::size_t>(it - tr_.begin()) - 1;
      const double h = tr_[k + 1] - tr_[k], t = (r - tr_[k]) / h;
      const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
      const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
      const double v = h00 * tv_[k] + h10 * h * tm_[k] + h01 * tv_[k + 1] + h11 * h * tm_[k + 1];
      const double d00 = 6 * t * t - 6 * t, d10 = 3 * t * t - 4 * t + 1;
      const double d01 = -6 * t * t + 6 * t, d11 = 3 * t * t - 2 * t;
      const double dv = (d00 * tv_[k] + d01 * tv_[k + 1]) / h + d10 * tm_[k] + d11 * tm_[k + 1];
      return {v, dv};
    }
    }
    return {0, 0};
  }

  [[nodiscard]] std::string describe() const {
    switch (kind_) {
    case QKind::Identity: return "identity";
    case QKind::Arctan: return "arctan(scale=" + fmt_num(params_[0]) + ")";
    case QKind::MollifiedPower:
      return "mollified_power(N=" + fmt_num(params_[0]) + ", knee=" + fmt_num(params_[1]) + ")";
    case QKind::Table: return "table(" + std::to_string(tr_.size()) + " knots)";
    }
    return "?";
  }

private:
  explicit QSpec(QKind k) : kind_(k) {}
  QKind kind_;
  std::vector<double> params_;
  Rule knee_rule_;
  double saturation_ = 0.0;
  std::vector<double> tr_, tv_, tm_;
  double c_q_ = 0.0;
};

inline double q_value(const QSpec &q, double r) { return q.eval(r).value; }

/// sup q(2r)/q(r) over the given radii (those with q(r) > 0).
inline double measure_doubling(const QSpec &q, const std::vector<double> &radii) {
  double c = 1.0;
  for (double r : radii) {
    const double a = q.eval(r).value;
    if (a > 0) c = std::max(c, q.eval(2.0 * r).value / a);
  }
  return c;
}

/// Doubling constant on the geometric grid {scale·2^-k, k = 0..40}.
inline double measure_doubling(const QSpec &q, double scale) {
  std::vector<double> radii;
  for (int k = 0; k <= 40; ++k) radii.push_back(std::ldexp(scale, -k));
  return measure_doubling(q, radii);
}

inline double QSpec::doubling_constant() const { return measure_doubling(*this, 1.0); }

// ---------------------------------------------------------------- λ ----

enum class LambdaKind { Distance, Smoothed };

struct LambdaValue {
  double value;
  Point grad;
  bool differentiable;
};

/// Generalized distance λ. `Smoothed` replaces the ridge of dist by a C²
/// profile of relative width `smoothing`; near ∂Ω it coincides with dist
/// (on the rectangle, away from the diagonal cones through the corners).
class LambdaSpec {
public:
  static LambdaSpec distance() { return LambdaSpec(LambdaKind::Distance, 0.0); }
  static LambdaSpec smoothed(double smoothing = 0.25) {
    if (!(smoothing > 0 && smoothing < 1))
      throw ConfigError("smoothed lambda: smoothing fraction must lie in (0,1)");
    return LambdaSpec(LambdaKind::Smoothed, smoothing);
  }

  [[nodiscard]] LambdaKind kind() const { return kind_; }
  [[nodiscard]] double smoothing() const { return c_; }

  /// Declared comparability constant κ_0.
  [[nodiscard]] double kappa0(const Domain &dom) const {
    if (kind_ == LambdaKind::Distance) return 1.0;
    const double one = 1.0 / (1.0 - 3.0 * c_ / 8.0);
    return dom.shape() == Shape::Rectangle ? one * one : one;
  }
  /// Declared Lipschitz constant κ_1.
  [[nodiscard]] double kappa1(const Domain &) const { return 1.0; }

  [[nodiscard]] LambdaValue eval(const Domain &dom, const Point &x) const {
    const double dist = dom.boundary_distance(x);
    return kind_ == LambdaKind::Distance ? exact(dom, x, dist) : smooth(dom, x);
  }

  [[nodiscard]] std::string describe() const {
    return kind_ == LambdaKind::Distance ? "distance" : "smoothed(" + fmt_num(c_) + ")";
  }

private:
  LambdaSpec(LambdaKind k, double c) : kind_(k), c_(c) {}

  static LambdaValue exact(const Domain &dom, const Point &x, double dist) {
    const double tie = 1e-14 * dom.diameter();
    switch (dom.shape()) {
    case Shape::Interval: {
      const double l = x.x - dom.p0(), r = dom.p1() - x.x;
      if (std::abs(l - r) <= tie) return {dist, {0, 0}, false};
      return {dist, {l < r ? 1.0 : -1.0, 0.0}, true};
    }
    case Shape::Rectangle: {
      const double d[4] = {x.x - dom.p0(), dom.p1() - x.x, x.y - dom.p2(), dom.p3() - x.y};
      const Point n[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      int best = 0, ties = 0;
      for (int k = 1; k < 4; ++k)
        if (d[k] < d[best]) best = k;
      for (int k = 0; k < 4; ++k)
        if (std::abs(d[k] - d[best]) <= tie) ++ties;
      return {dist, n[best], ties == 1};
    }
    case Shape::Disc: {
      const Point w{x.x - dom.p0(), x.y - dom.p1()};
      const double r = norm(w);
      if (r <= tie) return {dist, {0, 0}, false};
      return {dist, w * (-1.0 / r), true};
    }
    }
    return {dist, {0, 0}, false};
  }

  // 1-D smoothed distance for [lo, hi] at coordinate t: (value, derivative).
  [[nodiscard]] std::pair<double, double> axis(double lo, double hi, double t) const {
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    const detail::SmoothAbs s{c_ * half};
    return {std::max(0.0, half - s.value(t - mid)), -s.deriv(t - mid)};
  }

  [[nodiscard]] LambdaValue smooth(const Domain &dom, const Point &x) const {
    switch (dom.shape()) {
    case Shape::Interval: {
      const auto [v, d] = axis(dom.p0(), dom.p1(), x.x);
      return {v, {d, 0}, true};
    }
    case Shape::Disc: {
      const Point w{x.x - dom.p0(), x.y - dom.p1()};
      const double r = norm(w);
      const detail::SmoothAbs s{c_ * dom.p2()};
      const double v = std::max(0.0, dom.p2() - s.value(r));
      if (r == 0) return {v, {0, 0}, true};
      return {v, w * (-s.deriv(r) / r), true};
    }
    case Shape::Rectangle: {
      // Homogeneous smooth minimum of the two axis distances.
      const auto [a, da] = axis(dom.p0(), dom.p1(), x.x);
      const auto [b, db] = axis(dom.p2(), dom.p3(), x.y);
      const double sum = a + b;
      if (sum <= 0) return {0.0, {0, 0}, false};
      const detail::SmoothAbs s{c_};
      const double v = (a - b) / sum;
      // outside the blend the minimum is exact; avoids cancellation in 1 − |v|
      if (v >= c_) return {b, {0, db}, true};
      if (v <= -c_) return {a, {da, 0}, true};
      const double h = 0.5 * (1.0 - s.value(v)), hp = -0.5 * s.deriv(v);
      const double k = h - v * hp;
      return {sum * h, {da * (k + hp), db * (k - hp)}, true};
    }
    }
    return {0, {0, 0}, false};
  }

  LambdaKind kind_;
  double c_;
};

// ---------------------------------------------------- thresholds / η ----

struct Thresholds {
  double delta0;     ///< 1/(3·max{1, κ_1, C_q·κ_0^{log2 C_q}})
  double delta0_bar; ///< smallest positive root of M(δ) = 1/3
  [[nodiscard]] double min() const { return std::min(delta0, delta0_bar); }
};

inline Thresholds delta_thresholds_from(double Cq, double kappa0, double kappa1) {
  if (!(kappa0 >= 1.0) || !(kappa1 > 0.0) || !(Cq >= 1.0))
    throw ConfigError("delta_thresholds: need kappa0 >= 1, kappa1 > 0, C_q >= 1");
  const double growth = Cq * std::pow(kappa0, std::log2(Cq));
  const double d0 = 1.0 / (3.0 * std::max({1.0, kappa1, growth}));
  // M(δ) = (1+κ1δ)δ/(1−κ1δ)² increases from 0 to ∞ on (0, 1/κ1).
  auto M = [&](double d) {
    const double k = kappa1 * d;
    return (1.0 + k) * d / ((1.0 - k) * (1.0 - k));
  };
  double lo = 0.0, hi = 1.0 / kappa1;
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    (M(mid) < 1.0 / 3.0 ? lo : hi) = mid;
  }
  return {d0, 0.5 * (lo + hi)};
}

inline Thresholds delta_thresholds(const QSpec &q, double kappa0, double kappa1) {
  return delta_thresholds_from(q.doubling_constant(), kappa0, kappa1);
}

struct EtaValue {
  double value;
  Point grad;
  bool differentiable;
};

/// (q, λ, δ) on a domain, with η_δ(x) = δ·q(λ(x)).
class LocalizationProfile {
public:
  LocalizationProfile(Domain dom, QSpec q, LambdaSpec lambda, double delta)
      : dom_(std::move(dom)), q_(std::move(q)), lambda_(lambda), delta_(delta) {
    if (!(delta > 0)) throw ConfigError("profile: delta must be positive");
    cq_ = measure_doubling(q_, dom_.diameter());
    thresholds_ = delta_thresholds_from(cq_, kappa0(), kappa1());
  }

  [[nodiscard]] const Domain &domain() const { return dom_; }
  [[nodiscard]] const QSpec &q() const { return q_; }
  [[nodiscard]] const LambdaSpec &lambda() const { return lambda_; }
  [[nodiscard]] double delta() const { return delta_; }
  [[nodiscard]] double doubling() const { return cq_; }
  [[nodiscard]] double kappa0() const { return lambda_.kappa0(dom_); }
  [[nodiscard]] double kappa1() const { return lambda_.kappa1(dom_); }
  [[nodiscard]] const Thresholds &thresholds() const { return thresholds_; }
  [[nodiscard]] bool admissible() const { return delta_ < thresholds_.min(); }

  void require_admissible(const std::string &who) const {
    if (!admissible())
      throw ConfigError(who + ": delta = " + fmt_num(delta_) +
                        " is not admissible (must be < " + fmt_num(thresholds_.min()) + ")");
  }

  [[nodiscard]] LocalizationProfile with_delta(double d) const {
    LocalizationProfile p = *this;
    if (!(d > 0)) throw ConfigError("profile: delta must be positive");
    p.delta_ = d;
    return p;
  }

  [[nodiscard]] double eta(const Point &x) const {
    return delta_ * q_.eval(lambda_.eval(dom_, x).value).value;
  }

  [[nodiscard]] EtaValue eta_grad(const Point &x) const {
    const LambdaValue l = lambda_.eval(dom_, x);
    const QValue q = q_.eval(l.value);
    return {delta_ * q.value, l.grad * (delta_ * q.derivative), l.differentiable};
  }

private:
  Domain dom_;
  QSpec q_;
  LambdaSpec lambda_;
  double delta_;
  double cq_ = 1.0;
  Thresholds thresholds_{0, 0};
};

inline double eta_delta(const LocalizationProfile &p, const Point &x) { return p.eta(x); }

// ---------------------------------------------------------- validation ----

/// Sample points covering Ω with geometric clustering toward ∂Ω.
inline std::vector<Point> validation_grid(const Domain &dom, int n = 64, int levels = 30) {
  std::vector<Point> pts;
  auto axis = [&](double lo, double hi) {
    std::vector<double> t;
    for (int i = 0; i <= n; ++i) t.push_back(lo + (hi - lo) * i / n);
    for (int k = 1; k <= levels; ++k) {
      const double off = std::ldexp(hi - lo, -k - 1);
      t.push_back(lo + off);
      t.push_back(hi - off);
    }
    std::sort(t.begin(), t.end());
    return t;
  };
  switch (dom.shape()) {
  case Shape::Interval:
    for (double t : axis(dom.p0(), dom.p1())) pts.push_back({t, 0});
    break;
  case Shape::Rectangle: {
    const auto ax = axis(dom.p0(), dom.p1()), ay = axis(dom.p2(), dom.p3());
    for (double y : ay)
      for (double x : ax) pts.push_back({x, y});
    break;
  }
  case Shape::Disc: {
    const double R = dom.p2();
    pts.push_back({dom.p0(), dom.p1()});
    const auto radii = axis(-R, R);
    for (double r : radii) {
      if (r <= 0) continue;
      for (int j = 0; j < 2 * n; ++j) {
        const double th = pi * j / n + 0.1;
        pts.push_back({dom.p0() + r * std::cos(th), dom.p1() + r * std::sin(th)});
      }
    }
    break;
  }
  }
  return pts;
}

namespace detail {
inline std::string witness(const Point &x, const Point &y) {
  return "x=(" + fmt_num(x.x) + "," + fmt_num(x.y) + ") y=(" + fmt_num(y.x) + "," +
         fmt_num(y.y) + ")";
}
inline std::string witness(const Point &x) {
  return "x=(" + fmt_num(x.x) + "," + fmt_num(x.y) + ")";
}
} // namespace detail

/// Checks (A_q), (A_λ), (A_δ) and their consequences on the grid. Never throws
/// for violated invariants; call Report::require() for that.
inline Report validate_profile(const LocalizationProfile &prof, const std::vector<Point> &grid,
                               std::uint64_t seed = 7) {
  const Domain &dom = prof.domain();
  const QSpec &q = prof.q();
  const double delta = prof.delta(), k0 = prof.kappa0(), k1 = prof.kappa1();
  Report rep;

  // (A_q) on a geometric radius grid.
  {
    std::vector<double> radii;
    for (int k = 0; k <= 40; ++k) radii.push_back(std::ldexp(dom.diameter(), -k));
    double worst_ratio = 0, min_slope = 1e300, max_slope = -1e300, min_pos = 1e300;
    double worst_r = 0;
    const double cq = q.positivity_radius();
    for (double r : radii) {
      const QValue v = q.eval(r);
      if (v.value / r > worst_ratio) worst_ratio = v.value / r, worst_r = r;
      min_slope = std::min(min_slope, v.derivative);
      max_slope = std::max(max_slope, v.derivative);
      if (r <= cq) min_pos = std::min(min_pos, v.value);
    }
    rep.add("q_zero", std::abs(q.eval(0.0).value), 0.0, q.eval(0.0).value == 0.0);
    rep.add("q_le_r", worst_ratio, 1.0, worst_ratio <= 1.0 + 1e-14, "r=" + fmt_num(worst_r));
    rep.add("q_positive", min_pos, 0.0, min_pos > 0.0);
    rep.add("q_slope_min", min_slope, 0.0, min_slope >= -1e-14);
    rep.add("q_slope_max", max_slope, 1.0, max_slope <= 1.0 + 1e-14);
    const double measured = measure_doubling(q, radii);
    rep.add("q_doubling", measured, prof.doubling(), measured <= prof.doubling() * (1 + 1e-12));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, grid.empty() ? 0 : grid.size() - 1);

  double kappa0_meas = 1.0, kappa1_meas = 0.0, eta_lip = 0.0, eta_third = 0.0;
  double ball = 0.0, comp_lo = 1.0, comp_hi = 1.0, min_det = 1e300;
  std::string w_k0, w_k1, w_lip, w_third, w_ball, w_comp, w_det;
  const auto dirs = sphere_directions(dom.dim(), 16);

  for (const Point &x : grid) {
    const double dist = dom.boundary_distance(x);
    const LambdaValue lx = prof.lambda().eval(dom, x);
    const EtaValue ex = prof.eta_grad(x);
    if (dist > 0) {
      const double r = std::max(lx.value / dist, dist / std::max(lx.value, 1e-300));
      if (r > kappa0_meas) kappa0_meas = r, w_k0 = detail::witness(x);
      const double third = ex.value / (q.eval(dist).value / 3.0);
      if (third > eta_third) eta_third = third, w_third = detail::witness(x);
      if (ex.value / dist > ball) ball = ex.value / dist, w_ball = detail::witness(x);
    }
    if (ex.differentiable && ex.value > 0) {
      for (const auto &d : dirs) {
        const double det = 1.0 + dot(ex.grad, d.omega);
        if (det < min_det) min_det = det, w_det = detail::witness(x);
      }
    }
    // Pairs: a random partner in the grid and a partner inside B(x, η(x)).
    std::vector<Point> partners{grid[pick(rng)]};
    if (ex.value > 0) {
      const double ang = 2 * pi * U(rng), t = ex.value * U(rng);
      Point y = dom.dim() == 1 ? Point{x.x + (U(rng) < 0.5 ? -t : t), 0}
                               : Point{x.x + t * std::cos(ang), x.y + t * std::sin(ang)};
      if (dom.contains(y)) partners.push_back(y);
    }
    for (const Point &y : partners) {
      const double h = norm(x - y);
      if (h <= 0) continue;
      const double ly = prof.lambda().eval(dom, y).value;
      const double ey = prof.eta(y);
      const double s1 = std::abs(lx.value - ly) / h;
      if (s1 > kappa1_meas) kappa1_meas = s1, w_k1 = detail::witness(x, y);
      const double s2 = std::abs(ex.value - ey) / h;
      if (s2 > eta_lip) eta_lip = s2, w_lip = detail::witness(x, y);
      if (h <= ex.value) {
        const double ratio = ey / ex.value;
        if (ratio < comp_lo) comp_lo = ratio, w_comp = detail::witness(x, y);
        if (ratio > comp_hi) comp_hi = ratio, w_comp = detail::witness(x, y);
      }
    }
  }
  const double slack = 1e-12;
  rep.add("lambda_kappa0", kappa0_meas, k0, kappa0_meas <= k0 * (1 + slack), w_k0);
  rep.add("lambda_kappa1", kappa1_meas, k1, kappa1_meas <= k1 * (1 + 1e-9), w_k1);
  rep.add("delta_admissible", delta, prof.thresholds().min(), prof.admissible());
  rep.add("eta_le_third_q_dist", eta_third, 1.0, eta_third <= 1.0 + slack, w_third);
  rep.add("eta_lipschitz", eta_lip, 1.0 / 3.0, eta_lip <= 1.0 / 3.0 + 1e-9, w_lip);
  rep.add("ball_inside_domain", ball, 1.0, ball <= 1.0 + slack, w_ball);
  rep.add("eta_comparability_low", comp_lo, 1.0 - k1 * delta, comp_lo >= 1.0 - k1 * delta - 1e-9,
          w_comp);
  rep.add("eta_comparability_high", comp_hi, 1.0 + k1 * delta,
          comp_hi <= 1.0 + k1 * delta + 1e-9, w_comp);
  if (min_det < 1e300) {
    const double bound = 1.0 - k1 * delta;
    rep.add("zeta_jacobian", min_det, bound, min_det >= bound - 1e-12 && min_det > 2.0 / 3.0,
            w_det);
  }
  return rep;
}

} // namespace hetnl
