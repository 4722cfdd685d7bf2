#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hetnl/core.hpp"

namespace hetnl {

enum class Shape { Interval, Rectangle, Disc };

/// Ω: an interval [a,b], an axis-aligned rectangle, or a disc.
class Domain {
public:
  static Domain interval(double a, double b) {
    if (!(b > a)) throw ConfigError("interval: need a < b");
    return Domain(Shape::Interval, a, b, 0.0, 0.0);
  }
  static Domain rectangle(double x0, double x1, double y0, double y1) {
    if (!(x1 > x0) || !(y1 > y0)) throw ConfigError("rectangle: empty extent");
    return Domain(Shape::Rectangle, x0, x1, y0, y1);
  }
  static Domain disc(double cx, double cy, double radius) {
    if (!(radius > 0.0)) throw ConfigError("disc: radius must be positive");
    return Domain(Shape::Disc, cx, cy, radius, 0.0);
  }

  [[nodiscard]] Shape shape() const { return shape_; }
  [[nodiscard]] int dim() const { return shape_ == Shape::Interval ? 1 : 2; }

  // Raw parameters: interval (a,b); rectangle (x0,x1,y0,y1); disc (cx,cy,R).
  [[nodiscard]] double p0() const { return p_[0]; }
  [[nodiscard]] double p1() const { return p_[1]; }
  [[nodiscard]] double p2() const { return p_[2]; }
  [[nodiscard]] double p3() const { return p_[3]; }

  [[nodiscard]] double diameter() const {
    switch (shape_) {
    case Shape::Interval: return p_[1] - p_[0];
    case Shape::Rectangle: return std::hypot(p_[1] - p_[0], p_[3] - p_[2]);
    case Shape::Disc: return 2.0 * p_[2];
    }
    return 0.0;
  }
  [[nodiscard]] double measure() const {
    switch (shape_) {
    case Shape::Interval: return p_[1] - p_[0];
    case Shape::Rectangle: return (p_[1] - p_[0]) * (p_[3] - p_[2]);
    case Shape::Disc: return pi * p_[2] * p_[2];
    }
    return 0.0;
  }
  /// σ(∂Ω); counting measure in 1-D.
  [[nodiscard]] double boundary_measure() const {
    switch (shape_) {
    case Shape::Interval: return 2.0;
    case Shape::Rectangle: return 2.0 * ((p_[1] - p_[0]) + (p_[3] - p_[2]));
    case Shape::Disc: return 2.0 * pi * p_[2];
    }
    return 0.0;
  }
  [[nodiscard]] Point center() const {
    switch (shape_) {
    case Shape::Interval: return {0.5 * (p_[0] + p_[1]), 0.0};
    case Shape::Rectangle: return {0.5 * (p_[0] + p_[1]), 0.5 * (p_[2] + p_[3])};
    case Shape::Disc: return {p_[0], p_[1]};
    }
    return {};
  }

  /// Tolerance used to accept points that round slightly outside Ω.
  [[nodiscard]] double tolerance() const { return 1e-12 * diameter(); }

  /// Signed distance to ∂Ω, positive inside.
  [[nodiscard]] double signed_distance(const Point &x) const {
    switch (shape_) {
    case Shape::Interval: return std::min(x.x - p_[0], p_[1] - x.x);
    case Shape::Rectangle:
      return std::min(std::min(x.x - p_[0], p_[1] - x.x),
                      std::min(x.y - p_[2], p_[3] - x.y));
    case Shape::Disc: return p_[2] - std::hypot(x.x - p_[0], x.y - p_[1]);
    }
    return 0.0;
  }

  [[nodiscard]] bool contains(const Point &x) const {
    return signed_distance(x) >= -tolerance();
  }

  /// Exact distance to ∂Ω for x in the closure; DomainError outside.
  [[nodiscard]] double boundary_distance(const Point &x) const {
    const double s = signed_distance(x);
    if (!(s >= -tolerance()))
      throw DomainError("boundary_distance: point (" + std::to_string(x.x) + ", " +
                        std::to_string(x.y) + ") lies outside " + name());
    return std::max(s, 0.0);
  }

  /// Distance from x along unit direction u to ∂Ω.
  [[nodiscard]] double ray_exit(const Point &x, const Point &u) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto slab = [](double x0, double lo, double hi, double v) {
      if (v > 0) return (hi - x0) / v;
      if (v < 0) return (lo - x0) / v;
      return inf;
    };
    switch (shape_) {
    case Shape::Interval: return std::max(0.0, slab(x.x, p_[0], p_[1], u.x));
    case Shape::Rectangle:
      return std::max(0.0, std::min(slab(x.x, p_[0], p_[1], u.x),
                                    slab(x.y, p_[2], p_[3], u.y)));
    case Shape::Disc: {
      const Point w{x.x - p_[0], x.y - p_[1]};
      const double b = dot(w, u), c = dot(w, w) - p_[2] * p_[2];
      return std::max(0.0, -b + std::sqrt(std::max(0.0, b * b - c)));
    }
    }
    return 0.0;
  }

  [[nodiscard]] std::string name() const {
    switch (shape_) {
    case Shape::Interval: return "interval";
    case Shape::Rectangle: return "rectangle";
    case Shape::Disc: return "disc";
    }
    return "?";
  }

private:
  Domain(Shape s, double a, double b, double c, double d) : shape_(s), p_{a, b, c, d} {}
  Shape shape_;
  double p_[4];
};

} // namespace hetnl
