#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hetnl {

/// Point in the plane; 1-D code uses only `x`.
struct Point {
  double x = 0.0;
  double y = 0.0;

  constexpr Point &operator+=(const Point &o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Point &operator-=(const Point &o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Point &operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
};

constexpr Point operator+(Point a, const Point &b) { return a += b; }
constexpr Point operator-(Point a, const Point &b) { return a -= b; }
constexpr Point operator*(Point a, double s) { return a *= s; }
constexpr Point operator*(double s, Point a) { return a *= s; }
constexpr bool operator==(const Point &a, const Point &b) {
  return a.x == b.x && a.y == b.y;
}

constexpr double dot(const Point &a, const Point &b) {
  return a.x * b.x + a.y * b.y;
}
inline double norm(const Point &a) { return std::hypot(a.x, a.y); }

inline constexpr double pi = std::numbers::pi;

// Error hierarchy. Every library failure is one of these.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error {
  using Error::Error;
};
/// Gradient requested where λ has a kink (ridge of the exact distance).
struct NonSmoothError : DomainError {
  using DomainError::DomainError;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DegenerateKernelError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct SizeError : Error {
  using Error::Error;
};
struct AssemblyError : Error {
  using Error::Error;
};
struct SolverError : Error {
  using Error::Error;
};

} // namespace hetnl
