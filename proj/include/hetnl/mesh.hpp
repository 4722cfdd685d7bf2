#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hetnl/core.hpp"
#include "hetnl/domain.hpp"
#include "hetnl/localization.hpp"
#include "hetnl/quadrature.hpp"

namespace hetnl {

enum class MeshKind { Interval, Tensor, Polar };

/// Grading descriptor: interior spacing, growth ratio ρ_g, floor, and the
/// resolution factor ρ_h capping spacing by ρ_h·η when a profile is given.
struct GradingParams {
  double h_int = 0.05;
  double ratio = 0.5;
  double h_min = 1e-4;
  double resolution = 0.25;
  std::size_t node_budget = 4'000'000;
};

/// Cell index plus local coordinates in [0,1]^d.
struct CellRef {
  int cell;
  double xi;
  double eta;
};

struct QuadPoint {
  Point x;
  double weight;
  double xi;
  double eta;
};

/// Boundary piece: a single node in 1-D (counting measure), an edge or arc in 2-D.
struct BoundaryFacet {
  int a;
  int b; ///< -1 in 1-D
  double length;
};

/// Structured mesh with multilinear elements: breakpoints in 1-D, a tensor
/// grid on rectangles, an (r,θ) grid with a merged center node on discs.
class Mesh {
public:
  static Mesh interval(const Domain &dom, std::vector<double> xs) {
    if (dom.shape() != Shape::Interval) throw ConfigError("interval mesh needs an interval domain");
    check_axis(xs, dom.p0(), dom.p1(), "x");
    Mesh m(dom, MeshKind::Interval);
    m.ax_ = std::move(xs);
    m.finish();
    return m;
  }
  static Mesh tensor(const Domain &dom, std::vector<double> xs, std::vector<double> ys) {
    if (dom.shape() != Shape::Rectangle) throw ConfigError("tensor mesh needs a rectangle domain");
    check_axis(xs, dom.p0(), dom.p1(), "x");
    check_axis(ys, dom.p2(), dom.p3(), "y");
    Mesh m(dom, MeshKind::Tensor);
    m.ax_ = std::move(xs);
    m.ay_ = std::move(ys);
    m.finish();
    return m;
  }
  /// radii from 0 to R; n_theta equal angular sectors.
  static Mesh polar(const Domain &dom, std::vector<double> radii, int n_theta) {
    if (dom.shape() != Shape::Disc) throw ConfigError("polar mesh needs a disc domain");
    check_axis(radii, 0.0, dom.p2(), "r");
    if (n_theta < 4) throw ConfigError("polar mesh: need at least 4 sectors");
    Mesh m(dom, MeshKind::Polar);
    m.ax_ = std::move(radii);
    for (int j = 0; j <= n_theta; ++j) m.ay_.push_back(2.0 * pi * j / n_theta);
    m.finish();
    return m;
  }

  [[nodiscard]] const Domain &domain() const { return dom_; }
  [[nodiscard]] MeshKind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dom_.dim(); }
  [[nodiscard]] const std::vector<double> &axis_x() const { return ax_; }
  [[nodiscard]] const std::vector<double> &axis_y() const { return ay_; }

  [[nodiscard]] std::size_t num_nodes() const { return nodes_.size(); }
  [[nodiscard]] const std::vector<Point> &nodes() const { return nodes_; }
  [[nodiscard]] const Point &node(std::size_t i) const { return nodes_[i]; }
  [[nodiscard]] const std::vector<int> &boundary_nodes() const { return boundary_; }
  [[nodiscard]] bool is_boundary(std::size_t i) const { return on_boundary_[i] != 0; }
  [[nodiscard]] std::size_t num_cells() const { return cell_size_.size(); }

  /// Corner nodes of a cell (2 in 1-D, 4 in 2-D; polar center cells repeat the center).
  [[nodiscard]] int cell_nodes(int c, std::array<int, 4> &out) const {
    if (kind_ == MeshKind::Interval) {
      out = {c, c + 1, -1, -1};
      return 2;
    }
    const auto [i, j] = split(c);
    out = {grid_node(i, j), grid_node(i + 1, j), grid_node(i + 1, j + 1), grid_node(i, j + 1)};
    return 4;
  }

  [[nodiscard]] static std::array<double, 4> basis(int dim, double xi, double eta) {
    if (dim == 1) return {1.0 - xi, xi, 0.0, 0.0};
    return {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
  }

  /// Physical gradients of the corner basis functions.
  [[nodiscard]] std::array<Point, 4> basis_grad(int c, double xi, double eta) const {
    const double dxi[4] = {-(1 - eta), (1 - eta), eta, -eta};
    const double deta[4] = {-(1 - xi), -xi, xi, (1 - xi)};
    std::array<Point, 4> g{};
    switch (kind_) {
    case MeshKind::Interval: {
      const double h = ax_[c + 1] - ax_[c];
      g[0] = {-1.0 / h, 0};
      g[1] = {1.0 / h, 0};
      break;
    }
    case MeshKind::Tensor: {
      const auto [i, j] = split(c);
      const double hx = ax_[i + 1] - ax_[i], hy = ay_[j + 1] - ay_[j];
      for (int k = 0; k < 4; ++k) g[k] = {dxi[k] / hx, deta[k] / hy};
      break;
    }
    case MeshKind::Polar: {
      const auto [i, j] = split(c);
      const double dr = ax_[i + 1] - ax_[i], dt = ay_[j + 1] - ay_[j];
      const double r = std::max(ax_[i] + xi * dr, 1e-300), th = ay_[j] + eta * dt;
      const Point er{std::cos(th), std::sin(th)}, et{-std::sin(th), std::cos(th)};
      for (int k = 0; k < 4; ++k) g[k] = er * (dxi[k] / dr) + et * (deta[k] / (r * dt));
      break;
    }
    }
    return g;
  }

  [[nodiscard]] Point map(int c, double xi, double eta) const {
    switch (kind_) {
    case MeshKind::Interval: return {ax_[c] + xi * (ax_[c + 1] - ax_[c]), 0.0};
    case MeshKind::Tensor: {
      const auto [i, j] = split(c);
      return {ax_[i] + xi * (ax_[i + 1] - ax_[i]), ay_[j] + eta * (ay_[j + 1] - ay_[j])};
    }
    case MeshKind::Polar: {
      const auto [i, j] = split(c);
      const double r = ax_[i] + xi * (ax_[i + 1] - ax_[i]);
      const double th = ay_[j] + eta * (ay_[j + 1] - ay_[j]);
      return {dom_.p0() + r * std::cos(th), dom_.p1() + r * std::sin(th)};
    }
    }
    return {};
  }

  [[nodiscard]] double jacobian(int c, double xi, double) const {
    switch (kind_) {
    case MeshKind::Interval: return ax_[c + 1] - ax_[c];
    case MeshKind::Tensor: {
      const auto [i, j] = split(c);
      return (ax_[i + 1] - ax_[i]) * (ay_[j + 1] - ay_[j]);
    }
    case MeshKind::Polar: {
      const auto [i, j] = split(c);
      const double dr = ax_[i + 1] - ax_[i];
      return (ax_[i] + xi * dr) * dr * (ay_[j + 1] - ay_[j]);
    }
    }
    return 0.0;
  }

  /// Cell containing x; DomainError if x is outside the closure of Ω.
  [[nodiscard]] CellRef locate(const Point &x) const {
    (void)dom_.boundary_distance(x);
    switch (kind_) {
    case MeshKind::Interval: {
      const auto [i, t] = find(ax_, x.x);
      return {i, t, 0.0};
    }
    case MeshKind::Tensor: {
      const auto [i, s] = find(ax_, x.x);
      const auto [j, t] = find(ay_, x.y);
      return {j * static_cast<int>(ax_.size() - 1) + i, s, t};
    }
    case MeshKind::Polar: {
      const double dx = x.x - dom_.p0(), dy = x.y - dom_.p1();
      const auto [i, s] = find(ax_, std::hypot(dx, dy));
      double th = std::atan2(dy, dx);
      if (th < 0) th += 2.0 * pi;
      const auto [j, t] = find(ay_, th);
      return {i * n_theta() + j, s, t};
    }
    }
    return {0, 0, 0};
  }

  /// Longest edge of a cell (arc length for polar sectors).
  [[nodiscard]] double cell_size(int c) const { return cell_size_[c]; }
  /// Largest size among the cells touching node i.
  [[nodiscard]] double node_spacing(std::size_t i) const { return node_h_[i]; }

  /// Tensor Gauss rule with n points per axis, weights include the Jacobian.
  [[nodiscard]] std::vector<QuadPoint> cell_quadrature(int c, int n) const {
    const Rule g = gauss_legendre(n, 0.0, 1.0);
    return cell_quadrature(c, g);
  }
  [[nodiscard]] std::vector<QuadPoint> cell_quadrature(int c, const Rule &g01) const {
    std::vector<QuadPoint> out;
    if (dim() == 1) {
      for (std::size_t a = 0; a < g01.size(); ++a) {
        const double xi = g01.nodes[a];
        out.push_back({map(c, xi, 0), g01.weights[a] * jacobian(c, xi, 0), xi, 0.0});
      }
      return out;
    }
    for (std::size_t b = 0; b < g01.size(); ++b)
      for (std::size_t a = 0; a < g01.size(); ++a) {
        const double xi = g01.nodes[a], et = g01.nodes[b];
        out.push_back({map(c, xi, et), g01.weights[a] * g01.weights[b] * jacobian(c, xi, et), xi,
                       et});
      }
    return out;
  }

  [[nodiscard]] const std::vector<BoundaryFacet> &boundary_facets() const { return facets_; }

  /// Sorted distances s in (0, smax) where x + s·w crosses a mesh line
  /// (w a unit vector).
  [[nodiscard]] std::vector<double> ray_crossings(const Point &x, const Point &w,
                                                  double smax) const {
    std::vector<double> out;
    auto lines = [&](const std::vector<double> &ax, double x0, double v) {
      if (v == 0.0) return;
      const double end = x0 + smax * v;
      const double lo = std::min(x0, end), hi = std::max(x0, end);
      for (auto it = std::upper_bound(ax.begin(), ax.end(), lo); it != ax.end() && *it < hi; ++it) {
        const double s = (*it - x0) / v;
        if (s > 0 && s < smax) out.push_back(s);
      }
    };
    if (kind_ != MeshKind::Polar) {
      lines(ax_, x.x, w.x);
      if (kind_ == MeshKind::Tensor) lines(ay_, x.y, w.y);
    } else {
      const Point c{dom_.p0(), dom_.p1()};
      const Point q = x - c;
      const double b = dot(q, w), qq = dot(q, q), rq = std::sqrt(qq);
      // Circles r = r_k.
      const double rmin = std::max(0.0, rq - smax), rmax = rq + smax;
      for (auto it = std::upper_bound(ax_.begin(), ax_.end(), rmin); it != ax_.end() && *it < rmax;
           ++it) {
        const double disc = b * b - (qq - (*it) * (*it));
        if (disc < 0) continue;
        const double sq = std::sqrt(disc);
        for (double s : {-b - sq, -b + sq})
          if (s > 0 && s < smax) out.push_back(s);
      }
      // Rays θ = θ_j.
      const int nt = n_theta();
      for (int j = 0; j < nt; ++j) {
        const Point e{std::cos(ay_[j]), std::sin(ay_[j])};
        const double den = w.x * e.y - w.y * e.x;
        if (den == 0.0) continue;
        const double s = -(q.x * e.y - q.y * e.x) / den;
        if (s > 0 && s < smax && dot(q + w * s, e) > 0) out.push_back(s);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // Optional per-node record of the horizon used for grading.
  [[nodiscard]] const std::vector<double> &node_eta() const { return node_eta_; }
  [[nodiscard]] const std::vector<char> &sub_resolution() const { return sub_res_; }
  [[nodiscard]] const std::optional<GradingParams> &grading() const { return grading_; }

  void record_profile(const LocalizationProfile &prof, const GradingParams &g) {
    grading_ = g;
    node_eta_.resize(nodes_.size());
    sub_res_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      node_eta_[i] = prof.eta(nodes_[i]);
      sub_res_[i] = node_eta_[i] < 2.0 * node_h_[i];
    }
  }
  void record_grading(const GradingParams &g) { grading_ = g; }

  [[nodiscard]] int n_theta() const { return static_cast<int>(ay_.size()) - 1; }

  /// Node at grid position (i, j): (x, y) on tensor meshes, (ring, sector) on polar ones.
  [[nodiscard]] int grid_node(int i, int j) const {
    if (kind_ == MeshKind::Tensor) return j * static_cast<int>(ax_.size()) + i;
    if (i == 0) return 0;
    const int nt = n_theta();
    return 1 + (i - 1) * nt + (j % nt);
  }

private:
  Mesh(Domain dom, MeshKind k) : dom_(std::move(dom)), kind_(k) {}

  static void check_axis(const std::vector<double> &a, double lo, double hi, const char *name) {
    if (a.size() < 2) throw ConfigError(std::string("mesh: axis ") + name + " needs >= 2 points");
    if (a.front() != lo || a.back() != hi)
      throw ConfigError(std::string("mesh: axis ") + name + " must span the domain exactly");
    for (std::size_t i = 1; i < a.size(); ++i)
      if (!(a[i] > a[i - 1])) throw ConfigError(std::string("mesh: axis ") + name + " not increasing");
  }

  // Index and local coordinate of t in a sorted axis, clamped to the ends.
  static std::pair<int, double> find(const std::vector<double> &a, double t) {
    const int n = static_cast<int>(a.size()) - 1;
    int i = static_cast<int>(std::upper_bound(a.begin(), a.end(), t) - a.begin()) - 1;
    i = std::clamp(i, 0, n - 1);
    const double s = std::clamp((t - a[i]) / (a[i + 1] - a[i]), 0.0, 1.0);
    return {i, s};
  }

  [[nodiscard]] std::pair<int, int> split(int c) const {
    const int n = kind_ == MeshKind::Polar ? n_theta() : static_cast<int>(ax_.size()) - 1;
    return kind_ == MeshKind::Polar ? std::pair{c / n, c % n} : std::pair{c % n, c / n};
  }

  // Node at axis indices (i along x or r, j along y or θ).

  void finish() {
    switch (kind_) {
    case MeshKind::Interval:
      for (double x : ax_) nodes_.push_back({x, 0});
      break;
    case MeshKind::Tensor:
      for (double y : ay_)
        for (double x : ax_) nodes_.push_back({x, y});
      break;
    case MeshKind::Polar: {
      nodes_.push_back({dom_.p0(), dom_.p1()});
      const int nt = n_theta();
      for (std::size_t i = 1; i < ax_.size(); ++i)
        for (int j = 0; j < nt; ++j)
          nodes_.push_back({dom_.p0() + ax_[i] * std::cos(ay_[j]),
                            dom_.p1() + ax_[i] * std::sin(ay_[j])});
      // Exact boundary: the outer ring is at distance R by construction.
      break;
    }
    }
    on_boundary_.assign(nodes_.size(), 0);
    const int nx = static_cast<int>(ax_.size());
    switch (kind_) {
    case MeshKind::Interval:
      on_boundary_.front() = on_boundary_.back() = 1;
      facets_ = {{0, -1, 1.0}, {nx - 1, -1, 1.0}};
      break;
    case MeshKind::Tensor: {
      const int ny = static_cast<int>(ay_.size());
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
          if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) on_boundary_[grid_node(i, j)] = 1;
      for (int i = 0; i + 1 < nx; ++i) {
        facets_.push_back({grid_node(i, 0), grid_node(i + 1, 0), ax_[i + 1] - ax_[i]});
        facets_.push_back({grid_node(i, ny - 1), grid_node(i + 1, ny - 1), ax_[i + 1] - ax_[i]});
      }
      for (int j = 0; j + 1 < ny; ++j) {
        facets_.push_back({grid_node(0, j), grid_node(0, j + 1), ay_[j + 1] - ay_[j]});
        facets_.push_back({grid_node(nx - 1, j), grid_node(nx - 1, j + 1), ay_[j + 1] - ay_[j]});
      }
      break;
    }
    case MeshKind::Polar: {
      const int nt = n_theta(), outer = nx - 1;
      for (int j = 0; j < nt; ++j) {
        on_boundary_[grid_node(outer, j)] = 1;
        facets_.push_back(
            {grid_node(outer, j), grid_node(outer, j + 1), dom_.p2() * (ay_[j + 1] - ay_[j])});
      }
      break;
    }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (on_boundary_[i]) boundary_.push_back(static_cast<int>(i));

    const int ncell = kind_ == MeshKind::Interval ? nx - 1
                      : kind_ == MeshKind::Tensor ? (nx - 1) * (static_cast<int>(ay_.size()) - 1)
                                                  : (nx - 1) * n_theta();
    cell_size_.resize(ncell);
    node_h_.assign(nodes_.size(), 0.0);
    for (int c = 0; c < ncell; ++c) {
      double h = 0;
      if (kind_ == MeshKind::Interval) {
        h = ax_[c + 1] - ax_[c];
      } else {
        const auto [i, j] = split(c);
        if (kind_ == MeshKind::Tensor)
          h = std::max(ax_[i + 1] - ax_[i], ay_[j + 1] - ay_[j]);
        else
          h = std::max(ax_[i + 1] - ax_[i], ax_[i + 1] * (ay_[j + 1] - ay_[j]));
      }
      cell_size_[c] = h;
      std::array<int, 4> nd{};
      const int k = cell_nodes(c, nd);
      for (int a = 0; a < k; ++a) node_h_[nd[a]] = std::max(node_h_[nd[a]], h);
    }
  }

  Domain dom_;
  MeshKind kind_;
  std::vector<double> ax_, ay_;
  std::vector<Point> nodes_;
  std::vector<char> on_boundary_;
  std::vector<int> boundary_;
  std::vector<BoundaryFacet> facets_;
  std::vector<double> cell_size_, node_h_;
  std::vector<double> node_eta_;
  std::vector<char> sub_res_;
  std::optional<GradingParams> grading_;
};

// ------------------------------------------------------------ grading ----

namespace detail {

// Offsets from one end, spacing growing by 1/ratio and capped by target(t),
// stopping once the spacing would reach h_int or pass `limit`.
inline std::vector<double> grade_layer(const GradingParams &g, double limit,
                                       const std::function<double(double)> &target,
                                       double &next_spacing, std::size_t budget) {
  std::vector<double> t{0.0};
  double s_prev = g.h_min * g.ratio;
  for (;;) {
    const double s = std::max(g.h_min, std::min(s_prev / g.ratio, target(t.back())));
    next_spacing = s;
    if (s >= g.h_int * (1 - 1e-12) || t.back() + s > limit) break;
    t.push_back(t.back() + s);
    s_prev = s;
    if (t.size() > budget)
      throw SizeError("build_graded_mesh: boundary layer exceeds the node budget (" +
                      std::to_string(budget) + "); increase h_min (now " + fmt_num(g.h_min) +
                      ") or the resolution factor");
  }
  return t;
}

} // namespace detail

/// Graded breakpoints on [lo, hi]. `eta_lo(t)` / `eta_hi(t)` give the horizon
/// at distance t from each end (empty: pure geometric grading).
inline std::vector<double> graded_axis(double lo, double hi, const GradingParams &g,
                                       bool grade_lo, bool grade_hi,
                                       const std::function<double(double)> &eta_lo = {},
                                       const std::function<double(double)> &eta_hi = {}) {
  if (!(g.h_min > 0) || !(g.h_min <= g.h_int))
    throw ConfigError("grading: need 0 < h_min <= h_int");
  if (!(g.ratio > 0 && g.ratio < 1)) throw ConfigError("grading: ratio must lie in (0,1)");
  const double L = hi - lo;
  auto target = [&](const std::function<double(double)> &eta) {
    return [&g, eta](double t) {
      if (!eta) return g.h_int;
      return std::min(g.h_int, std::max(g.h_min, g.resolution * eta(t)));
    };
  };
  const double half = (grade_lo && grade_hi) ? 0.5 * L : L;
  double next_lo = g.h_int, next_hi = g.h_int;
  std::vector<double> left{0.0}, right{0.0};
  if (grade_lo) left = detail::grade_layer(g, half, target(eta_lo), next_lo, g.node_budget);
  if (grade_hi) right = detail::grade_layer(g, half, target(eta_hi), next_hi, g.node_budget);
  const double gap = L - left.back() - right.back();
  const double h_fill = std::min({g.h_int, next_lo, next_hi});
  const auto n_fill = static_cast<std::size_t>(std::ceil(gap / h_fill - 1e-9));
  if (left.size() + right.size() + n_fill > g.node_budget)
    throw SizeError("build_graded_mesh: " + std::to_string(left.size() + right.size() + n_fill) +
                    " points exceed the node budget; suggest h_int >= " +
                    fmt_num(L / static_cast<double>(g.node_budget / 2)));
  std::vector<double> out;
  for (double t : left) out.push_back(lo + t);
  const double a = left.back(), step = gap / static_cast<double>(std::max<std::size_t>(n_fill, 1));
  for (std::size_t k = 1; k < n_fill; ++k) out.push_back(lo + a + step * static_cast<double>(k));
  for (auto it = right.rbegin(); it != right.rend(); ++it) out.push_back(hi - *it);
  out.front() = lo;
  out.back() = hi;
  return out;
}

/// Graded mesh for the domain; with a profile the spacing also honors
/// h <= max(ρ_h·η_δ, h_min) and per-node η / sub-resolution flags are recorded.
inline Mesh build_graded_mesh(const Domain &dom, const GradingParams &g,
                              const LocalizationProfile *prof = nullptr) {
  using Fn = std::function<double(double)>;
  auto eta_at = [&](Point base, Point dir) -> Fn {
    if (!prof) return {};
    return [prof, base, dir, &dom](double t) {
      Point p = base + dir * t;
      if (!dom.contains(p)) return 0.0;
      return prof->eta(p);
    };
  };
  Mesh m = [&] {
    switch (dom.shape()) {
    case Shape::Interval:
      return Mesh::interval(dom, graded_axis(dom.p0(), dom.p1(), g, true, true,
                                             eta_at({dom.p0(), 0}, {1, 0}),
                                             eta_at({dom.p1(), 0}, {-1, 0})));
    case Shape::Rectangle: {
      const Point c = dom.center();
      auto xs = graded_axis(dom.p0(), dom.p1(), g, true, true, eta_at({dom.p0(), c.y}, {1, 0}),
                            eta_at({dom.p1(), c.y}, {-1, 0}));
      auto ys = graded_axis(dom.p2(), dom.p3(), g, true, true, eta_at({c.x, dom.p2()}, {0, 1}),
                            eta_at({c.x, dom.p3()}, {0, -1}));
      if (xs.size() * ys.size() > g.node_budget)
        throw SizeError("build_graded_mesh: tensor grid " + std::to_string(xs.size()) + "x" +
                        std::to_string(ys.size()) + " exceeds the node budget; increase h_int or h_min");
      return Mesh::tensor(dom, std::move(xs), std::move(ys));
    }
    case Shape::Disc: {
      const double R = dom.p2();
      auto rs = graded_axis(0.0, R, g, false, true, {}, eta_at({dom.p0() + R, dom.p1()}, {-1, 0}));
      int nt = std::max(16, static_cast<int>(std::ceil(2.0 * pi * R / g.h_int)));
      nt = (nt + 3) / 4 * 4;
      if ((rs.size() - 1) * static_cast<std::size_t>(nt) + 1 > g.node_budget)
        throw SizeError("build_graded_mesh: polar grid exceeds the node budget; increase h_int or h_min");
      return Mesh::polar(dom, std::move(rs), nt);
    }
    }
    throw ConfigError("build_graded_mesh: unknown shape");
  }();
  if (prof)
    m.record_profile(*prof, g);
  else
    m.record_grading(g);
  return m;
}

} // namespace hetnl
