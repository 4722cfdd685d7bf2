#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "hetnl/core.hpp"
#include "hetnl/mesh.hpp"
#include "hetnl/parallel.hpp"
#include "hetnl/report.hpp"

namespace hetnl {

using MeshPtr = std::shared_ptr<const Mesh>;

/// Nodal values on a mesh, interpolated multilinearly.
class DiscreteField {
public:
  DiscreteField() = default;
  DiscreteField(MeshPtr mesh, std::vector<double> values)
      : mesh_(std::move(mesh)), values_(std::move(values)) {
    if (!mesh_) throw ConfigError("field: null mesh");
    if (values_.size() != mesh_->num_nodes())
      throw ConfigError("field: " + std::to_string(values_.size()) + " values for " +
                        std::to_string(mesh_->num_nodes()) + " nodes");
  }
  static DiscreteField from_function(MeshPtr mesh, const std::function<double(const Point &)> &f) {
    std::vector<double> v(mesh->num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh->node(i));
    return {std::move(mesh), std::move(v)};
  }
  static DiscreteField constant(MeshPtr mesh, double c) {
    std::vector<double> v(mesh->num_nodes(), c);
    return {std::move(mesh), std::move(v)};
  }

  [[nodiscard]] const Mesh &mesh() const { return *mesh_; }
  [[nodiscard]] const MeshPtr &mesh_ptr() const { return mesh_; }
  [[nodiscard]] const std::vector<double> &values() const { return values_; }
  [[nodiscard]] std::vector<double> &values() { return values_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

  [[nodiscard]] double value_in_cell(int c, double xi, double eta) const {
    std::array<int, 4> nd{};
    const int k = mesh_->cell_nodes(c, nd);
    const auto phi = Mesh::basis(mesh_->dim(), xi, eta);
    double v = 0;
    for (int a = 0; a < k; ++a) v += phi[a] * values_[nd[a]];
    return v;
  }
  [[nodiscard]] Point gradient_in_cell(int c, double xi, double eta) const {
    std::array<int, 4> nd{};
    const int k = mesh_->cell_nodes(c, nd);
    const auto g = mesh_->basis_grad(c, xi, eta);
    Point out{};
    for (int a = 0; a < k; ++a) out += g[a] * values_[nd[a]];
    return out;
  }

  [[nodiscard]] DiscreteField scaled(double s) const {
    DiscreteField f = *this;
    for (double &v : f.values_) v *= s;
    return f;
  }

private:
  MeshPtr mesh_;
  std::vector<double> values_;
};

inline void require_same_mesh(const DiscreteField &a, const Mesh &m, const char *who) {
  if (&a.mesh() != &m) throw ConfigError(std::string(who) + ": field lives on a different mesh");
}

/// Multilinear interpolation; DomainError outside closure(Ω).
inline double interpolate(const DiscreteField &u, const Point &x) {
  const CellRef c = u.mesh().locate(x);
  return u.value_in_cell(c.cell, c.xi, c.eta);
}

inline Point gradient_at(const DiscreteField &u, const Point &x) {
  const CellRef c = u.mesh().locate(x);
  return u.gradient_in_cell(c.cell, c.xi, c.eta);
}

namespace detail {
// ∫_Ω g(cell, quad point) dx with `order` Gauss points per axis.
template <class G> double integrate_cells(const Mesh &m, int order, G &&g) {
  const Rule r = gauss_legendre(order, 0.0, 1.0);
  return ordered_sum(m.num_cells(), [&](std::size_t c) {
    double s = 0;
    for (const auto &qp : m.cell_quadrature(static_cast<int>(c), r)) s += qp.weight * g(static_cast<int>(c), qp);
    return s;
  }, 64);
}
} // namespace detail

inline double lp_norm(const DiscreteField &u, double p, int order = 3) {
  const double s = detail::integrate_cells(u.mesh(), order, [&](int c, const QuadPoint &q) {
    return std::pow(std::abs(u.value_in_cell(c, q.xi, q.eta)), p);
  });
  return std::pow(s, 1.0 / p);
}

/// ‖∇u‖_{L^p} with the Euclidean norm of the cellwise gradient.
inline double h1p_seminorm(const DiscreteField &u, double p, int order = 3) {
  const double s = detail::integrate_cells(u.mesh(), order, [&](int c, const QuadPoint &q) {
    return std::pow(norm(u.gradient_in_cell(c, q.xi, q.eta)), p);
  });
  return std::pow(s, 1.0 / p);
}

inline double integral(const DiscreteField &u, int order = 3) {
  return detail::integrate_cells(u.mesh(), order, [&](int c, const QuadPoint &q) {
    return u.value_in_cell(c, q.xi, q.eta);
  });
}

inline double mean_value(const DiscreteField &u) {
  return integral(u) / u.mesh().domain().measure();
}

/// ‖u - f‖_{L^p} against an exact function, evaluated at the quadrature points.
inline double lp_distance(const DiscreteField &u, const std::function<double(const Point &)> &f,
                          double p, int order = 4) {
  const double s = detail::integrate_cells(u.mesh(), order, [&](int c, const QuadPoint &q) {
    return std::pow(std::abs(u.value_in_cell(c, q.xi, q.eta) - f(q.x)), p);
  });
  return std::pow(s, 1.0 / p);
}

inline double lp_norm_of(const Mesh &m, const std::function<double(const Point &)> &f, double p,
                         int order = 4) {
  const double s = detail::integrate_cells(
      m, order, [&](int, const QuadPoint &q) { return std::pow(std::abs(f(q.x)), p); });
  return std::pow(s, 1.0 / p);
}

/// Gagliardo seminorm (∫∫|u(x)-u(y)|^p/|x-y|^{d+sp})^{1/p}. Rays from each
/// quadrature point are split at mesh lines; each piece uses Gauss-Legendre in
/// t = r^{p-sp}, which absorbs the diagonal weight.
inline double fractional_seminorm(const DiscreteField &u, double s, double p, int x_order = 3,
                                  int r_order = 6, int n_angles = 32) {
  if (!(s > 0 && s < 1)) throw ConfigError("fractional_seminorm: s must lie in (0,1)");
  const Mesh &m = u.mesh();
  const Domain &dom = m.domain();
  const int d = m.dim();
  const double alpha = p - 1.0 - s * p; // r^{d-1} r^{-(d+sp)} r^p
  const RadialPieces pieces(r_order, alpha);
  const auto dirs = sphere_directions(d, n_angles);

  auto crossings = [&](const Point &x, const Point &w, double rmax) {
    std::vector<double> t = m.ray_crossings(x, w, rmax);
    t.insert(t.begin(), 0.0);
    t.push_back(rmax);
    return t;
  };

  const double total = detail::integrate_cells(m, x_order, [&](int c, const QuadPoint &q) {
    const double ux = u.value_in_cell(c, q.xi, q.eta);
    double acc = 0;
    for (const auto &dir : dirs) {
      const double rmax = dom.ray_exit(q.x, dir.omega);
      const auto t = crossings(q.x, dir.omega, rmax);
      for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        const Rule piece = pieces.piece(t[k], t[k + 1]);
        for (std::size_t i = 0; i < piece.size(); ++i) {
          const double r = piece.nodes[i];
          const double uy = interpolate(u, q.x + dir.omega * r);
          acc += dir.weight * piece.weights[i] * std::pow(std::abs(uy - ux) / r, p);
        }
      }
    }
    return acc;
  });
  return std::pow(total, 1.0 / p);
}

// ----------------------------------------------------------------- I/O ----

inline std::string field_csv(const DiscreteField &u) {
  std::string out = u.mesh().dim() == 1 ? "x,value\n" : "x,y,value\n";
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Point &p = u.mesh().node(i);
    out += fmt_num(p.x) + ",";
    if (u.mesh().dim() == 2) out += fmt_num(p.y) + ",";
    out += fmt_num(u[i]) + "\n";
  }
  return out;
}

inline void write_field_csv(const DiscreteField &u, const std::string &path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f << field_csv(u);
}

/// Reads (x[,y],value) rows; nodes must match the mesh to 1e-12.
inline DiscreteField read_field_csv(MeshPtr mesh, const std::string &path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path);
  std::string line;
  std::getline(f, line);
  std::vector<double> vals;
  const int d = mesh->dim();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cols;
    while (std::getline(ss, cell, ',')) cols.push_back(std::stod(cell));
    if (static_cast<int>(cols.size()) != d + 1) throw ConfigError("field csv: bad row '" + line + "'");
    const std::size_t i = vals.size();
    if (i >= mesh->num_nodes()) throw ConfigError("field csv: too many rows");
    const Point &p = mesh->node(i);
    const Point q{cols[0], d == 2 ? cols[1] : 0.0};
    if (norm(p - q) > 1e-12 * (1 + mesh->domain().diameter()))
      throw ConfigError("field csv: row " + std::to_string(i) + " does not match the mesh node");
    vals.push_back(cols.back());
  }
  return {std::move(mesh), std::move(vals)};
}

} // namespace hetnl
