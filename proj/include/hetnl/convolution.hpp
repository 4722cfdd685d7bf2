#pragma once

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hetnl/core.hpp"
#include "hetnl/field.hpp"
#include "hetnl/kernels.hpp"
#include "hetnl/localization.hpp"
#include "hetnl/mesh.hpp"
#include "hetnl/parallel.hpp"

namespace hetnl {

struct ConvolutionOptions {
  int gauss_points = 4;   ///< per 1-D segment between mesh nodes
  int min_radial = 6;     ///< 2-D polar rule, radial points
  int min_angular = 24;   ///< 2-D polar rule, angles
  double sub_resolution_factor = 2.0;
};

enum class RowKind : char { Interior, Boundary, SubResolution };

/// Sparse row-stochastic matrix realizing K_δ on nodal values.
class ConvolutionOperator {
public:
  [[nodiscard]] const Mesh &mesh() const { return *mesh_; }
  [[nodiscard]] const MeshPtr &mesh_ptr() const { return mesh_; }
  [[nodiscard]] const LocalizationProfile &profile() const { return prof_; }
  [[nodiscard]] const PsiSpec &psi() const { return psi_; }
  [[nodiscard]] std::size_t rows() const { return kind_.size(); }
  [[nodiscard]] RowKind row_kind(std::size_t i) const { return kind_[i]; }
  [[nodiscard]] std::size_t row_begin(std::size_t i) const { return ptr_[i]; }
  [[nodiscard]] std::size_t row_end(std::size_t i) const { return ptr_[i + 1]; }
  [[nodiscard]] int col(std::size_t k) const { return cols_[k]; }
  [[nodiscard]] double weight(std::size_t k) const { return w_[k]; }
  [[nodiscard]] std::size_t nonzeros() const { return w_.size(); }

  [[nodiscard]] std::vector<double> apply(const std::vector<double> &u) const {
    if (u.size() != rows()) throw ConfigError("apply_K: vector size does not match the operator");
    std::vector<double> out(rows());
    parallel_for(rows(), [&](std::size_t i) {
      double s = 0;
      for (std::size_t k = ptr_[i]; k < ptr_[i + 1]; ++k) s += w_[k] * u[cols_[k]];
      out[i] = s;
    });
    return out;
  }
  [[nodiscard]] DiscreteField apply(const DiscreteField &u) const {
    require_same_mesh(u, *mesh_, "apply_K");
    return {mesh_, apply(u.values())};
  }

  [[nodiscard]] std::vector<double> apply_transpose(const std::vector<double> &v) const {
    if (v.size() != rows()) throw ConfigError("apply_K^T: vector size does not match the operator");
    std::vector<double> out(rows(), 0.0);
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t k = ptr_[i]; k < ptr_[i + 1]; ++k) out[cols_[k]] += w_[k] * v[i];
    return out;
  }

  [[nodiscard]] Eigen::SparseMatrix<double> matrix() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(w_.size());
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t k = ptr_[i]; k < ptr_[i + 1]; ++k)
        t.emplace_back(static_cast<int>(i), cols_[k], w_[k]);
    Eigen::SparseMatrix<double> m(static_cast<int>(rows()), static_cast<int>(rows()));
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  /// Diagnostics export: "row,col,weight".
  [[nodiscard]] std::string triplets_csv() const {
    std::string out = "row,col,weight\n";
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t k = ptr_[i]; k < ptr_[i + 1]; ++k)
        out += std::to_string(i) + "," + std::to_string(cols_[k]) + "," + fmt_num(w_[k]) + "\n";
    return out;
  }

  /// ∇(K_δu) at every node by the difference form ∫∇_xψ_δ(x,y)(u(y)-u(x))dy.
  /// Boundary and sub-resolution rows return the mean cellwise gradient of u.
  [[nodiscard]] std::vector<Point> gradient(const DiscreteField &u) const;

private:
  friend ConvolutionOperator assemble_K(MeshPtr, const LocalizationProfile &, const PsiSpec &,
                                        const ConvolutionOptions &);
  ConvolutionOperator(MeshPtr m, LocalizationProfile p, PsiSpec s, ConvolutionOptions o)
      : mesh_(std::move(m)), prof_(std::move(p)), psi_(std::move(s)), opt_(o) {}

  // Visits (cell, xi, eta, z, weight) for the rule on the unit-support ball
  // around node x: y = x + η z, weight = dz measure.
  template <class Visit> void visit_ball(std::size_t i, double eta, Visit &&visit) const;

  MeshPtr mesh_;
  LocalizationProfile prof_;
  PsiSpec psi_;
  ConvolutionOptions opt_;
  std::vector<RowKind> kind_;
  std::vector<std::size_t> ptr_;
  std::vector<int> cols_;
  std::vector<double> w_;
  std::vector<std::vector<int>> node_cells_;
};

template <class Visit>
void ConvolutionOperator::visit_ball(std::size_t i, double eta, Visit &&visit) const {
  const Mesh &m = *mesh_;
  const Point x = m.node(i);
  const double R = psi_.support();
  if (m.dim() == 1) {
    std::vector<double> zs{-R, 0.0, R};
    const auto &ax = m.axis_x();
    const auto lo = std::lower_bound(ax.begin(), ax.end(), x.x - R * eta);
    for (auto it = lo; it != ax.end() && *it < x.x + R * eta; ++it) {
      const double z = (*it - x.x) / eta;
      if (z > -R && z < R) zs.push_back(z);
    }
    std::sort(zs.begin(), zs.end());
    zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
    const Rule g = gauss_legendre(opt_.gauss_points);
    for (std::size_t s = 0; s + 1 < zs.size(); ++s) {
      const double a = zs[s], b = zs[s + 1], h = 0.5 * (b - a);
      const CellRef mid = m.locate({x.x + eta * 0.5 * (a + b), 0});
      const double x0 = ax[mid.cell], x1 = ax[mid.cell + 1];
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double z = a + h * (g.nodes[k] + 1.0);
        const double xi = std::clamp((x.x + eta * z - x0) / (x1 - x0), 0.0, 1.0);
        visit(mid.cell, xi, 0.0, Point{z, 0}, h * g.weights[k]);
      }
    }
    return;
  }
  const double hloc = m.node_spacing(i);
  const int nr = std::max(opt_.min_radial, static_cast<int>(std::ceil(2.0 * R * eta / hloc)));
  const int nt = std::max(opt_.min_angular, static_cast<int>(std::ceil(4.0 * pi * R * eta / hloc)));
  const Rule gr = gauss_legendre(nr, 0.0, R);
  const Rule gt = circle_rule(nt);
  for (std::size_t a = 0; a < gt.size(); ++a) {
    const Point w{std::cos(gt.nodes[a]), std::sin(gt.nodes[a])};
    for (std::size_t k = 0; k < gr.size(); ++k) {
      const double r = gr.nodes[k];
      const CellRef c = m.locate(x + w * (eta * r));
      visit(c.cell, c.xi, c.eta, w * r, gt.weights[a] * gr.weights[k] * r);
    }
  }
}

inline ConvolutionOperator assemble_K(MeshPtr mesh, const LocalizationProfile &prof,
                                      const PsiSpec &psi, const ConvolutionOptions &opt = {}) {
  if (psi.dim() != mesh->dim()) throw ConfigError("assemble_K: psi dimension does not match the mesh");
  prof.require_admissible("assemble_K");
  ConvolutionOperator op(mesh, prof, psi, opt);
  const Mesh &m = *mesh;
  const std::size_t n = m.num_nodes();
  op.kind_.resize(n);
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  std::vector<std::string> failures(n);

  parallel_for(n, [&](std::size_t i) {
    auto &row = rows[i];
    if (m.is_boundary(i)) {
      op.kind_[i] = RowKind::Boundary;
      row = {{static_cast<int>(i), 1.0}};
      return;
    }
    const double eta = prof.eta(m.node(i));
    if (eta < opt.sub_resolution_factor * m.node_spacing(i)) {
      op.kind_[i] = RowKind::SubResolution;
      row = {{static_cast<int>(i), 1.0}};
      return;
    }
    op.kind_[i] = RowKind::Interior;
    std::map<int, double> acc;
    op.visit_ball(i, eta, [&](int c, double xi, double et, const Point &z, double w) {
      const double kw = w * psi.value(norm(z));
      if (kw == 0.0) return;
      std::array<int, 4> nd{};
      const int k = m.cell_nodes(c, nd);
      const auto phi = Mesh::basis(m.dim(), xi, et);
      for (int a = 0; a < k; ++a)
        if (phi[a] != 0.0) acc[nd[a]] += kw * phi[a];
    });
    double sum = 0;
    for (const auto &[j, v] : acc) sum += v;
    if (!(sum > 0)) {
      failures[i] = "assemble_K: interior row " + std::to_string(i) + " at x=(" +
                    fmt_num(m.node(i).x) + "," + fmt_num(m.node(i).y) + ") has no neighbors";
      return;
    }
    for (const auto &[j, v] : acc) row.emplace_back(j, v / sum);
  });
  for (const auto &f : failures)
    if (!f.empty()) throw AssemblyError(f);

  op.ptr_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) op.ptr_[i + 1] = op.ptr_[i] + rows[i].size();
  op.cols_.resize(op.ptr_[n]);
  op.w_.resize(op.ptr_[n]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      op.cols_[op.ptr_[i] + k] = rows[i][k].first;
      op.w_[op.ptr_[i] + k] = rows[i][k].second;
    }
  op.node_cells_.resize(n);
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    std::array<int, 4> nd{};
    const int k = m.cell_nodes(static_cast<int>(c), nd);
    for (int a = 0; a < k; ++a) {
      auto &v = op.node_cells_[nd[a]];
      if (v.empty() || v.back() != static_cast<int>(c)) v.push_back(static_cast<int>(c));
    }
  }
  return op;
}

inline std::vector<Point> ConvolutionOperator::gradient(const DiscreteField &u) const {
  require_same_mesh(u, *mesh_, "grad_K");
  const Mesh &m = *mesh_;
  const int d = m.dim();
  std::vector<Point> out(rows());
  std::vector<std::string> failures(rows());
  parallel_for(rows(), [&](std::size_t i) {
    const Point x = m.node(i);
    if (kind_[i] != RowKind::Interior) {
      // Local surrogate: mean of the adjacent cellwise gradients at the node.
      Point g{};
      int cnt = 0;
      for (int c : node_cells_[i]) {
        // Corner of cell c that coincides with node i.
        std::array<int, 4> nd{};
        const int k = m.cell_nodes(c, nd);
        const double corner_xi[4] = {0, 1, 1, 0}, corner_eta[4] = {0, 0, 1, 1};
        double xi = 0, et = 0;
        for (int a = 0; a < k; ++a)
          if (nd[a] == static_cast<int>(i)) xi = corner_xi[a], et = corner_eta[a];
        // Nudged inside so polar gradients stay finite at the center.
        g += u.gradient_in_cell(c, std::clamp(xi, 1e-9, 1 - 1e-9), std::clamp(et, 1e-9, 1 - 1e-9));
        ++cnt;
      }
      out[i] = cnt ? g * (1.0 / cnt) : Point{};
      return;
    }
    const EtaValue e = prof_.eta_grad(x);
    if (!e.differentiable) {
      failures[i] = "grad_K: lambda is not differentiable at node " + std::to_string(i) +
                    " (x=" + fmt_num(x.x) + "," + fmt_num(x.y) + "); use a smoothed lambda";
      return;
    }
    const double ux = u[i];
    Point g{};
    visit_ball(i, e.value, [&](int c, double xi, double et, const Point &z, double w) {
      const double r = norm(z);
      const double dpsi = psi_.deriv(r), val = psi_.value(r);
      if (dpsi == 0.0 && val == 0.0) return;
      Point k = e.grad * (-d * val);
      if (dpsi != 0.0) k += (z * (-1.0 / r) - e.grad * r) * dpsi;
      g += k * (w * (u.value_in_cell(c, xi, et) - ux));
    });
    out[i] = g * (1.0 / e.value);
  });
  for (const auto &f : failures)
    if (!f.empty()) throw NonSmoothError(f);
  return out;
}

inline DiscreteField apply_K(const ConvolutionOperator &op, const DiscreteField &u) {
  return op.apply(u);
}
inline std::vector<Point> grad_K(const ConvolutionOperator &op, const DiscreteField &u) {
  return op.gradient(u);
}

/// Discrete trace: (boundary node index, value) pairs.
inline std::vector<std::pair<int, double>> trace_values(const DiscreteField &u) {
  std::vector<std::pair<int, double>> out;
  for (int i : u.mesh().boundary_nodes()) out.emplace_back(i, u[i]);
  return out;
}

} // namespace hetnl
