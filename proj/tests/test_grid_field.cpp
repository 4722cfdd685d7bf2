#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <random>

#include "hetnl/field.hpp"

using namespace hetnl;

namespace {

MeshPtr uniform_interval(int n) {
  std::vector<double> xs(n + 1);
  for (int i = 0; i <= n; ++i) xs[i] = static_cast<double>(i) / n;
  xs.back() = 1.0;
  return std::make_shared<const Mesh>(Mesh::interval(Domain::interval(0, 1), xs));
}

MeshPtr graded(const Domain &dom, GradingParams g, const LocalizationProfile *p = nullptr) {
  return std::make_shared<const Mesh>(build_graded_mesh(dom, g, p));
}

} // namespace

TEST(GradedMesh, IntervalExampleHalvesTowardEndpoints) {
  GradingParams g;
  g.h_int = 0.05;
  g.ratio = 0.5;
  g.h_min = 1e-4;
  const MeshPtr m = graded(Domain::interval(0, 1), g);
  // 20 interior cells plus log2(0.05/1e-4) ≈ 9 halvings per side.
  EXPECT_GE(m->num_nodes(), 34u);
  EXPECT_LE(m->num_nodes(), 42u);
  const auto &x = m->axis_x();
  EXPECT_NEAR(x[1] - x[0], 1e-4, 1e-15);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i] + x[x.size() - 1 - i], 1.0, 1e-14);
  for (std::size_t i = 1; i + 1 < x.size() / 2; ++i) {
    const double r = (x[i] - x[i - 1]) / (x[i + 1] - x[i]);
    EXPECT_TRUE(std::abs(r - 0.5) < 1e-9 || r > 0.5) << i;
  }
  EXPECT_EQ(m->boundary_nodes(), (std::vector<int>{0, static_cast<int>(x.size()) - 1}));
}

TEST(GradedMesh, UniformWhenFloorEqualsInteriorSpacing) {
  GradingParams g;
  g.h_int = g.h_min = 0.1;
  const MeshPtr m = graded(Domain::interval(0, 1), g);
  const auto &x = m->axis_x();
  ASSERT_EQ(x.size(), 11u);
  for (std::size_t i = 1; i < x.size(); ++i) EXPECT_NEAR(x[i] - x[i - 1], 0.1, 1e-14);
}

TEST(GradedMesh, RectangleIsTensorProductOfAxes) {
  GradingParams g;
  g.h_int = 0.1;
  g.h_min = 0.01;
  const Domain R = Domain::rectangle(0, 1, 0, 2);
  const MeshPtr m = graded(R, g);
  const auto xs = graded_axis(0, 1, g, true, true), ys = graded_axis(0, 2, g, true, true);
  EXPECT_EQ(m->axis_x(), xs);
  EXPECT_EQ(m->axis_y(), ys);
  EXPECT_EQ(m->num_nodes(), xs.size() * ys.size());
  EXPECT_EQ(m->boundary_nodes().size(), 2 * (xs.size() + ys.size()) - 4);
  for (int i : m->boundary_nodes()) EXPECT_EQ(R.signed_distance(m->node(i)), 0.0);
}

TEST(GradedMesh, DiscBoundaryNodesLieOnCircle) {
  GradingParams g;
  g.h_int = 0.1;
  g.h_min = 0.01;
  const Domain D = Domain::disc(0.5, -0.2, 0.7);
  const MeshPtr m = graded(D, g);
  EXPECT_EQ(m->kind(), MeshKind::Polar);
  for (int i : m->boundary_nodes()) EXPECT_NEAR(D.signed_distance(m->node(i)), 0.0, 1e-15);
  double area = 0;
  for (std::size_t c = 0; c < m->num_cells(); ++c)
    for (const auto &q : m->cell_quadrature(static_cast<int>(c), 2)) area += q.weight;
  EXPECT_NEAR(area, pi * 0.49, 1e-12);
}

TEST(GradedMesh, ResolvesHorizonNearBoundary) {
  // Every node with η >= 2 h_min sees at least ⌈1/ρ_h⌉ mesh points in the closed ball B(x, η).
  const Domain I = Domain::interval(0, 1);
  for (double delta : {0.1, 0.05, 0.0125}) {
    const LocalizationProfile p(I, QSpec::identity(), LambdaSpec::distance(), delta);
    GradingParams g;
    g.h_int = 0.005;
    g.h_min = 1e-5;
    const MeshPtr m = graded(I, g, &p);
    const auto &x = m->axis_x();
    const int need = static_cast<int>(std::ceil(1.0 / g.resolution));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double eta = p.eta({x[i], 0});
      if (eta < 2 * g.h_min) continue;
      const double r = eta * (1 + 1e-9);
      const auto lo = std::lower_bound(x.begin(), x.end(), x[i] - r);
      const auto hi = std::upper_bound(x.begin(), x.end(), x[i] + r);
      EXPECT_GE(hi - lo, need) << "delta=" << delta << " x=" << x[i];
    }
    ASSERT_EQ(m->node_eta().size(), m->num_nodes());
  }
}

TEST(GradedMesh, NodeBudgetRaisesSizeError) {
  GradingParams g;
  g.h_int = 1e-6;
  g.h_min = 1e-6;
  g.node_budget = 1000;
  EXPECT_THROW(build_graded_mesh(Domain::interval(0, 1), g), SizeError);
  GradingParams bad;
  bad.h_min = 1.0;
  EXPECT_THROW(build_graded_mesh(Domain::interval(0, 1), bad), ConfigError);
}

TEST(Interpolation, Examples) {
  const MeshPtr m = uniform_interval(7);
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return 3 * x.x; });
  for (double x : {0.0, 0.013, 0.5, 0.77777, 1.0}) EXPECT_NEAR(interpolate(u, {x, 0}), 3 * x, 1e-15);

  const MeshPtr one = std::make_shared<const Mesh>(Mesh::interval(Domain::interval(0, 1), {0.0, 1.0}));
  EXPECT_DOUBLE_EQ(interpolate(DiscreteField(one, {0.0, 1.0}), {0.5, 0}), 0.5);

  const MeshPtr sq = std::make_shared<const Mesh>(
      Mesh::tensor(Domain::rectangle(0, 1, 0, 1), {0.0, 1.0}, {0.0, 1.0}));
  std::vector<double> v(4, 0.0);
  v[sq->grid_node(1, 1)] = 1.0;
  EXPECT_DOUBLE_EQ(interpolate(DiscreteField(sq, v), {0.5, 0.5}), 0.25);
  EXPECT_THROW(interpolate(u, {1.5, 0}), DomainError);
}

TEST(Interpolation, ExactAtNodesAndForAffineData2D) {
  GradingParams g;
  g.h_int = 0.1;
  g.h_min = 0.01;
  const MeshPtr m = graded(Domain::rectangle(0, 1, 0, 1), g);
  auto f = [](const Point &x) { return 2 * x.x - 3 * x.y + 0.5; };
  const auto u = DiscreteField::from_function(m, f);
  for (std::size_t i = 0; i < m->num_nodes(); i += 7) EXPECT_EQ(interpolate(u, m->node(i)), u[i]);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0, 1);
  for (int k = 0; k < 300; ++k) {
    const Point x{U(rng), U(rng)};
    EXPECT_NEAR(interpolate(u, x), f(x), 1e-14);
    const Point gr = gradient_at(u, x);
    EXPECT_NEAR(gr.x, 2, 1e-12);
    EXPECT_NEAR(gr.y, -3, 1e-12);
  }
  EXPECT_NEAR(h1p_seminorm(u, 2), std::sqrt(13.0), 1e-12);
  EXPECT_NEAR(h1p_seminorm(u, 3), std::sqrt(13.0), 1e-12);
}

TEST(Norms, ConstantAndSineExamples) {
  const MeshPtr m = uniform_interval(2000);
  const auto one = DiscreteField::constant(m, 1.0);
  EXPECT_NEAR(lp_norm(one, 2), 1.0, 1e-14);
  EXPECT_NEAR(h1p_seminorm(one, 2), 0.0, 1e-14);
  EXPECT_NEAR(mean_value(one), 1.0, 1e-14);
  const auto s = DiscreteField::from_function(m, [](const Point &x) { return std::sin(pi * x.x); });
  EXPECT_NEAR(lp_norm(s, 2), 1 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(h1p_seminorm(s, 2), pi / std::sqrt(2.0), 1e-5);
  const auto c = DiscreteField::from_function(m, [](const Point &x) { return x.x - 0.5; });
  EXPECT_NEAR(mean_value(c), 0.0, 1e-15);
  EXPECT_NEAR(lp_distance(s, [](const Point &x) { return std::sin(pi * x.x); }, 2), 0.0, 1e-6);
}

TEST(Norms, Homogeneity) {
  const MeshPtr m = uniform_interval(64);
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return std::exp(x.x) - 2; });
  for (double p : {1.0, 1.5, 2.0, 4.0})
    for (double c : {-3.0, 0.5, 7.0}) {
      EXPECT_NEAR(lp_norm(u.scaled(c), p), std::abs(c) * lp_norm(u, p), 1e-12);
      EXPECT_NEAR(h1p_seminorm(u.scaled(c), p), std::abs(c) * h1p_seminorm(u, p), 1e-11);
    }
}

TEST(FractionalSeminorm, ConstantIsZero) {
  const MeshPtr m = uniform_interval(16);
  EXPECT_NEAR(fractional_seminorm(DiscreteField::constant(m, 2.5), 0.5, 2), 0.0, 1e-14);
  EXPECT_THROW(fractional_seminorm(DiscreteField::constant(m, 1), 1.0, 2), ConfigError);
}

TEST(FractionalSeminorm, AffineMatchesAnalyticDoubleIntegral) {
  // u = a x: ∫∫ a^p |x-y|^{p-1-sp} = a^p · 2/((γ+1)(γ+2)) with γ = p-1-sp.
  const MeshPtr m = uniform_interval(16);
  const double a = 1.7;
  const auto u = DiscreteField::from_function(m, [a](const Point &x) { return a * x.x; });
  for (double s : {0.2, 0.5, 0.8})
    for (double p : {2.0, 3.0}) {
      const double gam = p - 1 - s * p;
      const double exact = std::pow(std::pow(a, p) * 2 / ((gam + 1) * (gam + 2)), 1 / p);
      EXPECT_NEAR(fractional_seminorm(u, s, p), exact, 1e-4 * exact) << s << " " << p;
    }
  EXPECT_NEAR(fractional_seminorm(u, 0.5, 2), a, 1e-12);
}

TEST(FractionalSeminorm, SineMatchesBruteForceRiemannSum) {
  const MeshPtr m = uniform_interval(64);
  auto f = [](double x) { return std::sin(pi * x); };
  const auto u = DiscreteField::from_function(m, [&](const Point &x) { return f(x.x); });
  const double s = 0.4;
  const int N = 1500;
  double sum = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      const double x = (i + 0.5) / N, y = (j + 0.5) / N;
      sum += std::pow(f(x) - f(y), 2) / std::pow(std::abs(x - y), 1 + 2 * s);
    }
  const double brute = std::sqrt(sum / (double(N) * N));
  EXPECT_NEAR(fractional_seminorm(u, s, 2) / brute, 1.0, 0.01);
}

TEST(FractionalSeminorm, SelfConvergentUnderRefinement) {
  auto f = [](const Point &x) { return std::sin(pi * x.x); };
  const double a = fractional_seminorm(DiscreteField::from_function(uniform_interval(64), f), 0.5, 2);
  const double b = fractional_seminorm(DiscreteField::from_function(uniform_interval(128), f), 0.5, 2);
  EXPECT_NEAR(a / b, 1.0, 1e-3);
}

TEST(FieldCsv, RoundTripsExactly) {
  GradingParams g;
  g.h_int = 0.2;
  g.h_min = 0.05;
  const MeshPtr m = graded(Domain::rectangle(0, 1, 0, 1), g);
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return std::sin(x.x) / 3 + x.y; });
  const auto path = std::filesystem::temp_directory_path() / "hetnl_field_roundtrip.csv";
  write_field_csv(u, path.string());
  const auto v = read_field_csv(m, path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(u.values(), v.values());
  EXPECT_THROW(DiscreteField(m, std::vector<double>(3, 0.0)), ConfigError);
}
