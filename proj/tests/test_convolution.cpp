#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "hetnl/convolution.hpp"
#include "hetnl/solver.hpp"

using namespace hetnl;

namespace {

LocalizationProfile interval_profile(double delta, LambdaSpec l = LambdaSpec::distance()) {
  return {Domain::interval(0, 1), QSpec::identity(), l, delta};
}

MeshPtr interval_mesh(const LocalizationProfile &p, double h_int = 0.01, double h_min = 1e-4) {
  GradingParams g;
  g.h_int = h_int;
  g.h_min = h_min;
  return std::make_shared<const Mesh>(build_graded_mesh(p.domain(), g, &p));
}

MeshPtr uniform_interval(int n) {
  std::vector<double> xs(n + 1);
  for (int i = 0; i <= n; ++i) xs[i] = static_cast<double>(i) / n;
  return std::make_shared<const Mesh>(Mesh::interval(Domain::interval(0, 1), xs));
}

double row_sum(const ConvolutionOperator &K, std::size_t i) {
  double s = 0;
  for (std::size_t k = K.row_begin(i); k < K.row_end(i); ++k) s += K.weight(k);
  return s;
}

} // namespace

TEST(Convolution, RowsAreStochastic) {
  const auto p = interval_profile(0.1);
  const MeshPtr m = interval_mesh(p);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  ASSERT_EQ(K.rows(), m->num_nodes());
  for (std::size_t i = 0; i < K.rows(); ++i) {
    EXPECT_NEAR(row_sum(K, i), 1.0, 1e-12) << i;
    for (std::size_t k = K.row_begin(i); k < K.row_end(i); ++k) EXPECT_GE(K.weight(k), 0.0);
  }
  const auto one = apply_K(K, DiscreteField::constant(m, 1.0));
  for (double v : one.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Convolution, ReproducesAffineFields1D) {
  for (double delta : {0.1, 0.05}) {
    const auto p = interval_profile(delta);
    const MeshPtr m = interval_mesh(p);
    const auto K = assemble_K(m, p, PsiSpec::quartic(1));
    const auto u = DiscreteField::from_function(m, [](const Point &x) { return 2.5 * x.x - 0.75; });
    const auto Ku = apply_K(K, u);
    for (std::size_t i = 0; i < u.values().size(); ++i) EXPECT_NEAR(Ku[i], u[i], 1e-8);
  }
}

TEST(Convolution, BoundaryRowsAreIdentityAndTraceIsExact) {
  const auto p = interval_profile(0.1);
  const MeshPtr m = interval_mesh(p);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return std::exp(3 * x.x); });
  const auto Ku = apply_K(K, u);
  for (int i : m->boundary_nodes()) {
    EXPECT_EQ(K.row_kind(i), RowKind::Boundary);
    EXPECT_EQ(K.row_end(i) - K.row_begin(i), 1u);
  }
  EXPECT_EQ(trace_values(Ku), trace_values(u));
}

TEST(Convolution, SubResolutionRowsAreIdentity) {
  const auto p = interval_profile(0.1);
  const MeshPtr m = interval_mesh(p);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  int sub = 0;
  for (std::size_t i = 0; i < K.rows(); ++i) {
    if (K.row_kind(i) != RowKind::SubResolution) continue;
    ++sub;
    ASSERT_EQ(K.row_end(i) - K.row_begin(i), 1u);
    EXPECT_EQ(K.col(K.row_begin(i)), static_cast<int>(i));
    EXPECT_LT(p.eta(m->node(i)), 2 * m->node_spacing(i));
  }
  EXPECT_GT(sub, 0);
}

TEST(Convolution, RowsOnlyReachTheHorizon) {
  // Property: weight (i,j) ≠ 0 only if |x_j - x_i| < η(x_i) + one cell.
  const auto p = interval_profile(0.05);
  const MeshPtr m = interval_mesh(p);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  for (std::size_t i = 0; i < K.rows(); ++i) {
    const double eta = p.eta(m->node(i));
    for (std::size_t k = K.row_begin(i); k < K.row_end(i); ++k) {
      const int j = K.col(k);
      const double slack = std::max(m->node_spacing(i), m->node_spacing(j)) * 2;
      EXPECT_LE(std::abs(m->node(j).x - m->node(i).x), eta + slack) << i << " " << j;
    }
  }
}

TEST(Convolution, SmoothFieldErrorShrinksWithDelta) {
  auto f = [](const Point &x) { return std::sin(pi * x.x); };
  std::vector<double> err;
  const MeshPtr m = uniform_interval(2000);
  for (double delta : {0.1, 0.05, 0.025}) {
    const auto p = interval_profile(delta);
    const auto K = assemble_K(m, p, PsiSpec::quartic(1));
    const auto u = DiscreteField::from_function(m, f);
    const auto Ku = apply_K(K, u);
    err.push_back(lp_distance(Ku, f, 2));
  }
  EXPECT_GT(err[0] / err[1], 1.8);
  EXPECT_GT(err[1] / err[2], 1.8);
  EXPECT_LT(err[0], 0.1 * 0.1);
}

TEST(Convolution, ErrorMatchesLeadingOrderExpansion) {
  // Even ψ: u − Ku ≈ −½ m₂ η(x)² u″(x), m₂ = R²/7 for the quartic with R = 0.9.
  const MeshPtr m = uniform_interval(4000);
  const auto p = interval_profile(0.05);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return std::sin(pi * x.x); });
  const auto Ku = apply_K(K, u);
  for (int i : {400, 1000, 2000, 3300}) {
    const double x = m->node(i).x, eta = p.eta(m->node(i));
    const double pred = 0.5 * 0.81 / 7 * eta * eta * pi * pi * std::sin(pi * x);
    EXPECT_NEAR(u[i] - Ku[i], pred, 0.03 * pred) << x;
  }
}

TEST(Convolution, BoundedOnL2) {
  const auto p = interval_profile(0.1);
  const MeshPtr m = interval_mesh(p);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DiscreteField u(m, random_field(m->num_nodes(), seed));
    EXPECT_LE(lp_norm(apply_K(K, u), 2), 1.5 * lp_norm(u, 2)) << seed;
  }
}

TEST(Convolution, TransposeMatchesMatrix) {
  const auto p = interval_profile(0.1);
  const MeshPtr m = interval_mesh(p, 0.02, 1e-3);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  const auto v = random_field(m->num_nodes(), 9);
  const Eigen::VectorXd ref = K.matrix().transpose() * Problem::to_eigen(v);
  const auto got = K.apply_transpose(v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(got[i], ref[static_cast<int>(i)], 1e-13);
  EXPECT_EQ(static_cast<std::size_t>(K.matrix().nonZeros()), K.nonzeros());
  const std::string csv = K.triplets_csv();
  EXPECT_EQ(csv.rfind("row,col,weight\n", 0), 0u);
}

TEST(ConvolutionGradient, ConstantAndAffineFields) {
  const auto p = interval_profile(0.1, LambdaSpec::smoothed(0.25));
  const MeshPtr m = interval_mesh(p);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  for (const Point &g : grad_K(K, DiscreteField::constant(m, 4.0))) EXPECT_NEAR(g.x, 0.0, 1e-12);
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return -1.5 * x.x + 2; });
  const auto g = grad_K(K, u);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i].x, -1.5, 1e-6) << i;
}

TEST(ConvolutionGradient, MatchesDifferenceOfConvolutions) {
  // Smooth u: ∇(K u) at a node vs central differences of K u on a fine uniform mesh.
  const auto p = interval_profile(0.1, LambdaSpec::smoothed(0.25));
  const MeshPtr m = uniform_interval(4000);
  const auto K = assemble_K(m, p, PsiSpec::quartic(1));
  const auto u = DiscreteField::from_function(m, [](const Point &x) { return std::sin(3 * x.x); });
  const auto Ku = apply_K(K, u);
  const auto g = grad_K(K, u);
  for (int i : {800, 1500, 2000, 3100}) {
    const double fd = (Ku[i + 1] - Ku[i - 1]) / (2.0 / 4000);
    EXPECT_NEAR(g[i].x, fd, 2e-3) << i;
  }
}

TEST(ConvolutionGradient, RidgeOfDistanceRaisesNonSmoothError) {
  const auto p = interval_profile(0.1);
  // Node 0.5 sits on the ridge of the distance function and is resolved (η = 0.05 > 2h).
  const auto K = assemble_K(uniform_interval(200), p, PsiSpec::quartic(1));
  ASSERT_EQ(K.row_kind(100), RowKind::Interior);
  const auto u = DiscreteField::from_function(K.mesh_ptr(), [](const Point &x) { return x.x; });
  EXPECT_THROW(grad_K(K, u), NonSmoothError);
}

TEST(Convolution, InadmissibleDeltaIsRejected) {
  const auto p = interval_profile(0.2);
  EXPECT_THROW(assemble_K(uniform_interval(20), p, PsiSpec::quartic(1)), ConfigError);
}

TEST(Convolution, SquareRowsAndAffineReproduction) {
  const LocalizationProfile p(Domain::rectangle(0, 1, 0, 1), QSpec::identity(), LambdaSpec::smoothed(0.25), 0.1);
  GradingParams g;
  g.h_int = 0.05;
  g.h_min = 0.01;
  const MeshPtr m = std::make_shared<const Mesh>(build_graded_mesh(p.domain(), g, &p));
  const auto K = assemble_K(m, p, PsiSpec::quartic(2));
  int interior = 0;
  for (std::size_t i = 0; i < K.rows(); ++i) {
    EXPECT_NEAR(row_sum(K, i), 1.0, 1e-12);
    interior += K.row_kind(i) == RowKind::Interior;
  }
  EXPECT_GT(interior, 0);
  auto f = [](const Point &x) { return 0.3 * x.x - 1.2 * x.y + 0.1; };
  const auto u = DiscreteField::from_function(m, f);
  const auto Ku = apply_K(K, u);
  for (std::size_t i = 0; i < K.rows(); ++i) EXPECT_NEAR(Ku[i], u[i], 1e-8);
}
