#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hetnl/kernels.hpp"

using namespace hetnl;

namespace {

LocalizationProfile unit_interval(double delta, LambdaSpec l = LambdaSpec::distance()) {
  return {Domain::interval(0, 1), QSpec::identity(), l, delta};
}

} // namespace

TEST(Cbar, ClosedFormValues) {
  EXPECT_NEAR(cbar(1, 2), 1.0, 1e-15);
  EXPECT_NEAR(cbar(2, 2), 2.0, 1e-15);
  EXPECT_NEAR(cbar(1, 1), 1.0, 1e-15);
  EXPECT_THROW(cbar(1, 0.5), ConfigError);
}

TEST(Cbar, MatchesSphericalMomentOracle) {
  // Independent definition: C̄_{d,p} = σ(S^{d-1}) / ∫_{S^{d-1}} |ω₁|^p dσ.
  for (double p : {1.0, 1.5, 2.0, 3.0, 4.0}) {
    EXPECT_NEAR(cbar(1, p), 1.0, 1e-14);
    const double m = integrate_adaptive([p](double t) { return std::pow(std::abs(std::cos(t)), p); },
                                        0.0, 2 * pi, 1e-14);
    EXPECT_NEAR(cbar(2, p), 2 * pi / m, 1e-10) << "p=" << p;
  }
}

TEST(NormalizationConstant, Examples) {
  EXPECT_NEAR(normalization_constant({2, 0, 1}), 1.5, 1e-15);
  EXPECT_NEAR(normalization_constant({2, 0, 2}), 4 / pi, 1e-15);
  const RhoSpec ind = RhoSpec::indicator(1.0);
  EXPECT_NEAR(normalization_constant({2, 0, 1}, &ind), 1.5, 1e-12);
  // The two paths agree for every admissible (d, p, β).
  for (int d : {1, 2})
    for (double p : {1.0, 2.0, 4.0})
      for (double beta : {0.0, 0.5 * d, 1.0 * d, d + 0.5 * p}) {
        const ExponentPair e{p, beta, d};
        EXPECT_NEAR(normalization_constant(e, &ind) / normalization_constant(e), 1.0, 1e-11);
      }
  EXPECT_THROW(normalization_constant({2, 3, 1}), ConfigError);
}

TEST(GammaKernel, PointValues) {
  const LocalizationProfile p = unit_interval(0.1);
  const ExponentPair e{2, 0, 1};
  // η(0.5) = 0.05
  EXPECT_NEAR(gamma_kernel(e, p, {0.5, 0}, {0.51, 0}), 12000.0, 1e-8);
  EXPECT_EQ(gamma_kernel(e, p, {0.5, 0}, {0.56, 0}), 0.0);
  EXPECT_DOUBLE_EQ(gamma_kernel(e, p, {0.5, 0}, {0.52, 0}), gamma_kernel(e, p, {0.5, 0}, {0.49, 0}));
  EXPECT_TRUE(std::isinf(gamma_kernel({2, 0.5, 1}, p, {0.5, 0}, {0.5, 0})));
}

TEST(GammaKernel, IndicatorRhoMatchesStandardPointwise) {
  const LocalizationProfile p = unit_interval(0.1);
  const RhoSpec ind = RhoSpec::indicator(1.0);
  const ExponentPair e{2, 0.5, 1};
  for (double y : {0.46, 0.48, 0.499, 0.53, 0.549})
    EXPECT_NEAR(gamma_kernel(e, p, {0.5, 0}, {y, 0}, &ind) / gamma_kernel(e, p, {0.5, 0}, {y, 0}), 1.0,
                1e-11);
}

TEST(KernelMoment, EqualsCbarAtInteriorPoints) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  const LocalizationProfile p1 = unit_interval(0.1);
  const LocalizationProfile p2(Domain::rectangle(0, 1, 0, 1), QSpec::identity(), LambdaSpec::smoothed(), 0.1);
  const RhoSpec quartic = RhoSpec::quartic(0.9);
  for (int k = 0; k < 10; ++k) {
    const Point x1{U(rng), 0}, x2{U(rng), U(rng)};
    for (double p : {1.0, 2.0, 4.0}) {
      EXPECT_NEAR(kernel_moment({p, 0.5, 1}, p1, x1), cbar(1, p), 1e-10 * cbar(1, p));
      EXPECT_NEAR(kernel_moment({p, 1.0, 2}, p2, x2), cbar(2, p), 1e-10 * cbar(2, p));
      EXPECT_NEAR(kernel_moment({p, 0.5, 1}, p1, x1, &quartic), cbar(1, p), 1e-8 * cbar(1, p));
    }
  }
  EXPECT_THROW(kernel_moment({2, 0, 1}, p1, {0, 0}), DegenerateKernelError);
}

TEST(RhoBar, ClosedFormValues) {
  const RhoSpec ind = RhoSpec::indicator(1.0);
  EXPECT_NEAR(rho_bar(ind, {2, 0, 1}), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(rho_bar(ind, {2, 0, 2}), pi / 2, 1e-13);
  EXPECT_NEAR(rho_bar(ind, {2, 2, 1}), 2.0, 1e-14);
  // β = 0.5: 2∫₀¹ z^{1.5} dz = 0.8
  EXPECT_NEAR(rho_bar(ind, {2, 0.5, 1}), 0.8, 1e-14);
}

TEST(RhoBar, LinearInRho) {
  for (const RhoSpec &r : {RhoSpec::indicator(0.7), RhoSpec::quartic(0.9),
                           RhoSpec::table({0, 0.4, 0.9}, {1.0, 0.6, 0.0})}) {
    const ExponentPair e{2, 0.5, 1};
    EXPECT_NEAR(rho_bar(r.scaled(3.5), e), 3.5 * rho_bar(r, e), 1e-12);
  }
}

TEST(RhoSpec, ValidatesTables) {
  EXPECT_THROW(RhoSpec::table({0, 0.5}, {1, -1}), ConfigError);
  EXPECT_THROW(RhoSpec::table({0, 1.5}, {1, 0}), ConfigError);
  EXPECT_THROW(RhoSpec::indicator(1.2), ConfigError);
  EXPECT_FALSE(RhoSpec::table({0, 0.5, 0.9}, {0.5, 1, 0}).nonincreasing());
  EXPECT_TRUE(RhoSpec::quartic().strictly_inside());
  EXPECT_FALSE(RhoSpec::indicator().strictly_inside());
}

TEST(Psi, NormalizationConstantsMatchClosedForm) {
  // 1-D: ∫_{-R}^{R}(1-(t/R)²)² dt = 16R/15; 2-D: 2π∫₀^R(1-(r/R)²)² r dr = πR²/3.
  EXPECT_NEAR(PsiSpec::quartic(1).normalization(), 15.0 / (16 * 0.9), 1e-12);
  EXPECT_NEAR(PsiSpec::quartic(2).normalization(), 3.0 / (0.81 * pi), 1e-12);
  EXPECT_THROW(PsiSpec::quartic(1, 1.0), ConfigError);
  // the smooth bump also has unit mass
  const PsiSpec b = PsiSpec::smooth_bump(1);
  EXPECT_NEAR(integrate_adaptive([&](double t) { return b.value(t); }, -0.9, 0.9, 1e-13), 1.0, 1e-10);
}

TEST(PsiDelta, PointValuesAndSupport) {
  const LocalizationProfile p = unit_interval(0.1);
  const PsiSpec psi = PsiSpec::quartic(1);
  const Point x{0.5, 0};
  EXPECT_NEAR(psi_delta(psi, p, x, x), psi.normalization() / 0.05, 1e-12);
  EXPECT_EQ(psi_delta(psi, p, x, {0.5 + 0.9 * 0.05, 0}), 0.0);
  EXPECT_EQ(psi_delta(psi, p, x, {0.6, 0}), 0.0);
  EXPECT_THROW(psi_delta(psi, p, {0, 0}, x), DegenerateKernelError);
}

TEST(PsiDelta, RowsAreProbabilityDensities) {
  const LocalizationProfile p = unit_interval(0.1);
  const PsiSpec psi = PsiSpec::quartic(1);
  for (double x : {0.02, 0.1, 0.3, 0.77}) {
    const double eta = p.eta({x, 0});
    const double mass = integrate_adaptive([&](double y) { return psi_delta(psi, p, {x, 0}, {y, 0}); },
                                           x - eta, x + eta, 1e-13);
    EXPECT_NEAR(mass, 1.0, 1e-10) << x;
  }
}

TEST(PsiDelta, GradientAtCenterAndFiniteDifferences) {
  const LocalizationProfile p = unit_interval(0.1, LambdaSpec::smoothed(0.25));
  const PsiSpec psi = PsiSpec::quartic(1);
  // y = x: ψ'(0) = 0, so only the η-derivative term remains.
  const Point x{0.2, 0};
  const EtaValue e = p.eta_grad(x);
  EXPECT_NEAR(psi_delta_grad_x(psi, p, x, x).x, -psi_delta(psi, p, x, x) * e.grad.x / e.value, 1e-9);
  // Second-order agreement with central differences.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.05, 0.95), V(-0.85, 0.85);
  for (int k = 0; k < 100; ++k) {
    const Point xx{U(rng), 0};
    const Point y{xx.x + V(rng) * p.eta(xx), 0};
    const double h = 1e-6 * p.eta(xx);
    const double fd = (psi_delta(psi, p, xx + Point{h, 0}, y) - psi_delta(psi, p, xx - Point{h, 0}, y)) / (2 * h);
    const double an = psi_delta_grad_x(psi, p, xx, y).x;
    EXPECT_NEAR(fd, an, 1e-6 * (1 + std::abs(an))) << xx.x << " " << y.x;
  }
}

TEST(PsiDelta, GradientFiniteDifferences2D) {
  const LocalizationProfile p(Domain::rectangle(0, 1, 0, 1), QSpec::arctan(1.0), LambdaSpec::smoothed(0.25), 0.1);
  const PsiSpec psi = PsiSpec::smooth_bump(2);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> U(0.05, 0.95), V(-0.6, 0.6);
  for (int k = 0; k < 100; ++k) {
    const Point x{U(rng), U(rng)};
    const Point y = x + Point{V(rng), V(rng)} * p.eta(x);
    const double h = 1e-6 * p.eta(x);
    const Point an = psi_delta_grad_x(psi, p, x, y);
    const double fx = (psi_delta(psi, p, x + Point{h, 0}, y) - psi_delta(psi, p, x - Point{h, 0}, y)) / (2 * h);
    const double fy = (psi_delta(psi, p, x + Point{0, h}, y) - psi_delta(psi, p, x - Point{0, h}, y)) / (2 * h);
    const double scale = 1 + norm(an);
    EXPECT_NEAR(fx, an.x, 1e-6 * scale);
    EXPECT_NEAR(fy, an.y, 1e-6 * scale);
  }
}

TEST(PsiDelta, ExactDistanceRidgeRaisesNonSmooth) {
  const LocalizationProfile p = unit_interval(0.1);
  EXPECT_THROW(psi_delta_grad_x(PsiSpec::quartic(1), p, {0.5, 0}, {0.5, 0}), NonSmoothError);
}

TEST(CapitalPsi, NearOneInTheInteriorAndBelowBound) {
  const LocalizationProfile p = unit_interval(0.1);
  const PsiSpec psi = PsiSpec::quartic(1);
  for (double x : {0.01, 0.1, 0.25, 0.4}) {
    const CapitalPsi c = capital_psi(psi, p, {x, 0});
    EXPECT_TRUE(c.within_bound()) << x;
    EXPECT_NEAR(c.value, 1.0, 0.02) << x;
  }
  // δ -> 0 at fixed x: Ψ_δ(x) -> 1
  double prev = 1e300;
  for (double delta : {0.1, 0.05, 0.025, 0.0125}) {
    const double err = std::abs(capital_psi(psi, unit_interval(delta), {0.3, 0}).value - 1.0);
    EXPECT_LE(err, prev * (1 + 1e-9));
    prev = err;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(CapitalPsi, TwoDimensionalValuesBelowBound) {
  const LocalizationProfile p(Domain::rectangle(0, 1, 0, 1), QSpec::identity(), LambdaSpec::smoothed(0.25), 0.1);
  const PsiSpec psi = PsiSpec::quartic(2);
  for (const Point &x : {Point{0.3, 0.4}, Point{0.05, 0.5}, Point{0.5, 0.5}}) {
    const CapitalPsi c = capital_psi(psi, p, x);
    EXPECT_TRUE(c.within_bound());
    EXPECT_NEAR(c.value, 1.0, 0.05);
  }
}
