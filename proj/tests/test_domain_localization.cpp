#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hetnl/localization.hpp"

using namespace hetnl;

TEST(Domain, BoundaryDistanceExamples) {
  EXPECT_DOUBLE_EQ(Domain::interval(0, 1).boundary_distance({0.3, 0}), 0.3);
  EXPECT_DOUBLE_EQ(Domain::rectangle(0, 1, 0, 1).boundary_distance({0.5, 0.2}), 0.2);
  EXPECT_NEAR(Domain::disc(0, 0, 1).boundary_distance({0.6, 0}), 0.4, 1e-15);
}

TEST(Domain, OutsidePointsRaiseDomainError) {
  EXPECT_THROW((void)Domain::interval(0, 1).boundary_distance({1.5, 0}), DomainError);
  EXPECT_THROW((void)Domain::disc(0, 0, 1).boundary_distance({1, 1}), DomainError);
  EXPECT_THROW(Domain::interval(1, 0), ConfigError);
  EXPECT_THROW(Domain::disc(0, 0, 0), ConfigError);
}

TEST(Domain, MeasuresAndRayExit) {
  const Domain r = Domain::rectangle(0, 2, 0, 1);
  EXPECT_DOUBLE_EQ(r.measure(), 2.0);
  EXPECT_DOUBLE_EQ(r.boundary_measure(), 6.0);
  EXPECT_DOUBLE_EQ(Domain::interval(0, 1).boundary_measure(), 2.0);
  EXPECT_NEAR(r.ray_exit({0.5, 0.5}, {1, 0}), 1.5, 1e-15);
  const Domain d = Domain::disc(1, 1, 2);
  EXPECT_NEAR(d.ray_exit({1, 1}, {0, 1}), 2.0, 1e-15);
  EXPECT_NEAR(d.measure(), 4 * pi, 1e-14);
}

TEST(Domain, RayExitLandsOnBoundary) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0, 1);
  for (const Domain &dom : {Domain::rectangle(0, 1, 0, 2), Domain::disc(0, 0, 1)}) {
    for (int k = 0; k < 200; ++k) {
      Point x{U(rng), U(rng)};
      if (dom.shape() == Shape::Disc) x = x * 0.7;
      if (!dom.contains(x)) continue;
      const double th = 2 * pi * U(rng);
      const Point w{std::cos(th), std::sin(th)};
      const double s = dom.ray_exit(x, w);
      EXPECT_NEAR(dom.signed_distance(x + w * s), 0.0, 1e-12);
    }
  }
}

TEST(QSpec, IdentityExamples) {
  const QSpec q = QSpec::identity();
  EXPECT_DOUBLE_EQ(q.eval(0.25).value, 0.25);
  EXPECT_DOUBLE_EQ(q.eval(0.25).derivative, 1.0);
  EXPECT_DOUBLE_EQ(q.eval(0.0).value, 0.0);
  EXPECT_DOUBLE_EQ(q.eval(0.0).derivative, 1.0);
  EXPECT_THROW((void)q.eval(-1.0), DomainError);
}

TEST(QSpec, MollifiedPowerBelowKneeIsExactPower) {
  // Tabulated from the construction: r^2/2 up to the knee start 1 - w = 0.8.
  const QSpec q = QSpec::mollified_power(2, 0.2);
  for (double r : {0.01, 0.1, 0.3, 0.5, 0.8}) {
    EXPECT_NEAR(q.eval(r).value, r * r / 2, 1e-15);
    EXPECT_NEAR(q.eval(r).derivative, r, 1e-15);
  }
  EXPECT_DOUBLE_EQ(q.eval(5.0).derivative, 0.0);
  EXPECT_DOUBLE_EQ(q.eval(5.0).value, q.eval(1.0).value);
  EXPECT_DOUBLE_EQ(q.positivity_radius(), 0.8);
}

TEST(QSpec, AssumptionsHoldOnDenseGrid) {
  // Property: q(0)=0, 0 <= q' <= 1, q(r) <= r, derivative matches differences.
  for (const QSpec &q : {QSpec::identity(), QSpec::arctan(0.5), QSpec::mollified_power(2),
                         QSpec::mollified_power(3, 0.3), QSpec::table({0, 0.5, 1, 2}, {0, 0.5, 0.8, 0.9})}) {
    EXPECT_EQ(q.eval(0).value, 0.0) << q.describe();
    for (int k = 1; k < 400; ++k) {
      const double r = 0.005 * k;
      const QValue v = q.eval(r);
      EXPECT_LE(v.value, r * (1 + 1e-14)) << q.describe() << " r=" << r;
      EXPECT_GE(v.derivative, -1e-14) << q.describe();
      EXPECT_LE(v.derivative, 1 + 1e-14) << q.describe();
      const double h = 1e-6;
      const double fd = (q.eval(r + h).value - q.eval(r - h).value) / (2 * h);
      EXPECT_NEAR(fd, v.derivative, 1e-6) << q.describe() << " r=" << r;
    }
  }
}

TEST(QSpec, TableRejectsInvalidKnots) {
  EXPECT_THROW(QSpec::table({0, 1}, {0, 2}), ConfigError);     // slope > 1
  EXPECT_THROW(QSpec::table({0, 1, 2}, {0, 0.5, 0.2}), ConfigError); // decreasing
  EXPECT_THROW(QSpec::table({0.1, 1}, {0, 0.5}), ConfigError); // must start at 0
  EXPECT_THROW(QSpec::mollified_power(0), ConfigError);
  EXPECT_THROW(QSpec::arctan(-1), ConfigError);
}

TEST(QSpec, DoublingConstantOfIdentityIsTwo) {
  std::vector<double> radii;
  for (int k = 0; k <= 20; ++k) radii.push_back(std::ldexp(1.0, -k));
  EXPECT_DOUBLE_EQ(measure_doubling(QSpec::identity(), radii), 2.0);
  EXPECT_DOUBLE_EQ(QSpec::identity().doubling_constant(), 2.0);
  // r^2/2 doubles by 4 below the knee.
  EXPECT_NEAR(QSpec::mollified_power(2).doubling_constant(), 4.0, 1e-12);
}

TEST(Thresholds, FormulaExamples) {
  const Thresholds t = delta_thresholds(QSpec::identity(), 1.0, 1.0);
  EXPECT_NEAR(t.delta0, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(t.delta0_bar, (std::sqrt(33.0) - 5) / 4, 1e-11);
  const Thresholds t2 = delta_thresholds_from(2.0, 1.0, 2.0);
  // κ₁ = 2: k = κ₁δ solves k² + 7k − 2 = 0.
  EXPECT_NEAR(t2.delta0_bar, 0.5 * (std::sqrt(57.0) - 7) / 2, 1e-11);
  EXPECT_THROW(delta_thresholds_from(0.5, 1, 1), ConfigError);
}

TEST(Thresholds, NonincreasingInKappa1AndCq) {
  Thresholds prev = delta_thresholds_from(1.0, 1.0, 0.5);
  for (double k1 = 0.6; k1 < 5; k1 += 0.3) {
    const Thresholds t = delta_thresholds_from(1.0, 1.0, k1);
    EXPECT_LE(t.delta0, prev.delta0 + 1e-15);
    EXPECT_LE(t.delta0_bar, prev.delta0_bar + 1e-12);
    prev = t;
  }
  prev = delta_thresholds_from(1.0, 1.3, 1.0);
  for (double cq = 1.2; cq < 10; cq += 0.7) {
    const Thresholds t = delta_thresholds_from(cq, 1.3, 1.0);
    EXPECT_LE(t.delta0, prev.delta0 + 1e-15);
    EXPECT_LE(t.delta0_bar, prev.delta0_bar + 1e-12);
    prev = t;
  }
}

TEST(Profile, EtaExamples) {
  const LocalizationProfile p(Domain::interval(0, 1), QSpec::identity(), LambdaSpec::distance(), 0.1);
  EXPECT_NEAR(p.eta({0.5, 0}), 0.05, 1e-16);
  EXPECT_NEAR(eta_delta(p, {0.01, 0}), 0.001, 1e-16);
  EXPECT_EQ(p.eta({0.0, 0}), 0.0);
  EXPECT_EQ(p.eta({1.0, 0}), 0.0);
  EXPECT_TRUE(p.admissible());
  EXPECT_FALSE(p.with_delta(0.2).admissible());
  EXPECT_THROW(p.with_delta(0.2).require_admissible("test"), ConfigError);
}

TEST(Profile, ExactDistanceRidgeIsFlaggedNonDifferentiable) {
  const LocalizationProfile p(Domain::interval(0, 1), QSpec::identity(), LambdaSpec::distance(), 0.1);
  EXPECT_FALSE(p.eta_grad({0.5, 0}).differentiable);
  EXPECT_TRUE(p.eta_grad({0.3, 0}).differentiable);
  const LocalizationProfile s(Domain::interval(0, 1), QSpec::identity(), LambdaSpec::smoothed(), 0.1);
  EXPECT_TRUE(s.eta_grad({0.5, 0}).differentiable);
}

TEST(Profile, ValidationPassesForAdmissibleProfiles) {
  const Domain I = Domain::interval(0, 1), R = Domain::rectangle(0, 1, 0, 2), D = Domain::disc(0, 0, 1);
  const std::vector<LocalizationProfile> profiles{
      {I, QSpec::identity(), LambdaSpec::distance(), 0.1},
      {I, QSpec::arctan(0.5), LambdaSpec::smoothed(0.3), 0.1},
      {I, QSpec::mollified_power(2), LambdaSpec::distance(), 0.05},
      {R, QSpec::identity(), LambdaSpec::smoothed(0.25), 0.05},
      {R, QSpec::identity(), LambdaSpec::distance(), 0.1},
      {D, QSpec::identity(), LambdaSpec::smoothed(0.25), 0.1},
  };
  for (const auto &p : profiles) {
    const Report rep = validate_profile(p, validation_grid(p.domain(), 24, 20));
    EXPECT_TRUE(rep.passed()) << p.domain().name() << " " << p.q().describe() << "\n" << rep.csv();
  }
}

TEST(Profile, DistanceLambdaMeasuresUnitConstants) {
  const LocalizationProfile p(Domain::interval(0, 1), QSpec::identity(), LambdaSpec::distance(), 0.1);
  const Report rep = validate_profile(p, validation_grid(p.domain()));
  EXPECT_DOUBLE_EQ(rep.find("lambda_kappa0")->measured, 1.0);
  EXPECT_NEAR(rep.find("lambda_kappa1")->measured, 1.0, 1e-9);
  EXPECT_NEAR(rep.find("q_doubling")->measured, 2.0, 1e-15);
}

TEST(Profile, InadmissibleDeltaFailsValidation) {
  const LocalizationProfile p(Domain::interval(0, 1), QSpec::identity(), LambdaSpec::distance(), 0.2);
  const Report rep = validate_profile(p, validation_grid(p.domain()));
  EXPECT_FALSE(rep.passed());
  EXPECT_FALSE(rep.find("delta_admissible")->pass);
  EXPECT_THROW(rep.require(), ValidationError);
}

TEST(Profile, SmoothedLambdaGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.02, 0.98);
  for (const Domain &dom : {Domain::rectangle(0, 1, 0, 1), Domain::disc(0.5, 0.5, 0.5)}) {
    const LocalizationProfile p(dom, QSpec::arctan(1.0), LambdaSpec::smoothed(0.25), 0.1);
    for (int k = 0; k < 200; ++k) {
      const Point x{U(rng), U(rng)};
      if (!dom.contains(x) || dom.boundary_distance(x) < 1e-3) continue;
      const EtaValue e = p.eta_grad(x);
      const double h = 1e-6;
      const double gx = (p.eta(x + Point{h, 0}) - p.eta(x - Point{h, 0})) / (2 * h);
      const double gy = (p.eta(x + Point{0, h}) - p.eta(x - Point{0, h})) / (2 * h);
      EXPECT_NEAR(e.grad.x, gx, 1e-7) << dom.name() << " x=" << x.x << "," << x.y;
      EXPECT_NEAR(e.grad.y, gy, 1e-7) << dom.name() << " x=" << x.x << "," << x.y;
    }
  }
}

TEST(Profile, BallInsideDomainAndComparabilityOnRandomPairs) {
  // Property: B(x, η(x)) ⊂ Ω and (1-κ₁δ)η(x) <= η(y) <= (1+κ₁δ)η(x) for |x-y| <= η(x).
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0, 1);
  const Domain dom = Domain::rectangle(0, 1, 0, 1);
  const LocalizationProfile p(dom, QSpec::identity(), LambdaSpec::smoothed(0.25), 0.12);
  const double k1d = p.kappa1() * p.delta();
  for (int k = 0; k < 2000; ++k) {
    const Point x{U(rng), U(rng)};
    const double ex = p.eta(x);
    EXPECT_LE(ex, dom.boundary_distance(x) * (1 + 1e-12));
    const double th = 2 * pi * U(rng), t = ex * U(rng);
    const Point y = x + Point{std::cos(th), std::sin(th)} * t;
    ASSERT_TRUE(dom.contains(y));
    const double ey = p.eta(y);
    EXPECT_GE(ey, (1 - k1d) * ex - 1e-15);
    EXPECT_LE(ey, (1 + k1d) * ex + 1e-15);
  }
}

TEST(Profile, SmoothedRectangleLambdaComparableToDistance) {
  const Domain dom = Domain::rectangle(0, 1, 0, 1);
  const LambdaSpec l = LambdaSpec::smoothed(0.25);
  const double k0 = l.kappa0(dom);
  for (const Point &x : validation_grid(dom, 32, 10)) {
    const double d = dom.boundary_distance(x);
    if (d == 0) continue;
    const double v = l.eval(dom, x).value;
    EXPECT_LE(v, k0 * d * (1 + 1e-12));
    EXPECT_GE(v * k0, d * (1 - 1e-12));
  }
}
