#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "coast/error.hpp"
#include "coast/manifold.hpp"
#include "coast/random.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"

namespace coast {
namespace {

UnitVector e(Index p, Index i) { return UnitVector::from(Vector::Unit(p, i)); }

Vector vec3(double a, double b, double c) { return (Vector(3) << a, b, c).finished(); }

using testing::code_of;

TEST(UnitVector, AcceptsUnitAndRejectsOthers) {
  EXPECT_NO_THROW(UnitVector::from(vec3(0.6, 0.8, 0.0)));
  EXPECT_EQ(code_of([] { UnitVector::from(vec3(1.0, 1.0, 0.0)); }), ErrorCode::NotUnitNorm);
  EXPECT_EQ(code_of([] { UnitVector::from(Vector::Unit(2, 0)); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { UnitVector::normalize(Vector::Zero(4)); }), ErrorCode::ZeroResult);
  EXPECT_NEAR(UnitVector::normalize(vec3(3, 0, 4)).coords()[2], 0.8, 1e-15);
}

TEST(BudgetSlice, RadiusFromAlpha) {
  EXPECT_DOUBLE_EQ(BudgetSlice::make(e(3, 2), 0.6).radius(), 0.8);
  EXPECT_DOUBLE_EQ(BudgetSlice::make(e(3, 0), 0.0).radius(), 1.0);
  const auto s = BudgetSlice::make(e(5, 1), -0.3);
  EXPECT_NEAR((s.center() - Vector::Unit(5, 1) * -0.3).norm(), 0.0, 0.0);
}

TEST(BudgetSlice, RejectsPoles) {
  EXPECT_EQ(code_of([] { BudgetSlice::make(e(3, 0), 0.9999999999999); }),
            ErrorCode::DegenerateBudget);
  EXPECT_EQ(code_of([] { BudgetSlice::make(e(3, 0), -1.0); }), ErrorCode::DegenerateBudget);
  EXPECT_EQ(code_of([] { BudgetSlice::make(e(3, 0), 1.5); }), ErrorCode::DegenerateBudget);
  EXPECT_NO_THROW(BudgetSlice::make(e(3, 0), 1.0 - 1e-9));
}

TEST(Feasibility, SliceParameterisationIsFeasible) {
  const auto s = BudgetSlice::make(e(3, 2), 0.6);
  const Vector x = 0.6 * Vector::Unit(3, 2) + 0.8 * Vector::Unit(3, 0);
  EXPECT_TRUE(is_feasible(x, s).feasible);
}

TEST(Feasibility, ReportsResiduals) {
  const auto s = BudgetSlice::make(e(3, 0), 0.5);
  const auto a = is_feasible(Vector::Unit(3, 0), s);
  EXPECT_FALSE(a.feasible);
  EXPECT_NEAR(a.residuals.alignment, 0.5, 1e-15);
  EXPECT_NEAR(a.residuals.norm, 0.0, 1e-15);

  const Vector x = 2.0 * (0.5 * Vector::Unit(3, 0) + std::sqrt(0.75) * Vector::Unit(3, 1));
  const auto b = is_feasible(x, s);
  EXPECT_FALSE(b.feasible);
  EXPECT_NEAR(b.residuals.norm, 1.0, 1e-15);
  EXPECT_EQ(code_of([&] { is_feasible(Vector::Zero(4), s); }), ErrorCode::DimensionMismatch);
}

TEST(TangentProject, NormalComponentVanishes) {
  const auto s = BudgetSlice::make(e(3, 2), 0.0);
  const auto v = tangent_project(s, e(3, 0), vec3(0, 0, 5));
  EXPECT_LT(v.coords().norm(), 1e-15);
}

TEST(TangentProject, RemovesBasePointComponent) {
  const auto s = BudgetSlice::make(e(3, 2), 0.0);
  const auto v = tangent_project(s, e(3, 0), vec3(2, 3, 0));
  EXPECT_LT((v.coords() - vec3(0, 3, 0)).norm(), 1e-15);
}

TEST(TangentProject, MatchesDenseProjector) {
  random::Engine rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto s = BudgetSlice::make(random::unit(rng, 8), random::uniform(rng, -0.95, 0.95));
    const auto x = random::point_on_slice(rng, s);
    const Vector g = random::gaussian(rng, 8);
    const auto v = tangent_project(s, x, g);
    const Matrix proj = oracle::tangent_projector(x.coords(), s.direction().coords());
    EXPECT_LT((v.coords() - proj * g).norm(), 1e-12);
    EXPECT_LT(std::abs(v.coords().dot(x.coords())), 1e-12);
    EXPECT_LT(std::abs(v.coords().dot(s.direction().coords())), 1e-12);
  }
}

TEST(TangentProject, IdempotentAndAnnihilatesNormals) {
  random::Engine rng(12);
  for (Index p : {3, 16, 200}) {
    const auto s = BudgetSlice::make(random::unit(rng, p), 0.7);
    const auto x = random::point_on_slice(rng, s);
    const auto v = tangent_project(s, x, random::gaussian(rng, p));
    EXPECT_LT((tangent_project(s, x, v.coords()).coords() - v.coords()).norm(), 1e-10);
    EXPECT_LT(tangent_project(s, x, x.coords()).norm(), 1e-12);
    const Vector n = s.direction().coords() - s.alpha() * x.coords();
    EXPECT_LT(tangent_project(s, x, n).norm(), 1e-12);
  }
}

TEST(TangentProject, RejectsInfeasibleBase) {
  const auto s = BudgetSlice::make(e(3, 2), 0.5);
  EXPECT_EQ(code_of([&] { tangent_project(s, e(3, 0), vec3(1, 1, 1)); }),
            ErrorCode::InfeasibleBasePoint);
}

TEST(ExpMap, QuarterTurnOnEquator) {
  const auto s = BudgetSlice::make(e(3, 2), 0.0);
  const auto v = tangent_project(s, e(3, 0), vec3(0, std::numbers::pi / 2, 0));
  EXPECT_LT((exp_map(s, v).coords() - vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(ExpMap, FullTurnIsPeriodic) {
  const auto s = BudgetSlice::make(e(3, 2), 0.0);
  const auto v = tangent_project(s, e(3, 0), vec3(0, 2 * std::numbers::pi, 0));
  EXPECT_LT((exp_map(s, v).coords() - vec3(1, 0, 0)).norm(), 1e-14);
}

TEST(ExpMap, HalfTurnOnLatitudeCircleIsAntipode) {
  // r = 0.8 at α = 0.6, so an arc of length 0.8π is half the circle.
  const auto s = BudgetSlice::make(e(3, 2), 0.6);
  const auto x = UnitVector::from(vec3(0.8, 0, 0.6));
  const auto v = tangent_project(s, x, vec3(0, 0.8 * std::numbers::pi, 0));
  const Vector y = exp_map(s, v).coords();
  EXPECT_LT((y - vec3(-0.8, 0, 0.6)).norm(), 1e-15);
  const auto r = feasibility_residuals(y, s);
  EXPECT_LT(r.max(), 1e-15);
}

TEST(ExpMap, ZeroTangentIsAnError) {
  const auto s = BudgetSlice::make(e(3, 2), 0.0);
  const auto v = tangent_project(s, e(3, 0), vec3(0, 1e-15, 0));
  EXPECT_EQ(code_of([&] { exp_map(s, v); }), ErrorCode::ZeroTangent);
}

TEST(ExpMap, StaysOnSliceAndOnLatitudeCircle) {
  random::Engine rng(13);
  for (Index p : {3, 8, 64, 1024}) {
    for (int k = 0; k < 20; ++k) {
      const auto s = BudgetSlice::make(random::unit(rng, p), random::uniform(rng, -0.99, 0.99));
      const auto x = random::point_on_slice(rng, s);
      const auto v = random::tangent(rng, s, x, random::uniform(rng, 1e-6, 20.0));
      for (double t : {0.1, 0.5, 1.0}) {
        const Vector y = exp_map(s, v.scaled(t)).coords();
        EXPECT_LT(feasibility_residuals(y, s).max(), 1e-10);
        EXPECT_NEAR((y - s.center()).norm(), s.radius(), 1e-10);
      }
    }
  }
}

TEST(ProjectToSlice, ClosedForms) {
  const auto s = BudgetSlice::make(e(3, 2), 1 / std::sqrt(2.0));
  const Vector x = project_to_slice(e(3, 0), s).coords();
  EXPECT_LT((x - vec3(1 / std::sqrt(2.0), 0, 1 / std::sqrt(2.0))).norm(), 1e-15);

  random::Engine rng(14);
  const auto h = random::unit(rng, 6);
  const auto d = random::unit(rng, 6);
  const auto on = BudgetSlice::make(d, h.dot(d));
  EXPECT_LT((project_to_slice(h, on).coords() - h.coords()).norm(), 1e-14);

  EXPECT_EQ(code_of([&] { project_to_slice(d, on); }), ErrorCode::ParallelInput);
}

TEST(ProjectToSlice, MinimisesDistance) {
  random::Engine rng(15);
  const auto s = BudgetSlice::make(random::unit(rng, 10), 0.4);
  const auto h = random::unit(rng, 10);
  const double best = (h.coords() - project_to_slice(h, s).coords()).norm();
  for (int k = 0; k < 1000; ++k) {
    const auto y = random::point_on_slice(rng, s);
    EXPECT_LE(best, (h.coords() - y.coords()).norm() + 1e-12);
  }
}

TEST(ProjectToSlice, EqualsSlerpRotation) {
  random::Engine rng(16);
  for (int k = 0; k < 50; ++k) {
    const auto h = random::unit(rng, 7);
    const auto d = random::unit(rng, 7);
    const double alpha = random::uniform(rng, -0.99, 0.99);
    const Vector ref = oracle::slerp_rotation(h.coords(), d.coords(), alpha);
    EXPECT_LT((project_to_slice(h, BudgetSlice::make(d, alpha)).coords() - ref).norm(), 1e-12);
  }
}

TEST(TangentVector, CheckedConstruction) {
  const auto s = BudgetSlice::make(e(3, 2), 0.0);
  EXPECT_NO_THROW(TangentVector::make(s, e(3, 0), vec3(0, 1, 0)));
  EXPECT_EQ(code_of([&] { TangentVector::make(s, e(3, 0), vec3(1, 1, 0)); }),
            ErrorCode::InvalidArgument);
}

TEST(RetractToSlice, FixesSmallDrift) {
  random::Engine rng(17);
  const auto s = BudgetSlice::make(random::unit(rng, 12), -0.8);
  const Vector x = random::point_on_slice(rng, s).coords() + 1e-7 * random::gaussian(rng, 12);
  EXPECT_LT(feasibility_residuals(retract_to_slice(x, s), s).max(), 1e-15);
}

}  // namespace
}  // namespace coast
