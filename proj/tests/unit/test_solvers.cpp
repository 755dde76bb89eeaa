#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "coast/random.hpp"
#include "coast/solvers.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"

namespace coast {
namespace {

using testing::code_of;

UnitVector e(Index p, Index i) { return UnitVector::from(Vector::Unit(p, i)); }

CollateralMatrix diag3(double a, double b, double c) {
  return CollateralMatrix::from_matrix(Eigen::Vector3d(a, b, c).asDiagonal().toDenseMatrix());
}

/// Σ = diag(1, 0.1, 0.5), h = normalize(1,1,1), d = e₃, α = 0.9.
struct Aniso {
  CollateralMatrix sigma = diag3(1.0, 0.1, 0.5);
  UnitVector h = UnitVector::normalize(Vector::Ones(3));
  BudgetSlice slice = BudgetSlice::make(e(3, 2), 0.9);

  /// Brute-force minimiser over the latitude circle, independent of the
  /// library's own oracle.
  std::pair<Vector, double> truth() const {
    oracle::Circle c(Vector::Unit(3, 2), 0.9);
    auto g = [&](double phi) { return oracle::quad_damage(c.at(phi), h.coords(), sigma.matrix()); };
    const auto [phi, j] = oracle::circle_min(g, 20000, 4, 10);
    return {c.at(phi), j};
  }
};

TEST(Slerp, PlaneGeometryExample) {
  const auto r = slerp_solve(e(3, 0), BudgetSlice::make(e(3, 2), 1 / std::sqrt(2.0)));
  EXPECT_NEAR(r.x[0], 0.7071067811865476, 1e-15);
  EXPECT_NEAR(r.x[1], 0.0, 1e-15);
  EXPECT_NEAR(r.x[2], 0.7071067811865476, 1e-15);
  EXPECT_NEAR(r.damage, std::pow(1 - 1 / std::sqrt(2.0), 2) + 0.5, 1e-14);
}

TEST(Slerp, FeasibleInputIsFixedPoint) {
  random::Engine rng(41);
  const auto h = random::unit(rng, 10);
  const auto d = random::unit(rng, 10);
  const auto r = slerp_solve(h, BudgetSlice::make(d, h.dot(d)));
  EXPECT_LT((r.x.coords() - h.coords()).norm(), 1e-14);
  EXPECT_LT(r.damage, 1e-28);
}

TEST(Slerp, NearPoleStaysFeasible) {
  random::Engine rng(42);
  for (double alpha : {-1 + 1e-6, 1 - 1e-6, -1 + 1e-10}) {
    const auto h = random::unit(rng, 32);
    const auto s = BudgetSlice::make(random::unit(rng, 32), alpha);
    const auto r = slerp_solve(h, s);
    EXPECT_LT(r.residuals.max(), 1e-9);
    EXPECT_LT(feasibility_residuals(r.x.coords(), s).max(), 1e-9);
  }
}

TEST(Coast, IsotropicSigmaExitsAtSlerpPoint) {
  random::Engine rng(43);
  for (int k = 0; k < 20; ++k) {
    const Index p = 3 + k;
    const auto h = random::unit(rng, p);
    const auto s = BudgetSlice::make(random::unit(rng, p), random::uniform(rng, -0.95, 0.95));
    const auto r = coast_solve(h, s, CollateralMatrix::identity(p), SolverConfig(0.3, 50));
    EXPECT_LT((r.x.coords() - slerp_solve(h, s).x.coords()).norm(), 1e-8);
    EXPECT_EQ(r.iterations_used, 0);
  }
}

TEST(Coast, WorstCaseSigmaKeepsSlerpPoint) {
  random::Engine rng(44);
  for (int k = 0; k < 10; ++k) {
    const Index p = 8;
    const auto h = random::unit(rng, p);
    const auto d = random::unit(rng, p);
    const auto s = BudgetSlice::make(d, 0.5);
    const auto sigma =
        CollateralMatrix::from_matrix(Matrix::Identity(p, p) - d.coords() * d.coords().transpose());
    const auto r = coast_solve(h, s, sigma, SolverConfig(0.3, 50));
    EXPECT_LT((r.x.coords() - slerp_solve(h, s).x.coords()).norm(), 1e-8);
  }
}

TEST(Coast, AnisotropicInstanceReachesGridMinimiser) {
  const Aniso a;
  SolverConfig cfg(0.3, 1000);
  cfg.grad_tol = 1e-12;
  const auto r = coast_solve(a.h, a.slice, a.sigma, cfg);
  const auto [x, j] = a.truth();
  EXPECT_LT((r.x.coords() - x).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_NEAR(r.damage, j, 1e-8);
  EXPECT_LT(r.residuals.max(), 1e-10);
  EXPECT_LE(r.damage, slerp_solve(a.h, a.slice, &a.sigma).damage);
}

TEST(Coast, TraceIsMonotoneUnderCurvatureSafeSteps) {
  random::Engine rng(45);
  for (int k = 0; k < 20; ++k) {
    const Index p = 6;
    const auto sigma = random::psd(rng, p);
    const auto h = random::unit(rng, p);
    const auto s = BudgetSlice::make(random::unit(rng, p), random::uniform(rng, -0.97, 0.97));
    SolverConfig cfg(1.0, 200);
    cfg.trace = true;
    cfg.step_rule = StepRule::CurvatureSafe;
    const auto r = coast_solve(h, s, sigma, cfg);
    ASSERT_EQ(r.objective_trace.size(), static_cast<std::size_t>(r.iterations_used + 1));
    for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
      EXPECT_LE(r.objective_trace[t], r.objective_trace[t - 1] + 1e-14);
  }
}

TEST(Coast, ConfigValidation) {
  const Aniso a;
  EXPECT_EQ(code_of([&] { coast_solve(a.h, a.slice, a.sigma, SolverConfig(0.0, 10)); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { coast_solve(a.h, a.slice, a.sigma, SolverConfig(0.3, -1)); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { coast_solve(a.h, a.slice, CollateralMatrix::identity(4),
                                      SolverConfig(0.3, 1)); }),
            ErrorCode::DimensionMismatch);
}

TEST(Kkt, IsotropicReducesToSlerp) {
  random::Engine rng(46);
  for (Index p : {3, 7, 40}) {
    const auto h = random::unit(rng, p);
    const auto s = BudgetSlice::make(random::unit(rng, p), -0.4);
    const auto k = kkt_solve(h, s, CollateralMatrix::identity(p));
    EXPECT_LT((k.result.x.coords() - slerp_solve(h, s).x.coords()).norm(), 1e-8);
  }
}

TEST(Kkt, AnisotropicInstanceMatchesGridOracle) {
  const Aniso a;
  const auto k = kkt_solve(a.h, a.slice, a.sigma);
  const auto [x, j] = a.truth();
  EXPECT_NEAR(k.result.damage, j, 1e-8);
  EXPECT_LT((k.result.x.coords() - x).norm(), 1e-4);
  EXPECT_FALSE(k.diagnostics.roots_found.empty());
}

TEST(Kkt, EveryRootReconstructsAFeasiblePoint) {
  random::Engine rng(47);
  for (int k = 0; k < 30; ++k) {
    const Index p = 3 + k % 10;
    const auto sigma = random::psd(rng, p);
    const auto h = random::unit(rng, p);
    const auto s = BudgetSlice::make(random::unit(rng, p), random::uniform(rng, -0.9, 0.9));
    const auto sol = kkt_solve(h, s, sigma);
    ASSERT_FALSE(sol.diagnostics.roots_found.empty());
    double best = std::numeric_limits<double>::infinity();
    for (const auto &root : sol.diagnostics.roots_found) {
      EXPECT_LT(root.residual, 1e-7);
      best = std::min(best, root.damage);
    }
    EXPECT_NEAR(sol.result.damage, best, 1e-12);
    EXPECT_LT(sol.result.residuals.max(), 1e-10);
  }
}

TEST(Kkt, FourDimensionalAgainstTwoAngleGrid) {
  random::Engine rng(48);
  for (int seed = 0; seed < 100; ++seed) {
    const Index p = 4;
    const auto sigma = random::psd(rng, p);
    const auto h = random::unit(rng, p);
    const auto d = random::unit(rng, p);
    const double alpha = random::uniform(rng, -0.9, 0.9);
    const auto s = BudgetSlice::make(d, alpha);
    const double jk = kkt_solve(h, s, sigma).result.damage;

    // Parameterise the 2-sphere of d-perp by two angles; grid, then polish
    // with the same grid one level finer around the best cell.
    Matrix dm(4, 1);
    dm << d.coords();
    const Matrix b = oracle::complement_basis(dm);
    const double r = std::sqrt(1 - alpha * alpha);
    auto j = [&](double th, double ph) {
      const Vector u = std::sin(th) * (std::cos(ph) * b.col(0) + std::sin(ph) * b.col(1)) +
                       std::cos(th) * b.col(2);
      return -oracle::quad_damage(alpha * d.coords() + r * u, h.coords(), sigma.matrix());
    };
    const double jo = -oracle::grid_max_2d(j, 0.0, std::numbers::pi, 181, 0.0,
                                           2 * std::numbers::pi, 361, 8);
    EXPECT_LE(jk, jo + 1e-8) << "seed " << seed;
  }
}

TEST(Oracle, IsotropicGivesSlerpPoint) {
  random::Engine rng(49);
  for (Index p : {3, 4}) {
    const auto h = random::unit(rng, p);
    const auto s = BudgetSlice::make(random::unit(rng, p), 0.25);
    const auto r = oracle_solve(h, s, CollateralMatrix::identity(p), 512);
    EXPECT_LT((r.x.coords() - slerp_solve(h, s).x.coords()).norm(), 1e-7);
  }
}

TEST(Oracle, RankOneAlongDirectionIsConstant) {
  random::Engine rng(50);
  const auto h = random::unit(rng, 3);
  const auto d = random::unit(rng, 3);
  const double alpha = 0.35;
  const auto sigma = CollateralMatrix::from_matrix(d.coords() * d.coords().transpose());
  const auto r = oracle_solve(h, BudgetSlice::make(d, alpha), sigma, 256);
  EXPECT_NEAR(r.damage, std::pow(alpha - h.dot(d), 2), 1e-12);
}

TEST(Oracle, RejectsLargeDimensions) {
  const auto s = BudgetSlice::make(e(5, 0), 0.1);
  EXPECT_EQ(code_of([&] { oracle_solve(e(5, 1), s, CollateralMatrix::identity(5)); }),
            ErrorCode::UnsupportedDimension);
}

TEST(ActAdd, Examples) {
  random::Engine rng(51);
  const auto h = random::unit(rng, 5);
  const auto d = random::unit(rng, 5);
  EXPECT_EQ((actadd_solve(h, d, 0.0, true) - h.coords()).norm(), 0.0);
  const Vector y = actadd_solve(e(3, 0), e(3, 1), 1.0, true);
  EXPECT_LT((y - Eigen::Vector3d(1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 0)).norm(), 1e-15);
  EXPECT_LT((actadd_solve(e(3, 0), e(3, 1), 1.0, false) - Eigen::Vector3d(1, 1, 0)).norm(), 0.0 + 1e-15);
  const auto neg = UnitVector::from(-Vector::Unit(3, 0));
  EXPECT_EQ(code_of([&] { actadd_solve(e(3, 0), neg, 1.0, true); }), ErrorCode::ZeroResult);
}

TEST(Angular, CurrentAngleIsIdentity) {
  random::Engine rng(52);
  const Index p = 16;
  const auto d = random::unit(rng, p);
  Matrix dm(p, 1);
  dm << d.coords();
  const auto q = UnitVector::from(oracle::complement_basis(dm).col(0));
  const auto h = random::unit(rng, p);
  const double theta = std::atan2(h.dot(q), h.dot(d));
  EXPECT_LT((angular_solve(h, d, q, theta).coords() - h.coords()).norm(), 1e-12);
}

TEST(Angular, InPlaneToZeroReturnsDirection) {
  const auto h = UnitVector::normalize(Eigen::Vector3d(0.3, 0.8, 0));
  EXPECT_LT((angular_solve(h, e(3, 0), e(3, 1), 0.0).coords() - Vector::Unit(3, 0)).norm(), 1e-15);
}

TEST(Angular, PreservesOutOfPlaneComponent) {
  random::Engine rng(53);
  const Index p = 16;
  for (int k = 0; k < 20; ++k) {
    const auto d = random::unit(rng, p);
    Matrix dm(p, 1);
    dm << d.coords();
    const auto q = UnitVector::from(oracle::complement_basis(dm).col(k % (p - 1)));
    const auto h = random::unit(rng, p);
    const double theta = random::uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Vector out = angular_solve(h, d, q, theta).coords();
    auto rest = [&](const Vector &v) {
      return Vector(v - v.dot(d.coords()) * d.coords() - v.dot(q.coords()) * q.coords());
    };
    EXPECT_NEAR(out.norm(), 1.0, 1e-14);
    EXPECT_LT((rest(out) - rest(h.coords())).norm(), 1e-12);
    EXPECT_NEAR(std::atan2(out.dot(q.coords()), out.dot(d.coords())), theta, 1e-12);
  }
}

TEST(Angular, RejectsNonOrthogonalAxis) {
  const auto q = UnitVector::normalize(Eigen::Vector3d(1, 1, 0));
  EXPECT_EQ(code_of([&] { angular_solve(e(3, 2), e(3, 0), q, 0.3); }),
            ErrorCode::NonOrthogonalBasis);
}

TEST(Batch, MatchesPerRowSolves) {
  random::Engine rng(54);
  const Index p = 24, n = 70;
  const auto sigma = random::psd(rng, p);
  const auto d = random::unit(rng, p);
  RowMatrix hn(n, p);
  Vector alphas(n);
  for (Index i = 0; i < n; ++i) {
    hn.row(i) = random::unit(rng, p).coords().transpose();
    alphas[i] = random::uniform(rng, -0.9, 0.9);
  }
  const SolverConfig cfg(0.3, 25);
  const auto coast = solve_batch(BatchMethod::Coast, hn, d, alphas, sigma, cfg);
  const auto slerp = solve_batch(BatchMethod::Slerp, hn, d, alphas, sigma, cfg);
  for (Index i = 0; i < n; ++i) {
    const auto h = UnitVector::from(hn.row(i).transpose());
    const auto s = BudgetSlice::make(d, alphas[i]);
    const auto one = coast_solve(h, s, sigma, cfg);
    EXPECT_LT((coast.x.row(i).transpose() - one.x.coords()).norm(), 1e-12) << i;
    EXPECT_NEAR(coast.damage[i], one.damage, 1e-12);
    EXPECT_EQ(coast.iterations[i], one.iterations_used);
    const auto sl = slerp_solve(h, s, &sigma);
    EXPECT_LT((slerp.x.row(i).transpose() - sl.x.coords()).norm(), 1e-14);
    EXPECT_NEAR(slerp.damage[i], sl.damage, 1e-13);
  }
}

}  // namespace
}  // namespace coast
