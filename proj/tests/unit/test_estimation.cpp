#include <cmath>
#include <cstdlib>

#include <gtest/gtest.h>

#include "coast/estimation.hpp"
#include "coast/parallel.hpp"
#include "coast/random.hpp"
#include "support/expect.hpp"

namespace coast {
namespace {

using testing::code_of;

ActivationBatch batch_of(RowMatrix rows, std::string loc = "L0") {
  return ActivationBatch{std::move(rows), std::move(loc)};
}

RowMatrix rows_of(std::initializer_list<std::initializer_list<double>> init) {
  RowMatrix m(static_cast<Index>(init.size()), static_cast<Index>(init.begin()->size()));
  Index i = 0;
  for (const auto &r : init) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

/// Rows ±s·e_k with k drawn from `weights` and a random raw scale s. The
/// unit-normalised second moment of this generator is exactly diag(weights).
RowMatrix mixture_rows(random::Engine &rng, Index n, Index p, const std::vector<double> &weights) {
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  RowMatrix m = RowMatrix::Zero(n, p);
  for (Index i = 0; i < n; ++i) {
    const double scale = random::uniform(rng, 0.5, 20.0);
    m(i, pick(rng)) = (random::uniform(rng, 0, 1) < 0.5 ? -1 : 1) * scale;
  }
  return m;
}

RowMatrix gaussian_rows(random::Engine &rng, Index n, Index p) {
  RowMatrix m(n, p);
  for (Index i = 0; i < n; ++i) m.row(i) = random::gaussian(rng, p).transpose();
  return m;
}

TEST(SecondMoment, RankOne) {
  const auto s = estimate_second_moment(batch_of(rows_of({{1, 0, 0, 0}})));
  Matrix expect = Matrix::Zero(4, 4);
  expect(0, 0) = 1;
  EXPECT_LT((s.matrix() - expect).norm(), 1e-15);
  EXPECT_TRUE(s.normalized());
}

TEST(SecondMoment, TwoOrthonormalRows) {
  const RowMatrix rows = rows_of({{1, 0, 0}, {0, 1, 0}});
  SecondMomentAccumulator acc(3);
  acc.add(rows);
  EXPECT_LT((acc.mean() - 0.5 * Eigen::Vector3d(1, 1, 0).asDiagonal().toDenseMatrix()).norm(),
            1e-15);
  const auto s = estimate_second_moment(batch_of(rows));
  EXPECT_LT((s.matrix() - Eigen::Vector3d(1, 1, 0).asDiagonal().toDenseMatrix()).norm(), 1e-15);
}

TEST(SecondMoment, RecoversMixtureSpectrum) {
  random::Engine rng(61);
  const std::vector<double> w{0.4, 0.3, 0.2, 0.1};
  const auto s = estimate_second_moment(batch_of(mixture_rows(rng, 100000, 16, w)));
  const Vector ev = s.eig().values;
  for (int k = 1; k < 4; ++k)
    EXPECT_NEAR(ev[k] / ev[0], w[k] / w[0], 0.05 * w[k] / w[0]) << "k=" << k;
  EXPECT_LT(ev[4], 1e-12);
}

TEST(SecondMoment, InvariantToRowOrderAndScale) {
  random::Engine rng(62);
  const RowMatrix rows = gaussian_rows(rng, 500, 12);
  RowMatrix shuffled = rows.colwise().reverse();
  for (Index i = 0; i < shuffled.rows(); ++i) shuffled.row(i) *= 1.0 + i % 7;
  const auto a = estimate_second_moment(batch_of(rows));
  const auto b = estimate_second_moment(batch_of(shuffled));
  EXPECT_LT((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SecondMoment, ChunkingIsBitExact) {
  random::Engine rng(63);
  const RowMatrix rows = gaussian_rows(rng, 5000, 9);
  SecondMomentAccumulator whole(9);
  whole.add(rows);
  for (Index chunk : {1, 7, 1000, 1024, 3333}) {
    SecondMomentAccumulator part(9);
    for (Index i = 0; i < rows.rows(); i += chunk)
      part.add(rows.middleRows(i, std::min(chunk, rows.rows() - i)));
    EXPECT_EQ(part.count(), 5000);
    EXPECT_TRUE((part.mean().array() == whole.mean().array()).all()) << "chunk " << chunk;
  }
}

TEST(SecondMoment, ThreadCountOnlyAffectsRounding) {
  random::Engine rng(64);
  const auto b = batch_of(gaussian_rows(rng, 9000, 20));
  const auto one = estimate_second_moment(b, 1);
  for (int t : {2, 3, 8}) {
    EXPECT_LT((estimate_second_moment(b, t).matrix() - one.matrix()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(SecondMoment, ZeroRowIsNamed) {
  RowMatrix rows = RowMatrix::Ones(5, 3);
  rows.row(3).setZero();
  try {
    estimate_second_moment(batch_of(rows));
    FAIL() << "expected ZeroRow";
  } catch (const Error &err) {
    EXPECT_EQ(err.code(), ErrorCode::ZeroRow);
    EXPECT_NE(std::string(err.what()).find("row 3"), std::string::npos) << err.what();
  }
  EXPECT_EQ(code_of([] { SecondMomentAccumulator(3).finish(); }), ErrorCode::ZeroRow);
  EXPECT_EQ(code_of([] { estimate_second_moment(batch_of(RowMatrix(0, 3))); }),
            ErrorCode::InvalidArgument);
}

TEST(BuildDirection, Examples) {
  const auto d = build_direction(batch_of(rows_of({{1, 0, 0, 0}})),
                                 batch_of(rows_of({{0, 1, 0, 0}})));
  const double c = 1 / std::sqrt(2.0);
  EXPECT_LT((d.coords() - Eigen::Vector4d(c, -c, 0, 0)).norm(), 1e-15);

  const auto same = batch_of(rows_of({{1, 2, 3}, {0, 1, 0}}));
  EXPECT_EQ(code_of([&] { build_direction(same, same); }), ErrorCode::DegenerateDirection);
  EXPECT_EQ(code_of([&] { build_direction(same, batch_of(rows_of({{1, 0}}))); }),
            ErrorCode::DimensionMismatch);
}

TEST(BuildDirection, RecoversPlantedOffset) {
  random::Engine rng(65);
  const Index p = 64, n = 10000;
  const Vector base = 3 * random::unit(rng, p).coords();
  const Vector v = random::unit(rng, p).coords();
  RowMatrix harmful(n, p), harmless(n, p);
  for (Index i = 0; i < n; ++i) {
    harmful.row(i) = (base + 1.5 * v + 0.5 * random::gaussian(rng, p)).transpose();
    harmless.row(i) = (base + 0.5 * random::gaussian(rng, p)).transpose();
  }
  const auto d = build_direction(batch_of(harmful), batch_of(harmless));
  EXPECT_GT(d.coords().dot(v), 0.99);
}

SteeringSpec spec_for(const UnitVector &d, double base_alpha, CollateralMatrix sigma) {
  return SteeringSpec{d, std::move(sigma), "L0", base_alpha};
}

TEST(AdaptiveAlpha, Examples) {
  const auto d = UnitVector::from(Vector::Unit(4, 0));
  const auto spec = spec_for(d, 0.8, CollateralMatrix::identity(4).normalized_copy());
  EXPECT_EQ(adaptive_alpha(3 * Vector::Unit(4, 1), spec), 0.0);
  EXPECT_NEAR(adaptive_alpha(Eigen::Vector4d(-0.5, std::sqrt(0.75), 0, 0) * 7, spec), 0.4, 1e-15);
  EXPECT_NEAR(adaptive_alpha(2 * d.coords(), spec), 0.8, 1e-15);
  EXPECT_EQ(code_of([&] { adaptive_alpha(Vector::Zero(4), spec); }), ErrorCode::ZeroActivation);
}

TEST(SteerPreservingNorm, KeepsNormAndHitsBudget) {
  random::Engine rng(66);
  const Index p = 10;
  const auto d = random::unit(rng, p);
  const auto spec = spec_for(d, 0.7, random::psd(rng, p));
  for (auto method : {SteerMethod::Coast, SteerMethod::Slerp, SteerMethod::Kkt}) {
    const Vector h = 5 * random::unit(rng, p).coords();
    const auto out = steer_preserving_norm(h, spec, method, SolverConfig(0.3, 20), false);
    EXPECT_NEAR(out.output.norm(), 5.0, 1e-12);
    EXPECT_NEAR(out.output.dot(d.coords()) / 5.0, 0.7, 1e-10);
    EXPECT_EQ(out.alpha, 0.7);
    EXPECT_FALSE(out.passthrough);
  }
}

TEST(SteerPreservingNorm, NoOpBudgetReturnsInput) {
  random::Engine rng(67);
  const Index p = 8;
  const auto d = random::unit(rng, p);
  const Vector h = 3 * random::unit(rng, p).coords();
  const double a = h.normalized().dot(d.coords());
  const auto spec = spec_for(d, a, random::psd(rng, p));
  const auto out = steer_preserving_norm(h, spec, SteerMethod::Coast, SolverConfig(0.3, 0), false);
  EXPECT_LT((out.output - h).norm(), 1e-14);
}

TEST(SteerPreservingNorm, ParallelActivationPassesThrough) {
  random::Engine rng(68);
  const auto d = random::unit(rng, 6);
  const auto spec = spec_for(d, 0.5, random::psd(rng, 6));
  const Vector h = -4 * d.coords();
  const auto out = steer_preserving_norm(h, spec, SteerMethod::Slerp, SolverConfig(0.3, 1), false);
  EXPECT_TRUE(out.passthrough);
  EXPECT_EQ((out.output - h).norm(), 0.0);
}

TEST(SteerBatch, CoastDoesNoWorseThanSlerpOnAverage) {
  random::Engine rng(69);
  const Index p = 32, n = 1000;
  const auto d = random::unit(rng, p);
  const auto spec = spec_for(d, 0.6, random::psd(rng, p));
  RowMatrix rows(n, p);
  for (Index i = 0; i < n; ++i) rows.row(i) = (random::uniform(rng, 1, 10) *
                                               random::unit(rng, p).coords()).transpose();
  const auto b = batch_of(rows);
  const SolverConfig cfg(0.3, 10);
  const auto coast = steer_batch(b, spec, SteerMethod::Coast, cfg, true);
  const auto slerp = steer_batch(b, spec, SteerMethod::Slerp, cfg, true);
  EXPECT_LE(coast.damage.mean(), slerp.damage.mean());
  // Recompute one damage from the returned rows as an audit of the report.
  const Vector x = coast.output.row(17).transpose().normalized();
  const Vector h = rows.row(17).transpose().normalized();
  EXPECT_NEAR(coast.damage[17], (x - h).dot(spec.sigma.matrix() * (x - h)), 1e-12);
  for (Index i = 0; i < n; ++i)
    EXPECT_NEAR(coast.output.row(i).norm(), rows.row(i).norm(), 1e-10 * rows.row(i).norm());
}

TEST(SteerBatch, OutputIndependentOfThreadCount) {
  random::Engine rng(70);
  const Index p = 16, n = 777;
  const auto d = random::unit(rng, p);
  const auto spec = spec_for(d, 0.4, random::psd(rng, p));
  const auto b = batch_of(gaussian_rows(rng, n, p));
  const SolverConfig cfg(0.3, 5);
  const auto one = steer_batch(b, spec, SteerMethod::Coast, cfg, false, 1);
  for (int t : {2, 5}) {
    const auto many = steer_batch(b, spec, SteerMethod::Coast, cfg, false, t);
    EXPECT_TRUE((one.output.array() == many.output.array()).all());
    EXPECT_TRUE((one.damage.array() == many.damage.array()).all());
  }
}

TEST(SteeringSpec, Validation) {
  const auto d = UnitVector::from(Vector::Unit(4, 0));
  EXPECT_EQ(code_of([&] { spec_for(d, 0.5, CollateralMatrix::from_matrix(2 * Matrix::Identity(4, 4))).validate(); }),
            ErrorCode::InvalidArgument);
}

TEST(Parallel, ResolveThreads) {
  EXPECT_EQ(resolve_threads(3), 3);
  ::setenv("COAST_THREADS", "5", 1);
  EXPECT_EQ(resolve_threads(0), 5);
  ::setenv("COAST_THREADS", "junk", 1);
  EXPECT_EQ(resolve_threads(0), 1);
  ::unsetenv("COAST_THREADS");
  EXPECT_EQ(resolve_threads(0), 1);
  EXPECT_EQ(resolve_threads(-4), 1);
}

TEST(Parallel, CoversRangeAndPropagatesExceptions) {
  std::vector<int> hit(103, 0);
  parallel_for(hit.size(), 4, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) ++hit[i];
  });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t b, std::size_t, int) {
                              if (b > 0) throw std::runtime_error("worker failed");
                            }),
               std::runtime_error);
}

}  // namespace
}  // namespace coast
