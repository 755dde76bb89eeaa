#include "coast/verify.hpp"

#include <cmath>
#include <sstream>

#include "coast/error.hpp"
#include "coast/random.hpp"
#include "coast/solvers.hpp"

namespace coast {

namespace {

class Recorder {
 public:
  explicit Recorder(VerifyReport &r) : r_(r) {}

  void check(bool ok, const char *property, int seed, const std::string &detail) {
    ++r_.checks;
    if (!ok) r_.failures.push_back({r_.suite, property, seed, detail});
  }

  template <typename F>
  void guarded(const char *property, int seed, F &&body) {
    try {
      body();
    } catch (const Error &e) {
      ++r_.checks;
      r_.failures.push_back({r_.suite, property, seed, e.what()});
    }
  }

 private:
  VerifyReport &r_;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

random::Engine engine_for(const std::string &suite, int seed) {
  std::seed_seq seq{static_cast<int>(suite.size()), static_cast<int>(suite[0]), seed};
  return random::Engine(seq);
}

/// Σ (normalised, random spectrum) with optional antisymmetric noise pushed
/// through the validating constructor.
CollateralMatrix sigma_with_noise(random::Engine &rng, Index p, double asym) {
  const CollateralMatrix base = random::psd(rng, p);
  if (asym == 0.0) return base;
  Matrix m = base.matrix();
  m(0, 1) += asym;
  m(1, 0) -= asym;
  return CollateralMatrix::from_matrix(m);
}

void manifold_suite(VerifyReport &rep, const VerifyOptions &opts) {
  Recorder rec(rep);
  const Index dims[] = {3, 8, 64};
  for (int s = 0; s < opts.seeds; ++s) {
    auto rng = engine_for(rep.suite, s);
    const Index p = dims[s % 3];
    rec.guarded("manifold geometry", s, [&] {
      const auto slice = BudgetSlice::make(random::unit(rng, p),
                                           random::uniform(rng, -0.99, 0.99));
      const auto x = random::point_on_slice(rng, slice);
      const Vector g = random::gaussian(rng, p);
      const auto v = tangent_project(slice, x, g);
      const Vector &d = slice.direction().coords();
      const double scale = std::max(1.0, g.norm());
      rec.check(std::abs(v.coords().dot(x.coords())) < 1e-12 * scale &&
                    std::abs(v.coords().dot(d)) < 1e-12 * scale,
                "tangent projection orthogonality", s,
                "residuals " + num(v.coords().dot(x.coords())) + ", " +
                    num(v.coords().dot(d)));
      const auto v2 = tangent_project(slice, x, v.coords());
      rec.check((v2.coords() - v.coords()).norm() < 1e-10 * scale,
                "tangent projection idempotence", s,
                num((v2.coords() - v.coords()).norm()));

      const double len = random::uniform(rng, 1e-6, 10.0);
      const auto y = exp_map(slice, v.scaled(len / v.norm()));
      const auto res = feasibility_residuals(y.coords(), slice);
      rec.check(res.norm < 1e-10 && res.alignment < 1e-10,
                "exponential map feasibility", s,
                "residuals " + num(res.norm) + ", " + num(res.alignment));
      for (double t : {0.25, 0.5, 0.75}) {
        const auto yt = exp_map(slice, v.scaled(t * len / v.norm()));
        const double rad = (yt.coords() - slice.center()).norm();
        rec.check(std::abs(rad - slice.radius()) < 1e-10,
                  "geodesic stays on the latitude circle", s,
                  "radius error " + num(rad - slice.radius()));
      }

      const auto h = random::unit(rng, p);
      const auto proj = project_to_slice(h, slice);
      const double dist = (h.coords() - proj.coords()).norm();
      double worst = -1.0;
      for (int k = 0; k < 20; ++k) {
        const auto z = random::point_on_slice(rng, slice);
        worst = std::max(worst, dist - (h.coords() - z.coords()).norm());
      }
      rec.check(worst <= 1e-12, "projection minimises distance", s,
                "beaten by " + num(worst));
    });
  }
}

void solvers_suite(VerifyReport &rep, const VerifyOptions &opts) {
  Recorder rec(rep);
  for (int s = 0; s < opts.seeds; ++s) {
    auto rng = engine_for(rep.suite, s);
    const Index p = 3 + s % 14;
    rec.guarded("solver properties", s, [&] {
      const auto sigma = sigma_with_noise(rng, p, opts.inject_asymmetry);
      const auto h = random::unit(rng, p);
      const auto slice = BudgetSlice::make(random::unit(rng, p),
                                           random::uniform(rng, -0.99, 0.99));
      const Vector &hv = h.coords();

      // Euclidean gradient against central differences.
      const auto x = random::point_on_slice(rng, slice);
      const Vector g = euclidean_grad(x.coords(), hv, sigma);
      Vector fd(p);
      const double step = 1e-6;
      for (Index i = 0; i < p; ++i) {
        Vector xp = x.coords(), xm = x.coords();
        xp[i] += step;
        xm[i] -= step;
        fd[i] = (damage(xp, hv, sigma).value - damage(xm, hv, sigma).value) / (2 * step);
      }
      const double gerr = (fd - g).norm() / std::max(g.norm(), 1e-8);
      rec.check(gerr < 1e-5, "euclidean gradient matches finite differences", s, num(gerr));

      SolverConfig cfg(0.3, 50);
      cfg.trace = true;
      cfg.step_rule = StepRule::CurvatureSafe;
      const auto sl = slerp_solve(h, slice, &sigma);
      const auto co = coast_solve(h, slice, sigma, cfg);
      const auto kk = kkt_solve(h, slice, sigma);
      for (const auto *r : {&sl, &co, &kk.result}) {
        rec.check(r->residuals.norm < 1e-10 && r->residuals.alignment < 1e-8,
                  "solver output feasibility", s,
                  num(r->residuals.norm) + ", " + num(r->residuals.alignment));
      }
      rec.check(co.damage <= sl.damage + 1e-12,
                "coast (curvature-safe step) does not exceed slerp", s,
                num(co.damage - sl.damage));
      bool mono = true;
      for (std::size_t t = 1; t < co.objective_trace.size(); ++t) {
        mono = mono && co.objective_trace[t] <= co.objective_trace[t - 1] + 1e-12;
      }
      rec.check(mono, "coast (curvature-safe step) objective is non-increasing", s, "");
      rec.check(kk.result.damage <= co.damage + 1e-10, "kkt is at least as good as coast",
                s, num(kk.result.damage - co.damage));
    });
  }
}

void kkt_oracle_suite(VerifyReport &rep, const VerifyOptions &opts) {
  Recorder rec(rep);
  for (int s = 0; s < opts.seeds; ++s) {
    auto rng = engine_for(rep.suite, s);
    const Index p = 3 + s % 2;
    try {
      const auto sigma = sigma_with_noise(rng, p, opts.inject_asymmetry);
      const auto h = random::unit(rng, p);
      const auto slice = BudgetSlice::make(random::unit(rng, p),
                                           random::uniform(rng, -0.99, 0.99));
      const auto kk = kkt_solve(h, slice, sigma);
      const auto orc = oracle_solve(h, slice, sigma, p == 3 ? 4096 : 256);
      const double gap = kk.result.damage - orc.damage;
      rec.check(std::abs(gap) <= 1e-8, "kkt agrees with the grid oracle", s,
                "J_kkt - J_oracle = " + num(gap));
    } catch (const Error &e) {
      const char *prop = e.code() == ErrorCode::NotSymmetric ? "symmetry invariant"
                       : e.code() == ErrorCode::NotPsd       ? "psd invariant"
                                                             : "kkt agrees with the grid oracle";
      rec.check(false, prop, s, e.what());
    }
  }
}

void convergence_suite(VerifyReport &rep, const VerifyOptions &opts) {
  Recorder rec(rep);
  int misses = 0;
  std::vector<PropertyFailure> flagged;
  const int allowance = opts.seeds / 50;
  for (int s = 0; s < opts.seeds; ++s) {
    auto rng = engine_for(rep.suite, s);
    const Index p = 3 + s % 14;
    rec.guarded("global convergence", s, [&] {
      const auto sigma = sigma_with_noise(rng, p, opts.inject_asymmetry);
      const auto h = random::unit(rng, p);
      const auto slice = BudgetSlice::make(random::unit(rng, p),
                                           random::uniform(rng, -0.9, 0.9));
      const double l = lipschitz_bound(sigma, slice);
      SolverConfig cfg(0.1 / l, 50000);
      cfg.grad_tol = 0.0;
      cfg.keep_iterates = 100;
      const auto co = coast_solve(h, slice, sigma, cfg);
      const auto kk = kkt_solve(h, slice, sigma);
      const double dist = (co.x.coords() - kk.result.x.coords()).norm();
      double diam = 0.0;
      for (const auto &a : co.iterate_tail) {
        for (const auto &b : co.iterate_tail) diam = std::max(diam, (a - b).norm());
      }
      rec.check(diam < 1e-6, "iterate tail settles", s, "tail diameter " + num(diam));
      ++rep.checks;
      if (dist > 1e-4) {
        ++misses;
        const bool trapped = co.grad_norm_final < 1e-8 &&
                             co.damage > kk.result.damage + 1e-10;
        flagged.push_back({rep.suite, "converges to the kkt minimiser", s,
                           std::string(trapped ? "local-minimum trap" : "slow convergence") +
                               ": |x_T - x_kkt| = " + num(dist) + ", J_T - J* = " +
                               num(co.damage - kk.result.damage)});
      }
    });
  }
  if (misses > allowance) {
    for (auto &f : flagged) rep.failures.push_back(std::move(f));
  } else {
    for (const auto &f : flagged) {
      rep.notes.push_back("tolerated miss (seed " + std::to_string(f.seed) + "): " + f.detail);
    }
  }
}

}  // namespace

const std::vector<std::string> &verify_suite_names() {
  static const std::vector<std::string> names = {"manifold", "solvers", "kkt-oracle",
                                                 "convergence"};
  return names;
}

VerifyReport run_verify_suite(const std::string &suite, const VerifyOptions &opts) {
  if (opts.seeds < 1) throw Error(ErrorCode::InvalidArgument, "seeds must be >= 1");
  VerifyReport rep;
  rep.suite = suite;
  rep.seeds = opts.seeds;
  if (suite == "manifold") {
    manifold_suite(rep, opts);
  } else if (suite == "solvers") {
    solvers_suite(rep, opts);
  } else if (suite == "kkt-oracle") {
    kkt_oracle_suite(rep, opts);
  } else if (suite == "convergence") {
    convergence_suite(rep, opts);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown suite '" + suite + "'");
  }
  return rep;
}

}  // namespace coast
