#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "coast/error.hpp"
#include "coast/solvers.hpp"

namespace coast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Eigenvalues of Σ that coincide to 1e-12·max(1, σ_max) share one pole.
struct Group {
  double sigma = 0.0;
  Index first = 0;  // members are [first, first + size)
  Index size = 0;
  double a = 0.0;  // σ_g Σ d̃ᵢh̃ᵢ
  double b = 0.0;  // Σ d̃ᵢ²
};

constexpr double kNegligibleB = 1e-20;

/// The secular problem in the eigenbasis of Σ.
class Secular {
 public:
  Secular(const Vector &sig, const Vector &ht, const Vector &dt, double alpha)
      : sig_(sig), ht_(ht), dt_(dt), alpha_(alpha) {
    const Index p = sig.size();
    const double tie = 1e-12 * std::max(1.0, std::abs(sig[0]));
    for (Index i = 0; i < p;) {
      Group g;
      g.sigma = sig[i];
      g.first = i;
      Index j = i;
      while (j < p && std::abs(sig[j] - sig[i]) <= tie) {
        g.a += dt[j] * ht[j];
        g.b += dt[j] * dt[j];
        ++j;
      }
      g.size = j - i;
      g.a *= g.sigma;
      // Use one representative eigenvalue for all members of the group.
      groups_.push_back(g);
      i = j;
    }
    inv_.resize(groups_.size());
  }

  const std::vector<Group> &groups() const { return groups_; }

  double B(double lambda) const {
    double s = 0.0;
    for (const auto &g : groups_) s += g.b / (g.sigma + lambda);
    return s;
  }

  /// Fills x̃(λ) and μ(λ); returns false when μ is undefined (B(λ) = 0).
  ///
  /// Near a pole -σ_n the direct formula cancels catastrophically, so the
  /// group closest to -λ is handled with the algebraically equivalent form
  ///   μ/2 = (a_n + δ(A_r - α)) / (b_n + δ B_r),    δ = σ_n + λ,
  /// where A_r, B_r sum over the remaining groups.
  bool point(double lambda, Vector &xt, double &mu) const {
    xt.resize(sig_.size());
    double sq = 0.0;
    if (!evaluate(lambda, &xt, sq, mu)) return false;
    return true;
  }

  double G(double lambda) const {
    double sq = 0.0, mu = 0.0;
    if (!evaluate(lambda, nullptr, sq, mu)) return kInf;
    const double v = sq - 1.0;
    return std::isnan(v) ? kInf : v;
  }

 private:
  /// Index of the group whose pole -σ_g is closest to λ. Groups are sorted
  /// by descending σ, so the poles ascend.
  std::size_t nearest(double lambda) const {
    std::size_t lo = 0, hi = groups_.size();
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (-groups_[mid].sigma <= lambda) lo = mid; else hi = mid;
    }
    if (lo + 1 < groups_.size() &&
        std::abs(groups_[lo + 1].sigma + lambda) < std::abs(groups_[lo].sigma + lambda)) {
      return lo + 1;
    }
    return lo;
  }

  /// Shared body of `point` and `G`: ‖x̃(λ)‖² into `sq`, μ into `mu`, and
  /// x̃ itself when `xt` is given.
  bool evaluate(double lambda, Vector *xt, double &sq, double &mu) const {
    const std::size_t n = nearest(lambda);
    const Group &gn = groups_[n];
    const double delta = gn.sigma + lambda;
    double ar = 0.0, br = 0.0;
    for (std::size_t k = 0; k < groups_.size(); ++k) {
      if (k == n) continue;
      const double inv = 1.0 / (groups_[k].sigma + lambda);
      inv_[k] = inv;
      ar += groups_[k].a * inv;
      br += groups_[k].b * inv;
    }
    const double den = gn.b + delta * br;
    if (den == 0.0 || !std::isfinite(den)) return false;
    const double half_mu = (gn.a + delta * (ar - alpha_)) / den;
    mu = 2.0 * half_mu;

    sq = 0.0;
    for (std::size_t k = 0; k < groups_.size(); ++k) {
      if (k == n) continue;
      const Group &g = groups_[k];
      for (Index i = g.first; i < g.first + g.size; ++i) {
        const double v = (g.sigma * ht_[i] - half_mu * dt_[i]) * inv_[k];
        sq += v * v;
        if (xt) (*xt)[i] = v;
      }
    }
    for (Index i = gn.first; i < gn.first + gn.size; ++i) {
      // The first term is the genuine pole of the compressed problem. For a
      // single-member group it is identically zero (σh̃d̃² - d̃·σd̃h̃).
      double singular = 0.0;
      if (gn.size > 1) {
        const double num = gn.sigma * ht_[i] * gn.b - dt_[i] * gn.a;
        singular = num / (delta * den);
      }
      const double v = singular + (gn.sigma * ht_[i] * br - dt_[i] * (ar - alpha_)) / den;
      sq += v * v;
      if (xt) (*xt)[i] = v;
    }
    return true;
  }

  const Vector &sig_;
  const Vector &ht_;
  const Vector &dt_;
  double alpha_;
  std::vector<Group> groups_;
  mutable std::vector<double> inv_;  // scratch: 1/(σ_g + λ) per group
};

/// Root of a monotone-in-sign bracket [lo, hi] with sign(f(lo)) != sign(f(hi)).
/// Illinois steps while both ends are finite, bisection otherwise, run until
/// the bracket stops shrinking or |f| is negligible.
double bracket_root(const Secular &s, double lo, double hi, double flo,
                    double fhi, double root_tol) {
  int side = 0;
  for (int it = 0; it < 400; ++it) {
    double m;
    const bool finite = std::isfinite(flo) && std::isfinite(fhi);
    if (finite && it % 4 != 3) {
      m = (lo * fhi - hi * flo) / (fhi - flo);
      if (!(m > lo && m < hi)) m = 0.5 * (lo + hi);
    } else {
      m = 0.5 * (lo + hi);
    }
    if (m <= lo || m >= hi) break;  // bracket at floating-point resolution
    const double fm = s.G(m);
    if (fm == 0.0) return m;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = m;
      flo = fm;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = m;
      fhi = fm;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
    const double width = hi - lo;
    if (width <= root_tol * std::max(1.0, std::abs(m)) && std::abs(fm) <= 1e-14) {
      return m;
    }
  }
  return std::abs(flo) < std::abs(fhi) ? lo : hi;
}

/// Lower bound of a convex f on [a, b] from four samples a < c < e < b.
/// Outside (c, e) f lies above the secant through c and e; inside it lies
/// above the secants through (a, c) and (e, b) extended. Infinite end values
/// (poles) leave the corresponding secant out.
double convex_lower_bound(double a, double c, double e, double b, double fa,
                          double fc, double fe, double fb) {
  auto line = [](double x0, double f0, double x1, double f1, double x) {
    return f0 + (f1 - f0) * (x - x0) / (x1 - x0);
  };
  double bound = std::min(fc, fe);
  bound = std::min(bound, line(c, fc, e, fe, a));
  bound = std::min(bound, line(c, fc, e, fe, b));
  const bool left = std::isfinite(fa), right = std::isfinite(fb);
  if (left && right) {
    // Lower envelope max(l_ac, l_eb) on [c, e]: lowest at the crossing.
    const double sl = (fc - fa) / (c - a), sr = (fb - fe) / (b - e);
    double inner = std::max(line(a, fa, c, fc, e), line(e, fe, b, fb, c));
    if (sl != sr) {
      const double x = (fe - sr * e - fc + sl * c) / (sl - sr);
      if (x > c && x < e) inner = fc + sl * (x - c);
    }
    bound = std::min(bound, std::min(inner, std::min(fc, fe)));
  } else if (left) {
    bound = std::min(bound, line(a, fa, c, fc, e));
  } else if (right) {
    bound = std::min(bound, line(e, fe, b, fb, c));
  } else {
    return -kInf;
  }
  return bound;
}

/// Minimiser of G on the open interval (lo, hi); G is convex there. Stops
/// early at the first negative value (by convexity {G < 0} is an interval,
/// so any point inside it separates the at most two roots) and as soon as
/// the convex lower bound proves G > 0 on the whole interval.
double golden_min(const Secular &s, double lo, double hi, double &gmin) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double fa = kInf, fb = kInf;
  double c = b - inv_phi * (b - a);
  double e = a + inv_phi * (b - a);
  double fc = s.G(c), fe = s.G(e);
  for (int it = 0; it < 200; ++it) {
    if (fc < 0.0 || fe < 0.0) break;
    if (!(c > a && e < b && c < e)) break;
    if (it >= 2 && std::isfinite(fc) && std::isfinite(fe) &&
        convex_lower_bound(a, c, e, b, fa, fc, fe, fb) > 0.0) {
      break;
    }
    if (fc < fe) {
      b = e;
      fb = fe;
      e = c;
      fe = fc;
      c = b - inv_phi * (b - a);
      fc = s.G(c);
    } else {
      a = c;
      fa = fc;
      c = e;
      fc = fe;
      e = a + inv_phi * (b - a);
      fe = s.G(e);
    }
    if (b - a <= 1e-15 * std::max(1.0, std::abs(a))) break;
  }
  if (fc < fe) {
    gmin = fc;
    return c;
  }
  gmin = fe;
  return e;
}

/// Zeros of B(λ); exactly one between consecutive poles with b_g > 0.
std::vector<double> b_zeros(const Secular &s) {
  std::vector<double> poles;
  for (const auto &g : s.groups()) {
    if (g.b > kNegligibleB) poles.push_back(-g.sigma);
  }
  std::sort(poles.begin(), poles.end());
  std::vector<double> zeros;
  for (std::size_t k = 0; k + 1 < poles.size(); ++k) {
    // B decreases from +inf to -inf between the poles. Illinois steps from
    // probes just inside the poles, with a bisection every fourth step.
    const double w = poles[k + 1] - poles[k];
    double lo = poles[k] + 1e-9 * w, hi = poles[k + 1] - 1e-9 * w;
    double flo = s.B(lo), fhi = s.B(hi);
    if (!(flo > 0.0)) {
      lo = poles[k];
      flo = kInf;
    }
    if (!(fhi < 0.0)) {
      hi = poles[k + 1];
      fhi = -kInf;
    }
    int side = 0;
    for (int it = 0; it < 200; ++it) {
      double m = 0.5 * (lo + hi);
      if (std::isfinite(flo) && std::isfinite(fhi) && it % 4 != 3) {
        const double q = (lo * fhi - hi * flo) / (fhi - flo);
        if (q > lo && q < hi) m = q;
      }
      if (m <= lo || m >= hi) break;
      const double fm = s.B(m);
      if (fm == 0.0) {
        lo = hi = m;
        break;
      }
      if (fm > 0.0) {
        lo = m;
        flo = fm;
        if (side == -1) fhi *= 0.5;
        side = -1;
      } else {
        hi = m;
        fhi = fm;
        if (side == 1) flo *= 0.5;
        side = 1;
      }
      if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(m))) {
        break;
      }
    }
    zeros.push_back(0.5 * (lo + hi));
  }
  return zeros;
}

}  // namespace

KktSolution kkt_solve(const UnitVector &h, const BudgetSlice &slice,
                      const CollateralMatrix &sigma, double root_tol) {
  if (h.dim() != slice.dim() || sigma.dim() != slice.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "activation, slice and collateral matrix dimensions differ");
  }
  if (!(root_tol > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "root tolerance must be positive");
  }
  const Vector &d = slice.direction().coords();
  if ((h.coords() - d.dot(h.coords()) * d).norm() < tol::kParallel) {
    throw Error(ErrorCode::ParallelInput,
                "activation is parallel to the steering direction");
  }

  const auto &eig = sigma.eig();
  const Vector ht = eig.vectors.transpose() * h.coords();
  const Vector dt = eig.vectors.transpose() * d;
  const double alpha = slice.alpha();
  Secular sec(eig.values, ht, dt, alpha);

  // Boundaries: every pole -σ_g plus every zero of B.
  std::vector<double> bounds;
  for (const auto &g : sec.groups()) bounds.push_back(-g.sigma);
  const auto zeros = b_zeros(sec);
  bounds.insert(bounds.end(), zeros.begin(), zeros.end());
  std::sort(bounds.begin(), bounds.end());
  {
    std::vector<double> uniq;
    for (double b : bounds) {
      if (uniq.empty() || b - uniq.back() > 1e-14 * std::max(1.0, std::abs(b))) {
        uniq.push_back(b);
      }
    }
    bounds.swap(uniq);
  }

  // λ_low is the smallest eigenvalue of Σ compressed to d-perp, negated.
  // The global minimiser is the root with λ > λ_low; if there is none we are
  // in the hard case.
  double lambda_low = -kInf;
  for (double z : zeros) lambda_low = std::max(lambda_low, z);
  for (const auto &g : sec.groups()) {
    if (g.b <= kNegligibleB || g.size > 1) {
      lambda_low = std::max(lambda_low, -g.sigma);
    }
  }

  KktDiagnostics diag;
  std::vector<double> candidates;
  auto inset = [](double b) { return 1e-13 * std::max(1.0, std::abs(b)); };

  auto exterior = [&](double edge, double dir) {
    ++diag.intervals_searched;
    double step = std::max(1.0, std::abs(edge));
    double far = edge + dir * step;
    double gfar = sec.G(far);
    while (!(gfar < 0.0) && std::abs(far) <= 1e12) {
      step *= 2.0;
      far = edge + dir * step;
      gfar = sec.G(far);
    }
    if (!(gfar < 0.0)) return;
    // Walk toward the edge until G turns positive or we reach the edge.
    const double near = edge - dir * inset(edge);
    const double gnear = sec.G(near);
    if (!(gnear > 0.0)) {
      // G is convex on the interval: if it is non-positive at both ends of
      // [far, edge], there is no root in between.
      return;
    }
    const double lo = dir < 0 ? far : near;
    const double hi = dir < 0 ? near : far;
    const double glo = dir < 0 ? gfar : gnear;
    const double ghi = dir < 0 ? gnear : gfar;
    candidates.push_back(bracket_root(sec, lo, hi, glo, ghi, root_tol));
  };

  if (bounds.empty()) {
    throw Error(ErrorCode::NoRootFound, "collateral matrix has no spectrum");
  }
  exterior(bounds.front(), -1.0);
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    ++diag.intervals_searched;
    const double lo = bounds[k], hi = bounds[k + 1];
    double gmin = kInf;
    const double at = golden_min(sec, lo, hi, gmin);
    if (!(gmin < 0.0)) continue;
    // Probe just inside the boundaries: at a genuine pole G is +inf there,
    // at a removable one (-σ_g not an eigenvalue of the compressed matrix)
    // the probe sees the finite limit.
    const double lo_in = std::min(at, lo + inset(lo));
    const double hi_in = std::max(at, hi - inset(hi));
    const double glo = sec.G(lo_in);
    const double ghi = sec.G(hi_in);
    if (glo > 0.0) candidates.push_back(bracket_root(sec, lo_in, at, glo, gmin, root_tol));
    if (ghi > 0.0) candidates.push_back(bracket_root(sec, at, hi_in, gmin, ghi, root_tol));
  }
  exterior(bounds.back(), +1.0);

  std::sort(candidates.begin(), candidates.end());
  candidates.erase(
      std::unique(candidates.begin(), candidates.end(),
                  [](double a, double b) {
                    return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a));
                  }),
      candidates.end());

  // Feasibility and J are evaluated in the eigenbasis (Q is orthogonal);
  // only the chosen root is rotated back.
  const Matrix &Q = eig.vectors;
  std::vector<Vector> xs;
  double worst_principal = 0.0;  // residual of rejected roots right of λ_low
  for (double lam : candidates) {
    Vector xt;
    double mu = 0.0;
    if (!sec.point(lam, xt, mu)) {
      ++diag.rejected_candidates;
      continue;
    }
    FeasibilityResiduals res;
    res.norm = std::abs(xt.norm() - 1.0);
    res.alignment = std::abs(dt.dot(xt) - alpha);
    if (!(res.max() <= 1e-7)) {
      ++diag.rejected_candidates;
      if (lam > lambda_low) worst_principal = std::max(worst_principal, res.max());
      continue;
    }
    double j = 0.0;
    for (Index i = 0; i < xt.size(); ++i) {
      const double dd = xt[i] - ht[i];
      j += eig.values[i] * dd * dd;
    }
    diag.roots_found.push_back({lam, mu, j, res.max()});
    xs.push_back(std::move(xt));
  }

  const double low_slack = 1e-12 * std::max(1.0, std::abs(lambda_low));
  const bool have_principal =
      std::any_of(diag.roots_found.begin(), diag.roots_found.end(),
                  [&](const KktRoot &r) { return r.lambda > lambda_low - low_slack; });

  if (!have_principal && worst_principal > 0.0) {
    std::ostringstream os;
    os << "secular root right of lambda = " << lambda_low
       << " reconstructs with feasibility residual " << worst_principal;
    throw Error(ErrorCode::IllConditioned, os.str());
  }
  if (!have_principal) {
    if (slice.dim() <= 4) {
      // The stationary point sits on the boundary eigenspace and the
      // secular function has no root there; use the brute-force minimiser.
      KktSolution sol{oracle_solve(h, slice, sigma, slice.dim() == 3 ? 8192 : 1024), std::move(diag)};
      sol.diagnostics.hard_case_fallback = true;
      sol.diagnostics.chosen_root = sol.diagnostics.roots_found.size();
      return sol;
    }
    std::ostringstream os;
    os << "no root of the secular equation right of lambda = " << lambda_low
       << " (" << diag.roots_found.size() << " other roots found)";
    throw Error(ErrorCode::NoRootFound, os.str());
  }

  // Cheapest root; ties go to the smallest λ (roots are sorted ascending).
  std::size_t best = 0;
  for (std::size_t k = 1; k < diag.roots_found.size(); ++k) {
    const double jb = diag.roots_found[best].damage;
    const double jk = diag.roots_found[k].damage;
    if (jk < jb - 1e-15 * std::max(1.0, std::abs(jb))) best = k;
  }
  diag.chosen_root = best;
  if (diag.roots_found[best].residual > 1e-6) {
    throw Error(ErrorCode::IllConditioned, "chosen root is not feasible");
  }

  Vector x = retract_to_slice(Q * xs[best], slice);
  SolveResult out{UnitVector::normalize(x)};
  const Vector delta = out.x.coords() - h.coords();
  const Vector sd = sigma.matrix() * delta;
  out.damage = delta.dot(sd);
  out.grad_norm_final = tangent_project(slice, out.x, 2.0 * sd).norm();
  out.residuals = feasibility_residuals(out.x.coords(), slice);
  return {std::move(out), std::move(diag)};
}

}  // namespace coast
