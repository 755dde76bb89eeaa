#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "coast/error.hpp"
#include "coast/linalg.hpp"
#include "coast/solvers.hpp"

namespace coast {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kAngleTol = 1e-10;

/// Minimum of f on [a, b] by golden-section search to `tol` in the argument.
template <typename F>
double golden(F &&f, double a, double b, double tol, double &fbest) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double e = a + inv_phi * (b - a);
  double fc = f(c), fe = f(e);
  while (b - a > tol) {
    if (fc < fe) {
      b = e; e = c; fe = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c; c = e; fc = fe;
      e = a + inv_phi * (b - a);
      fe = f(e);
    }
  }
  if (fc < fe) {
    fbest = fc;
    return c;
  }
  fbest = fe;
  return e;
}

struct Objective {
  const Matrix &S;
  const Vector &h;
  double operator()(const Vector &x) const {
    const Vector delta = x - h;
    return delta.dot(S * delta);
  }
};

/// The `count` lowest cells among those no larger than any of their
/// neighbours (discrete local minima), lowest first.
template <typename Neighbours>
std::vector<std::size_t> best_cells(const std::vector<double> &vals,
                                    Neighbours &&neighbours, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    bool is_min = true;
    neighbours(i, [&](std::size_t j) {
      if (vals[j] < vals[i]) is_min = false;
    });
    if (is_min) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
  if (idx.size() > count) idx.resize(count);
  return idx;
}

SolveResult finish(const Vector &x, const UnitVector &h,
                   const BudgetSlice &slice, const CollateralMatrix &sigma) {
  Vector clean = retract_to_slice(x, slice);
  SolveResult out{UnitVector::normalize(clean)};
  const Vector delta = out.x.coords() - h.coords();
  const Vector sd = sigma.matrix() * delta;
  out.damage = delta.dot(sd);
  out.grad_norm_final = tangent_project(slice, out.x, 2.0 * sd).norm();
  out.residuals = feasibility_residuals(out.x.coords(), slice);
  return out;
}

SolveResult oracle_circle(const UnitVector &h, const BudgetSlice &slice,
                          const CollateralMatrix &sigma, int resolution) {
  const Matrix U = linalg::orthonormal_complement(slice.direction().coords());
  const Vector c = slice.center();
  const double r = slice.radius();
  Objective J{sigma.matrix(), h.coords()};
  auto at = [&](double th) -> Vector {
    return c + r * (std::cos(th) * U.col(0) + std::sin(th) * U.col(1));
  };
  auto f = [&](double th) { return J(at(th)); };

  const double step = kTwoPi / resolution;
  std::vector<double> vals(resolution);
  for (int k = 0; k < resolution; ++k) vals[k] = f(k * step);

  // Refine every discrete local minimum among the lowest cells.
  double best_val = std::numeric_limits<double>::infinity();
  double best_th = 0.0;
  const std::size_t n = vals.size();
  auto ring = [n](std::size_t i, auto &&visit) {
    visit((i + 1) % n);
    visit((i + n - 1) % n);
  };
  for (std::size_t k : best_cells(vals, ring, 8)) {
    double fv = 0.0;
    const double th = golden(f, (k - 1.0) * step, (k + 1.0) * step, kAngleTol, fv);
    if (fv < best_val) {
      best_val = fv;
      best_th = th;
    }
  }
  return finish(at(best_th), h, slice, sigma);
}

SolveResult oracle_sphere(const UnitVector &h, const BudgetSlice &slice,
                          const CollateralMatrix &sigma, int resolution) {
  const Matrix U = linalg::orthonormal_complement(slice.direction().coords());
  const Vector c = slice.center();
  const double r = slice.radius();
  Objective J{sigma.matrix(), h.coords()};

  // Grid: polar angle θ ∈ [0, π] (resolution points), azimuth ψ ∈ [0, 2π).
  auto on_grid = [&](double th, double ps) -> Eigen::Vector3d {
    return {std::sin(th) * std::cos(ps), std::sin(th) * std::sin(ps),
            std::cos(th)};
  };
  auto lift = [&](const Eigen::Vector3d &y) -> Vector { return c + r * (U * y); };

  const double dth = std::numbers::pi / (resolution - 1);
  const double dps = kTwoPi / resolution;
  std::vector<double> vals(static_cast<std::size_t>(resolution) * resolution);
  for (int i = 0; i < resolution; ++i) {
    for (int k = 0; k < resolution; ++k) {
      vals[static_cast<std::size_t>(i) * resolution + k] =
          J(lift(on_grid(i * dth, k * dps)));
    }
  }

  // Local refinement in a frame rotated so the current point is (1, 0, 0):
  // y(a, b) = cos b (cos a e₀ + sin a e₁) + sin b e₂. Both angles are far from
  // the coordinate singularities, so coordinate descent is well conditioned.
  auto refine = [&](Eigen::Vector3d y, double &fval) {
    double span = 2.0 * std::max(dth, dps);
    fval = J(lift(y));
    Eigen::Vector3d prev_move = Eigen::Vector3d::Zero();
    for (int sweep = 0; sweep < 2000 && span > kAngleTol; ++sweep) {
      // Orthonormal frame with e₀ = y.
      Eigen::Vector3d e0 = y.normalized();
      Eigen::Vector3d seed =
          std::abs(e0.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
      Eigen::Vector3d e1 = (seed - seed.dot(e0) * e0).normalized();
      Eigen::Vector3d e2 = e0.cross(e1);
      auto pt = [&](double a, double b) -> Eigen::Vector3d {
        return std::cos(b) * (std::cos(a) * e0 + std::sin(a) * e1) + std::sin(b) * e2;
      };
      double fa = 0.0, fb = 0.0;
      const double a = golden([&](double t) { return J(lift(pt(t, 0.0))); },
                              -span, span, kAngleTol * 0.1, fa);
      (void)fa;
      const double b = golden([&](double t) { return J(lift(pt(a, t))); },
                              -span, span, kAngleTol * 0.1, fb);
      Eigen::Vector3d next = pt(a, b);
      double fnext = fb;
      // Pattern move along the combined displacement of two sweeps.
      Eigen::Vector3d move = next - y;
      if (prev_move.norm() > 0.0) {
        Eigen::Vector3d dir = move + prev_move;
        dir -= dir.dot(next) * next;
        const double dn = dir.norm();
        if (dn > 0.0) {
          dir /= dn;
          auto along = [&](double t) {
            return J(lift(std::cos(t) * next + std::sin(t) * dir));
          };
          double fp = 0.0;
          const double tp = golden(along, -2.0 * span, 2.0 * span, kAngleTol * 0.1, fp);
          if (fp < fnext) {
            next = std::cos(tp) * next + std::sin(tp) * dir;
            fnext = fp;
          }
        }
      }
      const double moved = (next - y).norm();
      if (fnext <= fval) {
        y = next.normalized();
        fval = fnext;
      }
      prev_move = move;
      // Shrink the search span once the iterate stops moving appreciably.
      if (moved < 0.25 * span) span = std::max(4.0 * moved, 0.5 * span);
    }
    return y;
  };

  double best_val = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_y = Eigen::Vector3d::UnitX();
  const int res = resolution;
  auto grid = [res](std::size_t cell, auto &&visit) {
    const int i = static_cast<int>(cell / res);
    const int k = static_cast<int>(cell % res);
    for (int di = -1; di <= 1; ++di) {
      const int ii = i + di;
      if (ii < 0 || ii >= res) continue;
      for (int dk = -1; dk <= 1; ++dk) {
        if (di == 0 && dk == 0) continue;
        const int kk = (k + dk + res) % res;
        visit(static_cast<std::size_t>(ii) * res + kk);
      }
    }
  };
  for (std::size_t cell : best_cells(vals, grid, 8)) {
    const int i = static_cast<int>(cell / resolution);
    const int k = static_cast<int>(cell % resolution);
    double fv = 0.0;
    Eigen::Vector3d y = refine(on_grid(i * dth, k * dps), fv);
    if (fv < best_val) {
      best_val = fv;
      best_y = y;
    }
  }
  return finish(lift(best_y), h, slice, sigma);
}

}  // namespace

SolveResult oracle_solve(const UnitVector &h, const BudgetSlice &slice,
                         const CollateralMatrix &sigma, int resolution) {
  if (h.dim() != slice.dim() || sigma.dim() != slice.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "activation, slice and collateral matrix dimensions differ");
  }
  if (resolution < 8) {
    throw Error(ErrorCode::InvalidArgument, "oracle resolution must be >= 8");
  }
  if (slice.dim() == 3) return oracle_circle(h, slice, sigma, resolution);
  if (slice.dim() == 4) return oracle_sphere(h, slice, sigma, resolution);
  std::ostringstream os;
  os << "grid oracle supports p = 3 or 4, got p = " << slice.dim();
  throw Error(ErrorCode::UnsupportedDimension, os.str());
}

}  // namespace coast
