#include "coast/manifold.hpp"

#include <cmath>
#include <sstream>

#include "coast/error.hpp"

namespace coast {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void require_dim(Index got, Index want, const char *what) {
  if (got != want) {
    std::ostringstream os;
    os << what << " has dimension " << got << ", expected " << want;
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

}  // namespace

UnitVector UnitVector::from(Vector coords) {
  if (coords.size() < 3) {
    throw Error(ErrorCode::DimensionMismatch,
                "unit vectors need p >= 3, got p = " +
                    std::to_string(coords.size()));
  }
  if (!coords.allFinite()) {
    throw Error(ErrorCode::NotUnitNorm, "vector has non-finite entries");
  }
  const double n = coords.norm();
  if (std::abs(n - 1.0) > tol::kUnitNorm) {
    throw Error(ErrorCode::NotUnitNorm, "norm is " + fmt_double(n));
  }
  return UnitVector(std::move(coords));
}

UnitVector UnitVector::normalize(const Vector &coords) {
  if (coords.size() < 3) {
    throw Error(ErrorCode::DimensionMismatch,
                "unit vectors need p >= 3, got p = " +
                    std::to_string(coords.size()));
  }
  const double n = coords.norm();
  if (!std::isfinite(n) || n < 1e-300) {
    throw Error(ErrorCode::ZeroResult, "cannot normalize a zero vector");
  }
  return UnitVector(coords / n);
}

BudgetSlice BudgetSlice::make(UnitVector direction, double alpha) {
  if (!std::isfinite(alpha) || std::abs(alpha) >= 1.0 - tol::kPole) {
    throw Error(ErrorCode::DegenerateBudget,
                "alignment budget " + fmt_double(alpha) +
                    " is at or beyond a pole of the sphere");
  }
  return BudgetSlice(std::move(direction), alpha, std::sqrt(1.0 - alpha * alpha));
}

TangentVector TangentVector::make(const BudgetSlice &slice, UnitVector at,
                                  Vector coords, double tolerance) {
  require_dim(coords.size(), slice.dim(), "tangent vector");
  require_dim(at.dim(), slice.dim(), "base point");
  const double scale = std::max(1.0, coords.norm());
  const double rx = std::abs(at.coords().dot(coords)) / scale;
  const double rd = std::abs(slice.direction().coords().dot(coords)) / scale;
  if (rx > tolerance || rd > tolerance) {
    throw Error(ErrorCode::InvalidArgument,
                "vector is not tangent (x-residual " + fmt_double(rx) +
                    ", d-residual " + fmt_double(rd) + ")");
  }
  return TangentVector(std::move(at), std::move(coords));
}

FeasibilityResiduals feasibility_residuals(const Vector &x,
                                           const BudgetSlice &slice) {
  require_dim(x.size(), slice.dim(), "point");
  return {std::abs(x.norm() - 1.0),
          std::abs(slice.direction().coords().dot(x) - slice.alpha())};
}

FeasibilityCheck is_feasible(const Vector &x, const BudgetSlice &slice,
                             double tolerance) {
  const auto res = feasibility_residuals(x, slice);
  return {res.norm <= tolerance && res.alignment <= tolerance, res};
}

TangentVector tangent_project(const BudgetSlice &slice, const UnitVector &x,
                              const Vector &g) {
  require_dim(g.size(), slice.dim(), "gradient");
  const auto check = is_feasible(x.coords(), slice, tol::kPrecondition);
  if (!check.feasible) {
    throw Error(ErrorCode::InfeasibleBasePoint,
                "base point residuals (" + fmt_double(check.residuals.norm) +
                    ", " + fmt_double(check.residuals.alignment) + ")");
  }
  const Vector &xc = x.coords();
  const double alpha = slice.alpha();
  const double r2 = 1.0 - alpha * alpha;
  const Vector normal = slice.direction().coords() - alpha * xc;
  Vector out = g - xc.dot(g) * xc - (normal.dot(g) / r2) * normal;
  return TangentVector(x, std::move(out));
}

UnitVector exp_map(const BudgetSlice &slice, const TangentVector &v) {
  require_dim(v.coords().size(), slice.dim(), "tangent vector");
  const double vn = v.norm();
  if (!(vn >= tol::kZeroTangent)) {
    if (!std::isfinite(vn)) {
      throw Error(ErrorCode::NonFiniteIterate, "tangent vector is not finite");
    }
    throw Error(ErrorCode::ZeroTangent, "tangent norm " + fmt_double(vn));
  }
  const double r = slice.radius();
  const double tau = vn / r;
  const Vector center = slice.center();
  Vector out = center + (v.at().coords() - center) * std::cos(tau) +
               (r * std::sin(tau) / vn) * v.coords();
  return UnitVector(std::move(out));
}

UnitVector project_to_slice(const UnitVector &h, const BudgetSlice &slice) {
  require_dim(h.dim(), slice.dim(), "activation");
  const Vector &d = slice.direction().coords();
  Vector perp = h.coords() - d.dot(h.coords()) * d;
  const double pn = perp.norm();
  if (pn < tol::kParallel) {
    throw Error(ErrorCode::ParallelInput,
                "activation is parallel to the steering direction");
  }
  return UnitVector(slice.alpha() * d + (slice.radius() / pn) * perp);
}

Vector retract_to_slice(const Vector &x, const BudgetSlice &slice) {
  const Vector &d = slice.direction().coords();
  Vector perp = x - d.dot(x) * d;
  const double pn = perp.norm();
  if (!(pn > 0.0) || !std::isfinite(pn)) {
    throw Error(ErrorCode::NonFiniteIterate, "iterate collapsed onto the axis");
  }
  perp *= slice.radius() / pn;
  perp += slice.alpha() * d;
  return perp;
}

}  // namespace coast
