#pragma once

#include "coast/types.hpp"

namespace coast {

/// Tolerances shared by the geometry layer.
namespace tol {
inline constexpr double kUnitNorm = 1e-10;
inline constexpr double kPrecondition = 1e-8;
inline constexpr double kPostcondition = 1e-10;
inline constexpr double kPole = 1e-12;
inline constexpr double kZeroTangent = 1e-14;
inline constexpr double kParallel = 1e-10;
}  // namespace tol

class UnitVector;
class BudgetSlice;
class TangentVector;
TangentVector tangent_project(const BudgetSlice &, const UnitVector &, const Vector &);
UnitVector exp_map(const BudgetSlice &, const TangentVector &);
UnitVector project_to_slice(const UnitVector &, const BudgetSlice &);

/// A direction on the unit sphere S^{p-1}, p >= 3.
class UnitVector {
 public:
  /// Wraps `coords`; throws NotUnitNorm unless |‖coords‖ - 1| <= 1e-10.
  static UnitVector from(Vector coords);
  /// Normalizes `coords`; throws ZeroResult for (near) zero input.
  static UnitVector normalize(const Vector &coords);

  const Vector &coords() const noexcept { return coords_; }
  Index dim() const noexcept { return coords_.size(); }
  double operator[](Index i) const { return coords_[i]; }
  double dot(const UnitVector &other) const { return coords_.dot(other.coords_); }

 private:
  friend UnitVector exp_map(const BudgetSlice &, const TangentVector &);
  friend UnitVector project_to_slice(const UnitVector &, const BudgetSlice &);
  explicit UnitVector(Vector coords) : coords_(std::move(coords)) {}
  Vector coords_;
};

/// The feasible set M = {x : ‖x‖ = 1, dᵀx = alpha}, a (p-2)-sphere of radius
/// r = sqrt(1 - alpha^2) centred at alpha*d.
class BudgetSlice {
 public:
  /// Throws DegenerateBudget when |alpha| >= 1 - 1e-12.
  static BudgetSlice make(UnitVector direction, double alpha);

  const UnitVector &direction() const noexcept { return d_; }
  double alpha() const noexcept { return alpha_; }
  double radius() const noexcept { return r_; }
  Vector center() const { return alpha_ * d_.coords(); }
  Index dim() const noexcept { return d_.dim(); }

 private:
  BudgetSlice(UnitVector d, double alpha, double r)
      : d_(std::move(d)), alpha_(alpha), r_(r) {}
  UnitVector d_;
  double alpha_;
  double r_;
};

/// A vector in T_x M: orthogonal to both the base point and the slice axis.
class TangentVector {
 public:
  const UnitVector &at() const noexcept { return at_; }
  const Vector &coords() const noexcept { return coords_; }
  double norm() const { return coords_.norm(); }

  /// `coords` scaled by `s`; tangency is preserved.
  TangentVector scaled(double s) const { return TangentVector(at_, s * coords_); }

  /// Checked construction; throws InvalidArgument if either orthogonality
  /// residual exceeds `tolerance` (relative to ‖coords‖ when that exceeds 1).
  static TangentVector make(const BudgetSlice &slice, UnitVector at,
                            Vector coords,
                            double tolerance = tol::kPostcondition);

 private:
  friend TangentVector tangent_project(const BudgetSlice &, const UnitVector &,
                                       const Vector &);
  TangentVector(UnitVector at, Vector coords)
      : at_(std::move(at)), coords_(std::move(coords)) {}
  UnitVector at_;
  Vector coords_;
};

struct FeasibilityResiduals {
  double norm = 0.0;       ///< |‖x‖ - 1|
  double alignment = 0.0;  ///< |dᵀx - alpha|

  double max() const { return norm > alignment ? norm : alignment; }
};

struct FeasibilityCheck {
  bool feasible = false;
  FeasibilityResiduals residuals;
};

FeasibilityResiduals feasibility_residuals(const Vector &x,
                                           const BudgetSlice &slice);

FeasibilityCheck is_feasible(const Vector &x, const BudgetSlice &slice,
                             double tolerance = tol::kPrecondition);

/// Π_x g = g - (xᵀg)x - ((d-αx)ᵀg / (1-α²))(d-αx).
TangentVector tangent_project(const BudgetSlice &slice, const UnitVector &x,
                              const Vector &g);

/// Closed-form geodesic step on the slice:
///   αd + (x-αd)cos τ + r (v/‖v‖) sin τ,   τ = ‖v‖ / r.
/// Throws ZeroTangent when ‖v‖ < 1e-14; callers treat that as convergence.
UnitVector exp_map(const BudgetSlice &slice, const TangentVector &v);

/// Euclidean projection of h onto the slice, αd + r·normalize(h - (dᵀh)d).
/// Throws ParallelInput when ‖h - (dᵀh)d‖ < 1e-10.
UnitVector project_to_slice(const UnitVector &h, const BudgetSlice &slice);

/// Pulls a nearly feasible point back onto the slice. Used to stop rounding
/// drift in long iterations; a no-op in exact arithmetic for feasible x.
Vector retract_to_slice(const Vector &x, const BudgetSlice &slice);

}  // namespace coast
