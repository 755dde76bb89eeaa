#pragma once

#include <atomic>
#include <memory>
#include <mutex>

#include "coast/linalg.hpp"
#include "coast/manifold.hpp"

namespace coast {

/// Symmetric PSD weighting matrix Σ of the collateral-damage objective.
///
/// Values are immutable. The eigendecomposition and spectral norm are
/// computed lazily on first use; the cache lives behind a `std::once_flag`,
/// so concurrent readers either trigger the computation or block until it
/// is complete. Copies share the cache.
class CollateralMatrix {
 public:
  /// Symmetry slack, relative to max(1, max|Σ_ij|).
  static constexpr double kSymmetryTol = 1e-10;
  /// Most negative eigenvalue accepted (and clamped to zero).
  static constexpr double kPsdTol = 1e-8;
  /// Cached eigenvalues below this fraction of λ_max are clamped to zero.
  static constexpr double kClampRelative = 1e-12;
  /// Above this dimension the spectral norm uses a Lanczos iteration.
  static constexpr Index kDenseLimit = 512;

  /// Validates and symmetrizes. Throws NotSymmetric if the input asymmetry
  /// exceeds the slack, NotPsd if λ_min < -1e-8 or an entry is non-finite.
  static CollateralMatrix from_matrix(const Matrix &sigma);

  /// For matrices that are PSD by construction (Gram sums, FᵀWF, Σ + εP):
  /// symmetrizes but skips the PSD factorization.
  static CollateralMatrix psd_by_construction(const Matrix &sigma);

  static CollateralMatrix identity(Index p);

  const Matrix &matrix() const noexcept { return state_->sigma; }
  Index dim() const noexcept { return state_->sigma.rows(); }
  bool normalized() const noexcept { return state_->normalized; }

  /// λ_max (= ‖Σ‖₂ for PSD Σ).
  double spectral_norm() const;

  /// Descending eigenvalues (clamped) and orthonormal eigenvectors.
  const linalg::SymEig &eig() const;

  /// Σ/λ_max with the normalized flag set. Throws ZeroMatrix if λ_max < 1e-14.
  CollateralMatrix normalized_copy() const;

 private:
  struct State {
    Matrix sigma;
    bool normalized = false;
    mutable std::once_flag eig_once;
    mutable linalg::SymEig eig;
    mutable std::atomic<bool> eig_ready{false};
    mutable std::once_flag norm_once;
    mutable double norm = 0.0;
  };
  explicit CollateralMatrix(std::shared_ptr<State> s) : state_(std::move(s)) {}
  static std::shared_ptr<State> make_state(Matrix sigma);

  std::shared_ptr<const State> state_;
};

struct DamageReport {
  double value = 0.0;       ///< (x-h)ᵀΣ(x-h)
  double delta_norm = 0.0;  ///< ‖x-h‖
};

DamageReport damage(const Vector &x, const Vector &h,
                    const CollateralMatrix &sigma);

/// 2Σ(x-h).
Vector euclidean_grad(const Vector &x, const Vector &h,
                      const CollateralMatrix &sigma);

/// Π_x(2Σ(x-h)).
TangentVector riemannian_grad(const UnitVector &x, const Vector &h,
                              const CollateralMatrix &sigma,
                              const BudgetSlice &slice);

/// L = 2‖PΣP‖₂ with P = I - ddᵀ.
///
/// This is the ambient Hessian bound restricted to d-perp. It does not
/// include the extrinsic curvature of the slice; see
/// `geodesic_smoothness_bound` for a bound that does.
double lipschitz_bound(const CollateralMatrix &sigma, const BudgetSlice &slice);

/// A bound on |d²/dt² J(exp_x(tξ))| / ‖ξ‖² valid on the whole slice:
///   2‖PΣP‖ + 4·sqrt(‖Σ‖·‖PΣP‖) / r.
/// The second term is the slice curvature (1/r) acting on the gradient; it
/// dominates near the poles.
double geodesic_smoothness_bound(const CollateralMatrix &sigma,
                                 const BudgetSlice &slice);

/// ‖PΣP‖₂, shared by the two bounds above.
double projected_spectral_norm(const CollateralMatrix &sigma,
                               const Vector &d);

CollateralMatrix normalize_top_eig(const CollateralMatrix &sigma);

/// Σ + ε(I - ddᵀ). Throws NonPositiveEpsilon unless ε > 0.
CollateralMatrix regularize(const CollateralMatrix &sigma,
                            const BudgetSlice &slice, double epsilon);

/// Σ_w = Σ_i w_i f_i f_iᵀ for the unit columns f_i of `dictionary` (p x m).
CollateralMatrix build_weighted_sigma(const Matrix &dictionary,
                                      const Vector &weights);

}  // namespace coast
