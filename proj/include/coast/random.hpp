#pragma once

#include <cstdint>
#include <random>

#include "coast/manifold.hpp"
#include "coast/objective.hpp"

/// Random instance generators shared by the verification suites, the
/// acceptance harness and the tests. All draws come from the caller's engine.
namespace coast::random {

using Engine = std::mt19937_64;

Vector gaussian(Engine &rng, Index p);
UnitVector unit(Engine &rng, Index p);

/// Haar-distributed orthogonal p x p matrix (QR of a Gaussian matrix with
/// the sign of R's diagonal fixed).
Matrix orthogonal(Engine &rng, Index p);

enum class Spectrum {
  Uniform,    ///< eigenvalues ~ U(0, 1)
  Geometric,  ///< 0.5^i
  LowRank,    ///< about p/3 nonzero eigenvalues ~ U(0, 1)
};

/// Q diag(λ) Qᵀ with a random rotation, normalised to spectral norm 1.
CollateralMatrix psd(Engine &rng, Index p, Spectrum s = Spectrum::Uniform);

/// Uniform point of the slice: αd + r·u with u uniform on the unit sphere of d-perp.
UnitVector point_on_slice(Engine &rng, const BudgetSlice &slice);

/// Random tangent vector at x with norm `scale`.
TangentVector tangent(Engine &rng, const BudgetSlice &slice, const UnitVector &x,
                      double scale);

double uniform(Engine &rng, double lo, double hi);

}  // namespace coast::random
