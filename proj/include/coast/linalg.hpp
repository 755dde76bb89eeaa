#pragma once

#include <functional>

#include "coast/types.hpp"

namespace coast::linalg {

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order and
/// eigenvectors as the matching columns of `vectors`.
struct SymEig {
  Vector values;
  Matrix vectors;
};

SymEig dense_eig(const Matrix &symmetric);

/// Largest eigenvalue of the symmetric operator `apply` (y = A v), by
/// restarted Lanczos with full reorthogonalisation.
///
/// Each cycle builds a Krylov basis of up to `krylov_dim` vectors, takes the
/// top Ritz pair (θ, y) and stops once ‖Ay - θy‖ <= tolerance·|θ|; for a
/// symmetric operator that residual bounds the distance from θ to the
/// spectrum. Otherwise the next cycle restarts from y. Plain power iteration
/// was not good enough here: with a clustered top of the spectrum it stalls
/// at errors around 1e-6 long before its increments look small.
struct TopEigResult {
  double value = 0.0;
  double residual = 0.0;  ///< ‖Ay - θy‖ of the returned Ritz pair
  int matvecs = 0;
  bool converged = false;
};

using LinearOp = std::function<void(const Vector &in, Vector &out)>;

TopEigResult top_eigenvalue(const LinearOp &apply, Index dim,
                            double tolerance = 1e-13, int krylov_dim = 64,
                            int max_restarts = 100);

/// Columns form an orthonormal basis of the complement of unit vector `d`
/// (a p x (p-1) matrix). Built from a Householder reflector, so it is exact
/// to rounding and deterministic.
Matrix orthonormal_complement(const Vector &d);

/// Max |A_ij - A_ji|.
double max_asymmetry(const Matrix &a);

}  // namespace coast::linalg
