#include "coast/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

namespace coast::linalg {

SymEig dense_eig(const Matrix &symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
  // Eigen sorts ascending; everything downstream wants sigma_1 >= sigma_2 ...
  const Index p = symmetric.rows();
  SymEig out{Vector(p), Matrix(p, p)};
  for (Index i = 0; i < p; ++i) {
    out.values[i] = solver.eigenvalues()[p - 1 - i];
    out.vectors.col(i) = solver.eigenvectors().col(p - 1 - i);
  }
  return out;
}

TopEigResult top_eigenvalue(const LinearOp &apply, Index dim, double tolerance,
                            int krylov_dim, int max_restarts) {
  TopEigResult res;
  if (dim == 0) {
    res.converged = true;
    return res;
  }
  // Fixed seed: the estimate must not depend on the caller's RNG state.
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> normal;
  Vector start(dim);
  for (Index i = 0; i < dim; ++i) start[i] = normal(rng);
  start.normalize();

  const Index m_max = std::min<Index>(dim, std::max(krylov_dim, 2));
  Matrix basis(dim, m_max);
  Vector alpha(m_max), beta(m_max);
  Vector w(dim);
  for (int cycle = 0; cycle <= max_restarts; ++cycle) {
    basis.col(0) = start;
    Index m = 0;
    double scale = 0.0;  // running estimate of ‖A‖ for the breakdown test
    double last_beta = 0.0;
    for (Index j = 0; j < m_max; ++j) {
      apply(basis.col(j), w);
      ++res.matvecs;
      alpha[j] = basis.col(j).dot(w);
      // Two passes of classical Gram-Schmidt against the whole basis keep
      // the Krylov vectors orthogonal to working precision.
      for (int pass = 0; pass < 2; ++pass) {
        const Vector c = basis.leftCols(j + 1).transpose() * w;
        w.noalias() -= basis.leftCols(j + 1) * c;
      }
      last_beta = w.norm();
      scale = std::max({scale, std::abs(alpha[j]), last_beta});
      m = j + 1;
      if (last_beta <= 1e-14 * std::max(scale, 1e-300)) {
        last_beta = 0.0;  // invariant subspace: the Ritz values are exact
        break;
      }
      if (j + 1 < m_max) {
        beta[j] = last_beta;
        basis.col(j + 1) = w / last_beta;
      }
    }

    Eigen::SelfAdjointEigenSolver<Matrix> tri;
    if (m == 1) {
      res.value = alpha[0];
      res.residual = last_beta;
      start = basis.col(0);
    } else {
      tri.computeFromTridiagonal(alpha.head(m), beta.head(m - 1), Eigen::ComputeEigenvectors);
      const Vector s = tri.eigenvectors().col(m - 1);  // ascending order
      res.value = tri.eigenvalues()[m - 1];
      res.residual = last_beta * std::abs(s[m - 1]);
      start = (basis.leftCols(m) * s).normalized();
    }
    if (res.residual <= tolerance * std::max(std::abs(res.value), 1e-300) ||
        res.residual == 0.0) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

Matrix orthonormal_complement(const Vector &d) {
  const Index p = d.size();
  // Householder H maps d to +-e_0; the remaining columns of H span d-perp.
  Vector u = d;
  const double s = d[0] >= 0.0 ? 1.0 : -1.0;
  u[0] += s * d.norm();
  const double un2 = u.squaredNorm();
  Matrix h = Matrix::Identity(p, p);
  if (un2 > 0.0) h.noalias() -= (2.0 / un2) * u * u.transpose();
  return h.rightCols(p - 1);
}

double max_asymmetry(const Matrix &a) {
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

}  // namespace coast::linalg
