#include "coast/random.hpp"

#include <Eigen/QR>

namespace coast::random {

double uniform(Engine &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vector gaussian(Engine &rng, Index p) {
  std::normal_distribution<double> n01;
  Vector v(p);
  for (Index i = 0; i < p; ++i) v[i] = n01(rng);
  return v;
}

UnitVector unit(Engine &rng, Index p) {
  return UnitVector::normalize(gaussian(rng, p));
}

Matrix orthogonal(Engine &rng, Index p) {
  Matrix g(p, p);
  for (Index j = 0; j < p; ++j) g.col(j) = gaussian(rng, p);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < p; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

CollateralMatrix psd(Engine &rng, Index p, Spectrum s) {
  Vector vals(p);
  for (Index i = 0; i < p; ++i) {
    switch (s) {
      case Spectrum::Uniform: vals[i] = uniform(rng, 0.0, 1.0); break;
      case Spectrum::Geometric: vals[i] = std::pow(0.5, static_cast<double>(i)); break;
      case Spectrum::LowRank:
        vals[i] = i < std::max<Index>(1, p / 3) ? uniform(rng, 0.0, 1.0) : 0.0;
        break;
    }
  }
  const Matrix q = orthogonal(rng, p);
  const Matrix m = q * vals.asDiagonal() * q.transpose();
  return CollateralMatrix::psd_by_construction(m).normalized_copy();
}

UnitVector point_on_slice(Engine &rng, const BudgetSlice &slice) {
  const Vector &d = slice.direction().coords();
  Vector u = gaussian(rng, slice.dim());
  u -= d.dot(u) * d;
  u.normalize();
  return UnitVector::from(retract_to_slice(slice.center() + slice.radius() * u, slice));
}

TangentVector tangent(Engine &rng, const BudgetSlice &slice, const UnitVector &x,
                      double scale) {
  TangentVector v = tangent_project(slice, x, gaussian(rng, slice.dim()));
  return v.scaled(scale / v.norm());
}

}  // namespace coast::random
