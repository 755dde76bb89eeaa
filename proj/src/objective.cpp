#include "coast/objective.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

#include "coast/error.hpp"

namespace coast {

namespace {

void require_square(const Matrix &m) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "collateral matrix is " << m.rows() << "x" << m.cols();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  if (m.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "collateral matrix is empty");
  }
}

void require_dim(Index got, Index want, const char *what) {
  if (got != want) {
    std::ostringstream os;
    os << what << " has dimension " << got << ", expected " << want;
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

}  // namespace

std::shared_ptr<CollateralMatrix::State> CollateralMatrix::make_state(
    Matrix sigma) {
  auto s = std::make_shared<State>();
  s->sigma = std::move(sigma);
  return s;
}

CollateralMatrix CollateralMatrix::from_matrix(const Matrix &sigma) {
  require_square(sigma);
  if (!sigma.allFinite()) {
    throw Error(ErrorCode::NotPsd, "collateral matrix has non-finite entries");
  }
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  const double asym = linalg::max_asymmetry(sigma);
  if (asym > kSymmetryTol * scale) {
    std::ostringstream os;
    os << "max |S_ij - S_ji| = " << asym;
    throw Error(ErrorCode::NotSymmetric, os.str());
  }
  Matrix sym = 0.5 * (sigma + sigma.transpose());

  // A Cholesky factorization of Σ + tol·I exists iff λ_min(Σ) > -tol; only
  // fall back to the eigensolver to produce the error message.
  const Index p = sym.rows();
  Matrix shifted = sym;
  shifted.diagonal().array() += kPsdTol;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) {
    const auto e = linalg::dense_eig(sym);
    if (e.values[p - 1] < -kPsdTol) {
      std::ostringstream os;
      os.precision(6);
      os << "smallest eigenvalue " << e.values[p - 1];
      throw Error(ErrorCode::NotPsd, os.str());
    }
  }
  return CollateralMatrix(make_state(std::move(sym)));
}

CollateralMatrix CollateralMatrix::psd_by_construction(const Matrix &sigma) {
  require_square(sigma);
  if (!sigma.allFinite()) {
    throw Error(ErrorCode::NotPsd, "collateral matrix has non-finite entries");
  }
  return CollateralMatrix(make_state(0.5 * (sigma + sigma.transpose())));
}

CollateralMatrix CollateralMatrix::identity(Index p) {
  auto s = make_state(Matrix::Identity(p, p));
  std::call_once(s->norm_once, [&] { s->norm = 1.0; });
  s->normalized = true;
  return CollateralMatrix(std::move(s));
}

const linalg::SymEig &CollateralMatrix::eig() const {
  const State &s = *state_;
  std::call_once(s.eig_once, [&s] {
    auto e = linalg::dense_eig(s.sigma);
    const double top = std::max(e.values[0], 0.0);
    for (Index i = 0; i < e.values.size(); ++i) {
      if (e.values[i] < kClampRelative * top) e.values[i] = 0.0;
    }
    s.eig = std::move(e);
    s.eig_ready.store(true, std::memory_order_release);
  });
  return s.eig;
}

double CollateralMatrix::spectral_norm() const {
  const State &s = *state_;
  std::call_once(s.norm_once, [this, &s] {
    if (s.eig_ready.load(std::memory_order_acquire) || dim() <= kDenseLimit) {
      s.norm = eig().values[0];
    } else {
      const Matrix &m = s.sigma;
      auto res = linalg::top_eigenvalue(
          [&m](const Vector &in, Vector &out) { out.noalias() = m * in; },
          dim());
      s.norm = std::max(res.value, 0.0);
    }
  });
  return s.norm;
}

CollateralMatrix CollateralMatrix::normalized_copy() const {
  const double top = spectral_norm();
  if (!(top >= 1e-14)) {
    std::ostringstream os;
    os << "top eigenvalue " << top << " is too small to normalize by";
    throw Error(ErrorCode::ZeroMatrix, os.str());
  }
  auto s = make_state(state_->sigma / top);
  s->normalized = true;
  std::call_once(s->norm_once, [&] { s->norm = 1.0; });
  if (state_->eig_ready.load(std::memory_order_acquire)) {
    const auto &src = state_->eig;
    std::call_once(s->eig_once, [&] {
      s->eig.values = src.values / top;
      s->eig.vectors = src.vectors;
      s->eig_ready.store(true, std::memory_order_release);
    });
  }
  return CollateralMatrix(std::move(s));
}

DamageReport damage(const Vector &x, const Vector &h,
                    const CollateralMatrix &sigma) {
  require_dim(x.size(), sigma.dim(), "point");
  require_dim(h.size(), sigma.dim(), "activation");
  const Vector delta = x - h;
  const double value = delta.dot(sigma.matrix() * delta);
  return {value, delta.norm()};
}

Vector euclidean_grad(const Vector &x, const Vector &h,
                      const CollateralMatrix &sigma) {
  require_dim(x.size(), sigma.dim(), "point");
  require_dim(h.size(), sigma.dim(), "activation");
  return 2.0 * (sigma.matrix() * (x - h));
}

TangentVector riemannian_grad(const UnitVector &x, const Vector &h,
                              const CollateralMatrix &sigma,
                              const BudgetSlice &slice) {
  return tangent_project(slice, x, euclidean_grad(x.coords(), h, sigma));
}

double projected_spectral_norm(const CollateralMatrix &sigma,
                               const Vector &d) {
  require_dim(d.size(), sigma.dim(), "direction");
  const Matrix &m = sigma.matrix();
  const Index p = sigma.dim();
  if (p <= CollateralMatrix::kDenseLimit) {
    const Vector sd = m * d;
    const double dsd = d.dot(sd);
    // PΣP = Σ - d(Σd)ᵀ - (Σd)dᵀ + (dᵀΣd)ddᵀ
    Matrix proj = m;
    proj.noalias() -= d * sd.transpose();
    proj.noalias() -= sd * d.transpose();
    proj.noalias() += dsd * d * d.transpose();
    proj = 0.5 * (proj + proj.transpose());
    return std::max(linalg::dense_eig(proj).values[0], 0.0);
  }
  auto res = linalg::top_eigenvalue(
      [&m, &d](const Vector &in, Vector &out) {
        Vector t = in - d.dot(in) * d;
        out.noalias() = m * t;
        out -= d.dot(out) * d;
      },
      p);
  return std::max(res.value, 0.0);
}

double lipschitz_bound(const CollateralMatrix &sigma, const BudgetSlice &slice) {
  return 2.0 * projected_spectral_norm(sigma, slice.direction().coords());
}

double geodesic_smoothness_bound(const CollateralMatrix &sigma,
                                 const BudgetSlice &slice) {
  const double pn = projected_spectral_norm(sigma, slice.direction().coords());
  return 2.0 * pn + 4.0 * std::sqrt(sigma.spectral_norm() * pn) / slice.radius();
}

CollateralMatrix normalize_top_eig(const CollateralMatrix &sigma) {
  return sigma.normalized_copy();
}

CollateralMatrix regularize(const CollateralMatrix &sigma,
                            const BudgetSlice &slice, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    std::ostringstream os;
    os << "epsilon must be positive, got " << epsilon;
    throw Error(ErrorCode::NonPositiveEpsilon, os.str());
  }
  const Vector &d = slice.direction().coords();
  require_dim(d.size(), sigma.dim(), "direction");
  Matrix out = sigma.matrix();
  out.diagonal().array() += epsilon;
  out.noalias() -= epsilon * d * d.transpose();
  return CollateralMatrix::psd_by_construction(out);
}

CollateralMatrix build_weighted_sigma(const Matrix &dictionary,
                                      const Vector &weights) {
  if (dictionary.cols() != weights.size()) {
    std::ostringstream os;
    os << "dictionary has " << dictionary.cols() << " features but "
       << weights.size() << " weights were given";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  for (Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      std::ostringstream os;
      os << "weight " << i << " is " << weights[i];
      throw Error(ErrorCode::NegativeWeight, os.str());
    }
    const double n = dictionary.col(i).norm();
    if (!(std::abs(n - 1.0) <= 1e-8)) {
      std::ostringstream os;
      os.precision(12);
      os << "feature " << i << " has norm " << n;
      throw Error(ErrorCode::NonUnitFeature, os.str());
    }
  }
  Matrix scaled = dictionary * weights.asDiagonal();
  Matrix out = scaled * dictionary.transpose();
  return CollateralMatrix::psd_by_construction(out);
}

}  // namespace coast
