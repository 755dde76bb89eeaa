#include "coast/solvers.hpp"

#include <cmath>
#include <deque>
#include <sstream>

#include "coast/error.hpp"

namespace coast {

namespace {

void require_same_dim(const UnitVector &h, const BudgetSlice &slice) {
  if (h.dim() != slice.dim()) {
    std::ostringstream os;
    os << "activation has dimension " << h.dim() << ", slice has " << slice.dim();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

void require_sigma_dim(const CollateralMatrix &sigma, const BudgetSlice &slice) {
  if (sigma.dim() != slice.dim()) {
    std::ostringstream os;
    os << "collateral matrix is " << sigma.dim() << "x" << sigma.dim()
       << ", slice has dimension " << slice.dim();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

/// Writes ξ = -Π_x g into `xi` and returns ‖ξ‖.
double descent_direction(const Vector &x, const Vector &g, const Vector &d,
                         double alpha, double r2, Vector &xi) {
  const Vector p = d - alpha * x;
  xi = -(g - x.dot(g) * x) + (p.dot(g) / r2) * p;
  return xi.norm();
}

}  // namespace

void SolverConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw Error(ErrorCode::InvalidArgument, "step size must be positive");
  }
  if (max_iters < 0) {
    throw Error(ErrorCode::InvalidArgument, "iteration budget must be >= 0");
  }
  if (!(grad_tol >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gradient tolerance must be >= 0");
  }
  if (keep_iterates < 0) {
    throw Error(ErrorCode::InvalidArgument, "keep_iterates must be >= 0");
  }
}

SolveResult slerp_solve(const UnitVector &h, const BudgetSlice &slice,
                        const CollateralMatrix *sigma) {
  require_same_dim(h, slice);
  UnitVector x = project_to_slice(h, slice);
  SolveResult out{x};
  if (sigma != nullptr) {
    require_sigma_dim(*sigma, slice);
    out.damage = damage(x.coords(), h.coords(), *sigma).value;
    out.grad_norm_final = riemannian_grad(x, h.coords(), *sigma, slice).norm();
  } else {
    out.damage = (x.coords() - h.coords()).squaredNorm();
    out.grad_norm_final =
        tangent_project(slice, x, 2.0 * (x.coords() - h.coords())).norm();
  }
  out.residuals = feasibility_residuals(x.coords(), slice);
  return out;
}

SolveResult coast_solve(const UnitVector &h, const BudgetSlice &slice,
                        const CollateralMatrix &sigma, const SolverConfig &cfg) {
  cfg.validate();
  require_same_dim(h, slice);
  require_sigma_dim(sigma, slice);

  const Vector &d = slice.direction().coords();
  const Vector &hv = h.coords();
  const Matrix &S = sigma.matrix();
  const double alpha = slice.alpha();
  const double r = slice.radius();
  const double r2 = r * r;
  const Vector center = slice.center();

  double eta = cfg.eta;
  if (cfg.step_rule == StepRule::CurvatureSafe) {
    const double lgeo = geodesic_smoothness_bound(sigma, slice);
    if (lgeo > 0.0) eta = std::min(eta, 1.0 / lgeo);
  }

  Vector x = project_to_slice(h, slice).coords();
  Vector g(x.size()), xi(x.size()), delta(x.size());
  std::vector<double> obj_trace, grad_trace;
  std::deque<Vector> tail;
  auto remember = [&](const Vector &v) {
    if (cfg.keep_iterates <= 0) return;
    tail.push_back(v);
    if (static_cast<int>(tail.size()) > cfg.keep_iterates) tail.pop_front();
  };

  int t = 0;
  double j = 0.0;
  double xi_norm = 0.0;
  for (;; ++t) {
    delta = x - hv;
    g.noalias() = S * delta;
    j = delta.dot(g);  // J(x_t) falls out of the gradient matvec
    g *= 2.0;
    xi_norm = descent_direction(x, g, d, alpha, r2, xi);
    if (!std::isfinite(xi_norm) || !std::isfinite(j)) {
      std::ostringstream os;
      os << "non-finite iterate at step " << t << " (J = " << j
         << ", |grad| = " << xi_norm << ")";
      throw Error(ErrorCode::NonFiniteIterate, os.str());
    }
    if (cfg.trace) {
      obj_trace.push_back(j);
      grad_trace.push_back(xi_norm);
    }
    remember(x);
    if (t >= cfg.max_iters || xi_norm < cfg.grad_tol ||
        xi_norm < tol::kZeroTangent) {
      break;
    }
    // v = ξ/‖ξ‖, τ = η‖ξ‖/r
    const double tau = eta * xi_norm / r;
    x = center + (x - center) * std::cos(tau) + (r * std::sin(tau) / xi_norm) * xi;
    x = retract_to_slice(x, slice);
  }

  SolveResult out{UnitVector::from(x)};
  out.damage = j;
  out.iterations_used = t;
  out.grad_norm_final = xi_norm;
  out.residuals = feasibility_residuals(x, slice);
  out.objective_trace = std::move(obj_trace);
  out.grad_norm_trace = std::move(grad_trace);
  out.iterate_tail.assign(tail.begin(), tail.end());
  return out;
}

Vector actadd_solve(const UnitVector &h, const UnitVector &d,
                    double coefficient, bool renormalize) {
  if (h.dim() != d.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "activation and direction dimensions differ");
  }
  Vector out = h.coords() + coefficient * d.coords();
  if (renormalize) {
    const double n = out.norm();
    if (!(n >= 1e-12)) {
      throw Error(ErrorCode::ZeroResult, "h + c*d vanishes; cannot renormalize");
    }
    out /= n;
  }
  return out;
}

UnitVector angular_solve(const UnitVector &h, const UnitVector &d,
                         const UnitVector &q, double theta_target) {
  if (h.dim() != d.dim() || q.dim() != d.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "activation, direction and plane vector dimensions differ");
  }
  const double dq = d.dot(q);
  if (std::abs(dq) > 1e-8) {
    std::ostringstream os;
    os << "plane vectors are not orthogonal (d.q = " << dq << ")";
    throw Error(ErrorCode::NonOrthogonalBasis, os.str());
  }
  const double a = h.dot(d);
  const double b = h.dot(q);
  const double m = std::hypot(a, b);
  // h_rest is never materialised: adding the rotated in-plane part to h and
  // subtracting the old one keeps the out-of-plane part intact.
  const double na = m * std::cos(theta_target);
  const double nb = m * std::sin(theta_target);
  Vector out = h.coords() + (na - a) * d.coords() + (nb - b) * q.coords();
  const double n = out.norm();
  return UnitVector::from(out / n);
}

std::string to_string(BatchMethod m) {
  return m == BatchMethod::Slerp ? "slerp" : "coast";
}

BatchOutput solve_batch(BatchMethod method, const RowMatrix &hn,
                        const UnitVector &d, const Vector &alphas,
                        const CollateralMatrix &sigma, const SolverConfig &cfg) {
  cfg.validate();
  const Index n = hn.rows();
  const Index p = hn.cols();
  if (p != d.dim() || sigma.dim() != p || alphas.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "batch shapes disagree");
  }
  const Vector &dv = d.coords();
  const Matrix &S = sigma.matrix();

  BatchOutput out;
  out.x.resize(n, p);
  out.damage.resize(n);
  out.grad_norm.resize(n);
  out.iterations.setZero(n);

  // Row blocks keep the working set in cache while still feeding GEMM.
  constexpr Index kBlock = 256;
  RowMatrix delta, g;
  for (Index b0 = 0; b0 < n; b0 += kBlock) {
    const Index m = std::min(kBlock, n - b0);
    auto H = hn.middleRows(b0, m);
    auto X = out.x.middleRows(b0, m);

    // SLERP initialisation, row by row.
    const Vector dh = H * dv;
    std::vector<double> rad(m);
    for (Index i = 0; i < m; ++i) {
      const double a = alphas[b0 + i];
      if (!(std::abs(a) < 1.0 - tol::kPole)) {
        std::ostringstream os;
        os << "row " << (b0 + i) << ": budget " << a << " is at a pole";
        throw Error(ErrorCode::DegenerateBudget, os.str());
      }
      rad[i] = std::sqrt(1.0 - a * a);
      Vector perp = H.row(i).transpose() - dh[i] * dv;
      const double pn = perp.norm();
      if (pn < tol::kParallel) {
        std::ostringstream os;
        os << "row " << (b0 + i) << " is parallel to the steering direction";
        throw Error(ErrorCode::ParallelInput, os.str());
      }
      X.row(i) = (a * dv + (rad[i] / pn) * perp).transpose();
    }

    std::vector<char> active(m, 1);
    const int iters = method == BatchMethod::Coast ? cfg.max_iters : 0;
    for (int t = 0;; ++t) {
      delta = X - H;
      g.noalias() = delta * S;  // rows of (x-h)ᵀΣ; Σ is symmetric
      const bool last = t >= iters;
      bool any_active = false;
      for (Index i = 0; i < m; ++i) {
        if (!active[i]) continue;
        const double j = delta.row(i).dot(g.row(i));
        const double a = alphas[b0 + i];
        const double r = rad[i];
        Vector x = X.row(i).transpose();
        Vector gi = 2.0 * g.row(i).transpose();
        Vector xi;
        const double xn = descent_direction(x, gi, dv, a, r * r, xi);
        if (!std::isfinite(xn) || !std::isfinite(j)) {
          std::ostringstream os;
          os << "row " << (b0 + i) << ": non-finite iterate at step " << t;
          throw Error(ErrorCode::NonFiniteIterate, os.str());
        }
        out.damage[b0 + i] = j;
        out.grad_norm[b0 + i] = xn;
        out.iterations[b0 + i] = t;
        if (last || xn < cfg.grad_tol || xn < tol::kZeroTangent) {
          active[i] = 0;
          continue;
        }
        const double tau = cfg.eta * xn / r;
        const Vector c = a * dv;
        x = c + (x - c) * std::cos(tau) + (r * std::sin(tau) / xn) * xi;
        // Same re-projection as the single-instance solver.
        Vector perp = x - dv.dot(x) * dv;
        x = c + (r / perp.norm()) * perp;
        X.row(i) = x.transpose();
        any_active = true;
      }
      if (!any_active) break;
    }
  }
  return out;
}

}  // namespace coast
