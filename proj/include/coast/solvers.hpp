#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "coast/manifold.hpp"
#include "coast/objective.hpp"

namespace coast {

enum class StepRule {
  /// Constant step η, exactly as in the reference algorithm.
  Fixed,
  /// η_t = min(η, 1/L_geo), using `geodesic_smoothness_bound`. Guarantees
  /// monotone descent even close to the poles, at the price of shorter steps.
  CurvatureSafe,
};

struct SolverConfig {
  double eta = 0.3;
  int max_iters = 0;  ///< T; the library has no default budget worth trusting
  double grad_tol = 1e-10;
  bool trace = false;       ///< record objective and gradient-norm traces
  int keep_iterates = 0;    ///< keep the last N iterates (for diagnostics)
  StepRule step_rule = StepRule::Fixed;

  SolverConfig() = default;
  SolverConfig(double eta_, int max_iters_) : eta(eta_), max_iters(max_iters_) {}

  /// Throws InvalidArgument for η <= 0, T < 0, grad_tol < 0.
  void validate() const;
};

struct SolveResult {
  explicit SolveResult(UnitVector x_) : x(std::move(x_)) {}

  UnitVector x;
  double damage = 0.0;
  int iterations_used = 0;
  double grad_norm_final = 0.0;
  FeasibilityResiduals residuals;
  /// J(x_0), ..., J(x_k) when tracing (k = iterations_used).
  std::vector<double> objective_trace;
  /// ‖grad J(x_t)‖ aligned with `objective_trace`.
  std::vector<double> grad_norm_trace;
  /// The last `keep_iterates` iterates, oldest first.
  std::vector<Vector> iterate_tail;
};

/// Closed-form spherical interpolation stopped at the budget latitude (the
/// Euclidean projection of h onto the slice). Damage is measured against
/// `sigma` when given and against the identity otherwise.
SolveResult slerp_solve(const UnitVector &h, const BudgetSlice &slice,
                        const CollateralMatrix *sigma = nullptr);

/// Riemannian gradient descent along slice geodesics, initialised at the
/// SLERP point.
///
/// The update normalises ξ and then walks an arc of length η‖ξ‖, which is
/// the same as an unnormalised gradient step. After each step the iterate is
/// re-projected onto the slice; that is the identity in exact arithmetic and
/// stops rounding drift from compounding over long runs.
SolveResult coast_solve(const UnitVector &h, const BudgetSlice &slice,
                        const CollateralMatrix &sigma, const SolverConfig &cfg);

struct KktRoot {
  double lambda = 0.0;
  double mu = 0.0;
  double damage = 0.0;
  double residual = 0.0;  ///< max feasibility residual of x(λ, μ)
};

struct KktDiagnostics {
  std::vector<KktRoot> roots_found;
  int intervals_searched = 0;
  std::size_t chosen_root = 0;
  /// Candidates dropped because B(λ) vanished (μ undefined) or the
  /// reconstruction was infeasible.
  int rejected_candidates = 0;
  /// Set when the secular equation had no root right of the smallest
  /// constrained eigenvalue and the answer came from the grid oracle.
  bool hard_case_fallback = false;
};

struct KktSolution {
  SolveResult result;
  KktDiagnostics diagnostics;
};

/// Global minimiser via the Lagrange conditions
///   (Σ + λI)x = Σh - (μ/2)d,   μ = 2(A(λ) - α)/B(λ),
/// solved in the eigenbasis of Σ by enumerating every root of the scalar
/// secular function G(λ) = ‖x(λ)‖² - 1 and keeping the cheapest one.
KktSolution kkt_solve(const UnitVector &h, const BudgetSlice &slice,
                      const CollateralMatrix &sigma, double root_tol = 1e-12);

/// Brute-force reference minimiser for p = 3 (circle) and p = 4 (2-sphere):
/// a uniform angular grid with `resolution` points per angle, then local
/// refinement to 1e-10 rad.
SolveResult oracle_solve(const UnitVector &h, const BudgetSlice &slice,
                         const CollateralMatrix &sigma, int resolution = 2048);

/// h + c·d, optionally renormalised. No budget guarantee.
Vector actadd_solve(const UnitVector &h, const UnitVector &d,
                    double coefficient, bool renormalize);

/// Rotates the (d, q) component of h to angle `theta_target` from d, leaving
/// the rest of h untouched. `q` must be orthogonal to `d`.
UnitVector angular_solve(const UnitVector &h, const UnitVector &d,
                         const UnitVector &q, double theta_target);

/// Batched SLERP / COAST over unit rows. Rows are independent; blocks of
/// rows share one GEMM per iteration instead of one GEMV per row.
struct BatchOutput {
  RowMatrix x;                 ///< steered unit rows
  Vector damage;               ///< J per row
  Vector grad_norm;            ///< ‖grad‖ at the returned row
  Eigen::VectorXi iterations;  ///< iterations used per row
};

enum class BatchMethod { Slerp, Coast };

/// `hn` holds unit rows, `alphas` one budget per row. Rows that are
/// parallel to d must be filtered out by the caller (ParallelInput otherwise).
BatchOutput solve_batch(BatchMethod method, const RowMatrix &hn,
                        const UnitVector &d, const Vector &alphas,
                        const CollateralMatrix &sigma, const SolverConfig &cfg);

std::string to_string(BatchMethod m);

}  // namespace coast
