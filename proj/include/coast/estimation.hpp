#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "coast/objective.hpp"
#include "coast/solvers.hpp"

namespace coast {

/// Activations captured at one intervention location, one per row, at the
/// model's raw scale.
struct ActivationBatch {
  RowMatrix rows;
  std::string location_id;

  /// Throws InvalidArgument for an empty batch or non-finite entries.
  void validate() const;
};

/// Per-location artefacts: unit direction, normalised Σ, base budget.
struct SteeringSpec {
  UnitVector direction;
  CollateralMatrix sigma;
  std::string location_id;
  double base_alpha = 0.0;

  /// Throws InvalidArgument unless Σ is normalised and dimensions agree.
  void validate() const;
};

/// Streaming accumulator of Σ_i ĥ_i ĥ_iᵀ over unit-normalised rows.
///
/// Rows are buffered into fixed blocks of `kBlockRows`, each block is reduced
/// with one GEMM, and block sums are added with Neumaier compensation. The
/// block boundaries depend only on the global row index, so feeding the same
/// rows in chunks of any size produces the same matrix bit for bit.
class SecondMomentAccumulator {
 public:
  static constexpr Index kBlockRows = 1024;

  /// `first_row` is the global index of the first row this accumulator will
  /// see; it only affects error messages.
  explicit SecondMomentAccumulator(Index dim, Index first_row = 0);

  /// Adds rows in order. Throws ZeroRow (naming the global row index) if a
  /// row has norm < 1e-12.
  void add(const Eigen::Ref<const RowMatrix> &rows);

  /// Folds `other` (rows that come after this accumulator's) into this one.
  /// Used to combine per-thread partial sums; the result agrees with a
  /// single pass to rounding, not bit for bit.
  void merge(SecondMomentAccumulator other);

  Index dim() const noexcept { return dim_; }
  Index count() const noexcept { return count_; }

  /// (1/n) Σ ĥĥᵀ, not yet normalised.
  Matrix mean() const;

  /// The normalised second moment. Throws ZeroRow for an empty accumulator.
  CollateralMatrix finish() const;

 private:
  void flush_block();
  void add_block_sum(const Matrix &block_sum);

  Index dim_;
  Index first_row_;
  Index count_ = 0;
  RowMatrix pending_;
  Index pending_rows_ = 0;
  Matrix sum_;
  Matrix comp_;  // Neumaier compensation terms
};

/// Row-normalised second moment (1/n) Σ ĥĥᵀ divided by its top eigenvalue.
/// With `threads` > 1 the rows are split on block boundaries and the partial
/// sums merged in order; the result matches the sequential one to rounding.
CollateralMatrix estimate_second_moment(const ActivationBatch &batch,
                                        int threads = 1);

/// Normalised difference of the means of the unit-normalised rows.
UnitVector build_direction(const ActivationBatch &harmful,
                           const ActivationBatch &harmless);

/// base_alpha · |⟨h/‖h‖, d⟩|.
double adaptive_alpha(const Vector &h, const SteeringSpec &spec);

enum class SteerMethod { Coast, Slerp, Kkt };

SteerMethod parse_steer_method(const std::string &name);
std::string to_string(SteerMethod m);

struct SteerOutcome {
  Vector output;           ///< raw-scale steered activation
  double damage = 0.0;     ///< J on the unit sphere
  double alpha = 0.0;      ///< the budget actually used
  bool passthrough = false;  ///< ĥ ∥ d: returned unchanged
};

/// Normalises h, steers ĥ onto slice(d, α_eff), and rescales by ‖h‖.
/// Activations parallel to d are returned unchanged (`passthrough`).
SteerOutcome steer_preserving_norm(const Vector &h, const SteeringSpec &spec,
                                   SteerMethod method, const SolverConfig &cfg,
                                   bool use_adaptive);

struct BatchSteerResult {
  RowMatrix output;
  Vector damage;
  Vector alpha;
  std::size_t passthrough_count = 0;
};

/// Per-row steer_preserving_norm. COAST and SLERP go through the blocked
/// GEMM kernel; rows are split across `threads` workers with results written
/// in row order, so the output does not depend on the thread count.
BatchSteerResult steer_batch(const ActivationBatch &batch,
                             const SteeringSpec &spec, SteerMethod method,
                             const SolverConfig &cfg, bool use_adaptive,
                             int threads = 1);

}  // namespace coast
