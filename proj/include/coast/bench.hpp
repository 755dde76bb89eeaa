#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "coast/estimation.hpp"

namespace coast {

/// Parameters of the synthetic instance generator.
struct InstanceSpec {
  Index p = 64;
  /// "decay": Σ = diag(γ^i). "clustered": Σ_w from `clusters` random centres
  /// with `features_per_cluster` unit features each, unit weights.
  std::string profile = "clustered";
  double gamma = 0.9;
  int clusters = 4;
  int features_per_cluster = 8;
  double cluster_spread = 0.3;
  int activations = 64;  ///< rows per location
  int locations = 1;
};

enum class PolePolicy {
  Clamp,   ///< θ ∈ {0°, 180°} → α = ±(1 - 1e-9), cell flagged
  Reject,  ///< let the slice reject the pole; every token records an error
};

struct SweepConfig {
  std::vector<double> theta_deg;
  std::vector<std::string> methods;  ///< subset of coast, slerp, kkt, actadd, angular
  std::vector<double> actadd_coefficients;
  std::vector<std::uint64_t> seeds;
  InstanceSpec instance;
  double eta = 0.3;
  int iters = 1;
  PolePolicy pole_policy = PolePolicy::Clamp;
  bool actadd_renormalize = true;
  bool keep_outputs = false;  ///< retain steered rows for auditing

  /// Every problem found, one message per bad field; empty when valid.
  std::vector<std::string> problems() const;
};

/// A steering problem set for one seed: per-location specs and activations.
struct SyntheticInstance {
  std::vector<SteeringSpec> specs;
  std::vector<ActivationBatch> activations;
};

SyntheticInstance make_synthetic(const InstanceSpec &spec, std::uint64_t seed);

/// Unit vector in the plane of d and Σ's dominant direction, orthogonal to d
/// (the fixed second axis of the angular-steering baseline).
UnitVector angular_plane_axis(const SteeringSpec &spec);

struct SweepRow {
  std::string method;
  std::string param_kind;  ///< "theta" or "coefficient"
  double param = 0.0;      ///< degrees or ActAdd coefficient
  double alpha = 0.0;      ///< budget used (NaN for actadd)
  std::uint64_t seed = 0;
  std::string location;
  Index tokens = 0;
  double mean_damage = 0.0;
  double max_damage = 0.0;
  double mean_alignment = 0.0;
  Index feasibility_violations = 0;
  Index error_count = 0;
  std::string error_name;  ///< first error seen in the cell, or empty
  bool pole_clamped = false;
  /// η ≤ 1/L for this location (L from `lipschitz_bound`).
  bool eta_within_bound = true;
  /// COAST rows only: max over tokens of J_coast - J_slerp.
  double max_excess_over_slerp = 0.0;
  double wall_seconds = 0.0;  ///< not serialised to CSV (non-deterministic)
  RowMatrix outputs;          ///< unit steered rows when keep_outputs
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

/// Steers every activation with every method at every grid value. Errors
/// inside a cell are counted in the row, not thrown. Cells run on `threads`
/// workers and are merged in grid order, so output is deterministic.
SweepReport run_sweep(const SweepConfig &cfg,
                      const std::vector<SteeringSpec> &specs,
                      const std::vector<ActivationBatch> &activations,
                      std::uint64_t seed, int threads = 1);

/// run_sweep over all configured seeds using the synthetic generator.
SweepReport run_synthetic_sweep(const SweepConfig &cfg, int threads = 1);

/// Fixed column order, documented in the README.
const std::vector<std::string> &sweep_csv_columns();
void write_sweep_csv(const SweepReport &report, std::ostream &out);

/// Largest |stored damage - damage recomputed from stored outputs| over
/// all rows that kept outputs (mean and max both checked).
double audit_sweep(const SweepReport &report, const SweepConfig &cfg,
                   const std::vector<SyntheticInstance> &instances);

struct AgreementInstance {
  UnitVector h;
  BudgetSlice slice;
  CollateralMatrix sigma;
};

struct AgreementRow {
  double j_coast = 0.0;
  double j_kkt = 0.0;
  double j_slerp = 0.0;
  std::optional<double> j_oracle;
  double coast_kkt_gap = 0.0;    ///< |J_coast - J_kkt|
  double kkt_oracle_gap = 0.0;   ///< J_kkt - J_oracle (signed; > 0 means oracle wins)
  double coast_kkt_dist = 0.0;   ///< ‖x_coast - x_kkt‖
  std::string error;             ///< solver failure, if any
};

struct AgreementSummary {
  std::vector<AgreementRow> rows;
  int instances = 0;
  int coast_kkt_agree = 0;
  int kkt_oracle_agree = 0;  ///< J_kkt <= J_oracle + tol
  int oracle_compared = 0;
  int failures = 0;
};

AgreementSummary agreement_report(const std::vector<AgreementInstance> &instances,
                                  double tol, const SolverConfig &coast_cfg,
                                  int oracle_resolution = 2048);

}  // namespace coast
