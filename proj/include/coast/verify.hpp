#pragma once

#include <string>
#include <vector>

namespace coast {

struct PropertyFailure {
  std::string suite;
  std::string property;
  int seed = 0;
  std::string detail;
};

struct VerifyReport {
  std::string suite;
  int seeds = 0;
  int checks = 0;
  std::vector<PropertyFailure> failures;
  /// Non-fatal observations (e.g. a tolerated, flagged convergence miss).
  std::vector<std::string> notes;

  bool passed() const { return failures.empty(); }
};

struct VerifyOptions {
  int seeds = 100;
  /// Added antisymmetrically to Σ before validation (negative control).
  double inject_asymmetry = 0.0;
};

/// Suites: "manifold", "solvers", "kkt-oracle", "convergence".
/// Throws InvalidArgument for an unknown suite name.
VerifyReport run_verify_suite(const std::string &suite, const VerifyOptions &opts);

const std::vector<std::string> &verify_suite_names();

}  // namespace coast
