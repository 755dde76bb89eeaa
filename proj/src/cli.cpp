#include "coast/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "coast/bench.hpp"
#include "coast/error.hpp"
#include "coast/estimation.hpp"
#include "coast/parallel.hpp"
#include "coast/tensor_file.hpp"
#include "coast/verify.hpp"

namespace coast::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Raised for property failures (exit 1) that are not library errors.
struct PropertyFailed {};

// ---------------------------------------------------------------------------
// Shared helpers

CollateralMatrix load_sigma(const std::string &path, bool normalize) {
  try {
    auto sigma = CollateralMatrix::from_matrix(read_tensor(path).to_matrix());
    return normalize ? sigma.normalized_copy() : sigma;
  } catch (const Error &e) {
    throw e.with_context(path);
  }
}

UnitVector load_unit(const std::string &path) {
  try {
    return UnitVector::from(read_tensor(path).to_vector());
  } catch (const Error &e) {
    throw e.with_context(path);
  }
}

ActivationBatch load_batch(const std::string &path, const std::string &location) {
  ActivationBatch b;
  b.rows = read_tensor(path).to_rows();
  b.location_id = location;
  try {
    b.validate();
  } catch (const Error &e) {
    throw e.with_context(path);
  }
  return b;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

/// JSON number, or null for NaN/inf (JSON has no representation for them).
ordered_json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

/// Echo of every option of a subcommand, resolved to its final value.
ordered_json config_echo(const CLI::App &sub) {
  ordered_json cfg = ordered_json::object();
  for (const CLI::Option *opt : sub.get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name()
                                                       : opt->get_lnames().front();
    if (name == "help" || name.empty()) continue;
    if (opt->get_type_size() == 0) {  // flag
      cfg[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto &res = opt->results();
      cfg[name] = res.size() == 1 ? ordered_json(res.front()) : ordered_json(res);
    } else {
      const std::string def = opt->get_default_str();
      cfg[name] = def.empty() ? ordered_json(nullptr) : ordered_json(def);
    }
  }
  return cfg;
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  ordered_json config;
  std::vector<std::pair<std::string, std::string>> inputs;   // role, path
  std::vector<std::pair<std::string, std::string>> outputs;  // role, path
  ordered_json seed = nullptr;
  int threads = 1;

  void write(const fs::path &path) const {
    ordered_json j;
    j["tool"] = "coast";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["cwd"] = fs::current_path().string();
    j["config"] = config;
    ordered_json in = ordered_json::object();
    for (const auto &[role, p] : inputs) {
      in[role] = {{"path", p}, {"fnv1a64", file_digest(p)}};
    }
    j["inputs"] = in;
    ordered_json out = ordered_json::object();
    for (const auto &[role, p] : outputs) {
      out[role] = {{"path", p}, {"fnv1a64", file_digest(p)}};
    }
    j["outputs"] = out;
    j["seed"] = seed;
    j["threads"] = threads;
    j["timestamp"] = utc_timestamp();
    write_text(path, j.dump(2) + "\n");
  }
};

std::string manifest_path_for(const std::string &output) { return output + ".manifest.json"; }

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string activations, out_sigma, weights, dictionary, location = "default";
};

int cmd_estimate(const EstimateArgs &a, int threads, Manifest m, std::ostream &out) {
  CollateralMatrix sigma = [&] {
    if (!a.dictionary.empty() || !a.weights.empty()) {
      if (a.dictionary.empty() || a.weights.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "--dictionary and --weights must be given together");
      }
      const Matrix dict = read_tensor(a.dictionary).to_matrix();
      const Vector w = read_tensor(a.weights).to_vector();
      m.inputs.push_back({"dictionary", a.dictionary});
      m.inputs.push_back({"weights", a.weights});
      return build_weighted_sigma(dict, w).normalized_copy();
    }
    const ActivationBatch batch = load_batch(a.activations, a.location);
    return estimate_second_moment(batch, threads);
  }();
  m.inputs.insert(m.inputs.begin(), {"activations", a.activations});
  write_tensor(a.out_sigma, Tensor::from(sigma.matrix()));
  m.outputs.push_back({"sigma", a.out_sigma});
  m.write(manifest_path_for(a.out_sigma));

  const auto &vals = sigma.eig().values;
  out << "sigma: " << sigma.dim() << "x" << sigma.dim()
      << ", normalised to spectral norm 1\n";
  out << "top eigenvalues:";
  out << std::setprecision(10);
  for (Index i = 0; i < std::min<Index>(10, vals.size()); ++i) out << ' ' << vals[i];
  out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// direction

int cmd_direction(const std::string &harmful, const std::string &harmless,
                  const std::string &out_path, Manifest m, std::ostream &out) {
  const auto hb = load_batch(harmful, "harmful");
  const auto lb = load_batch(harmless, "harmless");
  const UnitVector d = build_direction(hb, lb);
  write_tensor(out_path, Tensor::from(d.coords()));
  m.inputs = {{"harmful", harmful}, {"harmless", harmless}};
  m.outputs = {{"direction", out_path}};
  m.write(manifest_path_for(out_path));
  out << "direction: p = " << d.dim() << ", written to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// solve

struct SolveArgs {
  std::string method, h, d, sigma, out, diagnostics, q;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double eta = 0.3;
  int iters = 1;
  double grad_tol = 1e-10;
  bool adaptive = false;
  bool preserve_norm = false;
  bool raw_sigma = false;
  double coefficient = 1.0;
  bool no_renormalize = false;
  double theta_deg = std::numeric_limits<double>::quiet_NaN();
  int resolution = 2048;
  bool curvature_safe = false;
};

int cmd_solve(const SolveArgs &a, int threads, Manifest m, std::ostream &out) {
  const bool needs_sigma = a.method == "coast" || a.method == "kkt" || a.method == "oracle";
  if (needs_sigma && a.sigma.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--sigma is required for method " + a.method);
  }
  const bool needs_alpha = a.method != "actadd" &&
                           !(a.method == "angular" && !std::isnan(a.theta_deg));
  if (needs_alpha && std::isnan(a.alpha)) {
    throw Error(ErrorCode::InvalidArgument, "--alpha is required for method " + a.method);
  }

  const RowMatrix H = read_tensor(a.h).to_rows();
  const bool batch_input = read_tensor(a.h).rank() == 2;
  const UnitVector d = load_unit(a.d);
  std::optional<CollateralMatrix> sigma;
  if (!a.sigma.empty()) sigma = load_sigma(a.sigma, !a.raw_sigma);
  m.inputs = {{"h", a.h}, {"d", a.d}};
  if (!a.sigma.empty()) m.inputs.push_back({"sigma", a.sigma});
  if (!a.q.empty()) m.inputs.push_back({"q", a.q});
  if (H.cols() != d.dim() || (sigma && sigma->dim() != d.dim())) {
    throw Error(ErrorCode::DimensionMismatch, "h, d and sigma dimensions differ");
  }

  SolverConfig cfg(a.eta, a.iters);
  cfg.grad_tol = a.grad_tol;
  if (a.curvature_safe) cfg.step_rule = StepRule::CurvatureSafe;
  cfg.validate();

  const Index n = H.rows();
  RowMatrix X(n, H.cols());
  ordered_json rows = ordered_json::array();
  ordered_json diag;
  diag["method"] = a.method;
  diag["tokens"] = n;
  double sum_damage = 0.0;

  if (a.preserve_norm) {
    const SteerMethod sm = parse_steer_method(a.method);
    if (!sigma) throw Error(ErrorCode::InvalidArgument, "--preserve-norm needs --sigma");
    if (!sigma->normalized()) sigma = sigma->normalized_copy();
    SteeringSpec spec{d, *sigma, "cli", a.alpha};
    spec.validate();
    ActivationBatch batch{H, "cli"};
    const auto res = steer_batch(batch, spec, sm, cfg, a.adaptive, threads);
    X = res.output;
    for (Index i = 0; i < n; ++i) {
      const Vector xo = X.row(i).transpose();
      const double hn = H.row(i).norm();
      ordered_json r;
      r["damage"] = jnum(res.damage[i]);
      r["alpha"] = jnum(res.alpha[i]);
      r["norm_residual"] = jnum(std::abs(xo.norm() - hn) / hn);
      r["alignment_residual"] = jnum(std::abs(d.coords().dot(xo) / xo.norm() - res.alpha[i]));
      rows.push_back(r);
      sum_damage += res.damage[i];
    }
    diag["passthrough"] = res.passthrough_count;
  } else {
    std::optional<UnitVector> q;
    if (a.method == "angular") {
      if (!a.q.empty()) {
        q = load_unit(a.q);
      } else if (sigma) {
        q = angular_plane_axis(SteeringSpec{d, *sigma, "cli", 0.0});
      } else {
        throw Error(ErrorCode::InvalidArgument, "angular steering needs --q or --sigma");
      }
    }
    for (Index i = 0; i < n; ++i) {
      try {
        const UnitVector h = UnitVector::from(H.row(i).transpose());
        ordered_json r;
        double alpha = a.alpha;
        if (a.adaptive && needs_alpha) alpha = a.alpha * std::abs(h.dot(d));
        Vector x;
        double j = std::numeric_limits<double>::quiet_NaN();
        if (a.method == "actadd") {
          x = actadd_solve(h, d, a.coefficient, !a.no_renormalize);
        } else if (a.method == "angular") {
          const double th = std::isnan(a.theta_deg) ? std::acos(std::clamp(alpha, -1.0, 1.0))
                                                    : a.theta_deg * std::numbers::pi / 180.0;
          x = angular_solve(h, d, *q, th).coords();
        } else {
          const BudgetSlice slice = BudgetSlice::make(d, alpha);
          SolveResult res = [&]() -> SolveResult {
            if (a.method == "slerp") return slerp_solve(h, slice, sigma ? &*sigma : nullptr);
            if (a.method == "coast") return coast_solve(h, slice, *sigma, cfg);
            if (a.method == "oracle") return oracle_solve(h, slice, *sigma, a.resolution);
            auto sol = kkt_solve(h, slice, *sigma);
            ordered_json roots = ordered_json::array();
            for (const auto &root : sol.diagnostics.roots_found) {
              roots.push_back({{"lambda", root.lambda}, {"mu", root.mu},
                               {"damage", root.damage}, {"residual", root.residual}});
            }
            r["kkt"] = {{"roots", roots},
                        {"intervals_searched", sol.diagnostics.intervals_searched},
                        {"chosen_root", sol.diagnostics.chosen_root},
                        {"rejected_candidates", sol.diagnostics.rejected_candidates},
                        {"hard_case_fallback", sol.diagnostics.hard_case_fallback}};
            return std::move(sol.result);
          }();
          x = res.x.coords();
          j = res.damage;
          r["iterations"] = res.iterations_used;
          r["grad_norm"] = jnum(res.grad_norm_final);
          r["residual_norm"] = jnum(res.residuals.norm);
          r["residual_alignment"] = jnum(res.residuals.alignment);
        }
        if (std::isnan(j) && sigma) j = damage(x, h.coords(), *sigma).value;
        r["alpha"] = jnum(needs_alpha ? alpha : std::numeric_limits<double>::quiet_NaN());
        r["damage"] = jnum(j);
        r["alignment"] = jnum(d.coords().dot(x) / x.norm());
        X.row(i) = x.transpose();
        if (!std::isnan(j)) sum_damage += j;
        rows.push_back(r);
      } catch (const Error &e) {
        std::ostringstream os;
        os << "token " << i;
        throw e.with_context(os.str());
      }
    }
  }

  if (batch_input) {
    write_tensor(a.out, Tensor::from(X));
  } else {
    write_tensor(a.out, Tensor::from(Vector(X.row(0).transpose())));
  }
  diag["mean_damage"] = jnum(n > 0 ? sum_damage / static_cast<double>(n) : 0.0);
  diag["results"] = rows;
  const std::string text = diag.dump(2) + "\n";
  if (!a.diagnostics.empty()) {
    write_text(a.diagnostics, text);
  } else {
    out << text;
  }
  m.outputs = {{"steered", a.out}};
  if (!a.diagnostics.empty()) m.outputs.push_back({"diagnostics", a.diagnostics});
  m.write(manifest_path_for(a.out));
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepInput {
  std::string location, activations, direction, sigma;
};

/// Parses and validates a sweep configuration; every problem is collected
/// before failing so the user sees all of them at once.
SweepConfig parse_sweep_config(const json &j, std::vector<SweepInput> &inputs) {
  std::vector<std::string> bad;
  SweepConfig cfg;
  if (!j.is_object()) throw Error(ErrorCode::Format, "sweep config must be a JSON object");

  auto number_list = [&](const char *key, std::vector<double> &dst) {
    if (!j.contains(key)) return;
    const auto &v = j.at(key);
    if (!v.is_array()) {
      bad.push_back(std::string(key) + ": expected an array of numbers");
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        bad.push_back(std::string(key) + "[" + std::to_string(i) + "]: expected a number");
      } else {
        dst.push_back(v[i].get<double>());
      }
    }
  };
  static const std::vector<std::string> known = {
      "theta_deg", "methods", "actadd_coefficients", "seeds", "instance", "eta",
      "iters", "pole_policy", "actadd_renormalize", "keep_outputs", "inputs"};
  for (const auto &[key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      bad.push_back(key + ": unknown field");
    }
  }
  number_list("theta_deg", cfg.theta_deg);
  number_list("actadd_coefficients", cfg.actadd_coefficients);
  if (j.contains("methods")) {
    const auto &v = j.at("methods");
    if (!v.is_array()) {
      bad.push_back("methods: expected an array of strings");
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i].is_string()) cfg.methods.push_back(v[i].get<std::string>());
        else bad.push_back("methods[" + std::to_string(i) + "]: expected a string");
      }
    }
  }
  if (j.contains("seeds")) {
    const auto &v = j.at("seeds");
    if (!v.is_array()) {
      bad.push_back("seeds: expected an array of non-negative integers");
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i].is_number_unsigned()) cfg.seeds.push_back(v[i].get<std::uint64_t>());
        else bad.push_back("seeds[" + std::to_string(i) + "]: expected a non-negative integer");
      }
    }
  }
  auto scalar = [&](const json &obj, const std::string &prefix, const char *key, auto &dst) {
    if (!obj.contains(key)) return;
    const auto &v = obj.at(key);
    using T = std::decay_t<decltype(dst)>;
    if constexpr (std::is_same_v<T, bool>) {
      if (v.is_boolean()) dst = v.get<bool>();
      else bad.push_back(prefix + key + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (v.is_string()) dst = v.get<std::string>();
      else bad.push_back(prefix + key + ": expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (v.is_number_integer()) dst = v.get<T>();
      else bad.push_back(prefix + key + ": expected an integer");
    } else {
      if (v.is_number()) dst = v.get<T>();
      else bad.push_back(prefix + key + ": expected a number");
    }
  };
  scalar(j, "", "eta", cfg.eta);
  scalar(j, "", "iters", cfg.iters);
  scalar(j, "", "actadd_renormalize", cfg.actadd_renormalize);
  scalar(j, "", "keep_outputs", cfg.keep_outputs);
  std::string pole = "clamp";
  scalar(j, "", "pole_policy", pole);
  if (pole == "clamp") cfg.pole_policy = PolePolicy::Clamp;
  else if (pole == "reject") cfg.pole_policy = PolePolicy::Reject;
  else bad.push_back("pole_policy: must be 'clamp' or 'reject'");

  if (j.contains("instance")) {
    const auto &in = j.at("instance");
    if (!in.is_object()) {
      bad.push_back("instance: expected an object");
    } else {
      static const std::vector<std::string> ikeys = {
          "p", "profile", "gamma", "clusters", "features_per_cluster",
          "cluster_spread", "activations", "locations"};
      for (const auto &[key, _] : in.items()) {
        if (std::find(ikeys.begin(), ikeys.end(), key) == ikeys.end()) {
          bad.push_back("instance." + key + ": unknown field");
        }
      }
      auto &is = cfg.instance;
      scalar(in, "instance.", "p", is.p);
      scalar(in, "instance.", "profile", is.profile);
      scalar(in, "instance.", "gamma", is.gamma);
      scalar(in, "instance.", "clusters", is.clusters);
      scalar(in, "instance.", "features_per_cluster", is.features_per_cluster);
      scalar(in, "instance.", "cluster_spread", is.cluster_spread);
      scalar(in, "instance.", "activations", is.activations);
      scalar(in, "instance.", "locations", is.locations);
    }
  }
  if (j.contains("inputs")) {
    const auto &v = j.at("inputs");
    if (!v.is_array()) {
      bad.push_back("inputs: expected an array of objects");
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string pre = "inputs[" + std::to_string(i) + "].";
        SweepInput si;
        if (!v[i].is_object()) {
          bad.push_back(pre.substr(0, pre.size() - 1) + ": expected an object");
          continue;
        }
        for (const char *key : {"location", "activations", "direction", "sigma"}) {
          if (!v[i].contains(key)) bad.push_back(pre + key + ": required");
        }
        scalar(v[i], pre, "location", si.location);
        scalar(v[i], pre, "activations", si.activations);
        scalar(v[i], pre, "direction", si.direction);
        scalar(v[i], pre, "sigma", si.sigma);
        inputs.push_back(si);
      }
    }
  }
  for (auto &p : cfg.problems()) bad.push_back(std::move(p));
  if (!bad.empty()) {
    std::string msg = "invalid sweep configuration (" + std::to_string(bad.size()) + " problem" +
                      (bad.size() == 1 ? "" : "s") + "):";
    for (const auto &b : bad) msg += "\n  - " + b;
    throw Error(ErrorCode::InvalidArgument, msg);
  }
  return cfg;
}

ordered_json sweep_summary(const SweepReport &rep, bool timing) {
  ordered_json s;
  s["rows"] = rep.rows.size();
  // Dominance audit: every COAST cell against the SLERP start of each token.
  std::size_t coast_cells = 0, violations = 0, pole_violations = 0;
  double worst = 0.0;
  for (const auto &r : rep.rows) {
    if (r.method != "coast" || !r.eta_within_bound) continue;
    ++coast_cells;
    worst = std::max(worst, r.max_excess_over_slerp);
    if (r.max_excess_over_slerp > 1e-12) {
      ++violations;
      if (r.pole_clamped) ++pole_violations;
    }
  }
  s["coast_dominates_slerp"] = {{"cells_checked", coast_cells},
                                {"violations", violations},
                                {"violations_in_pole_cells", pole_violations},
                                {"worst_excess", worst}};
  // Per-method aggregates.
  std::map<std::string, std::pair<double, std::size_t>> agg;
  std::size_t errors = 0, infeasible = 0;
  double total_time = 0.0;
  for (const auto &r : rep.rows) {
    if (std::isfinite(r.mean_damage)) {
      agg[r.method].first += r.mean_damage;
      agg[r.method].second += 1;
    }
    errors += static_cast<std::size_t>(r.error_count);
    infeasible += static_cast<std::size_t>(r.feasibility_violations);
    total_time += r.wall_seconds;
  }
  ordered_json methods = ordered_json::object();
  for (const auto &[name, v] : agg) {
    methods[name] = {{"cells", v.second},
                     {"mean_of_mean_damage", v.second ? v.first / v.second : 0.0}};
  }
  s["methods"] = methods;
  s["error_count"] = errors;
  s["feasibility_violations"] = infeasible;
  if (timing) {
    ordered_json t = ordered_json::array();
    for (const auto &r : rep.rows) {
      t.push_back({{"method", r.method}, {"param", r.param}, {"seed", r.seed},
                   {"location", r.location}, {"wall_seconds", r.wall_seconds}});
    }
    s["timing"] = {{"total_wall_seconds", total_time}, {"cells", t}};
  }
  return s;
}

int cmd_sweep(const std::string &config_path, const std::string &out_dir, bool timing,
              int threads, Manifest m, std::ostream &out) {
  std::ifstream in(config_path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + config_path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw Error(ErrorCode::Format, config_path + ": " + e.what());
  }
  std::vector<SweepInput> inputs;
  const SweepConfig cfg = parse_sweep_config(j, inputs);
  fs::create_directories(out_dir);
  m.inputs = {{"config", config_path}};
  m.seed = cfg.seeds;

  SweepReport rep;
  if (inputs.empty()) {
    rep = run_synthetic_sweep(cfg, threads);
  } else {
    std::vector<SteeringSpec> specs;
    std::vector<ActivationBatch> acts;
    for (const auto &si : inputs) {
      specs.push_back({load_unit(si.direction), load_sigma(si.sigma, true), si.location, 0.0});
      acts.push_back(load_batch(si.activations, si.location));
      m.inputs.push_back({si.location + ".activations", si.activations});
      m.inputs.push_back({si.location + ".direction", si.direction});
      m.inputs.push_back({si.location + ".sigma", si.sigma});
    }
    for (auto seed : cfg.seeds) {
      auto part = run_sweep(cfg, specs, acts, seed, threads);
      for (auto &r : part.rows) rep.rows.push_back(std::move(r));
    }
  }

  const fs::path csv = fs::path(out_dir) / "sweep.csv";
  {
    std::ofstream f(csv, std::ios::trunc);
    if (!f) throw Error(ErrorCode::Io, "cannot open '" + csv.string() + "'");
    write_sweep_csv(rep, f);
  }
  const fs::path summary = fs::path(out_dir) / "summary.json";
  write_text(summary, sweep_summary(rep, timing).dump(2) + "\n");
  m.outputs = {{"csv", csv.string()}, {"summary", summary.string()}};
  if (cfg.keep_outputs) {
    const fs::path cells = fs::path(out_dir) / "cells";
    fs::create_directories(cells);
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
      std::ostringstream name;
      name << std::setw(5) << std::setfill('0') << k << ".coast";
      const fs::path p = cells / name.str();
      write_tensor(p, Tensor::from(rep.rows[k].outputs));
      m.outputs.push_back({"cell" + std::to_string(k), p.string()});
    }
  }
  m.write(fs::path(out_dir) / "manifest.json");
  out << "sweep: " << rep.rows.size() << " rows written to " << csv.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string &suite, int seeds, double asym, std::ostream &out) {
  VerifyOptions opts;
  opts.seeds = seeds > 0 ? seeds : (suite == "convergence" ? 50 : 100);
  opts.inject_asymmetry = asym;
  const auto rep = run_verify_suite(suite, opts);
  ordered_json j;
  j["suite"] = rep.suite;
  j["seeds"] = rep.seeds;
  j["checks"] = rep.checks;
  j["passed"] = rep.passed();
  ordered_json fails = ordered_json::array();
  for (const auto &f : rep.failures) {
    fails.push_back({{"property", f.property}, {"seed", f.seed}, {"detail", f.detail}});
  }
  j["failures"] = fails;
  j["notes"] = rep.notes;
  out << j.dump(2) << "\n";
  return rep.passed() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// convert

int cmd_convert(const std::string &in, const std::string &outp, bool rank1, std::ostream &out) {
  auto is_csv = [](const std::string &p) { return fs::path(p).extension() == ".csv"; };
  if (is_csv(in) && !is_csv(outp)) {
    const RowMatrix m = read_csv_matrix(in);
    if (rank1) {
      if (m.rows() != 1 && m.cols() != 1) {
        throw Error(ErrorCode::Format, "--rank1 needs a single row or column");
      }
      write_tensor(outp, Tensor::from(Vector(Eigen::Map<const Vector>(m.data(), m.size()))));
    } else {
      write_tensor(outp, Tensor::from(m));
    }
  } else if (!is_csv(in) && is_csv(outp)) {
    write_csv_matrix(outp, read_tensor(in).to_rows());
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "convert needs exactly one side to be a .csv file");
  }
  out << "converted " << in << " -> " << outp << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// replay

int cmd_replay(const std::string &manifest_path, std::ostream &out, std::ostream &err) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + manifest_path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw Error(ErrorCode::Format, manifest_path + ": " + e.what());
  }
  if (!j.contains("argv") || !j.contains("outputs") || !j.contains("cwd")) {
    throw Error(ErrorCode::Format, manifest_path + ": not a run manifest");
  }
  const auto recorded = j.at("argv").get<std::vector<std::string>>();
  // Replays are single-threaded whatever the original run used.
  std::vector<std::string> argv = {"--threads", "1"};
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    if (recorded[i] == "--threads") {
      ++i;
    } else if (recorded[i].rfind("--threads=", 0) != 0) {
      argv.push_back(recorded[i]);
    }
  }
  std::map<std::string, std::string> expected;
  for (const auto &[role, o] : j.at("outputs").items()) {
    expected[o.at("path").get<std::string>()] = o.at("fnv1a64").get<std::string>();
  }
  const fs::path here = fs::current_path();
  fs::current_path(j.at("cwd").get<std::string>());
  std::ostringstream sink;
  int code = 0;
  try {
    code = run(argv, sink, err);
  } catch (...) {
    fs::current_path(here);
    throw;
  }
  int mismatches = 0;
  for (const auto &[path, digest] : expected) {
    const std::string now = fs::exists(path) ? file_digest(path) : std::string("missing");
    const bool same = now == digest;
    mismatches += same ? 0 : 1;
    out << (same ? "identical " : "DIFFERENT ") << path << "\n";
  }
  fs::current_path(here);
  if (code != 0) return code;
  return mismatches == 0 ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Collateral-damage minimising activation steering", "coast"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  int threads = 0;
  app.add_option("--threads", threads,
                 "Worker threads for batch work (default: COAST_THREADS or 1)");

  EstimateArgs est;
  auto *estimate = app.add_subcommand("estimate", "Estimate a normalised collateral matrix");
  estimate->add_option("--activations", est.activations, "n x p activation tensor")->required();
  estimate->add_option("--out-sigma", est.out_sigma, "Output p x p tensor")->required();
  estimate->add_option("--dictionary", est.dictionary, "p x m unit-feature dictionary");
  estimate->add_option("--weights", est.weights, "m non-negative feature weights");
  estimate->add_option("--location", est.location, "Location label for messages");

  std::string harmful, harmless, dir_out;
  auto *direction = app.add_subcommand("direction", "Difference-in-means steering direction");
  direction->add_option("--harmful", harmful)->required();
  direction->add_option("--harmless", harmless)->required();
  direction->add_option("--out", dir_out)->required();

  SolveArgs sa;
  auto *solve = app.add_subcommand("solve", "Steer one activation or a batch");
  // `--h` names the activation, so help is reachable only as --help here.
  solve->set_help_flag("--help", "Print this help message and exit");
  solve->add_option("--method", sa.method)
      ->required()
      ->check(CLI::IsMember({"coast", "slerp", "kkt", "actadd", "angular", "oracle"}));
  solve->add_option("--h", sa.h, "Activation(s): rank-1 or rank-2 tensor")->required();
  solve->add_option("--d", sa.d, "Unit steering direction")->required();
  solve->add_option("--sigma", sa.sigma, "Collateral matrix (normalised on load)");
  solve->add_option("--alpha", sa.alpha, "Alignment budget in (-1, 1)");
  solve->add_option("--eta", sa.eta, "Step size")->capture_default_str();
  solve->add_option("--iters", sa.iters, "Iteration budget T")->capture_default_str();
  solve->add_option("--grad-tol", sa.grad_tol, "Stop when |grad| falls below")
      ->capture_default_str();
  solve->add_flag("--adaptive", sa.adaptive, "Use alpha * |<h, d>| per token");
  solve->add_flag("--preserve-norm", sa.preserve_norm, "Steer h/|h| and rescale by |h|");
  solve->add_flag("--raw-sigma", sa.raw_sigma, "Do not normalise sigma by its top eigenvalue");
  solve->add_flag("--curvature-safe", sa.curvature_safe,
                  "Cap the COAST step at 1/L_geo (slice-curvature-aware bound)");
  solve->add_option("--coef", sa.coefficient, "ActAdd coefficient")->capture_default_str();
  solve->add_flag("--no-renormalize", sa.no_renormalize, "ActAdd: keep h + c d unnormalised");
  solve->add_option("--theta-deg", sa.theta_deg, "Angular: target angle from d in degrees");
  solve->add_option("--q", sa.q, "Angular: second plane axis (default from sigma)");
  solve->add_option("--resolution", sa.resolution, "Oracle grid points per angle")
      ->capture_default_str();
  solve->add_option("--out", sa.out)->required();
  solve->add_option("--diagnostics", sa.diagnostics, "Write diagnostics JSON here");

  std::string sweep_cfg, sweep_out;
  bool timing = false;
  auto *sweep = app.add_subcommand("sweep", "Run a steering-strength sweep");
  sweep->add_option("--config", sweep_cfg)->required();
  sweep->add_option("--out-dir", sweep_out)->required();
  sweep->add_flag("--timing", timing, "Include wall times in summary.json");

  std::string suite;
  int seeds = 0;
  double asym = 0.0;
  auto *verify = app.add_subcommand("verify", "Run a property suite");
  verify->add_option("--suite", suite)
      ->required()
      ->check(CLI::IsMember(verify_suite_names()));
  verify->add_option("--seeds", seeds, "Number of seeds (default 100; 50 for convergence)");
  verify->add_option("--inject-asymmetry", asym, "Negative control: perturb sigma");

  std::string conv_in, conv_out;
  bool rank1 = false;
  auto *convert = app.add_subcommand("convert", "Convert between CSV and tensor files");
  convert->add_option("--in", conv_in)->required();
  convert->add_option("--out", conv_out)->required();
  convert->add_flag("--rank1", rank1, "CSV input is a single vector");

  std::string manifest;
  auto *replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
  replay->add_option("--manifest", manifest)->required();

  std::vector<std::string> argv_store = {"coast"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const int nthreads = resolve_threads(threads);
  auto manifest_for = [&](const CLI::App *sub) {
    Manifest m;
    m.command = sub->get_name();
    m.argv = args;
    m.config = config_echo(*sub);
    m.threads = nthreads;
    return m;
  };

  try {
    if (*estimate) return cmd_estimate(est, nthreads, manifest_for(estimate), out);
    if (*direction) return cmd_direction(harmful, harmless, dir_out, manifest_for(direction), out);
    if (*solve) return cmd_solve(sa, nthreads, manifest_for(solve), out);
    if (*sweep) return cmd_sweep(sweep_cfg, sweep_out, timing, nthreads, manifest_for(sweep), out);
    if (*verify) return cmd_verify(suite, seeds, asym, out);
    if (*convert) return cmd_convert(conv_in, conv_out, rank1, out);
    if (*replay) return cmd_replay(manifest, out, err);
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error &e) {
    err << "error: Io: " << e.what() << "\n";
    return 2;
  } catch (const json::exception &e) {
    err << "error: Format: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace coast::cli
