#include "coast/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "coast/error.hpp"
#include "coast/parallel.hpp"

namespace coast {

namespace {

constexpr double kPoleClamp = 1e-9;

bool budget_method(const std::string &m) {
  return m == "coast" || m == "slerp" || m == "kkt";
}

Vector gaussian(std::mt19937_64 &rng, Index p) {
  std::normal_distribution<double> n01;
  Vector v(p);
  for (Index i = 0; i < p; ++i) v[i] = n01(rng);
  return v;
}

CollateralMatrix make_sigma(const InstanceSpec &spec, std::mt19937_64 &rng) {
  const Index p = spec.p;
  if (spec.profile == "decay") {
    Vector diag(p);
    for (Index i = 0; i < p; ++i) diag[i] = std::pow(spec.gamma, static_cast<double>(i));
    return CollateralMatrix::psd_by_construction(Matrix(diag.asDiagonal()))
        .normalized_copy();
  }
  const int k = spec.clusters;
  const int m = spec.features_per_cluster;
  Matrix features(p, static_cast<Index>(k) * m);
  for (int c = 0; c < k; ++c) {
    const Vector center = gaussian(rng, p).normalized();
    for (int j = 0; j < m; ++j) {
      Vector f = center + spec.cluster_spread * gaussian(rng, p) / std::sqrt(double(p));
      features.col(static_cast<Index>(c) * m + j) = f.normalized();
    }
  }
  return build_weighted_sigma(features, Vector::Ones(features.cols()))
      .normalized_copy();
}

struct CellKey {
  std::size_t location;
  std::string method;
  bool theta;
  double param;
};

/// Steers all tokens of one location with one method at one grid value.
SweepRow run_cell(const SweepConfig &cfg, const SteeringSpec &spec,
                  const ActivationBatch &batch, const CellKey &key,
                  std::uint64_t seed, double inv_l) {
  const auto start = std::chrono::steady_clock::now();
  SweepRow row;
  row.method = key.method;
  row.param_kind = key.theta ? "theta" : "coefficient";
  row.param = key.param;
  row.seed = seed;
  row.location = spec.location_id;
  row.tokens = batch.rows.rows();
  row.eta_within_bound = cfg.eta <= inv_l;
  row.alpha = std::numeric_limits<double>::quiet_NaN();

  double alpha = 0.0;
  if (key.theta) {
    alpha = std::cos(key.param * std::numbers::pi / 180.0);
    if (key.param == 0.0) alpha = 1.0;
    if (key.param == 180.0) alpha = -1.0;
    if (std::abs(alpha) >= 1.0 - tol::kPole && cfg.pole_policy == PolePolicy::Clamp) {
      alpha = std::copysign(1.0 - kPoleClamp, alpha);
      row.pole_clamped = true;
    }
    row.alpha = alpha;
  }

  SolverConfig scfg(cfg.eta, cfg.iters);
  const Index n = batch.rows.rows();
  const Index p = batch.rows.cols();
  if (cfg.keep_outputs) row.outputs = RowMatrix::Constant(n, p, std::numeric_limits<double>::quiet_NaN());
  const Vector &d = spec.direction.coords();
  std::optional<UnitVector> q;
  if (key.method == "angular") q = angular_plane_axis(spec);

  double sum_damage = 0.0, sum_align = 0.0;
  Index ok = 0;
  for (Index i = 0; i < n; ++i) {
    try {
      const UnitVector h = UnitVector::normalize(batch.rows.row(i).transpose());
      Vector x;
      double j = 0.0;
      if (key.method == "actadd") {
        x = actadd_solve(h, spec.direction, key.param, cfg.actadd_renormalize);
        j = damage(x, h.coords(), spec.sigma).value;
      } else if (key.method == "angular") {
        x = angular_solve(h, spec.direction, *q, std::acos(alpha)).coords();
        j = damage(x, h.coords(), spec.sigma).value;
      } else {
        const BudgetSlice slice = BudgetSlice::make(spec.direction, alpha);
        SolveResult res = [&] {
          if (key.method == "slerp") return slerp_solve(h, slice, &spec.sigma);
          if (key.method == "kkt") return kkt_solve(h, slice, spec.sigma).result;
          return coast_solve(h, slice, spec.sigma, scfg);
        }();
        if (key.method == "coast") {
          const double js = damage(project_to_slice(h, slice).coords(), h.coords(),
                                   spec.sigma).value;
          row.max_excess_over_slerp =
              std::max(row.max_excess_over_slerp, res.damage - js);
        }
        if (res.residuals.max() > tol::kPrecondition) ++row.feasibility_violations;
        x = res.x.coords();
        j = res.damage;
      }
      if (cfg.keep_outputs) row.outputs.row(i) = x.transpose();
      row.max_damage = ok == 0 ? j : std::max(row.max_damage, j);
      sum_damage += j;
      sum_align += d.dot(x) / x.norm();
      ++ok;
    } catch (const Error &e) {
      if (row.error_count == 0) row.error_name = std::string(to_string(e.code()));
      ++row.error_count;
    }
  }
  if (ok > 0) {
    row.mean_damage = sum_damage / static_cast<double>(ok);
    row.mean_alignment = sum_align / static_cast<double>(ok);
  } else {
    row.mean_damage = row.max_damage = row.mean_alignment =
        std::numeric_limits<double>::quiet_NaN();
  }
  row.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start).count();
  return row;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::vector<std::string> SweepConfig::problems() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < theta_deg.size(); ++i) {
    const double t = theta_deg[i];
    if (!(t >= 0.0 && t <= 180.0)) {
      std::ostringstream os;
      os << "theta_deg[" << i << "] = " << t << " is outside [0, 180]";
      out.push_back(os.str());
    }
  }
  if (methods.empty()) out.push_back("methods: at least one method is required");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto &m = methods[i];
    if (!(budget_method(m) || m == "actadd" || m == "angular")) {
      out.push_back("methods[" + std::to_string(i) + "] = '" + m +
                    "' is not one of coast, slerp, kkt, actadd, angular");
    }
  }
  const bool wants_theta = std::any_of(methods.begin(), methods.end(), [](const auto &m) {
    return m != "actadd";
  });
  if (wants_theta && theta_deg.empty()) out.push_back("theta_deg: empty grid");
  const bool wants_coef = std::find(methods.begin(), methods.end(), "actadd") != methods.end();
  if (wants_coef && actadd_coefficients.empty()) {
    out.push_back("actadd_coefficients: required when actadd is selected");
  }
  if (seeds.empty()) out.push_back("seeds: at least one seed is required");
  if (!(eta > 0.0)) out.push_back("eta: must be positive");
  if (iters < 0) out.push_back("iters: must be >= 0");
  if (instance.p < 3) out.push_back("instance.p: must be >= 3");
  if (instance.profile != "decay" && instance.profile != "clustered") {
    out.push_back("instance.profile: must be 'decay' or 'clustered'");
  }
  if (instance.profile == "decay" && !(instance.gamma > 0.0 && instance.gamma <= 1.0)) {
    out.push_back("instance.gamma: must be in (0, 1]");
  }
  if (instance.clusters < 1) out.push_back("instance.clusters: must be >= 1");
  if (instance.features_per_cluster < 1) {
    out.push_back("instance.features_per_cluster: must be >= 1");
  }
  if (instance.activations < 1) out.push_back("instance.activations: must be >= 1");
  if (instance.locations < 1) out.push_back("instance.locations: must be >= 1");
  return out;
}

SyntheticInstance make_synthetic(const InstanceSpec &spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(5.0, 50.0);
  SyntheticInstance out;
  for (int loc = 0; loc < spec.locations; ++loc) {
    const std::string id = "L" + std::to_string(loc) + ".resid";
    CollateralMatrix sigma = make_sigma(spec, rng);
    const UnitVector d = UnitVector::normalize(gaussian(rng, spec.p));

    // Activations: a random mix of Σ-shaped signal, isotropic noise and a
    // d-component of random sign, at raw scales between 5 and 50.
    const auto &eig = sigma.eig();
    Vector sqrt_vals = eig.values.cwiseMax(0.0).cwiseSqrt();
    ActivationBatch batch;
    batch.location_id = id;
    batch.rows.resize(spec.activations, spec.p);
    for (int i = 0; i < spec.activations; ++i) {
      Vector z = gaussian(rng, spec.p);
      Vector h = eig.vectors * sqrt_vals.cwiseProduct(z);
      h += 0.3 * gaussian(rng, spec.p) / std::sqrt(double(spec.p));
      h += unif(rng) * h.norm() * d.coords();
      batch.rows.row(i) = (scale(rng) / h.norm()) * h.transpose();
    }
    out.specs.push_back(SteeringSpec{d, sigma, id, 0.0});
    out.activations.push_back(std::move(batch));
  }
  return out;
}

UnitVector angular_plane_axis(const SteeringSpec &spec) {
  const Vector &d = spec.direction.coords();
  const auto &eig = spec.sigma.eig();
  for (Index k = 0; k < eig.vectors.cols(); ++k) {
    Vector v = eig.vectors.col(k);
    v -= d.dot(v) * d;
    if (v.norm() > 1e-6) {
      v -= d.dot(v) * d;  // second pass for orthogonality to rounding
      return UnitVector::normalize(v);
    }
  }
  throw Error(ErrorCode::DegenerateDirection, "no eigenvector of sigma leaves the d axis");
}

SweepReport run_sweep(const SweepConfig &cfg,
                      const std::vector<SteeringSpec> &specs,
                      const std::vector<ActivationBatch> &activations,
                      std::uint64_t seed, int threads) {
  const auto problems = cfg.problems();
  if (!problems.empty()) {
    std::string msg = "invalid sweep configuration:";
    for (const auto &p : problems) msg += "\n  " + p;
    throw Error(ErrorCode::InvalidArgument, msg);
  }
  // Pair activations with specs by location id.
  std::map<std::string, std::size_t> spec_of;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    specs[k].validate();
    spec_of[specs[k].location_id] = k;
  }
  std::vector<std::size_t> pairing;
  for (const auto &b : activations) {
    auto it = spec_of.find(b.location_id);
    if (it == spec_of.end()) {
      throw Error(ErrorCode::MissingLocation,
                  "no steering spec for location '" + b.location_id + "'");
    }
    b.validate();
    pairing.push_back(it->second);
  }

  std::vector<double> inv_l(activations.size());
  std::vector<CellKey> cells;
  for (std::size_t a = 0; a < activations.size(); ++a) {
    const auto &spec = specs[pairing[a]];
    const BudgetSlice probe = BudgetSlice::make(spec.direction, 0.0);
    const double l = lipschitz_bound(spec.sigma, probe);  // independent of α
    inv_l[a] = l > 0.0 ? 1.0 / l : std::numeric_limits<double>::infinity();
    for (const auto &m : cfg.methods) {
      if (m == "actadd") {
        for (double c : cfg.actadd_coefficients) cells.push_back({a, m, false, c});
      } else {
        for (double t : cfg.theta_deg) cells.push_back({a, m, true, t});
      }
    }
  }

  SweepReport report;
  report.rows.resize(cells.size());
  parallel_for(cells.size(), resolve_threads(threads),
               [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto &key = cells[c];
      report.rows[c] = run_cell(cfg, specs[pairing[key.location]],
                                activations[key.location], key, seed,
                                inv_l[key.location]);
    }
  });
  return report;
}

SweepReport run_synthetic_sweep(const SweepConfig &cfg, int threads) {
  SweepReport all;
  for (std::uint64_t seed : cfg.seeds) {
    const auto inst = make_synthetic(cfg.instance, seed);
    auto rep = run_sweep(cfg, inst.specs, inst.activations, seed, threads);
    for (auto &r : rep.rows) all.rows.push_back(std::move(r));
  }
  return all;
}

const std::vector<std::string> &sweep_csv_columns() {
  static const std::vector<std::string> cols = {
      "method",         "param_kind",          "param",
      "alpha",          "seed",                "location",
      "tokens",         "mean_damage",         "max_damage",
      "mean_alignment", "feasibility_violations", "error_count",
      "error_name",     "pole_clamped",        "eta_within_bound",
      "max_excess_over_slerp"};
  return cols;
}

void write_sweep_csv(const SweepReport &report, std::ostream &out) {
  const auto &cols = sweep_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto &r : report.rows) {
    out << r.method << ',' << r.param_kind << ',' << fmt(r.param) << ','
        << fmt(r.alpha) << ',' << r.seed << ',' << r.location << ',' << r.tokens
        << ',' << fmt(r.mean_damage) << ',' << fmt(r.max_damage) << ','
        << fmt(r.mean_alignment) << ',' << r.feasibility_violations << ','
        << r.error_count << ',' << r.error_name << ',' << (r.pole_clamped ? 1 : 0)
        << ',' << (r.eta_within_bound ? 1 : 0) << ','
        << fmt(r.max_excess_over_slerp) << "\n";
  }
}

double audit_sweep(const SweepReport &report, const SweepConfig &cfg,
                   const std::vector<SyntheticInstance> &instances) {
  std::map<std::uint64_t, std::size_t> by_seed;
  for (std::size_t k = 0; k < cfg.seeds.size() && k < instances.size(); ++k) {
    by_seed[cfg.seeds[k]] = k;
  }
  double worst = 0.0;
  for (const auto &r : report.rows) {
    if (r.outputs.rows() == 0 || r.error_count > 0) continue;
    const auto &inst = instances.at(by_seed.at(r.seed));
    std::size_t loc = 0;
    while (inst.specs[loc].location_id != r.location) ++loc;
    const auto &spec = inst.specs[loc];
    const auto &rows = inst.activations[loc].rows;
    double sum = 0.0, mx = 0.0;
    for (Index i = 0; i < rows.rows(); ++i) {
      const Vector h = rows.row(i).transpose().normalized();
      const double j = damage(r.outputs.row(i).transpose(), h, spec.sigma).value;
      sum += j;
      mx = i == 0 ? j : std::max(mx, j);
    }
    worst = std::max(worst, std::abs(sum / rows.rows() - r.mean_damage));
    worst = std::max(worst, std::abs(mx - r.max_damage));
  }
  return worst;
}

AgreementSummary agreement_report(const std::vector<AgreementInstance> &instances,
                                  double tol, const SolverConfig &coast_cfg,
                                  int oracle_resolution) {
  AgreementSummary s;
  s.instances = static_cast<int>(instances.size());
  for (const auto &inst : instances) {
    AgreementRow row;
    try {
      const auto kkt = kkt_solve(inst.h, inst.slice, inst.sigma);
      const auto co = coast_solve(inst.h, inst.slice, inst.sigma, coast_cfg);
      const auto sl = slerp_solve(inst.h, inst.slice, &inst.sigma);
      row.j_kkt = kkt.result.damage;
      row.j_coast = co.damage;
      row.j_slerp = sl.damage;
      row.coast_kkt_gap = std::abs(co.damage - kkt.result.damage);
      row.coast_kkt_dist = (co.x.coords() - kkt.result.x.coords()).norm();
      if (row.coast_kkt_gap <= tol) ++s.coast_kkt_agree;
      if (inst.slice.dim() <= 4) {
        const auto orc = oracle_solve(inst.h, inst.slice, inst.sigma, oracle_resolution);
        row.j_oracle = orc.damage;
        row.kkt_oracle_gap = kkt.result.damage - orc.damage;
        ++s.oracle_compared;
        if (row.kkt_oracle_gap <= tol) ++s.kkt_oracle_agree;
      }
    } catch (const Error &e) {
      row.error = e.what();
      ++s.failures;
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

}  // namespace coast
