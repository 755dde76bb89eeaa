#include "coast/estimation.hpp"

#include <cmath>
#include <sstream>

#include "coast/error.hpp"
#include "coast/parallel.hpp"

namespace coast {

namespace {

constexpr double kZeroRowTol = 1e-12;

Error zero_row(Index row, const std::string &location) {
  std::ostringstream os;
  if (!location.empty()) os << "location " << location << ", ";
  os << "row " << row << " has zero norm";
  return Error(ErrorCode::ZeroRow, os.str());
}

/// Unit-normalised mean of the rows (each row divided by its own norm).
Vector normalized_row_mean(const ActivationBatch &b) {
  b.validate();
  Vector acc = Vector::Zero(b.rows.cols());
  Vector comp = Vector::Zero(b.rows.cols());
  for (Index i = 0; i < b.rows.rows(); ++i) {
    const double n = b.rows.row(i).norm();
    if (!(n >= kZeroRowTol)) throw zero_row(i, b.location_id);
    for (Index j = 0; j < acc.size(); ++j) {
      // Neumaier summation keeps the mean accurate at n ~ 1e5.
      const double v = b.rows(i, j) / n;
      const double t = acc[j] + v;
      comp[j] += std::abs(acc[j]) >= std::abs(v) ? (acc[j] - t) + v : (v - t) + acc[j];
      acc[j] = t;
    }
  }
  return (acc + comp) / static_cast<double>(b.rows.rows());
}

}  // namespace

void ActivationBatch::validate() const {
  if (rows.rows() < 1 || rows.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument,
                "activation batch '" + location_id + "' is empty");
  }
  if (!rows.allFinite()) {
    throw Error(ErrorCode::InvalidArgument,
                "activation batch '" + location_id + "' has non-finite entries");
  }
}

void SteeringSpec::validate() const {
  if (sigma.dim() != direction.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "steering spec '" + location_id +
                    "': direction and collateral matrix dimensions differ");
  }
  if (!sigma.normalized() && std::abs(sigma.spectral_norm() - 1.0) > 1e-10) {
    throw Error(ErrorCode::InvalidArgument,
                "steering spec '" + location_id +
                    "': collateral matrix is not normalised");
  }
  if (!(std::abs(base_alpha) <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "steering spec '" + location_id + "': |base_alpha| > 1");
  }
}

SecondMomentAccumulator::SecondMomentAccumulator(Index dim, Index first_row)
    : dim_(dim),
      first_row_(first_row),
      pending_(kBlockRows, dim),
      sum_(Matrix::Zero(dim, dim)),
      comp_(Matrix::Zero(dim, dim)) {}

void SecondMomentAccumulator::add(const Eigen::Ref<const RowMatrix> &rows) {
  if (rows.cols() != dim_) {
    std::ostringstream os;
    os << "rows have dimension " << rows.cols() << ", accumulator has " << dim_;
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (!(n >= kZeroRowTol) || !std::isfinite(n)) {
      throw zero_row(first_row_ + count_, "");
    }
    pending_.row(pending_rows_++) = rows.row(i) / n;
    ++count_;
    if (pending_rows_ == kBlockRows) flush_block();
  }
}

void SecondMomentAccumulator::flush_block() {
  if (pending_rows_ == 0) return;
  const auto block = pending_.topRows(pending_rows_);
  Matrix s(dim_, dim_);
  s.noalias() = block.transpose() * block;
  add_block_sum(s);
  pending_rows_ = 0;
}

void SecondMomentAccumulator::add_block_sum(const Matrix &block_sum) {
  for (Index j = 0; j < dim_; ++j) {
    for (Index i = 0; i < dim_; ++i) {
      const double a = sum_(i, j);
      const double v = block_sum(i, j);
      const double t = a + v;
      comp_(i, j) += std::abs(a) >= std::abs(v) ? (a - t) + v : (v - t) + a;
      sum_(i, j) = t;
    }
  }
}

void SecondMomentAccumulator::merge(SecondMomentAccumulator other) {
  if (other.dim_ != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "cannot merge accumulators of different dimension");
  }
  flush_block();
  other.flush_block();
  add_block_sum(other.sum_);
  add_block_sum(other.comp_);
  count_ += other.count_;
}

Matrix SecondMomentAccumulator::mean() const {
  if (count_ == 0) {
    throw Error(ErrorCode::ZeroRow, "no rows were accumulated");
  }
  Matrix total = sum_ + comp_;
  if (pending_rows_ > 0) {
    const auto block = pending_.topRows(pending_rows_);
    total.noalias() += block.transpose() * block;
  }
  total /= static_cast<double>(count_);
  return 0.5 * (total + total.transpose());
}

CollateralMatrix SecondMomentAccumulator::finish() const {
  return CollateralMatrix::psd_by_construction(mean()).normalized_copy();
}

CollateralMatrix estimate_second_moment(const ActivationBatch &batch,
                                        int threads) {
  batch.validate();
  const Index n = batch.rows.rows();
  const Index p = batch.rows.cols();
  const Index blocks = (n + SecondMomentAccumulator::kBlockRows - 1) /
                       SecondMomentAccumulator::kBlockRows;
  const int workers = static_cast<int>(
      std::max<Index>(1, std::min<Index>(resolve_threads(threads), blocks)));
  std::vector<SecondMomentAccumulator> parts;
  for (int w = 0; w < workers; ++w) {
    const Index first = blocks * w / workers * SecondMomentAccumulator::kBlockRows;
    parts.emplace_back(p, first);
  }
  try {
    parallel_for(static_cast<std::size_t>(workers), workers,
                 [&](std::size_t begin, std::size_t end, int) {
      for (std::size_t w = begin; w < end; ++w) {
        const Index lo = blocks * static_cast<Index>(w) / workers *
                         SecondMomentAccumulator::kBlockRows;
        const Index hi = std::min(n, blocks * static_cast<Index>(w + 1) / workers *
                                         SecondMomentAccumulator::kBlockRows);
        if (hi > lo) parts[w].add(batch.rows.middleRows(lo, hi - lo));
      }
    });
  } catch (const Error &e) {
    if (batch.location_id.empty()) throw;
    throw e.with_context("location " + batch.location_id);
  }
  for (int w = 1; w < workers; ++w) parts[0].merge(std::move(parts[w]));
  return parts[0].finish();
}

UnitVector build_direction(const ActivationBatch &harmful,
                           const ActivationBatch &harmless) {
  if (harmful.rows.cols() != harmless.rows.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "harmful and harmless activations differ in dimension");
  }
  const Vector diff = normalized_row_mean(harmful) - normalized_row_mean(harmless);
  const double n = diff.norm();
  if (!(n >= 1e-10)) {
    std::ostringstream os;
    os << "class means differ by " << n;
    throw Error(ErrorCode::DegenerateDirection, os.str());
  }
  return UnitVector::normalize(diff);
}

double adaptive_alpha(const Vector &h, const SteeringSpec &spec) {
  if (h.size() != spec.direction.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "activation and direction dimensions differ");
  }
  const double n = h.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::ZeroActivation, "activation has zero norm");
  }
  return spec.base_alpha * std::abs(spec.direction.coords().dot(h) / n);
}

SteerMethod parse_steer_method(const std::string &name) {
  if (name == "coast") return SteerMethod::Coast;
  if (name == "slerp") return SteerMethod::Slerp;
  if (name == "kkt") return SteerMethod::Kkt;
  throw Error(ErrorCode::InvalidArgument,
              "method '" + name + "' does not honour the alignment budget");
}

std::string to_string(SteerMethod m) {
  switch (m) {
    case SteerMethod::Coast: return "coast";
    case SteerMethod::Slerp: return "slerp";
    case SteerMethod::Kkt: return "kkt";
  }
  return "unknown";
}

SteerOutcome steer_preserving_norm(const Vector &h, const SteeringSpec &spec,
                                   SteerMethod method, const SolverConfig &cfg,
                                   bool use_adaptive) {
  try {
    const double alpha_eff =
        use_adaptive ? adaptive_alpha(h, spec) : spec.base_alpha;
    if (h.size() != spec.direction.dim()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "activation and direction dimensions differ");
    }
    const double n = h.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::ZeroActivation, "activation has zero norm");
    }
    const UnitVector hn = UnitVector::normalize(h);
    const Vector &d = spec.direction.coords();
    SteerOutcome out;
    out.alpha = alpha_eff;
    if ((hn.coords() - d.dot(hn.coords()) * d).norm() < tol::kParallel) {
      out.output = h;
      out.passthrough = true;
      return out;
    }
    const BudgetSlice slice = BudgetSlice::make(spec.direction, alpha_eff);
    SolveResult res = [&] {
      switch (method) {
        case SteerMethod::Slerp: return slerp_solve(hn, slice, &spec.sigma);
        case SteerMethod::Kkt: return kkt_solve(hn, slice, spec.sigma).result;
        case SteerMethod::Coast: break;
      }
      return coast_solve(hn, slice, spec.sigma, cfg);
    }();
    out.output = n * res.x.coords();
    out.damage = res.damage;
    return out;
  } catch (const Error &e) {
    throw e.with_context("location " + spec.location_id);
  }
}

BatchSteerResult steer_batch(const ActivationBatch &batch,
                             const SteeringSpec &spec, SteerMethod method,
                             const SolverConfig &cfg, bool use_adaptive,
                             int threads) {
  batch.validate();
  spec.validate();
  const Index n = batch.rows.rows();
  const Index p = batch.rows.cols();
  if (p != spec.direction.dim()) {
    std::ostringstream os;
    os << "location " << spec.location_id << ": activations have dimension "
       << p << ", direction has " << spec.direction.dim();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  const Vector &d = spec.direction.coords();

  BatchSteerResult out;
  out.output.resize(n, p);
  out.damage = Vector::Zero(n);
  out.alpha = Vector::Zero(n);
  std::vector<char> pass(n, 0);

  parallel_for(static_cast<std::size_t>(n), resolve_threads(threads),
               [&](std::size_t begin, std::size_t end, int) {
    const Index b = static_cast<Index>(begin);
    const Index m = static_cast<Index>(end - begin);
    Vector norms(m);
    std::vector<Index> active;
    active.reserve(m);
    for (Index k = 0; k < m; ++k) {
      const Index i = b + k;
      const double nr = batch.rows.row(i).norm();
      if (!(nr > 0.0)) {
        std::ostringstream os;
        os << "location " << spec.location_id << ", token " << i
           << ": activation has zero norm";
        throw Error(ErrorCode::ZeroActivation, os.str());
      }
      norms[k] = nr;
      const double cosine = batch.rows.row(i).dot(d) / nr;
      out.alpha[i] = use_adaptive ? spec.base_alpha * std::abs(cosine) : spec.base_alpha;
      // Same test as the single-token path: ‖ĥ - (dᵀĥ)d‖ < 1e-10.
      if ((batch.rows.row(i).transpose() / nr - cosine * d).norm() < tol::kParallel) {
        out.output.row(i) = batch.rows.row(i);
        pass[i] = 1;
        continue;
      }
      active.push_back(k);
    }
    if (active.empty()) return;

    if (method == SteerMethod::Kkt) {
      for (Index k : active) {
        const Index i = b + k;
        try {
          const UnitVector hn = UnitVector::normalize(batch.rows.row(i).transpose());
          const auto slice = BudgetSlice::make(spec.direction, out.alpha[i]);
          const auto sol = kkt_solve(hn, slice, spec.sigma);
          out.output.row(i) = norms[k] * sol.result.x.coords().transpose();
          out.damage[i] = sol.result.damage;
        } catch (const Error &e) {
          std::ostringstream os;
          os << "location " << spec.location_id << ", token " << i;
          throw e.with_context(os.str());
        }
      }
      return;
    }

    RowMatrix hn(static_cast<Index>(active.size()), p);
    Vector alphas(static_cast<Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Index i = b + active[a];
      hn.row(static_cast<Index>(a)) = batch.rows.row(i) / norms[active[a]];
      alphas[static_cast<Index>(a)] = out.alpha[i];
    }
    BatchOutput res;
    try {
      res = solve_batch(method == SteerMethod::Coast ? BatchMethod::Coast
                                                     : BatchMethod::Slerp,
                        hn, spec.direction, alphas, spec.sigma, cfg);
    } catch (const Error &e) {
      std::ostringstream os;
      os << "location " << spec.location_id << ", tokens " << begin << ".."
         << end - 1;
      throw e.with_context(os.str());
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Index i = b + active[a];
      out.output.row(i) = norms[active[a]] * res.x.row(static_cast<Index>(a));
      out.damage[i] = res.damage[static_cast<Index>(a)];
    }
  });

  for (char c : pass) out.passthrough_count += c ? 1 : 0;
  return out;
}

}  // namespace coast
