#include "dcmeld/smc.hpp"

#include "dcmeld/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcmeld {

TemperingSchedule TemperingSchedule::fixed(std::vector<double> ladder) {
  TemperingSchedule s;
  s.mode = Mode::fixed_ladder;
  s.ladder = std::move(ladder);
  s.validate();
  return s;
}

TemperingSchedule TemperingSchedule::adaptive(double cess_target, int max_steps) {
  TemperingSchedule s;
  s.mode = Mode::adaptive;
  s.cess_target = cess_target;
  s.max_steps = max_steps;
  s.validate();
  return s;
}

void TemperingSchedule::validate() const {
  if (mode == Mode::fixed_ladder) {
    if (ladder.empty()) throw ConfigError("schedule.ladder must not be empty");
    double prev = 0.0;
    for (double a : ladder) {
      if (!(a > prev)) throw ConfigError("schedule.ladder must be strictly increasing and positive");
      prev = a;
    }
    if (ladder.back() != 1.0) throw ConfigError("schedule.ladder must end at 1");
  } else {
    if (!(cess_target > 0.0 && cess_target < 1.0))
      throw ConfigError("schedule.cess_target must lie in (0, 1)");
    if (max_steps < 1) throw ConfigError("schedule.max_steps must be at least 1");
  }
}

void MoveKernelConfig::validate() const {
  if (n_mcmc_iters < 0) throw ConfigError("kernel.iterations must be >= 0");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw ConfigError("kernel.target_acceptance must lie in (0, 1)");
  if (!(initial_scale > 0.0)) throw ConfigError("kernel.initial_scale must be positive");
}

MoveStats& MoveStats::operator+=(const MoveStats& o) noexcept {
  proposed_continuous += o.proposed_continuous;
  accepted_continuous += o.accepted_continuous;
  proposed_discrete += o.proposed_discrete;
  accepted_discrete += o.accepted_discrete;
  return *this;
}

double MoveStats::acceptance() const noexcept {
  const auto p = proposed_continuous + proposed_discrete;
  return p == 0 ? 0.0 : static_cast<double>(accepted_continuous + accepted_discrete) / static_cast<double>(p);
}

double MoveStats::continuous_acceptance() const noexcept {
  return proposed_continuous == 0
             ? 0.0
             : static_cast<double>(accepted_continuous) / static_cast<double>(proposed_continuous);
}

namespace {

constexpr double kRwmFactor = 2.38 * 2.38;
constexpr double kRegulariser = 1e-6;

MatrixXd weighted_covariance(const RowMatrixXd& values, const VectorXd& log_weights,
                             const std::vector<Index>& cols) {
  const VectorXd w = normalized_weights(log_weights);
  const Index d = static_cast<Index>(cols.size());
  VectorXd mean = VectorXd::Zero(d);
  for (Index i = 0; i < values.rows(); ++i) {
    if (w[i] == 0.0) continue;
    for (Index a = 0; a < d; ++a) mean[a] += w[i] * values(i, cols[static_cast<std::size_t>(a)]);
  }
  MatrixXd cov = MatrixXd::Zero(d, d);
  VectorXd diff(d);
  for (Index i = 0; i < values.rows(); ++i) {
    if (w[i] == 0.0) continue;
    for (Index a = 0; a < d; ++a) diff[a] = values(i, cols[static_cast<std::size_t>(a)]) - mean[a];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(diff, w[i]);
  }
  return cov.selfadjointView<Eigen::Lower>();
}

/// Shared Metropolis step over a term subset: coordinates in `coords` have
/// already been perturbed inside theta; `saved` holds their old values.
bool metropolis_commit(const TemperingTarget& target, double alpha, const std::vector<int>& terms,
                       MutSpan theta, MutSpan cache, std::vector<double>& scratch,
                       const std::vector<Index>& coords, const std::vector<double>& saved, RandomStream& rng) {
  for (int k : terms) scratch[static_cast<std::size_t>(k)] = target.eval_term(k, theta);
  const double next = target.combine_subset(alpha, terms, scratch);
  const double prev = target.combine_subset(alpha, terms, cache);
  const double lr = log_density_difference(next, prev);
  const double u = rng.uniform();
  const bool accept = lr >= 0.0 || std::log(u) < lr;
  if (accept) {
    for (int k : terms) cache[static_cast<std::size_t>(k)] = scratch[static_cast<std::size_t>(k)];
  } else {
    for (std::size_t a = 0; a < coords.size(); ++a) theta[static_cast<std::size_t>(coords[a])] = saved[a];
  }
  return accept;
}

}  // namespace

RwmKernel::RwmKernel(const TemperingTarget& target, double alpha, const RowMatrixXd& values,
                     const VectorXd& log_weights, const MoveKernelConfig& config, double scale)
    : target_(&target),
      alpha_(alpha),
      iters_(config.n_mcmc_iters),
      layout_(config.layout),
      cont_(target.movable_continuous()),
      disc_(target.movable_discrete()) {
  const Index d = static_cast<Index>(cont_.size());
  if (d > 0) {
    const MatrixXd cov = weighted_covariance(values, log_weights, cont_);
    if (layout_ == ProposalLayout::joint) {
      MatrixXd s = (kRwmFactor / static_cast<double>(d)) * scale * scale *
                   (cov + kRegulariser * MatrixXd::Identity(d, d));
      Eigen::LLT<MatrixXd> llt(s);
      if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
        chol_ = llt.matrixL();
      } else {
        diagonal_fallback_ = true;
        chol_ = s.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
      }
      joint_terms_ = target.terms_touching(cont_);
    } else {
      coord_sd_ = (kRwmFactor * (cov.diagonal().array() + kRegulariser)).sqrt() * scale;
      for (Index c : cont_) coord_terms_.push_back(target.terms_touching(c));
    }
  }
  for (Index c : disc_) coord_terms_.push_back(target.terms_touching(c));
}

MoveStats RwmKernel::apply(MutSpan theta, MutSpan cache, RandomStream& rng) const {
  MoveStats stats;
  const TemperingTarget& target = *target_;
  thread_local std::vector<double> scratch;
  thread_local std::vector<double> saved;
  thread_local std::vector<Index> one(1);
  scratch.resize(static_cast<std::size_t>(target.term_count()));
  const Index d = static_cast<Index>(cont_.size());
  VectorXd z(d);
  const std::size_t disc_offset = layout_ == ProposalLayout::per_coordinate ? cont_.size() : 0;

  for (int it = 0; it < iters_; ++it) {
    if (d > 0 && layout_ == ProposalLayout::joint) {
      for (Index a = 0; a < d; ++a) z[a] = rng.normal();
      const VectorXd step = chol_.triangularView<Eigen::Lower>() * z;
      saved.resize(cont_.size());
      for (Index a = 0; a < d; ++a) {
        auto& x = theta[static_cast<std::size_t>(cont_[static_cast<std::size_t>(a)])];
        saved[static_cast<std::size_t>(a)] = x;
        x += step[a];
      }
      ++stats.proposed_continuous;
      if (metropolis_commit(target, alpha_, joint_terms_, theta, cache, scratch, cont_, saved, rng))
        ++stats.accepted_continuous;
    } else if (d > 0) {
      saved.resize(1);
      for (Index a = 0; a < d; ++a) {
        one[0] = cont_[static_cast<std::size_t>(a)];
        auto& x = theta[static_cast<std::size_t>(one[0])];
        saved[0] = x;
        x += coord_sd_[a] * rng.normal();
        ++stats.proposed_continuous;
        if (metropolis_commit(target, alpha_, coord_terms_[static_cast<std::size_t>(a)], theta, cache, scratch,
                              one, saved, rng))
          ++stats.accepted_continuous;
      }
    }
    saved.resize(1);
    for (std::size_t a = 0; a < disc_.size(); ++a) {
      one[0] = disc_[a];
      auto& x = theta[static_cast<std::size_t>(one[0])];
      saved[0] = x;
      x += rng.uniform() < 0.5 ? -1.0 : 1.0;
      ++stats.proposed_discrete;
      if (metropolis_commit(target, alpha_, coord_terms_[disc_offset + a], theta, cache, scratch, one, saved,
                            rng))
        ++stats.accepted_discrete;
    }
  }
  return stats;
}

MoveStats rwm_move(const TemperingTarget& target, double alpha, WeightedParticleSystem& system,
                   const MoveKernelConfig& config, const RandomStream& rng, double scale) {
  config.validate();
  if (system.dim() != target.dim()) throw ShapeError("system and target dimensions differ");
  const Index n = system.size();
  const Index k = target.term_count();
  RowMatrixXd cache(n, k);
  parallel_for(n, [&](Index i) { target.evaluate_terms(system.particle(i), row_span(cache, i)); });
  if (config.n_mcmc_iters == 0) return {};
  const RwmKernel kernel(target, alpha, system.values, system.log_weights, config, scale);
  std::vector<MoveStats> per(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index i) {
    if (system.log_weights[i] == kNegInf) return;
    RandomStream s = rng.child(static_cast<std::uint64_t>(i));
    per[static_cast<std::size_t>(i)] = kernel.apply(row_span(system.values, i), row_span(cache, i), s);
  });
  MoveStats total;
  for (const auto& s : per) total += s;
  return total;
}

double relative_cess(const VectorXd& log_weights, const VectorXd& rates, double delta) {
  const double lse_w = log_sum_exp(log_weights);
  if (lse_w == kNegInf) return 0.0;
  VectorXd a(log_weights.size()), b(log_weights.size());
  for (Index i = 0; i < log_weights.size(); ++i) {
    const double lw = log_weights[i] - lse_w;
    if (lw == kNegInf || rates[i] == kNegInf) {
      a[i] = b[i] = kNegInf;
    } else {
      a[i] = lw + delta * rates[i];
      b[i] = lw + 2.0 * delta * rates[i];
    }
  }
  const double la = log_sum_exp(a);
  if (la == kNegInf) return 0.0;
  return std::exp(2.0 * la - log_sum_exp(b));
}

double next_temperature(const VectorXd& log_weights, const VectorXd& rates, double alpha_prev,
                        const TemperingSchedule& schedule) {
  if (!(alpha_prev < 1.0)) throw ShapeError("next_temperature called at alpha >= 1");
  if (schedule.mode == TemperingSchedule::Mode::fixed_ladder) {
    for (double a : schedule.ladder)
      if (a > alpha_prev) return a;
    return 1.0;
  }
  const double target = schedule.cess_target;
  double lo = 0.0;
  double hi = 1.0 - alpha_prev;
  if (relative_cess(log_weights, rates, hi) >= target) return 1.0;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (relative_cess(log_weights, rates, mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  return std::min(1.0, alpha_prev + 0.5 * (lo + hi));
}

double next_temperature(const TemperingTarget& target, const WeightedParticleSystem& system, double alpha_prev,
                        const TemperingSchedule& schedule) {
  VectorXd rates(system.size());
  parallel_for(system.size(), [&](Index i) { rates[i] = target.log_ratio(system.particle(i)); });
  return next_temperature(system.log_weights, rates, alpha_prev, schedule);
}

SmcResult smc_sampler(const TemperingTarget& target, WeightedParticleSystem init,
                      const TemperingSchedule& schedule, const MoveKernelConfig& kernel,
                      const ResampleScheme& resample_scheme, const RandomStream& rng) {
  schedule.validate();
  kernel.validate();
  resample_scheme.validate();
  init.validate();
  if (!init.equally_weighted()) throw ShapeError("smc_sampler expects equally weighted initial particles");
  if (init.dim() != target.dim())
    throw ShapeError("initial particles have dimension " + std::to_string(init.dim()) + ", target expects " +
                     std::to_string(target.dim()));

  const Index n = init.size();
  const Index k = target.term_count();
  SmcResult out;
  out.ancestry = IndexMultiset::identity(n);
  WeightedParticleSystem& sys = out.system;
  sys = std::move(init);
  sys.log_weights.setZero();
  RowMatrixXd& cache = out.term_values;
  cache.resize(n, k);
  parallel_for(n, [&](Index i) { target.evaluate_terms(sys.particle(i), row_span(cache, i)); });

  double alpha = 0.0;
  double scale = kernel.initial_scale;
  VectorXd rates(n);
  std::vector<MoveStats> per(static_cast<std::size_t>(n));
  const RandomStream move_root = rng.child(static_cast<std::uint64_t>(StreamPurpose::move));
  const RandomStream resample_root = rng.child(static_cast<std::uint64_t>(StreamPurpose::resample));

  for (int j = 0; alpha < 1.0; ++j) {
    for (Index i = 0; i < n; ++i) rates[i] = target.combine_ratio(row_span(std::as_const(cache), i));
    double next = next_temperature(sys.log_weights, rates, alpha, schedule);
    if (schedule.mode == TemperingSchedule::Mode::adaptive && j + 1 >= schedule.max_steps && next < 1.0) {
      out.warnings.push_back("adaptive schedule hit max_steps at alpha=" + std::to_string(next) +
                             "; jumping to alpha=1");
      next = 1.0;
    }
    const double delta = next - alpha;
    for (Index i = 0; i < n; ++i) {
      if (sys.log_weights[i] == kNegInf) continue;
      sys.log_weights[i] = rates[i] == kNegInf ? kNegInf : sys.log_weights[i] + delta * rates[i];
    }
    const double mx = sys.log_weights.maxCoeff();
    if (mx == kNegInf || std::isnan(mx)) {
      std::ostringstream msg;
      msg << "all particle weights vanished at alpha=" << next;
      throw DegenerateSystemError(msg.str(), next);
    }
    sys.log_weights.array() -= mx;

    RungDiagnostics diag;
    diag.alpha = next;
    diag.ess = ess(sys.log_weights);
    diag.resampled = diag.ess / static_cast<double>(n) < resample_scheme.threshold;
    if (diag.resampled) {
      RandomStream rs = resample_root.child(static_cast<std::uint64_t>(j));
      const IndexMultiset a = resample_indices(sys.log_weights, n, resample_scheme.kind, rs);
      sys.values = gather_rows(sys.values, a);
      cache = gather_rows(cache, a);
      out.ancestry = forward_update(a, out.ancestry);
      sys.log_weights.setZero();
    }

    MoveStats total;
    if (kernel.n_mcmc_iters > 0) {
      const RwmKernel k_move(target, next, sys.values, sys.log_weights, kernel, scale);
      if (k_move.used_diagonal_fallback())
        out.warnings.push_back("rung " + std::to_string(j + 1) +
                               ": proposal covariance not positive definite; using its diagonal");
      const RandomStream rung_stream = move_root.child(static_cast<std::uint64_t>(j));
      parallel_for(n, [&](Index i) {
        per[static_cast<std::size_t>(i)] = {};
        if (sys.log_weights[i] == kNegInf) return;
        RandomStream s = rung_stream.child(static_cast<std::uint64_t>(i));
        per[static_cast<std::size_t>(i)] = k_move.apply(row_span(sys.values, i), row_span(cache, i), s);
      });
      for (const auto& s : per) total += s;
      if (total.proposed_continuous + total.proposed_discrete > 0 && total.acceptance() < 0.01)
        out.warnings.push_back("rung " + std::to_string(j + 1) + " (alpha=" + std::to_string(next) +
                               "): move acceptance " + std::to_string(total.acceptance()) + " below 1%");
    }
    diag.acceptance = total.acceptance();
    diag.scale = scale;
    if (kernel.adapt_scale && total.proposed_continuous > 0)
      scale = std::clamp(scale * std::exp(total.continuous_acceptance() - kernel.target_acceptance), 1e-3, 1e3);
    out.rungs.push_back(diag);
    alpha = next;
  }
  return out;
}

}  // namespace dcmeld
