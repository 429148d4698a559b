#include "dcmeld/baselines.hpp"

#include "dcmeld/meld_target.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace dcmeld {

void McmcConfig::validate() const {
  if (n_iters < 1) throw ConfigError("mcmc.iterations must be at least 1");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ConfigError("mcmc.burn_in must lie in [0, 1)");
  if (thin < 1) throw ConfigError("mcmc.thin must be at least 1");
}

namespace {

constexpr Index kAdaptEvery = 50;
constexpr double kInitialStep = 0.1;

double target_rate(std::size_t d) { return d == 1 ? 0.44 : 0.234; }

}  // namespace

BlockSampler::BlockSampler(const TemperingTarget& target, std::vector<SamplerBlock> blocks)
    : target_(&target), blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) {
    if (b.coords.empty()) throw ShapeError("sampler block '" + b.name + "' is empty");
    block_terms_.push_back(target.terms_touching(b.coords));
    Adapt a;
    const auto d = static_cast<Index>(b.coords.size());
    if (!b.discrete) {
      a.mean = VectorXd::Zero(d);
      a.m2 = MatrixXd::Zero(d, d);
      a.chol = MatrixXd::Identity(d, d) * kInitialStep;
    }
    adapt_.push_back(std::move(a));
  }
  theta_.assign(static_cast<std::size_t>(target.dim()), 0.0);
  cache_.assign(static_cast<std::size_t>(target.term_count()), 0.0);
  scratch_ = cache_;
}

bool BlockSampler::reset(ConstSpan theta) {
  if (static_cast<Index>(theta.size()) != target_->dim()) throw ShapeError("BlockSampler::reset: wrong dimension");
  std::copy(theta.begin(), theta.end(), theta_.begin());
  target_->evaluate_terms(theta_, cache_);
  return log_density() != kNegInf;
}

double BlockSampler::log_density() const { return target_->combine(1.0, cache_); }

bool BlockSampler::metropolis(const std::vector<int>& terms, const std::vector<Index>& coords,
                              const std::vector<double>& saved, RandomStream& rng) {
  for (int k : terms) scratch_[static_cast<std::size_t>(k)] = target_->eval_term(k, theta_);
  const double lr = log_density_difference(target_->combine_subset(1.0, terms, scratch_),
                                           target_->combine_subset(1.0, terms, cache_));
  const bool accept = lr >= 0.0 || std::log(rng.uniform()) < lr;
  if (accept) {
    for (int k : terms) cache_[static_cast<std::size_t>(k)] = scratch_[static_cast<std::size_t>(k)];
  } else {
    for (std::size_t a = 0; a < coords.size(); ++a) theta_[static_cast<std::size_t>(coords[a])] = saved[a];
  }
  return accept;
}

void BlockSampler::continuous_step(std::size_t b, RandomStream& rng, bool adapting) {
  const auto& coords = blocks_[b].coords;
  Adapt& a = adapt_[b];
  const auto d = static_cast<Index>(coords.size());
  std::vector<double> saved(coords.size());
  VectorXd z(d);
  for (Index k = 0; k < d; ++k) z[k] = rng.normal();
  const VectorXd step = std::exp(a.log_scale) * (a.chol * z);
  for (Index k = 0; k < d; ++k) {
    auto& x = theta_[static_cast<std::size_t>(coords[static_cast<std::size_t>(k)])];
    saved[static_cast<std::size_t>(k)] = x;
    x += step[k];
  }
  const bool acc = metropolis(block_terms_[b], coords, saved, rng);
  ++a.proposals;
  a.accepted += acc;
  if (!adapting) return;

  const double gamma = std::pow(static_cast<double>(a.proposals) + 1.0, -0.6);
  a.log_scale += gamma * ((acc ? 1.0 : 0.0) - target_rate(coords.size()));
  // Welford update of the running covariance of this block.
  ++a.count;
  VectorXd x(d);
  for (Index k = 0; k < d; ++k) x[k] = theta_[static_cast<std::size_t>(coords[static_cast<std::size_t>(k)])];
  const VectorXd delta = x - a.mean;
  a.mean += delta / static_cast<double>(a.count);
  a.m2 += delta * (x - a.mean).transpose();
  if (a.count % kAdaptEvery == 0 && a.count > 2 * d + 10) {
    const MatrixXd cov = (2.38 * 2.38 / static_cast<double>(d)) *
                         (a.m2 / static_cast<double>(a.count - 1) + 1e-6 * MatrixXd::Identity(d, d));
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
      // The empirical shape already carries the 2.38^2 / d factor, so the
      // scale restarts from one the first time it is used.
      if (!a.shaped) a.log_scale = 0.0;
      a.shaped = true;
      a.chol = llt.matrixL();
    }
  }
}

void BlockSampler::discrete_step(std::size_t b, RandomStream& rng) {
  Adapt& a = adapt_[b];
  std::vector<Index> one(1);
  std::vector<double> saved(1);
  for (Index c : blocks_[b].coords) {
    one[0] = c;
    auto& x = theta_[static_cast<std::size_t>(c)];
    saved[0] = x;
    x += rng.uniform() < 0.5 ? -1.0 : 1.0;
    a.accepted += metropolis(target_->terms_touching(c), one, saved, rng);
    ++a.proposals;
  }
}

void BlockSampler::update_block(std::size_t b, RandomStream& rng, bool adapting) {
  if (blocks_[b].discrete)
    discrete_step(b, rng);
  else
    continuous_step(b, rng, adapting);
}

void BlockSampler::sweep(RandomStream& rng, bool adapting) {
  for (std::size_t b = 0; b < blocks_.size(); ++b) update_block(b, rng, adapting);
}

double BlockSampler::log_ratio_for(const std::vector<Index>& coords, ConstSpan values) const {
  std::vector<double> theta = theta_;
  for (std::size_t k = 0; k < coords.size(); ++k) theta[static_cast<std::size_t>(coords[k])] = values[k];
  const auto terms = target_->terms_touching(coords);
  std::vector<double> next(cache_.size());
  for (int k : terms) next[static_cast<std::size_t>(k)] = target_->eval_term(k, theta);
  return log_density_difference(target_->combine_subset(1.0, terms, next),
                                target_->combine_subset(1.0, terms, cache_));
}

bool BlockSampler::propose_values(const std::vector<Index>& coords, ConstSpan values, RandomStream& rng) {
  if (coords.size() != values.size()) throw ShapeError("propose_values: length mismatch");
  std::vector<double> saved(coords.size());
  for (std::size_t k = 0; k < coords.size(); ++k) {
    auto& x = theta_[static_cast<std::size_t>(coords[k])];
    saved[k] = x;
    x = values[k];
  }
  return metropolis(target_->terms_touching(coords), coords, saved, rng);
}

std::vector<BlockAcceptance> BlockSampler::acceptance() const {
  std::vector<BlockAcceptance> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& a = adapt_[b];
    out.push_back({blocks_[b].name,
                   a.proposals ? static_cast<double>(a.accepted) / static_cast<double>(a.proposals) : 0.0});
  }
  return out;
}

namespace {

/// Blocks for the psi coordinates of submodel m: continuous ones together,
/// integer ones as a single-site block.
void add_psi_blocks(const ChainMeldedModel& model, int m, std::vector<SamplerBlock>& blocks) {
  const auto mask = model.discrete_mask();
  SamplerBlock cont{"psi_" + std::to_string(m), {}, false};
  SamplerBlock disc{"psi_" + std::to_string(m) + "_discrete", {}, true};
  for (Index c : model.psi_columns(m)) (mask[static_cast<std::size_t>(c)] ? disc : cont).coords.push_back(c);
  if (!cont.coords.empty()) blocks.push_back(std::move(cont));
  if (!disc.coords.empty()) blocks.push_back(std::move(disc));
}

/// Runs the chain and keeps post-burn-in draws; `extra` runs before every sweep.
template <typename Extra>
McmcChain collect(BlockSampler& sampler, const McmcConfig& cfg, RandomStream& rng, const std::vector<Index>& keep,
                  const std::vector<std::string>& labels, Extra&& extra) {
  const Index burn = static_cast<Index>(std::floor(cfg.burn_in * static_cast<double>(cfg.n_iters)));
  const Index kept = (cfg.n_iters - burn + cfg.thin - 1) / cfg.thin;
  RowMatrixXd out(kept, static_cast<Index>(keep.size()));
  Index row = 0;
  for (Index it = 0; it < cfg.n_iters; ++it) {
    const bool adapting = cfg.adapt && it < burn;
    extra(rng);
    sampler.sweep(rng, adapting);
    if (it >= burn && (it - burn) % cfg.thin == 0) {
      const ConstSpan s = sampler.state();
      for (std::size_t k = 0; k < keep.size(); ++k) out(row, static_cast<Index>(k)) = s[static_cast<std::size_t>(keep[k])];
      ++row;
    }
  }
  McmcChain chain;
  chain.samples = WeightedParticleSystem::uniform(std::move(out), labels);
  chain.acceptance = sampler.acceptance();
  for (const auto& a : chain.acceptance)
    if (a.rate < 0.01) chain.warnings.push_back("block '" + a.block + "' accepted under 1% of proposals");
  return chain;
}

std::vector<Index> all_columns(Index d) {
  std::vector<Index> out(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) out[static_cast<std::size_t>(k)] = k;
  return out;
}

TemperingTarget submodel_two_target(const ChainMeldedModel& model) {
  std::vector<TargetTerm> terms;
  append_submodel_terms(terms, model, 2, model.local_columns(2), 0.0, 1.0);
  TemperingTarget t(model.dim(), std::move(terms), model.labels());
  t.set_discrete(model.discrete_mask());
  return t;
}

void require_three(const ChainMeldedModel& model, const char* what) {
  if (model.M() != 3) throw ConfigError(std::string(what) + " needs exactly three submodels");
}

}  // namespace

McmcChain full_posterior_mcmc(const ChainMeldedModel& model, const McmcConfig& config) {
  config.validate();
  const TemperingTarget target = melded_posterior_target(model);
  const auto mask = model.discrete_mask();
  std::vector<SamplerBlock> blocks;
  for (int b = 1; b < model.M(); ++b) {
    SamplerBlock blk{"phi_" + std::to_string(b) + "_" + std::to_string(b + 1), {}, false};
    SamplerBlock disc{blk.name + "_discrete", {}, true};
    for (Index c : model.phi_block_columns(b)) (mask[static_cast<std::size_t>(c)] ? disc : blk).coords.push_back(c);
    if (!blk.coords.empty()) blocks.push_back(std::move(blk));
    if (!disc.coords.empty()) blocks.push_back(std::move(disc));
  }
  for (int m = 1; m <= model.M(); ++m) add_psi_blocks(model, m, blocks);
  BlockSampler sampler(target, std::move(blocks));

  RandomStream rng = RandomStream::derive(config.seed, {static_cast<std::uint64_t>(StreamPurpose::mcmc)});
  RandomStream init = rng.child(static_cast<std::uint64_t>(StreamPurpose::init));
  std::vector<double> theta(static_cast<std::size_t>(model.dim()));
  bool ok = false;
  for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
    for (int b = 1; b < model.M(); ++b) {
      const Submodel& sm = model.submodel(b);
      std::vector<double> phi(static_cast<std::size_t>(sm.dim_phi()));
      sm.sample_phi_prior(init, phi);
      const auto cols = model.phi_block_columns(b);
      for (std::size_t k = 0; k < cols.size(); ++k)
        theta[static_cast<std::size_t>(cols[k])] = phi[static_cast<std::size_t>(sm.dim_phi_left()) + k];
    }
    for (int m = 1; m <= model.M(); ++m) {
      const Submodel& sm = model.submodel(m);
      const auto local = model.local_vector(m, theta);
      const ConstSpan phi = ConstSpan(local).first(static_cast<std::size_t>(sm.dim_phi()));
      std::vector<double> psi = sm.initial_psi(phi);
      if (attempt % 2 == 1) sm.sample_psi_prior(phi, init, psi);
      const auto cols = model.psi_columns(m);
      for (std::size_t k = 0; k < cols.size(); ++k) theta[static_cast<std::size_t>(cols[k])] = psi[k];
    }
    ok = sampler.reset(theta);
  }
  if (!ok) throw DegenerateSystemError("full-posterior MCMC found no starting point of positive density in 1000 draws");
  return collect(sampler, config, rng, all_columns(model.dim()), model.labels(), [](RandomStream&) {});
}

void SubposteriorPool::validate(const ChainMeldedModel& model) const {
  if (left.rows() < 1 || right.rows() < 1) throw ConfigError("subposterior pool is empty");
  if (left.cols() != model.submodel(1).dim_local() || right.cols() != model.submodel(3).dim_local())
    throw ShapeError("subposterior pool rows do not match the submodel layouts");
}

double two_stage_block_log_acceptance(const ChainMeldedModel& model, ConstSpan theta, ConstSpan proposal) {
  require_three(model, "the two-stage sampler");
  return log_density_difference(model.submodel_term(2, proposal), model.submodel_term(2, theta));
}

McmcChain two_stage_parallel_sampler(const ChainMeldedModel& model, const SubposteriorPool& pool,
                                     const McmcConfig& config) {
  require_three(model, "the two-stage sampler");
  config.validate();
  pool.validate(model);
  const TemperingTarget target = submodel_two_target(model);
  std::vector<SamplerBlock> blocks;
  add_psi_blocks(model, 2, blocks);
  BlockSampler sampler(target, std::move(blocks));

  const auto& lcols = model.local_columns(1);
  const auto& rcols = model.local_columns(3);
  RandomStream rng = RandomStream::derive(config.seed, {static_cast<std::uint64_t>(StreamPurpose::mcmc), 2});
  RandomStream init = rng.child(static_cast<std::uint64_t>(StreamPurpose::init));
  std::vector<double> theta(static_cast<std::size_t>(model.dim()), 0.0);
  bool ok = false;
  for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
    const Index j = static_cast<Index>(init.below(static_cast<std::uint64_t>(pool.left.rows())));
    const Index k = static_cast<Index>(init.below(static_cast<std::uint64_t>(pool.right.rows())));
    for (std::size_t c = 0; c < lcols.size(); ++c) theta[static_cast<std::size_t>(lcols[c])] = pool.left(j, static_cast<Index>(c));
    for (std::size_t c = 0; c < rcols.size(); ++c) theta[static_cast<std::size_t>(rcols[c])] = pool.right(k, static_cast<Index>(c));
    const Submodel& sm = model.submodel(2);
    const auto local = model.local_vector(2, theta);
    const ConstSpan phi = ConstSpan(local).first(static_cast<std::size_t>(sm.dim_phi()));
    std::vector<double> psi = sm.initial_psi(phi);
    if (attempt % 2 == 1) sm.sample_psi_prior(phi, init, psi);
    const auto cols = model.psi_columns(2);
    for (std::size_t c = 0; c < cols.size(); ++c) theta[static_cast<std::size_t>(cols[c])] = psi[c];
    ok = sampler.reset(theta);
  }
  if (!ok) throw DegenerateSystemError("two-stage sampler found no starting point of positive density in 1000 draws");

  Index accepted_a = 0, accepted_b = 0, proposed = 0;
  auto pool_moves = [&](RandomStream& r) {
    const Index j = static_cast<Index>(r.below(static_cast<std::uint64_t>(pool.left.rows())));
    accepted_a += sampler.propose_values(lcols, row_span(pool.left, j), r);
    const Index k = static_cast<Index>(r.below(static_cast<std::uint64_t>(pool.right.rows())));
    accepted_b += sampler.propose_values(rcols, row_span(pool.right, k), r);
    ++proposed;
  };
  McmcChain chain = collect(sampler, config, rng, all_columns(model.dim()), model.labels(), pool_moves);
  const double n = static_cast<double>(std::max<Index>(proposed, 1));
  chain.acceptance.insert(chain.acceptance.begin(),
                          {{"pool_left", static_cast<double>(accepted_a) / n}, {"pool_right", static_cast<double>(accepted_b) / n}});
  return chain;
}

McmcChain pointwise_plugin_sampler(const ChainMeldedModel& model, ConstSpan phi_plugin, const McmcConfig& config) {
  require_three(model, "the plug-in sampler");
  config.validate();
  if (static_cast<Index>(phi_plugin.size()) != model.phi_dim())
    throw ShapeError("plug-in values must cover every phi coordinate");
  const TemperingTarget target = submodel_two_target(model);
  std::vector<SamplerBlock> blocks;
  add_psi_blocks(model, 2, blocks);
  BlockSampler sampler(target, std::move(blocks));

  std::vector<double> theta(static_cast<std::size_t>(model.dim()), 0.0);
  std::copy(phi_plugin.begin(), phi_plugin.end(), theta.begin());
  const Submodel& sm = model.submodel(2);
  const auto local = model.local_vector(2, theta);
  const ConstSpan phi = ConstSpan(local).first(static_cast<std::size_t>(sm.dim_phi()));
  if (sm.log_phi_prior(phi) == kNegInf || model.log_pool_piece(2, phi) == kNegInf)
    throw ConfigError("plug-in phi values lie outside the prior support");

  RandomStream rng = RandomStream::derive(config.seed, {static_cast<std::uint64_t>(StreamPurpose::mcmc), 3});
  RandomStream init = rng.child(static_cast<std::uint64_t>(StreamPurpose::init));
  const auto cols = model.psi_columns(2);
  bool ok = false;
  for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
    std::vector<double> psi = sm.initial_psi(phi);
    if (attempt > 0) sm.sample_psi_prior(phi, init, psi);
    for (std::size_t c = 0; c < cols.size(); ++c) theta[static_cast<std::size_t>(cols[c])] = psi[c];
    ok = sampler.reset(theta);
  }
  if (!ok) throw ConfigError("plug-in phi values give zero posterior density for psi_2");

  std::vector<Index> keep(static_cast<std::size_t>(model.phi_dim()));
  for (Index k = 0; k < model.phi_dim(); ++k) keep[static_cast<std::size_t>(k)] = k;
  keep.insert(keep.end(), cols.begin(), cols.end());
  std::vector<std::string> labels;
  for (Index c : keep) labels.push_back(model.labels()[static_cast<std::size_t>(c)]);
  return collect(sampler, config, rng, keep, labels, [](RandomStream&) {});
}

}  // namespace dcmeld
