#pragma once

#include "dcmeld/melding.hpp"
#include "dcmeld/particles.hpp"
#include "dcmeld/target.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dcmeld {

struct McmcConfig {
  Index n_iters = 100000;
  double burn_in = 0.2;  ///< fraction of iterations discarded
  Index thin = 1;
  std::uint64_t seed = 0;
  /// Adapt proposal covariances and scales during burn-in, then freeze them.
  bool adapt = true;
  void validate() const;
};

struct BlockAcceptance {
  std::string block;
  double rate = 0.0;
};

/// Retained draws as a unit-weight particle system on the model's global layout.
struct McmcChain {
  WeightedParticleSystem samples;
  std::vector<BlockAcceptance> acceptance;
  std::vector<std::string> warnings;
};

/// A group of coordinates updated together. Continuous blocks use an
/// adaptive Gaussian random walk; discrete blocks update each site in turn
/// with a +/-1 step.
struct SamplerBlock {
  std::string name;
  std::vector<Index> coords;
  bool discrete = false;
};

/// Metropolis-within-Gibbs on a TemperingTarget at alpha = 1, caching term
/// values so that each block re-evaluates only the terms it touches.
class BlockSampler {
 public:
  BlockSampler(const TemperingTarget& target, std::vector<SamplerBlock> blocks);

  /// Sets the state; returns false when its density is -inf.
  bool reset(ConstSpan theta);
  ConstSpan state() const noexcept { return theta_; }
  double log_density() const;

  /// One update of every block in order.
  void sweep(RandomStream& rng, bool adapting);
  void update_block(std::size_t b, RandomStream& rng, bool adapting);
  /// Metropolis step that proposes `values` for `coords`, for proposals
  /// whose own density cancels out of the ratio. Returns acceptance.
  bool propose_values(const std::vector<Index>& coords, ConstSpan values, RandomStream& rng);
  /// Log acceptance ratio of propose_values without changing the state.
  double log_ratio_for(const std::vector<Index>& coords, ConstSpan values) const;

  const std::vector<SamplerBlock>& blocks() const noexcept { return blocks_; }
  std::vector<BlockAcceptance> acceptance() const;

 private:
  struct Adapt {
    VectorXd mean;
    MatrixXd m2;
    Index count = 0;
    MatrixXd chol;
    double log_scale = 0.0;
    bool shaped = false;
    Index proposals = 0, accepted = 0;
  };
  bool metropolis(const std::vector<int>& terms, const std::vector<Index>& coords, const std::vector<double>& saved,
                  RandomStream& rng);
  void continuous_step(std::size_t b, RandomStream& rng, bool adapting);
  void discrete_step(std::size_t b, RandomStream& rng);

  const TemperingTarget* target_;
  std::vector<SamplerBlock> blocks_;
  std::vector<std::vector<int>> block_terms_;
  std::vector<Adapt> adapt_;
  std::vector<double> theta_, cache_, scratch_;
};

/// Reference sampler on the full melded posterior: one random-walk block per
/// phi block and per continuous psi_m, single-site moves for integer latents.
McmcChain full_posterior_mcmc(const ChainMeldedModel& model, const McmcConfig& config);

/// Stage-one samples for a three-submodel chain: rows of `left` follow
/// submodel 1's local layout [phi_{1,2}, psi_1], rows of `right` follow
/// submodel 3's [phi_{2,3}, psi_3].
struct SubposteriorPool {
  RowMatrixXd left;
  RowMatrixXd right;
  void validate(const ChainMeldedModel& model) const;
};

/// Two-stage parallel sampler: blocks A and B propose a stored stage-one
/// sample uniformly (with replacement), block C random-walks psi_2.
McmcChain two_stage_parallel_sampler(const ChainMeldedModel& model, const SubposteriorPool& pool,
                                     const McmcConfig& config);

/// Log acceptance ratio of a block-A or block-B pool proposal from theta to
/// proposal (global layout): only submodel 2's term survives.
double two_stage_block_log_acceptance(const ChainMeldedModel& model, ConstSpan theta, ConstSpan proposal);

/// psi_2 sampled with phi fixed at plug-in values; output columns are
/// phi_{1,2}, phi_{2,3} (constant) followed by psi_2.
McmcChain pointwise_plugin_sampler(const ChainMeldedModel& model, ConstSpan phi_plugin, const McmcConfig& config);

}  // namespace dcmeld
