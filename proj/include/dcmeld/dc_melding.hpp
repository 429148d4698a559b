#pragma once

#include "dcmeld/melding.hpp"
#include "dcmeld/particles.hpp"
#include "dcmeld/smc.hpp"
#include "dcmeld/stage_plan.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dcmeld {

enum class MergeMode { naive, extended };
enum class MuTildeStrategy { prior_mean, prior_draw, fixed_value };

std::string to_string(MergeMode m);
std::string to_string(MuTildeStrategy s);

struct MergeConfig {
  MergeMode mode = MergeMode::naive;
  double alpha_star = 0.5;
  int oversample = 3;  ///< kappa: each side is oversampled kappa * N times
  MuTildeStrategy mu_tilde = MuTildeStrategy::prior_mean;
  std::map<int, std::vector<double>> fixed_mu;  ///< per submodel, for fixed_value
  void validate() const;
};

struct DcConfig {
  Index n_particles = 1024;
  TemperingSchedule schedule;
  MoveKernelConfig kernel;
  MergeConfig merge;
  ResampleScheme resample;
  std::uint64_t seed = 0;
  void validate() const;
};

/// One sampler run in the tree of stages. Leaves are stage-one runs; every
/// later node merges the component holding its left neighbour with the
/// component holding its right neighbour and tempers toward their union.
struct LedgerNode {
  int id = 0;
  int stage = 0;
  std::vector<int> submodels;
  int left_child = -1;
  int right_child = -1;
  std::vector<Index> columns;   ///< global coordinate of each system column
  std::vector<bool> owned;      ///< true for columns this node moves
  WeightedParticleSystem system;
  IndexMultiset ancestry;       ///< output particle -> merged-input particle
  IndexMultiset merge_left;     ///< merged-input particle -> left child output
  IndexMultiset merge_right;    ///< merged-input particle -> right child output
  std::vector<RungDiagnostics> rungs;
  double seconds = 0.0;

  bool is_leaf() const noexcept { return left_child < 0; }
  /// Particle index in the left/right child for each output particle.
  IndexMultiset left_edge() const;
  IndexMultiset right_edge() const;
};

struct RunLedger {
  StagePlan plan;
  std::vector<LedgerNode> nodes;  ///< in creation order; children precede parents
  int root = -1;
  Index dim = 0;
  std::vector<std::string> labels;
  std::uint64_t seed = 0;
};

struct RunOutput {
  WeightedParticleSystem samples;
  RunLedger ledger;
  std::vector<std::string> warnings;
};

/// Pairs row i of left with row i of right.
WeightedParticleSystem naive_merge(const WeightedParticleSystem& left, const WeightedParticleSystem& right);

struct MergeSelection {
  IndexMultiset left;   ///< merged particle -> left input row
  IndexMultiset right;  ///< merged particle -> right input row
};

/// Oversamples each equally weighted side kappa*N times, scores the aligned
/// tuples with log_v and keeps N of them proportional to exp(log_v).
MergeSelection extended_merge_indices(Index n_left, Index n_right, Index n_out,
                                      const std::function<double(Index tuple, Index left_row, Index right_row)>& log_v,
                                      int kappa, ResampleKind kind, RandomStream& rng);

/// Normalised selection probabilities of kappa*N candidate tuples.
VectorXd extended_merge_probabilities(const VectorXd& log_v);

/// alpha* [log p_pool,m(phi_m) + log p_m(Y_m | phi_m, mu)] for each row of
/// phi (submodel m's local phi) and mu.
VectorXd extended_merge_weights(const ChainMeldedModel& model, int m, const RowMatrixXd& phi,
                                const RowMatrixXd& mu, double alpha_star);

/// Extended merge of two systems whose columns end with submodel m's left
/// and right phi blocks respectively (left_phi_cols / right_phi_cols give the
/// column positions).
WeightedParticleSystem extended_merge(const WeightedParticleSystem& left, const WeightedParticleSystem& right,
                                      const ChainMeldedModel& model, int m, const std::vector<Index>& left_phi_cols,
                                      const std::vector<Index>& right_phi_cols, const MergeConfig& config,
                                      RandomStream& rng, MergeSelection* selection = nullptr);

/// Stage-one run for a single submodel: particles over its local vector,
/// equally weighted after a final resample.
SmcResult run_stage_one(const ChainMeldedModel& model, int m, const DcConfig& config,
                        std::vector<std::string>* warnings = nullptr);

RunOutput dc_melding_multi(const ChainMeldedModel& model, const DcConfig& config);
RunOutput dc_melding_3(const ChainMeldedModel& model, const DcConfig& config);

/// Joint particles over the global layout, reconstructed from the ledger by
/// backward index updates along the left and right spines of the stage tree.
WeightedParticleSystem extract_joint_samples(const RunLedger& ledger);

void write_ledger(const std::filesystem::path& dir, const RunLedger& ledger, const DcConfig& config);
RunLedger read_ledger(const std::filesystem::path& dir);

}  // namespace dcmeld
