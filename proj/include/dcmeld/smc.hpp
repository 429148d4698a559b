#pragma once

#include "dcmeld/particles.hpp"
#include "dcmeld/target.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dcmeld {

struct TemperingSchedule {
  enum class Mode { fixed_ladder, adaptive };
  Mode mode = Mode::adaptive;
  std::vector<double> ladder;  ///< strictly increasing, ends at 1 (fixed mode)
  double cess_target = 0.9;    ///< relative conditional ESS per rung (adaptive mode)
  int max_steps = 1000;

  static TemperingSchedule fixed(std::vector<double> ladder);
  static TemperingSchedule adaptive(double cess_target = 0.9, int max_steps = 1000);
  void validate() const;
};

enum class ProposalLayout { joint, per_coordinate };

struct MoveKernelConfig {
  int n_mcmc_iters = 10;
  /// Rescale the random-walk step between rungs toward target_acceptance.
  bool adapt_scale = true;
  double target_acceptance = 0.234;
  double initial_scale = 1.0;
  ProposalLayout layout = ProposalLayout::joint;
  void validate() const;
};

struct MoveStats {
  std::uint64_t proposed_continuous = 0, accepted_continuous = 0;
  std::uint64_t proposed_discrete = 0, accepted_discrete = 0;

  MoveStats& operator+=(const MoveStats& o) noexcept;
  double acceptance() const noexcept;
  double continuous_acceptance() const noexcept;
};

/// Random-walk Metropolis kernel frozen for one temperature: the proposal
/// covariance is (2.38^2 / d) (weighted covariance + 1e-6 I) of the system
/// at construction, times scale^2. Discrete coordinates get +/-1 proposals.
class RwmKernel {
 public:
  RwmKernel(const TemperingTarget& target, double alpha, const RowMatrixXd& values, const VectorXd& log_weights,
            const MoveKernelConfig& config, double scale);

  /// n_mcmc_iters sweeps on one particle. `cache` holds its term values and
  /// is kept current.
  MoveStats apply(MutSpan theta, MutSpan cache, RandomStream& rng) const;
  bool used_diagonal_fallback() const noexcept { return diagonal_fallback_; }

 private:
  const TemperingTarget* target_;
  double alpha_;
  int iters_;
  ProposalLayout layout_;
  std::vector<Index> cont_, disc_;
  MatrixXd chol_;       // joint layout
  VectorXd coord_sd_;   // per-coordinate layout
  std::vector<int> joint_terms_;
  std::vector<std::vector<int>> coord_terms_;
  bool diagonal_fallback_ = false;
};

/// Applies the kernel to every particle of a system (weights untouched).
MoveStats rwm_move(const TemperingTarget& target, double alpha, WeightedParticleSystem& system,
                   const MoveKernelConfig& config, const RandomStream& rng, double scale = 1.0);

/// Relative conditional ESS of reweighting by exp(delta * rates).
double relative_cess(const VectorXd& log_weights, const VectorXd& rates, double delta);

double next_temperature(const VectorXd& log_weights, const VectorXd& rates, double alpha_prev,
                        const TemperingSchedule& schedule);
double next_temperature(const TemperingTarget& target, const WeightedParticleSystem& system, double alpha_prev,
                        const TemperingSchedule& schedule);

struct RungDiagnostics {
  double alpha = 0.0;
  double ess = 0.0;         ///< after the weight update, before any resampling
  double acceptance = 0.0;  ///< over every move proposal at this rung
  bool resampled = false;
  double scale = 1.0;
};

struct SmcResult {
  WeightedParticleSystem system;
  IndexMultiset ancestry;  ///< output particle i descends from input particle ancestry[i]
  std::vector<RungDiagnostics> rungs;
  std::vector<std::string> warnings;
  RowMatrixXd term_values;  ///< cached term values aligned with system rows
};

/// Tempering SMC from an equally weighted system at alpha = 0 to alpha = 1.
/// Each rung updates weights, optionally resamples and then moves.
SmcResult smc_sampler(const TemperingTarget& target, WeightedParticleSystem init,
                      const TemperingSchedule& schedule, const MoveKernelConfig& kernel,
                      const ResampleScheme& resample, const RandomStream& rng);

}  // namespace dcmeld
