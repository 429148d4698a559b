#pragma once

#include "dcmeld/baselines.hpp"
#include "dcmeld/dc_melding.hpp"
#include "dcmeld/models/gaussian_chain.hpp"
#include "dcmeld/models/owl.hpp"
#include "dcmeld/summary.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dcmeld {

inline constexpr const char* kLibraryVersion = "0.1.0";

enum class SamplerKind { dc_melding, two_stage_parallel, full_mcmc, pointwise_plugin };
std::string to_string(SamplerKind k);

struct ModelConfig {
  enum class Kind { gaussian_chain, owl } kind = Kind::gaussian_chain;
  std::filesystem::path source;  ///< set when the model section came from an external file

  GaussianChainSpec gaussian;
  // Generated Gaussian data (when explicit submodels are not listed).
  std::optional<int> gaussian_M;
  std::uint64_t gaussian_data_seed = 1;
  int gaussian_n_obs = 10;

  std::filesystem::path owl_data_dir;  ///< empty means synthetic
  std::uint64_t owl_synthetic_seed = 1;
  int owl_T = 25;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 0;  ///< 0 selects the hardware default
  std::filesystem::path output_dir = "dcmeld_out";
  SamplerKind sampler = SamplerKind::dc_melding;
  ModelConfig model;
  std::vector<double> lambda;    ///< empty selects 1/2 for every submodel
  std::vector<PoolRole> roles;   ///< empty selects the stage-plan defaults
  DcConfig dc;
  McmcConfig mcmc;
  std::string plugin_statistic = "mean";  ///< mean or median of the stage-one phi draws

  /// Every effective setting except the output location, with defaults
  /// filled in; keys are sorted so the dump is canonical.
  nlohmann::json canonical() const;
  std::uint64_t hash() const;
};

/// Parses a YAML run configuration. Relative paths are resolved against the
/// file's directory. Field-level problems raise ConfigError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir = ".");

ChainMeldedModel build_model(const RunConfig& config);

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct ExperimentResult {
  WeightedParticleSystem samples;
  std::vector<ColumnSummary> summary;
  std::vector<std::string> warnings;
  std::vector<StageTiming> timings;
  double wall_seconds = 0.0;
  std::optional<RunLedger> ledger;
  std::vector<BlockAcceptance> acceptance;  ///< MCMC-based samplers
};

/// Runs the configured sampler without touching the filesystem.
ExperimentResult execute(const RunConfig& config);

/// Runs and writes samples.csv, summary.csv, diagnostics.csv, manifest.json,
/// timings.json (and ledger/ for dc_melding) into config.output_dir.
ExperimentResult run_experiment(const RunConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Parses a truth configuration for the synthetic owl generator: seed, T and
/// optional overrides of the documented generating values.
struct OwlTruthConfig {
  std::uint64_t seed = 1;
  int T = 25;
  OwlParams truth;
};
OwlTruthConfig load_owl_truth_config(const std::filesystem::path& path);

}  // namespace dcmeld
