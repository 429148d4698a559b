// Command-line front end: run, summarize, simulate-owl, validate.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include "dcmeld/experiment.hpp"
#include "dcmeld/particle_io.hpp"
#include "dcmeld/summary.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace dcmeld;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

void apply_thread_override(RunConfig& config) {
  const char* env = std::getenv("DCMELD_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("DCMELD_THREADS must be a positive integer, got '" + std::string(env) + "'");
  config.workers = static_cast<int>(n);
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DegenerateSystemError& e) {
    std::cerr << "sampler degeneracy: " << e.what();
    if (e.temperature() >= 0.0) std::cerr << " (temperature " << e.temperature() << ")";
    std::cerr << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged tempering samplers for chains of melded submodels"};
  app.set_version_flag("--version", std::string(dcmeld::kLibraryVersion));
  app.require_subcommand(1);

  std::string run_config, output_override;
  auto* run = app.add_subcommand("run", "Run the sampler described by a YAML configuration");
  run->add_option("config", run_config, "configuration file")->required();
  run->add_option("-o,--output", output_override, "override output_dir");

  std::string samples_file, summary_out;
  auto* summ = app.add_subcommand("summarize", "Summarise a samples CSV (long format on stdout)");
  summ->add_option("file", samples_file, "samples CSV")->required();
  summ->add_option("-o,--output", summary_out, "write to a file instead of stdout");

  std::string truth_config, owl_outdir;
  auto* sim = app.add_subcommand("simulate-owl", "Write a synthetic owl data set");
  sim->add_option("truth-config", truth_config, "YAML with seed, T and optional parameter overrides")->required();
  sim->add_option("outdir", owl_outdir, "output directory")->required();

  std::string validate_config;
  auto* val = app.add_subcommand("validate", "Check a configuration and build its model");
  val->add_option("config", validate_config, "configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run) {
    return guarded([&] {
      RunConfig cfg = load_config(run_config);
      if (!output_override.empty()) cfg.output_dir = output_override;
      apply_thread_override(cfg);
      const ExperimentResult r = run_experiment(cfg);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "wrote " << r.samples.size() << " samples to " << cfg.output_dir.string() << '\n';
    });
  }
  if (*summ) {
    return guarded([&] {
      WeightedParticleSystem s;
      try {
        s = read_csv(std::filesystem::path(samples_file));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot read samples: ") + e.what());
      }
      const auto rows = summarize(s);
      if (summary_out.empty())
        write_summary_csv(std::cout, rows);
      else
        write_summary_csv(std::filesystem::path(summary_out), rows);
    });
  }
  if (*sim) {
    return guarded([&] {
      const OwlTruthConfig t = load_owl_truth_config(truth_config);
      const OwlData data = owl_simulate(t.truth, t.T, t.seed);
      write_owl_data(owl_outdir, data);
      write_owl_truth(std::filesystem::path(owl_outdir) / "truth.json", t.truth, t.T, t.seed);
      std::cout << "wrote owl data (T = " << t.T << ") to " << owl_outdir << '\n';
    });
  }
  if (*val) {
    return guarded([&] {
      RunConfig cfg = load_config(validate_config);
      apply_thread_override(cfg);
      const ChainMeldedModel model = build_model(cfg);
      for (const auto& w : model.warnings()) std::cerr << "warning: " << w << '\n';
      std::cout << "ok: " << to_string(cfg.sampler) << " on " << model.M() << " submodels, " << model.dim()
                << " coordinates\n"
                << plan_stages(model.M()).describe() << '\n';
    });
  }
  return kOk;
}
