#include "dcmeld/experiment.hpp"
#include "dcmeld/particle_io.hpp"
#include "support/files.hpp"

#include <doctest.h>

#include <map>
#include <sstream>

using namespace dcmeld;

namespace {

std::string error_of(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const std::filesystem::path& scratch() {
  static const auto dir = [] {
    auto d = std::filesystem::temp_directory_path() / "dcmeld_experiment_test";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const RunConfig c = parse_config("seed: 3\nmodel: {type: gaussian_chain, M: 4}\n");
    CHECK(c.seed == 3);
    CHECK(c.sampler == SamplerKind::dc_melding);
    CHECK(c.dc.n_particles == 1024);
    CHECK(c.dc.schedule.cess_target == 0.9);
    CHECK(c.dc.merge.mode == MergeMode::naive);
    CHECK(c.model.gaussian.M() == 4);
    const auto model = build_model(c);
    for (int m = 1; m <= 4; ++m) CHECK(model.pooling().lambda[static_cast<std::size_t>(m - 1)] == 0.5);
  }

  TEST_CASE("errors name the offending field") {
    CHECK(error_of("model: {type: gaussian_chain, M: 4}\n").find("seed") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: gaussian_chain, M: 4}\npooling: {lambda: [0.5, 0.5]}\n")
              .find("pooling.lambda") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: gaussian_chain, M: 2}\n").find("model.M") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: nope}\n").find("model.type") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: gaussian_chain, M: 3}\nparticles: many\n").find("particles") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: gaussian_chain, M: 3}\nmerge: {alpha_star: 2}\n").find("merge") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: gaussian_chain, M: 3}\nkernal: {}\n").find("kernal") != std::string::npos);
    CHECK(error_of("seed: 1\nmodel: {type: gaussian_chain, M: 5}\nsampler: two_stage_parallel\n").find("sampler") !=
          std::string::npos);
    CHECK(error_of("seed: [1\n").find("malformed") != std::string::npos);
  }

  TEST_CASE("explicit submodels and external model files") {
    const auto dir = scratch() / "ext";
    std::filesystem::create_directories(dir);
    {
      std::ofstream f(dir / "model.yaml");
      f << "type: gaussian_chain\nsubmodels:\n"
           "  - {sigma: 1, phi_right: {mean: 0, sd: 1}, psi: {mean: 0, sd: 1}, y: [0.1, 0.2]}\n"
           "  - {sigma: 2, y: [1.0]}\n"
           "  - {sigma: 1, phi_left: {mean: 1, sd: 2}, y: []}\n";
      std::ofstream g(dir / "run.yaml");
      g << "seed: 4\nmodel: {type: external, path: model.yaml}\n";
    }
    const RunConfig c = load_config(dir / "run.yaml");
    CHECK(c.model.gaussian.M() == 3);
    CHECK(c.model.gaussian.submodels[1].sigma == 2.0);
    CHECK(c.model.gaussian.submodels[2].phi_left.sd == 2.0);
    CHECK(c.model.source == dir / "model.yaml");
  }

  TEST_CASE("the hash ignores the output location") {
    RunConfig a = parse_config("seed: 1\nmodel: {type: gaussian_chain, M: 3}\noutput_dir: x\n");
    RunConfig b = parse_config("seed: 1\nmodel: {type: gaussian_chain, M: 3}\noutput_dir: y\n");
    CHECK(a.hash() == b.hash());
    RunConfig c = parse_config("seed: 2\nmodel: {type: gaussian_chain, M: 3}\n");
    CHECK(a.hash() != c.hash());
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  }

  TEST_CASE("every setting feeds the hash") {
    const std::string base = "seed: 1\nmodel: {type: gaussian_chain, M: 3}\n";
    const std::vector<std::string> variants{
        "",
        "workers: 2\n",
        "sampler: full_mcmc\n",
        "pooling: {lambda: [0.5, 0.6, 0.5]}\n",
        "pooling: {roles: [original, correction, flat]}\n",
        "particles: 512\n",
        "schedule: {cess_target: 0.8}\n",
        "schedule: {max_steps: 50}\n",
        "schedule: {mode: fixed, ladder: [0.5, 1.0]}\n",
        "kernel: {iterations: 4}\n",
        "kernel: {adapt_scale: false}\n",
        "kernel: {target_acceptance: 0.3}\n",
        "kernel: {initial_scale: 0.5}\n",
        "kernel: {layout: per_coordinate}\n",
        "merge: {mode: extended}\n",
        "merge: {alpha_star: 0.25}\n",
        "merge: {oversample: 2}\n",
        "merge: {mu_tilde: prior_draw}\n",
        "merge: {mu_tilde: fixed_value, fixed_mu: {2: [0.0]}}\n",
        "resample: {scheme: multinomial}\n",
        "resample: {threshold: 0.7}\n",
        "mcmc: {iterations: 5000}\n",
        "mcmc: {burn_in: 0.1}\n",
        "mcmc: {thin: 2}\n",
        "mcmc: {adapt: false}\n",
        "plugin: {statistic: median}\n",
    };
    std::map<std::uint64_t, std::string> seen;
    for (const auto& v : variants) {
      CAPTURE(v);
      const auto h = parse_config(base + v).hash();
      CHECK(parse_config(base + v).hash() == h);
      CHECK(seen.emplace(h, v).second);
    }
    for (const char* model : {"{type: gaussian_chain, M: 4}", "{type: gaussian_chain, M: 3, data_seed: 5}",
                              "{type: gaussian_chain, M: 3, n_obs: 6}", "{type: owl, T: 6}",
                              "{type: owl, T: 6, synthetic_seed: 3}"}) {
      CAPTURE(model);
      CHECK(seen.emplace(parse_config(std::string("seed: 1\nmodel: ") + model + "\n").hash(), model).second);
    }
    CHECK(seen.emplace(parse_config("seed: 2\nmodel: {type: gaussian_chain, M: 3}\n").hash(), "seed").second);
  }
}

TEST_SUITE("experiment") {
  TEST_CASE("repeated runs write identical files") {
    for (const char* sampler : {"dc_melding", "full_mcmc", "two_stage_parallel", "pointwise_plugin"}) {
      CAPTURE(sampler);
      const std::string name(sampler);
      RunConfig c = parse_config("seed: 9\nsampler: " + name +
                                 "\nmodel: {type: gaussian_chain, M: 3}\nparticles: 200\nmcmc: {iterations: 2000}\n");
      for (const char* tag : {"_a", "_b"}) {
        c.output_dir = scratch() / (name + tag);
        run_experiment(c);
      }
      CHECK(filecmp::differing(scratch() / (name + "_a"), scratch() / (name + "_b"), {"timings.json"}).empty());
      // Another worker count changes only the recorded configuration.
      c.workers = 3;
      c.output_dir = scratch() / (name + "_c");
      run_experiment(c);
      CHECK(filecmp::differing(scratch() / (name + "_a"), scratch() / (name + "_c"), {"timings.json", "manifest.json"})
                .empty());
    }
  }

  TEST_CASE("output files") {
    RunConfig c = parse_config("seed: 1\nmodel: {type: gaussian_chain, M: 5}\nparticles: 100\n");
    c.output_dir = scratch() / "files";
    const auto r = run_experiment(c);
    for (const char* f : {"samples.csv", "summary.csv", "diagnostics.csv", "manifest.json", "timings.json", "ledger/manifest.json"})
      CHECK(std::filesystem::exists(c.output_dir / f));
    CHECK(r.samples.size() == 100);
    CHECK(r.summary.size() == 9);
    const auto manifest = nlohmann::json::parse(filecmp::slurp(c.output_dir / "manifest.json"));
    CHECK(manifest["n_samples"] == 100);
    CHECK(manifest["config"]["particles"] == 100);
  }

  TEST_CASE("summarising written samples reproduces the written summary") {
    for (const char* sampler : {"dc_melding", "full_mcmc"}) {
      CAPTURE(sampler);
      RunConfig c = parse_config(std::string("seed: 5\nsampler: ") + sampler +
                                 "\nmodel: {type: gaussian_chain, M: 3}\nparticles: 150\nmcmc: {iterations: 1500}\n");
      c.output_dir = scratch() / (std::string("idem_") + sampler);
      run_experiment(c);
      std::ostringstream again;
      write_summary_csv(again, summarize(read_csv(c.output_dir / "samples.csv")));
      CHECK(again.str() == filecmp::slurp(c.output_dir / "summary.csv"));
    }
  }

  TEST_CASE("owl summaries") {
    RunConfig c = parse_config(
        "seed: 2\nsampler: pointwise_plugin\nmodel: {type: owl, T: 6, synthetic_seed: 2}\nparticles: 200\n"
        "mcmc: {iterations: 3000}\n");
    const auto r = execute(c);
    CHECK(r.summary.front().parameter == "alpha0");
    for (const auto& row : r.summary) {
      CAPTURE(row.parameter);
      CHECK(row.q025 <= row.q50);
      CHECK(row.q50 <= row.q975);
      CHECK(std::isfinite(row.mean));
    }
  }
}
