#include "dcmeld/baselines.hpp"
#include "dcmeld/dc_melding.hpp"
#include "dcmeld/models/gaussian_chain.hpp"
#include "dcmeld/summary.hpp"

#include <doctest.h>

using namespace dcmeld;

namespace {

ChainMeldedModel gaussian3(std::uint64_t seed, GaussianChainSpec* out = nullptr) {
  GaussianChainSpec spec = gaussian_chain_default_spec(3, seed, 8);
  if (out) *out = spec;
  return gaussian_chain_build(spec, PooledPriorSpec{{0.5, 0.5, 0.5}});
}

/// Gelman-Rubin potential scale reduction of one column across chains.
double rhat(const std::vector<VectorXd>& chains) {
  const double n = static_cast<double>(chains.front().size());
  const double m = static_cast<double>(chains.size());
  VectorXd means(chains.size());
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means[static_cast<Index>(c)] = chains[c].mean();
    w += (chains[c].array() - chains[c].mean()).square().sum() / (n - 1.0);
  }
  w /= m;
  const double b = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
  return std::sqrt(((n - 1.0) / n * w + b / n) / w);
}

double column_variance(const RowMatrixXd& v, Index c) {
  const VectorXd x = v.col(c);
  return (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("full-posterior sampler on a Gaussian chain") {
    GaussianChainSpec spec;
    const auto model = gaussian3(4, &spec);
    const auto exact = gaussian_chain_exact_posterior(spec, {0.5, 0.5, 0.5});
    McmcConfig cfg;
    cfg.n_iters = 60000;
    cfg.seed = 3;
    const auto chain = full_posterior_mcmc(model, cfg);
    CHECK(chain.samples.size() == 48000);
    const auto s = summarize(chain.samples);
    for (Index c = 0; c < model.dim(); ++c) {
      const auto& row = s[static_cast<std::size_t>(c)];
      const double sd = std::sqrt(exact.cov(c, c));
      CHECK(std::abs(row.mean - exact.mean[c]) < 4.0 * sd / std::sqrt(row.ess));
      CHECK(row.sd == doctest::Approx(sd).epsilon(0.1));
    }
    for (const auto& a : chain.acceptance) CHECK((a.rate > 0.1 && a.rate < 0.9));
  }

  TEST_CASE("independent chains agree") {
    const auto model = gaussian3(9);
    std::vector<std::vector<VectorXd>> cols(static_cast<std::size_t>(model.dim()));
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      McmcConfig cfg;
      cfg.n_iters = 10000;
      cfg.seed = seed;
      const auto chain = full_posterior_mcmc(model, cfg);
      for (Index c = 0; c < model.dim(); ++c) cols[static_cast<std::size_t>(c)].push_back(chain.samples.values.col(c));
    }
    for (const auto& c : cols) CHECK(rhat(c) < 1.05);
  }

  TEST_CASE("two-stage acceptance keeps only the centre term") {
    const auto model = gaussian3(5);
    RandomStream rng(2);
    for (int rep = 0; rep < 30; ++rep) {
      std::vector<double> a(static_cast<std::size_t>(model.dim())), b(a.size());
      for (auto& x : a) x = rng.normal();
      b = a;
      // Replace block A (phi_12, psi_1) as a stored-sample proposal would.
      for (Index c : model.local_columns(1)) b[static_cast<std::size_t>(c)] = rng.normal();
      const double expect = (model.log_melded_joint(b) - model.log_melded_joint(a)) -
                            (model.submodel_term(1, b) - model.submodel_term(1, a)) -
                            (model.submodel_term(3, b) - model.submodel_term(3, a));
      CHECK(two_stage_block_log_acceptance(model, a, b) == doctest::Approx(expect).epsilon(1e-10));
      CHECK(std::abs(two_stage_block_log_acceptance(model, a, b) - (model.submodel_term(2, b) - model.submodel_term(2, a))) <
            1e-10);
    }
  }

  TEST_CASE("two-stage sampler on stage-one pools matches the posterior") {
    GaussianChainSpec spec;
    const auto model = gaussian3(6, &spec);
    const auto exact = gaussian_chain_exact_posterior(spec, {0.5, 0.5, 0.5});
    DcConfig dc;
    dc.n_particles = 4000;
    dc.seed = 1;
    SubposteriorPool pool{run_stage_one(model, 1, dc).system.values, run_stage_one(model, 3, dc).system.values};
    McmcConfig cfg;
    cfg.n_iters = 40000;
    cfg.seed = 2;
    const auto chain = two_stage_parallel_sampler(model, pool, cfg);
    const auto s = summarize(chain.samples);
    for (Index c = 0; c < model.dim(); ++c) {
      const auto& row = s[static_cast<std::size_t>(c)];
      CHECK(std::abs(row.mean - exact.mean[c]) < 5.0 * std::sqrt(exact.cov(c, c)) / std::sqrt(std::min(row.ess, 1000.0)));
    }
    SubposteriorPool wrong{pool.left.leftCols(1), pool.right};
    CHECK_THROWS(two_stage_parallel_sampler(model, wrong, cfg));
  }

  TEST_CASE("plug-in sampler understates uncertainty") {
    GaussianChainSpec spec;
    const auto model = gaussian3(7, &spec);
    const auto exact = gaussian_chain_exact_posterior(spec, {0.5, 0.5, 0.5});
    const std::vector<double> plugin{exact.mean[0], exact.mean[1]};
    McmcConfig cfg;
    cfg.n_iters = 30000;
    cfg.seed = 4;
    const auto chain = pointwise_plugin_sampler(model, plugin, cfg);
    CHECK(chain.samples.values.col(0).cwiseEqual(plugin[0]).all());
    const Index psi2 = model.psi_columns(2)[0];
    const auto& s2 = spec.submodels[1];
    const double cond_var = 1.0 / (1.0 / (s2.psi.sd * s2.psi.sd) + static_cast<double>(s2.y.size()) / (s2.sigma * s2.sigma));
    const double v = column_variance(chain.samples.values, 2);
    CHECK(v == doctest::Approx(cond_var).epsilon(0.1));
    CHECK(v < exact.cov(psi2, psi2));
    CHECK_THROWS_AS(pointwise_plugin_sampler(gaussian_chain_build(gaussian_chain_default_spec(4, 1), PooledPriorSpec{{0.5, 0.5, 0.5, 0.5}}),
                                             plugin, cfg),
                    ConfigError);
  }

  TEST_CASE("a flat centre submodel leaves psi_2 at its prior") {
    GaussianChainSpec spec = gaussian_chain_default_spec(3, 3, 6);
    spec.submodels[1].y.clear();
    spec.submodels[1].psi = {1.5, 0.7};
    PooledPriorSpec p{{1.0, 0.0, 1.0}, {PoolRole::original, PoolRole::flat, PoolRole::original}};
    const auto model = gaussian_chain_build(spec, p);
    McmcConfig cfg;
    cfg.n_iters = 40000;
    cfg.seed = 8;
    const auto s = summarize(full_posterior_mcmc(model, cfg).samples);
    const auto& psi2 = s[static_cast<std::size_t>(model.psi_columns(2)[0])];
    CHECK(psi2.mean == doctest::Approx(1.5).epsilon(0.05));
    CHECK(psi2.sd == doctest::Approx(0.7).epsilon(0.1));
  }

  TEST_CASE("samplers agree pairwise on posterior means") {
    GaussianChainSpec spec;
    const auto model = gaussian3(12, &spec);
    const auto exact = gaussian_chain_exact_posterior(spec, {0.5, 0.5, 0.5});
    const Index psi2 = model.psi_columns(2)[0];
    const std::vector<Index> shared{0, 1, psi2};

    struct Estimate {
      std::string name;
      std::vector<double> mean, se;  // aligned with `shared`; se 0 marks a fixed value
    };
    auto from_mcmc = [&](const std::string& name, const WeightedParticleSystem& samples, const std::vector<Index>& cols) {
      const auto s = summarize(samples);
      Estimate e{name, {}, {}};
      for (Index c : cols) {
        const auto& r = s[static_cast<std::size_t>(c)];
        e.mean.push_back(r.mean);
        e.se.push_back(r.sd / std::sqrt(r.ess));
      }
      return e;
    };

    McmcConfig mc;
    mc.n_iters = 60000;
    mc.seed = 21;
    std::vector<Estimate> est;
    est.push_back(from_mcmc("full", full_posterior_mcmc(model, mc).samples, shared));

    DcConfig dc;
    dc.n_particles = 4000;
    dc.seed = 22;
    SubposteriorPool pool{run_stage_one(model, 1, dc).system.values, run_stage_one(model, 3, dc).system.values};
    est.push_back(from_mcmc("two-stage", two_stage_parallel_sampler(model, pool, mc).samples, shared));

    const std::vector<double> plug{exact.mean[0], exact.mean[1]};
    auto plugin = from_mcmc("plug-in", pointwise_plugin_sampler(model, plug, mc).samples, {0, 1, 2});
    plugin.se[0] = plugin.se[1] = 0.0;
    est.push_back(plugin);

    const auto out = dc_melding_3(model, dc);
    const auto s = summarize(out.samples);
    Estimate d{"dc", {}, {}};
    for (Index c : shared) {
      d.mean.push_back(s[static_cast<std::size_t>(c)].mean);
      // Resampled output: ancestry correlation allowance of N/4.
      d.se.push_back(s[static_cast<std::size_t>(c)].sd / std::sqrt(dc.n_particles / 4.0));
    }
    est.push_back(d);

    for (std::size_t a = 0; a < est.size(); ++a)
      for (std::size_t b = a + 1; b < est.size(); ++b)
        for (std::size_t k = 0; k < shared.size(); ++k) {
          const double se = std::hypot(est[a].se[k], est[b].se[k]);
          INFO(est[a].name << " vs " << est[b].name << ", column " << shared[k]);
          CHECK(std::abs(est[a].mean[k] - est[b].mean[k]) <= 3.0 * se);
        }
  }

  TEST_CASE("configuration checks") {
    McmcConfig cfg;
    cfg.burn_in = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.thin = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_SUITE("summary") {
  TEST_CASE("constant columns") {
    const auto s = summarize(WeightedParticleSystem::uniform(RowMatrixXd::Constant(50, 2, 3.0), {"a", "b"}));
    CHECK(s[0].mean == 3.0);
    CHECK(s[0].sd == 0.0);
    CHECK(s[1].q025 == 3.0);
    CHECK(s[1].q975 == 3.0);
  }

  TEST_CASE("point-mass weights select one particle") {
    RowMatrixXd v(2, 1);
    v << 1.0, 7.0;
    VectorXd lw(2);
    lw << 0.0, kNegInf;
    const auto s = summarize(WeightedParticleSystem(v, lw, {"x"}));
    CHECK(s[0].mean == 1.0);
    CHECK(s[0].q50 == 1.0);
    CHECK(s[0].ess == doctest::Approx(1.0));
  }

  TEST_CASE("standard normal draws") {
    RandomStream rng(1);
    RowMatrixXd v(200000, 1);
    for (Index i = 0; i < v.rows(); ++i) v(i, 0) = rng.normal();
    const auto s = summarize(WeightedParticleSystem::uniform(v, {"z"}));
    CHECK(s[0].q025 == doctest::Approx(-1.959964).epsilon(0.01));
    CHECK(s[0].q975 == doctest::Approx(1.959964).epsilon(0.01));
    CHECK(std::abs(s[0].q50) < 0.01);
    CHECK(s[0].ess > 150000.0);
  }

  TEST_CASE("weighted quantile definition") {
    const std::vector<double> x{3.0, 1.0, 2.0}, w{0.2, 0.5, 0.3};
    CHECK(weighted_quantile(x, w, 0.5) == 1.0);
    CHECK(weighted_quantile(x, w, 0.51) == 2.0);
    CHECK(weighted_quantile(x, w, 0.9) == 3.0);
  }

  TEST_CASE("batch means detects autocorrelation") {
    RandomStream rng(2);
    std::vector<double> ar(100000);
    double x = 0.0;
    for (auto& a : ar) a = x = 0.9 * x + rng.normal();
    // Integrated autocorrelation time of AR(1) is (1 + 0.9) / (1 - 0.9) = 19.
    CHECK(batch_means_ess(ar) == doctest::Approx(100000.0 / 19.0).epsilon(0.25));
  }
}
