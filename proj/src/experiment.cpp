#include "dcmeld/experiment.hpp"

#include "dcmeld/parallel.hpp"
#include "dcmeld/particle_io.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dcmeld {

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::dc_melding: return "dc_melding";
    case SamplerKind::two_stage_parallel: return "two_stage_parallel";
    case SamplerKind::full_mcmc: return "full_mcmc";
    case SamplerKind::pointwise_plugin: return "pointwise_plugin";
  }
  return "?";
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

/// A YAML mapping whose keys are consumed as they are read, so that typos
/// can be reported as unknown fields.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError("field '" + path_ + "' must be a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return require<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!has(key)) throw ConfigError("missing required field '" + field(key) + "'");
    try {
      return node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("field '" + field(key) + "' has the wrong type");
    }
  }

  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  Section child(const std::string& key) { return Section(raw(key), field(key)); }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError("unknown field '" + field(key) + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

NormalPrior parse_prior(Section s) {
  NormalPrior p;
  p.mean = s.get<double>("mean", 0.0);
  p.sd = s.get<double>("sd", 1.0);
  if (!(p.sd > 0.0)) throw ConfigError("field '" + s.field("sd") + "' must be positive");
  s.finish();
  return p;
}

ModelConfig parse_model(Section s, const std::filesystem::path& base, int depth) {
  const auto type = s.require<std::string>("type");
  if (type == "external") {
    if (depth > 0) throw ConfigError("field '" + s.field("path") + "' points to another external model");
    const auto path = base / s.require<std::string>("path");
    s.finish();
    YAML::Node ext;
    try {
      ext = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
      throw ConfigError("cannot read external model file " + path.string() + ": " + e.what());
    }
    ModelConfig m = parse_model(Section(ext, "model"), path.parent_path(), depth + 1);
    m.source = path;
    return m;
  }
  ModelConfig m;
  if (type == "gaussian_chain") {
    m.kind = ModelConfig::Kind::gaussian_chain;
    if (s.has("submodels")) {
      const YAML::Node list = s.raw("submodels");
      if (!list.IsSequence()) throw ConfigError("field '" + s.field("submodels") + "' must be a list");
      for (std::size_t k = 0; k < list.size(); ++k) {
        Section sub(list[k], s.field("submodels") + "[" + std::to_string(k) + "]");
        GaussianSubmodelSpec spec;
        spec.sigma = sub.get<double>("sigma", 1.0);
        if (!(spec.sigma > 0.0)) throw ConfigError("field '" + sub.field("sigma") + "' must be positive");
        spec.phi_left = parse_prior(sub.child("phi_left"));
        spec.phi_right = parse_prior(sub.child("phi_right"));
        spec.psi = parse_prior(sub.child("psi"));
        spec.y = sub.get<std::vector<double>>("y", {});
        sub.finish();
        m.gaussian.submodels.push_back(std::move(spec));
      }
      if (m.gaussian.M() < 3) throw ConfigError("field '" + s.field("submodels") + "' needs at least three entries");
    } else {
      m.gaussian_M = s.require<int>("M");
      if (*m.gaussian_M < 3) throw ConfigError("field '" + s.field("M") + "' must be at least 3");
      m.gaussian_data_seed = s.get<std::uint64_t>("data_seed", 1);
      m.gaussian_n_obs = s.get<int>("n_obs", 10);
      if (m.gaussian_n_obs < 0) throw ConfigError("field '" + s.field("n_obs") + "' must be non-negative");
      m.gaussian = gaussian_chain_default_spec(*m.gaussian_M, m.gaussian_data_seed, m.gaussian_n_obs);
    }
  } else if (type == "owl") {
    m.kind = ModelConfig::Kind::owl;
    if (s.has("data_dir")) m.owl_data_dir = base / s.require<std::string>("data_dir");
    m.owl_synthetic_seed = s.get<std::uint64_t>("synthetic_seed", 1);
    m.owl_T = s.get<int>("T", 25);
    if (m.owl_T < 2) throw ConfigError("field '" + s.field("T") + "' must be at least 2");
  } else {
    throw ConfigError("field '" + s.field("type") + "' must be gaussian_chain, owl or external, got '" + type + "'");
  }
  s.finish();
  return m;
}

SamplerKind parse_sampler(const std::string& s) {
  if (s == "dc_melding") return SamplerKind::dc_melding;
  if (s == "two_stage_parallel") return SamplerKind::two_stage_parallel;
  if (s == "full_mcmc") return SamplerKind::full_mcmc;
  if (s == "pointwise_plugin") return SamplerKind::pointwise_plugin;
  throw ConfigError("field 'sampler' must be dc_melding, two_stage_parallel, full_mcmc or pointwise_plugin, got '" + s +
                    "'");
}

template <typename Fn>
void wrap(const std::string& field, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("field '" + field + "': " + e.what());
  }
}

RunConfig parse_root(const YAML::Node& root, const std::filesystem::path& base) {
  if (!root || !root.IsMap()) throw ConfigError("configuration must be a mapping");
  Section top(root, "");
  RunConfig c;
  c.seed = top.require<std::uint64_t>("seed");
  c.workers = top.get<int>("workers", 0);
  if (c.workers < 0) throw ConfigError("field 'workers' must be non-negative");
  if (top.has("output_dir")) c.output_dir = base / top.require<std::string>("output_dir");
  c.sampler = parse_sampler(top.get<std::string>("sampler", "dc_melding"));
  c.model = parse_model(top.child("model"), base, 0);

  Section pool = top.child("pooling");
  c.lambda = pool.get<std::vector<double>>("lambda", {});
  for (const auto& r : pool.get<std::vector<std::string>>("roles", {})) {
    try {
      c.roles.push_back(pool_role_from_string(r));
    } catch (const ConfigError& e) {
      throw ConfigError("field 'pooling.roles': " + std::string(e.what()));
    }
  }
  pool.finish();

  c.dc.n_particles = top.get<Index>("particles", 1024);
  if (c.dc.n_particles < 1) throw ConfigError("field 'particles' must be at least 1");

  Section sch = top.child("schedule");
  const auto mode = sch.get<std::string>("mode", "adaptive");
  if (mode == "adaptive") {
    c.dc.schedule.mode = TemperingSchedule::Mode::adaptive;
  } else if (mode == "fixed") {
    c.dc.schedule.mode = TemperingSchedule::Mode::fixed_ladder;
  } else {
    throw ConfigError("field 'schedule.mode' must be adaptive or fixed");
  }
  c.dc.schedule.cess_target = sch.get<double>("cess_target", 0.9);
  c.dc.schedule.max_steps = sch.get<int>("max_steps", 1000);
  c.dc.schedule.ladder = sch.get<std::vector<double>>("ladder", {});
  sch.finish();
  wrap("schedule", [&] { c.dc.schedule.validate(); });

  Section ker = top.child("kernel");
  c.dc.kernel.n_mcmc_iters = ker.get<int>("iterations", 10);
  c.dc.kernel.adapt_scale = ker.get<bool>("adapt_scale", true);
  c.dc.kernel.target_acceptance = ker.get<double>("target_acceptance", 0.234);
  c.dc.kernel.initial_scale = ker.get<double>("initial_scale", 1.0);
  const auto layout = ker.get<std::string>("layout", "joint");
  if (layout == "joint") {
    c.dc.kernel.layout = ProposalLayout::joint;
  } else if (layout == "per_coordinate") {
    c.dc.kernel.layout = ProposalLayout::per_coordinate;
  } else {
    throw ConfigError("field 'kernel.layout' must be joint or per_coordinate");
  }
  ker.finish();
  wrap("kernel", [&] { c.dc.kernel.validate(); });

  Section mer = top.child("merge");
  const auto mmode = mer.get<std::string>("mode", "naive");
  if (mmode == "naive") {
    c.dc.merge.mode = MergeMode::naive;
  } else if (mmode == "extended") {
    c.dc.merge.mode = MergeMode::extended;
  } else {
    throw ConfigError("field 'merge.mode' must be naive or extended");
  }
  c.dc.merge.alpha_star = mer.get<double>("alpha_star", 0.5);
  c.dc.merge.oversample = mer.get<int>("oversample", 3);
  const auto mu = mer.get<std::string>("mu_tilde", "prior_mean");
  if (mu == "prior_mean") {
    c.dc.merge.mu_tilde = MuTildeStrategy::prior_mean;
  } else if (mu == "prior_draw") {
    c.dc.merge.mu_tilde = MuTildeStrategy::prior_draw;
  } else if (mu == "fixed_value") {
    c.dc.merge.mu_tilde = MuTildeStrategy::fixed_value;
  } else {
    throw ConfigError("field 'merge.mu_tilde' must be prior_mean, prior_draw or fixed_value");
  }
  c.dc.merge.fixed_mu = mer.get<std::map<int, std::vector<double>>>("fixed_mu", {});
  mer.finish();
  wrap("merge", [&] { c.dc.merge.validate(); });

  Section res = top.child("resample");
  const auto scheme = res.get<std::string>("scheme", "systematic");
  if (scheme == "systematic") {
    c.dc.resample.kind = ResampleKind::systematic;
  } else if (scheme == "multinomial") {
    c.dc.resample.kind = ResampleKind::multinomial;
  } else {
    throw ConfigError("field 'resample.scheme' must be systematic or multinomial");
  }
  c.dc.resample.threshold = res.get<double>("threshold", 0.5);
  res.finish();
  wrap("resample", [&] { c.dc.resample.validate(); });

  Section mc = top.child("mcmc");
  c.mcmc.n_iters = mc.get<Index>("iterations", 100000);
  c.mcmc.burn_in = mc.get<double>("burn_in", 0.2);
  c.mcmc.thin = mc.get<Index>("thin", 1);
  c.mcmc.adapt = mc.get<bool>("adapt", true);
  mc.finish();
  c.mcmc.validate();

  Section plug = top.child("plugin");
  c.plugin_statistic = plug.get<std::string>("statistic", "mean");
  if (c.plugin_statistic != "mean" && c.plugin_statistic != "median")
    throw ConfigError("field 'plugin.statistic' must be mean or median");
  plug.finish();
  top.finish();

  c.dc.seed = c.seed;
  c.mcmc.seed = c.seed;
  const int M = c.model.kind == ModelConfig::Kind::owl ? 3 : c.model.gaussian.M();
  if (!c.lambda.empty() && static_cast<int>(c.lambda.size()) != M)
    throw ConfigError("field 'pooling.lambda' must have " + std::to_string(M) + " entries, got " +
                      std::to_string(c.lambda.size()));
  if (!c.roles.empty() && static_cast<int>(c.roles.size()) != M)
    throw ConfigError("field 'pooling.roles' must have " + std::to_string(M) + " entries, got " +
                      std::to_string(c.roles.size()));
  if ((c.sampler == SamplerKind::two_stage_parallel || c.sampler == SamplerKind::pointwise_plugin) && M != 3)
    throw ConfigError("field 'sampler': " + to_string(c.sampler) + " needs a model with three submodels");
  return c;
}

}  // namespace

RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  return parse_root(root, base_dir);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

nlohmann::json RunConfig::canonical() const {
  using nlohmann::json;
  json model_j;
  if (model.kind == ModelConfig::Kind::gaussian_chain) {
    model_j["type"] = "gaussian_chain";
    if (model.gaussian_M) {
      model_j["M"] = *model.gaussian_M;
      model_j["data_seed"] = model.gaussian_data_seed;
      model_j["n_obs"] = model.gaussian_n_obs;
    } else {
      for (const auto& s : model.gaussian.submodels)
        model_j["submodels"].push_back({{"sigma", s.sigma},
                                        {"phi_left", {{"mean", s.phi_left.mean}, {"sd", s.phi_left.sd}}},
                                        {"phi_right", {{"mean", s.phi_right.mean}, {"sd", s.phi_right.sd}}},
                                        {"psi", {{"mean", s.psi.mean}, {"sd", s.psi.sd}}},
                                        {"y", s.y}});
    }
  } else {
    model_j["type"] = "owl";
    model_j["T"] = model.owl_T;
    if (model.owl_data_dir.empty())
      model_j["synthetic_seed"] = model.owl_synthetic_seed;
    else
      model_j["data_dir"] = model.owl_data_dir.filename().string();
  }
  std::vector<std::string> role_names;
  for (auto r : roles) role_names.push_back(to_string(r));
  json j = {
      {"seed", seed},
      {"workers", workers},
      {"sampler", to_string(sampler)},
      {"model", model_j},
      {"pooling", {{"lambda", lambda}, {"roles", role_names}}},
      {"particles", dc.n_particles},
      {"schedule",
       {{"mode", dc.schedule.mode == TemperingSchedule::Mode::adaptive ? "adaptive" : "fixed"},
        {"cess_target", dc.schedule.cess_target},
        {"max_steps", dc.schedule.max_steps},
        {"ladder", dc.schedule.ladder}}},
      {"kernel",
       {{"iterations", dc.kernel.n_mcmc_iters},
        {"adapt_scale", dc.kernel.adapt_scale},
        {"target_acceptance", dc.kernel.target_acceptance},
        {"initial_scale", dc.kernel.initial_scale},
        {"layout", dc.kernel.layout == ProposalLayout::joint ? "joint" : "per_coordinate"}}},
      {"merge",
       {{"mode", to_string(dc.merge.mode)},
        {"alpha_star", dc.merge.alpha_star},
        {"oversample", dc.merge.oversample},
        {"mu_tilde", to_string(dc.merge.mu_tilde)}}},
      {"resample",
       {{"scheme", dc.resample.kind == ResampleKind::systematic ? "systematic" : "multinomial"},
        {"threshold", dc.resample.threshold}}},
      {"mcmc",
       {{"iterations", mcmc.n_iters}, {"burn_in", mcmc.burn_in}, {"thin", mcmc.thin}, {"adapt", mcmc.adapt}}},
      {"plugin", {{"statistic", plugin_statistic}}}};
  json fixed = json::object();
  for (const auto& [m, v] : dc.merge.fixed_mu) fixed[std::to_string(m)] = v;
  j["merge"]["fixed_mu"] = fixed;
  return j;
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical().dump()); }

ChainMeldedModel build_model(const RunConfig& config) {
  const int M = config.model.kind == ModelConfig::Kind::owl ? 3 : config.model.gaussian.M();
  std::vector<double> lambda = config.lambda.empty() ? std::vector<double>(static_cast<std::size_t>(M), 0.5) : config.lambda;
  if (config.model.kind == ModelConfig::Kind::owl) {
    const OwlData data = config.model.owl_data_dir.empty()
                             ? owl_simulate(owl_default_truth(config.model.owl_T), config.model.owl_T,
                                            config.model.owl_synthetic_seed)
                             : read_owl_data(config.model.owl_data_dir, config.model.owl_T);
    if (!config.roles.empty()) {
      PooledPriorSpec pooling{std::move(lambda), config.roles, {}};
      return ChainMeldedModel(owl_submodels(data), std::move(pooling));
    }
    return owl_build(data, std::move(lambda));
  }
  PooledPriorSpec pooling{std::move(lambda), config.roles, {}};
  return gaussian_chain_build(config.model.gaussian, std::move(pooling));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

VectorXd column_statistic(const RowMatrixXd& rows, Index first, Index count, const std::string& stat) {
  VectorXd out(count);
  for (Index c = 0; c < count; ++c) {
    if (stat == "mean") {
      out[c] = rows.col(first + c).mean();
    } else {
      std::vector<double> v(rows.col(first + c).data(), rows.col(first + c).data() + rows.rows());
      const VectorXd w = VectorXd::Ones(rows.rows());
      out[c] = weighted_quantile(v, std::span<const double>(w.data(), static_cast<std::size_t>(w.size())), 0.5);
    }
  }
  return out;
}

}  // namespace

ExperimentResult execute(const RunConfig& config) {
  std::optional<ScopedWorkers> scope;
  if (config.workers > 0) scope.emplace(static_cast<std::size_t>(config.workers));
  const auto t0 = Clock::now();
  ExperimentResult out;
  const ChainMeldedModel model = build_model(config);
  out.timings.push_back({"build_model", seconds_since(t0)});
  out.warnings = model.warnings();

  auto stage_one_pool = [&](SubposteriorPool& pool) {
    const auto t1 = Clock::now();
    std::vector<std::string> w1, w3;
    SmcResult left, right;
    run_concurrently({[&] { left = run_stage_one(model, 1, config.dc, &w1); },
                      [&] { right = run_stage_one(model, 3, config.dc, &w3); }});
    for (auto& w : w1) out.warnings.push_back("stage 1, submodel 1: " + w);
    for (auto& w : w3) out.warnings.push_back("stage 1, submodel 3: " + w);
    pool.left = std::move(left.system.values);
    pool.right = std::move(right.system.values);
    out.timings.push_back({"stage_one", seconds_since(t1)});
  };

  switch (config.sampler) {
    case SamplerKind::dc_melding: {
      RunOutput run = dc_melding_multi(model, config.dc);
      out.samples = std::move(run.samples);
      for (auto& w : run.warnings) out.warnings.push_back(std::move(w));
      std::map<int, double> per_stage;
      for (const auto& node : run.ledger.nodes) per_stage[node.stage] += node.seconds;
      for (const auto& [s, secs] : per_stage) out.timings.push_back({"stage_" + std::to_string(s), secs});
      out.ledger = std::move(run.ledger);
      break;
    }
    case SamplerKind::full_mcmc: {
      const auto t1 = Clock::now();
      McmcChain chain = full_posterior_mcmc(model, config.mcmc);
      out.timings.push_back({"mcmc", seconds_since(t1)});
      out.samples = std::move(chain.samples);
      out.acceptance = chain.acceptance;
      for (auto& w : chain.warnings) out.warnings.push_back(std::move(w));
      break;
    }
    case SamplerKind::two_stage_parallel: {
      SubposteriorPool pool;
      stage_one_pool(pool);
      const auto t1 = Clock::now();
      McmcChain chain = two_stage_parallel_sampler(model, pool, config.mcmc);
      out.timings.push_back({"mcmc", seconds_since(t1)});
      out.samples = std::move(chain.samples);
      out.acceptance = chain.acceptance;
      for (auto& w : chain.warnings) out.warnings.push_back(std::move(w));
      break;
    }
    case SamplerKind::pointwise_plugin: {
      SubposteriorPool pool;
      stage_one_pool(pool);
      const Index d12 = model.phi_block_dim(1), d23 = model.phi_block_dim(2);
      VectorXd phi(d12 + d23);
      phi.head(d12) = column_statistic(pool.left, 0, d12, config.plugin_statistic);
      phi.tail(d23) = column_statistic(pool.right, 0, d23, config.plugin_statistic);
      const auto t1 = Clock::now();
      McmcChain chain = pointwise_plugin_sampler(model, std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())),
                                                 config.mcmc);
      out.timings.push_back({"mcmc", seconds_since(t1)});
      out.samples = std::move(chain.samples);
      out.acceptance = chain.acceptance;
      for (auto& w : chain.warnings) out.warnings.push_back(std::move(w));
      break;
    }
  }
  out.summary = summarize(out.samples);
  out.wall_seconds = seconds_since(t0);
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string diagnostics_csv(const ExperimentResult& r) {
  std::ostringstream out;
  if (r.ledger) {
    out << "node,stage,submodels,rung,alpha,ess,acceptance,resampled,scale\n";
    for (const auto& node : r.ledger->nodes) {
      std::string subs;
      for (int m : node.submodels) subs += (subs.empty() ? "" : ";") + std::to_string(m);
      for (std::size_t j = 0; j < node.rungs.size(); ++j) {
        const auto& g = node.rungs[j];
        out << node.id << ',' << node.stage << ',' << subs << ',' << j + 1 << ',' << format_double(g.alpha) << ','
            << format_double(g.ess) << ',' << format_double(g.acceptance) << ',' << (g.resampled ? 1 : 0) << ','
            << format_double(g.scale) << '\n';
      }
    }
  } else {
    out << "block,acceptance\n";
    for (const auto& a : r.acceptance) out << a.block << ',' << format_double(a.rate) << '\n';
  }
  return out.str();
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
  ExperimentResult r = execute(config);
  const auto& dir = config.output_dir;
  std::filesystem::create_directories(dir);
  write_csv(dir / "samples.csv", r.samples);
  write_summary_csv(dir / "summary.csv", r.summary);
  write_text(dir / "diagnostics.csv", diagnostics_csv(r));
  std::vector<std::string> files{"samples.csv", "summary.csv", "diagnostics.csv", "timings.json"};
  if (r.ledger) {
    write_ledger(dir / "ledger", *r.ledger, config.dc);
    files.push_back("ledger/manifest.json");
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config.hash()));
  const nlohmann::json manifest = {{"version", kLibraryVersion},
                                   {"config_hash", hash},
                                   {"config", config.canonical()},
                                   {"n_samples", r.samples.size()},
                                   {"files", files},
                                   {"warnings", r.warnings}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  nlohmann::json timings = {{"wall_seconds", r.wall_seconds}};
  timings["stages"] = nlohmann::json::array();
  for (const auto& t : r.timings) timings["stages"].push_back({{"name", t.name}, {"seconds", t.seconds}});
  write_text(dir / "timings.json", timings.dump(2) + "\n");
  return r;
}

OwlTruthConfig load_owl_truth_config(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot read truth configuration " + path.string() + ": " + e.what());
  }
  Section s(root, "");
  OwlTruthConfig c;
  c.seed = s.require<std::uint64_t>("seed");
  c.T = s.get<int>("T", 25);
  if (c.T < 2) throw ConfigError("field 'T' must be at least 2");
  c.truth = owl_default_truth(c.T);
  auto& t = c.truth;
  t.alpha0 = s.get<double>("alpha0", t.alpha0);
  t.alpha1 = s.get<double>("alpha1", t.alpha1);
  t.alpha2 = s.get<double>("alpha2", t.alpha2);
  t.alpha4 = s.get<double>("alpha4", t.alpha4);
  t.alpha5 = s.get<std::vector<double>>("alpha5", t.alpha5);
  if (static_cast<int>(t.alpha5.size()) != c.T - 1)
    throw ConfigError("field 'alpha5' must have T - 1 = " + std::to_string(c.T - 1) + " entries");
  t.alpha6 = s.get<double>("alpha6", t.alpha6);
  t.rho = s.get<double>("rho", t.rho);
  if (!(t.rho >= 0.0 && t.rho <= 10.0)) throw ConfigError("field 'rho' must lie in [0, 10]");
  t.xj1 = s.get<double>("xJ_1", t.xj1);
  t.xa1 = s.get<double>("xA_1", t.xa1);
  s.finish();
  return c;
}

}  // namespace dcmeld
