#include "dcmeld/dc_melding.hpp"

#include "dcmeld/meld_target.hpp"
#include "dcmeld/parallel.hpp"
#include "dcmeld/particle_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace dcmeld {

std::string to_string(MergeMode m) { return m == MergeMode::naive ? "naive" : "extended"; }

std::string to_string(MuTildeStrategy s) {
  switch (s) {
    case MuTildeStrategy::prior_mean: return "prior_mean";
    case MuTildeStrategy::prior_draw: return "prior_draw";
    case MuTildeStrategy::fixed_value: return "fixed_value";
  }
  return "?";
}

void MergeConfig::validate() const {
  if (!(alpha_star >= 0.0 && alpha_star <= 1.0)) throw ConfigError("merge.alpha_star must lie in [0, 1]");
  if (oversample < 1) throw ConfigError("merge.oversample must be at least 1");
}

void DcConfig::validate() const {
  if (n_particles < 1) throw ConfigError("particles must be at least 1");
  schedule.validate();
  kernel.validate();
  merge.validate();
  resample.validate();
}

IndexMultiset LedgerNode::left_edge() const {
  if (is_leaf()) throw ShapeError("leaf nodes have no children");
  return forward_update(ancestry, merge_left);
}

IndexMultiset LedgerNode::right_edge() const {
  if (is_leaf()) throw ShapeError("leaf nodes have no children");
  return forward_update(ancestry, merge_right);
}

WeightedParticleSystem naive_merge(const WeightedParticleSystem& left, const WeightedParticleSystem& right) {
  if (left.size() != right.size())
    throw ShapeError("naive_merge needs equal particle counts, got " + std::to_string(left.size()) + " and " +
                     std::to_string(right.size()));
  if (!left.equally_weighted() || !right.equally_weighted())
    throw ShapeError("naive_merge needs equally weighted inputs");
  RowMatrixXd v(left.size(), left.dim() + right.dim());
  v.leftCols(left.dim()) = left.values;
  v.rightCols(right.dim()) = right.values;
  auto labels = left.labels;
  labels.insert(labels.end(), right.labels.begin(), right.labels.end());
  return WeightedParticleSystem::uniform(std::move(v), std::move(labels));
}

VectorXd extended_merge_probabilities(const VectorXd& log_v) { return normalized_weights(log_v); }

MergeSelection extended_merge_indices(Index n_left, Index n_right, Index n_out,
                                      const std::function<double(Index, Index, Index)>& log_v, int kappa,
                                      ResampleKind kind, RandomStream& rng) {
  if (kappa < 1) throw ConfigError("merge.oversample must be at least 1");
  const Index cand = static_cast<Index>(kappa) * n_out;
  std::vector<Index> l(static_cast<std::size_t>(cand)), r(static_cast<std::size_t>(cand));
  for (Index j = 0; j < cand; ++j) l[static_cast<std::size_t>(j)] = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_left)));
  for (Index j = 0; j < cand; ++j) r[static_cast<std::size_t>(j)] = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_right)));
  VectorXd lv(cand);
  parallel_for(cand, [&](Index j) {
    lv[j] = log_v(j, l[static_cast<std::size_t>(j)], r[static_cast<std::size_t>(j)]);
    if (std::isnan(lv[j])) throw NumericalError("extended merge weight evaluated to NaN");
  });
  if (lv.maxCoeff() == kNegInf) throw DegenerateSystemError("every candidate tuple of the extended merge has zero weight");
  const IndexMultiset pick = resample_indices(lv, n_out, kind, rng);
  std::vector<Index> ls(static_cast<std::size_t>(n_out)), rs(static_cast<std::size_t>(n_out));
  for (Index i = 0; i < n_out; ++i) {
    ls[static_cast<std::size_t>(i)] = l[static_cast<std::size_t>(pick[i])];
    rs[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(pick[i])];
  }
  return {IndexMultiset(std::move(ls), n_left), IndexMultiset(std::move(rs), n_right)};
}

VectorXd extended_merge_weights(const ChainMeldedModel& model, int m, const RowMatrixXd& phi, const RowMatrixXd& mu,
                                double alpha_star) {
  const Submodel& sm = model.submodel(m);
  if (phi.cols() != sm.dim_phi() || mu.cols() != sm.dim_psi() || phi.rows() != mu.rows())
    throw ShapeError("extended_merge_weights: phi/mu shapes do not match submodel " + std::to_string(m));
  VectorXd out(phi.rows());
  for (Index i = 0; i < phi.rows(); ++i) {
    if (alpha_star == 0.0) {
      out[i] = 0.0;
      continue;
    }
    const ConstSpan p = row_span(phi, i);
    const ConstSpan u = row_span(mu, i);
    const double pool = model.log_pool_piece(m, p);
    const double lik = pool == kNegInf ? kNegInf : sm.log_likelihood(p, u);
    out[i] = (pool == kNegInf || lik == kNegInf) ? kNegInf : alpha_star * (pool + lik);
  }
  return out;
}

namespace {

std::vector<double> resolve_mu(const Submodel& sm, int m, ConstSpan phi, const MergeConfig& cfg, RandomStream& rng) {
  switch (cfg.mu_tilde) {
    case MuTildeStrategy::prior_mean: return sm.psi_reference(phi);
    case MuTildeStrategy::prior_draw: {
      std::vector<double> mu(static_cast<std::size_t>(sm.dim_psi()));
      sm.sample_psi_prior(phi, rng, mu);
      return mu;
    }
    case MuTildeStrategy::fixed_value: {
      auto it = cfg.fixed_mu.find(m);
      if (it == cfg.fixed_mu.end() || static_cast<Index>(it->second.size()) != sm.dim_psi())
        throw ConfigError("merge.fixed_mu needs a value of length " + std::to_string(sm.dim_psi()) +
                          " for submodel " + std::to_string(m));
      return it->second;
    }
  }
  return {};
}

/// Mixes the bit patterns of phi into a stream id, so a drawn mu-tilde is a
/// fixed function of the tuple and the same value is seen by the merge
/// weights and by the tilt term of the following tempering run.
std::uint64_t phi_key(ConstSpan phi) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : phi) {
    h ^= std::bit_cast<std::uint64_t>(x);
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return h;
}

double tuple_log_v(const ChainMeldedModel& model, int m, ConstSpan phi, const MergeConfig& cfg,
                   const RandomStream& merge_stream) {
  if (cfg.alpha_star == 0.0) return 0.0;
  const Submodel& sm = model.submodel(m);
  RandomStream rng = merge_stream.child(phi_key(phi));
  const auto mu = resolve_mu(sm, m, phi, cfg, rng);
  RowMatrixXd p = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>(phi.data(), 1, static_cast<Index>(phi.size()));
  RowMatrixXd u = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>(mu.data(), 1, static_cast<Index>(mu.size()));
  return extended_merge_weights(model, m, p, u, cfg.alpha_star)[0];
}

}  // namespace

WeightedParticleSystem extended_merge(const WeightedParticleSystem& left, const WeightedParticleSystem& right,
                                      const ChainMeldedModel& model, int m, const std::vector<Index>& left_phi_cols,
                                      const std::vector<Index>& right_phi_cols, const MergeConfig& config,
                                      RandomStream& rng, MergeSelection* selection) {
  config.validate();
  if (!left.equally_weighted() || !right.equally_weighted())
    throw ShapeError("extended_merge needs equally weighted inputs");
  const Submodel& sm = model.submodel(m);
  if (static_cast<Index>(left_phi_cols.size()) != sm.dim_phi_left() ||
      static_cast<Index>(right_phi_cols.size()) != sm.dim_phi_right())
    throw ShapeError("extended_merge: phi column lists do not match submodel " + std::to_string(m));
  const RandomStream mu_stream = rng.child(static_cast<std::uint64_t>(StreamPurpose::merge));
  auto log_v = [&](Index, Index l, Index r) {
    std::vector<double> phi;
    phi.reserve(left_phi_cols.size() + right_phi_cols.size());
    for (Index c : left_phi_cols) phi.push_back(left.values(l, c));
    for (Index c : right_phi_cols) phi.push_back(right.values(r, c));
    return tuple_log_v(model, m, phi, config, mu_stream);
  };
  MergeSelection sel =
      extended_merge_indices(left.size(), right.size(), left.size(), log_v, config.oversample, ResampleKind::multinomial, rng);
  WeightedParticleSystem out = naive_merge(gather(left, sel.left), gather(right, sel.right));
  if (selection) *selection = std::move(sel);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSmcStream = 10;
constexpr std::uint64_t kFinalResampleStream = 11;

std::vector<Index> positions_of(const std::vector<Index>& columns, const std::vector<Index>& wanted) {
  std::vector<Index> out;
  out.reserve(wanted.size());
  for (Index w : wanted) {
    auto it = std::find(columns.begin(), columns.end(), w);
    if (it == columns.end()) throw ShapeError("node layout is missing a required coordinate");
    out.push_back(static_cast<Index>(it - columns.begin()));
  }
  return out;
}

RandomStream node_stream(std::uint64_t seed, int stage, const std::vector<int>& submodels) {
  return RandomStream::derive(seed, {static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(submodels.front())});
}

std::vector<std::string> column_labels(const ChainMeldedModel& model, const std::vector<Index>& cols) {
  std::vector<std::string> out;
  for (Index c : cols) out.push_back(model.labels()[static_cast<std::size_t>(c)]);
  return out;
}

/// Final resample of a non-root node; ancestry is composed accordingly.
void finalize_resample(SmcResult& res, const DcConfig& cfg, const RandomStream& stream) {
  RandomStream rs = stream.child(kFinalResampleStream);
  const IndexMultiset a = resample_indices(res.system.log_weights, res.system.size(), cfg.resample.kind, rs);
  res.system.values = gather_rows(res.system.values, a);
  res.system.log_weights.setZero();
  res.term_values = gather_rows(res.term_values, a);
  res.ancestry = forward_update(a, res.ancestry);
}

SmcResult leaf_smc(const ChainMeldedModel& model, int m, const DcConfig& cfg, const RandomStream& stream) {
  const Submodel& sm = model.submodel(m);
  const Index dl = sm.dim_local();
  const Index dp = sm.dim_phi();
  std::vector<Index> local(static_cast<std::size_t>(dl));
  std::iota(local.begin(), local.end(), Index{0});
  std::vector<Index> phi_local(local.begin(), local.begin() + dp);

  std::vector<TargetTerm> terms;
  append_phi_prior_term(terms, model, m, phi_local, 1.0, 0.0);
  append_proposal_terms(terms, model, m, local, 1.0, 0.0);
  append_submodel_terms(terms, model, m, local, 0.0, 1.0);
  const auto labels = column_labels(model, model.local_columns(m));
  TemperingTarget target(dl, std::move(terms), labels);
  std::vector<bool> disc(static_cast<std::size_t>(dl), false);
  const auto pd = sm.psi_discrete();
  for (Index k = 0; k < sm.dim_psi(); ++k) disc[static_cast<std::size_t>(dp + k)] = pd[static_cast<std::size_t>(k)];
  target.set_discrete(std::move(disc));

  const Index n = cfg.n_particles;
  RowMatrixXd init(n, dl);
  const RandomStream init_stream = stream.child(static_cast<std::uint64_t>(StreamPurpose::init));
  parallel_for(n, [&](Index i) {
    RandomStream rng = init_stream.child(static_cast<std::uint64_t>(i));
    MutSpan row = row_span(init, i);
    sm.sample_phi_prior(rng, row.first(static_cast<std::size_t>(dp)));
    sm.sample_psi_proposal(row.first(static_cast<std::size_t>(dp)), rng, row.subspan(static_cast<std::size_t>(dp)));
  });
  try {
    return smc_sampler(target, WeightedParticleSystem::uniform(std::move(init), labels), cfg.schedule, cfg.kernel,
                       cfg.resample, stream.child(kSmcStream));
  } catch (const DegenerateSystemError& e) {
    throw DegenerateSystemError("stage 1, submodel " + std::to_string(m) + ": " + e.what(), e.temperature());
  }
}

struct Component {
  int lo, hi;  // submodel interval
  int top;     // ledger node id
};

class Engine {
 public:
  Engine(const ChainMeldedModel& model, const DcConfig& cfg) : model_(model), cfg_(cfg) {}

  RunOutput run() {
    cfg_.validate();
    const int M = model_.M();
    RunOutput out;
    RunLedger& ledger = out.ledger;
    ledger.plan = plan_stages(M);
    ledger.dim = model_.dim();
    ledger.labels = model_.labels();
    ledger.seed = cfg_.seed;
    out.warnings = model_.warnings();

    std::vector<int> comp_of(static_cast<std::size_t>(M + 1), -1);  // submodel -> component index
    std::vector<Component> comps;

    const int last_stage = ledger.plan.S;
    for (const Stage& stage : ledger.plan.stages) {
      const std::size_t first_id = ledger.nodes.size();
      ledger.nodes.resize(first_id + stage.nodes.size());
      std::vector<std::vector<std::string>> node_warnings(stage.nodes.size());
      std::vector<std::function<void()>> tasks;
      std::vector<std::pair<int, int>> children(stage.nodes.size(), {-1, -1});
      for (std::size_t k = 0; k < stage.nodes.size(); ++k) {
        const auto& subs = stage.nodes[k];
        if (stage.index > 1) {
          const int ln = subs.front() - 1;
          const int rn = subs.back() + 1;
          if (ln < 1 || rn > M || comp_of[static_cast<std::size_t>(ln)] < 0 || comp_of[static_cast<std::size_t>(rn)] < 0)
            throw ShapeError("stage plan activates submodel " + std::to_string(subs.front()) +
                             " before both neighbours are available");
          children[k] = {comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(ln)])].top,
                         comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(rn)])].top};
        }
        const bool is_root = stage.index == last_stage;
        tasks.push_back([&, k, subs, is_root] {
          LedgerNode& node = ledger.nodes[first_id + k];
          node.id = static_cast<int>(first_id + k);
          node.stage = stage.index;
          node.submodels = subs;
          node.left_child = children[k].first;
          node.right_child = children[k].second;
          const auto t0 = Clock::now();
          if (stage.index == 1)
            build_leaf(node, is_root, node_warnings[k]);
          else
            build_inner(node, ledger, is_root, node_warnings[k]);
          node.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        });
      }
      run_concurrently(tasks);
      for (std::size_t k = 0; k < stage.nodes.size(); ++k) {
        const LedgerNode& node = ledger.nodes[first_id + k];
        for (auto& w : node_warnings[k]) out.warnings.push_back(w);
        // Update the component structure.
        Component c{node.submodels.front(), node.submodels.back(), node.id};
        if (!node.is_leaf()) {
          c.lo = comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(c.lo - 1)])].lo;
          c.hi = comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(c.hi + 1)])].hi;
        }
        comps.push_back(c);
        for (int m = c.lo; m <= c.hi; ++m) comp_of[static_cast<std::size_t>(m)] = static_cast<int>(comps.size() - 1);
      }
    }
    ledger.root = static_cast<int>(ledger.nodes.size()) - 1;
    for (int m = 1; m <= M; ++m)
      if (comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(m)])].top != ledger.root)
        throw ShapeError("stage plan did not join every submodel into one component");
    out.samples = extract_joint_samples(ledger);
    return out;
  }

 private:
  void build_leaf(LedgerNode& node, bool is_root, std::vector<std::string>& warnings) {
    const int m = node.submodels.front();
    const RandomStream stream = node_stream(cfg_.seed, 1, node.submodels);
    SmcResult res = leaf_smc(model_, m, cfg_, stream);
    if (!is_root) finalize_resample(res, cfg_, stream);
    node.columns = model_.local_columns(m);
    node.owned.assign(node.columns.size(), true);
    node.system = std::move(res.system);
    node.ancestry = std::move(res.ancestry);
    node.rungs = std::move(res.rungs);
    for (auto& w : res.warnings) warnings.push_back("stage 1: " + w);
  }

  /// Full-layout values for the component whose top node is `id`, aligned
  /// with that node's output particles (unset coordinates are NaN).
  RowMatrixXd materialize(const RunLedger& ledger, int id) const {
    const LedgerNode& node = ledger.nodes[static_cast<std::size_t>(id)];
    const Index n = node.system.size();
    RowMatrixXd full = RowMatrixXd::Constant(n, model_.dim(), std::numeric_limits<double>::quiet_NaN());
    if (!node.is_leaf()) {
      for (auto [child, edge] : {std::pair{node.left_child, node.left_edge()}, std::pair{node.right_child, node.right_edge()}}) {
        const RowMatrixXd sub = gather_rows(materialize(ledger, child), edge);
        for (Index i = 0; i < n; ++i)
          for (Index c = 0; c < sub.cols(); ++c)
            if (!std::isnan(sub(i, c))) full(i, c) = sub(i, c);
      }
    }
    for (Index i = 0; i < n; ++i)
      for (std::size_t c = 0; c < node.columns.size(); ++c)
        full(i, node.columns[c]) = node.system.values(i, static_cast<Index>(c));
    return full;
  }

  void build_inner(LedgerNode& node, const RunLedger& ledger, bool is_root, std::vector<std::string>& warnings) {
    const int M = model_.M();
    const auto& subs = node.submodels;
    const int lo = subs.front();
    const int hi = subs.back();
    const bool joint = subs.size() > 1;
    const int ln = lo - 1;
    const int rn = hi + 1;
    const RandomStream stream = node_stream(cfg_.seed, node.stage, subs);

    // Layout: moved coordinates first, then frozen context from the neighbours.
    std::vector<Index> cols;
    std::vector<bool> owned;
    auto add = [&](const std::vector<Index>& c, bool own) {
      for (Index x : c) {
        cols.push_back(x);
        owned.push_back(own);
      }
    };
    for (int b = std::max(1, lo - 1); b <= std::min(M - 1, hi); ++b) add(model_.phi_block_columns(b), true);
    for (int m : subs) add(model_.psi_columns(m), true);
    if (ln > 1) add(model_.phi_block_columns(ln - 1), false);
    add(model_.psi_columns(ln), false);
    if (rn < M) add(model_.phi_block_columns(rn), false);
    add(model_.psi_columns(rn), false);

    std::vector<TargetTerm> terms;
    append_submodel_terms(terms, model_, ln, positions_of(cols, model_.local_columns(ln)), 1.0, 1.0);
    append_submodel_terms(terms, model_, rn, positions_of(cols, model_.local_columns(rn)), 1.0, 1.0);
    for (int m : subs) {
      append_proposal_terms(terms, model_, m, positions_of(cols, model_.local_columns(m)), 1.0, 0.0);
      append_submodel_terms(terms, model_, m, positions_of(cols, model_.local_columns(m)), 0.0, 1.0);
    }
    const Submodel& lo_model = model_.submodel(lo);
    std::vector<Index> centre_pos;
    if (joint) {
      if (!lo_model.phi_prior_factorizes())
        throw ConfigError("the joint stage needs submodel " + std::to_string(lo) +
                          " to expose a factorised phi prior for the shared block it proposes");
      centre_pos = positions_of(cols, model_.phi_block_columns(lo));
      terms.push_back({centre_pos,
                       [&lo_model, centre_pos](ConstSpan theta) {
                         thread_local std::vector<double> buf;
                         buf.resize(centre_pos.size());
                         for (std::size_t k = 0; k < centre_pos.size(); ++k)
                           buf[k] = theta[static_cast<std::size_t>(centre_pos[k])];
                         return lo_model.log_phi_prior_right(buf);
                       },
                       1.0, 0.0, "centre_proposal"});
    }

    // Merge the two child components.
    const RowMatrixXd left = materialize(ledger, node.left_child);
    const RowMatrixXd right = materialize(ledger, node.right_child);
    const Index n = cfg_.n_particles;
    if (left.rows() != n || right.rows() != n) throw ShapeError("child components have unexpected particle counts");
    MergeSelection sel{IndexMultiset::identity(n), IndexMultiset::identity(n)};
    if (cfg_.merge.mode == MergeMode::extended) {
      if (joint) {
        warnings.push_back("stage " + std::to_string(node.stage) +
                           ": extended merging is not defined for a joint stage; using naive merging");
      } else {
        const int m = lo;
        const auto lcols = model_.phi_block_columns(m - 1);
        const auto rcols = model_.phi_block_columns(m);  // m < M for inner nodes
        RandomStream mrng = stream.child(static_cast<std::uint64_t>(StreamPurpose::merge));
        const RandomStream mu_stream = mrng.child(static_cast<std::uint64_t>(StreamPurpose::merge));
        auto log_v = [&](Index, Index l, Index r) {
          std::vector<double> phi;
          for (Index c : lcols) phi.push_back(left(l, c));
          for (Index c : rcols) phi.push_back(right(r, c));
          return tuple_log_v(model_, m, phi, cfg_.merge, mu_stream);
        };
        sel = extended_merge_indices(n, n, n, log_v, cfg_.merge.oversample, ResampleKind::multinomial, mrng);
        // The merged particles carry the tilt v; it stays in the base so the
        // first tempering weights remove it.
        const Index dphi = model_.submodel(m).dim_phi();
        std::vector<Index> phi_pos = positions_of(cols, model_.local_columns(m));
        phi_pos.resize(static_cast<std::size_t>(dphi));
        terms.push_back({phi_pos,
                         [this, m, phi_pos, mu_stream](ConstSpan theta) {
                           thread_local std::vector<double> buf;
                           buf.resize(phi_pos.size());
                           for (std::size_t k = 0; k < phi_pos.size(); ++k)
                             buf[k] = theta[static_cast<std::size_t>(phi_pos[k])];
                           return tuple_log_v(model_, m, buf, cfg_.merge, mu_stream);
                         },
                         1.0, 0.0, "merge_tilt"});
      }
    }

    TemperingTarget target(static_cast<Index>(cols.size()), std::move(terms), column_labels(model_, cols));
    const auto global_disc = model_.discrete_mask();
    std::vector<bool> disc, frozen;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      disc.push_back(global_disc[static_cast<std::size_t>(cols[k])]);
      frozen.push_back(!owned[k]);
    }
    target.set_discrete(std::move(disc));
    target.set_frozen(std::move(frozen));

    // Initial particles: merged child values plus fresh draws for the new blocks.
    RowMatrixXd init(n, static_cast<Index>(cols.size()));
    std::vector<int> source(cols.size(), 0);  // 1 left, 2 right, 0 drawn
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (!std::isnan(left(0, cols[k])))
        source[k] = 1;
      else if (!std::isnan(right(0, cols[k])))
        source[k] = 2;
    }
    const RandomStream init_stream = stream.child(static_cast<std::uint64_t>(StreamPurpose::init));
    std::vector<std::vector<Index>> local_pos;
    for (int m : subs) local_pos.push_back(positions_of(cols, model_.local_columns(m)));
    parallel_for(n, [&](Index i) {
      MutSpan row = row_span(init, i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (source[k] == 1) row[k] = left(sel.left[i], cols[k]);
        if (source[k] == 2) row[k] = right(sel.right[i], cols[k]);
      }
      RandomStream rng = init_stream.child(static_cast<std::uint64_t>(i));
      if (joint) {
        std::vector<double> c(centre_pos.size());
        lo_model.sample_phi_prior_right(rng, c);
        for (std::size_t k = 0; k < centre_pos.size(); ++k) row[static_cast<std::size_t>(centre_pos[k])] = c[k];
      }
      for (std::size_t s = 0; s < subs.size(); ++s) {
        const Submodel& sm = model_.submodel(subs[s]);
        const auto& pos = local_pos[s];
        std::vector<double> phi(static_cast<std::size_t>(sm.dim_phi()));
        for (std::size_t k = 0; k < phi.size(); ++k) phi[k] = row[static_cast<std::size_t>(pos[k])];
        std::vector<double> psi(static_cast<std::size_t>(sm.dim_psi()));
        sm.sample_psi_proposal(phi, rng, psi);
        for (std::size_t k = 0; k < psi.size(); ++k) row[static_cast<std::size_t>(pos[phi.size() + k])] = psi[k];
      }
    });

    SmcResult res;
    try {
      res = smc_sampler(target, WeightedParticleSystem::uniform(std::move(init), column_labels(model_, cols)),
                        cfg_.schedule, cfg_.kernel, cfg_.resample, stream.child(kSmcStream));
    } catch (const DegenerateSystemError& e) {
      throw DegenerateSystemError("stage " + std::to_string(node.stage) + ", submodel(s) " + std::to_string(lo) +
                                      (joint ? "," + std::to_string(hi) : "") + ": " + e.what(),
                                  e.temperature());
    }
    if (!is_root) finalize_resample(res, cfg_, stream);
    for (auto& w : res.warnings) warnings.push_back("stage " + std::to_string(node.stage) + ": " + w);
    node.columns = std::move(cols);
    node.owned = std::move(owned);
    node.system = std::move(res.system);
    node.ancestry = std::move(res.ancestry);
    node.merge_left = std::move(sel.left);
    node.merge_right = std::move(sel.right);
    node.rungs = std::move(res.rungs);
  }

  const ChainMeldedModel& model_;
  DcConfig cfg_;
};

}  // namespace

SmcResult run_stage_one(const ChainMeldedModel& model, int m, const DcConfig& config,
                        std::vector<std::string>* warnings) {
  config.validate();
  const RandomStream stream = node_stream(config.seed, 1, {m});
  SmcResult res = leaf_smc(model, m, config, stream);
  finalize_resample(res, config, stream);
  if (warnings) warnings->insert(warnings->end(), res.warnings.begin(), res.warnings.end());
  return res;
}

RunOutput dc_melding_multi(const ChainMeldedModel& model, const DcConfig& config) {
  Engine engine(model, config);
  return engine.run();
}

RunOutput dc_melding_3(const ChainMeldedModel& model, const DcConfig& config) {
  if (model.M() != 3) throw ConfigError("dc_melding_3 needs exactly three submodels, got " + std::to_string(model.M()));
  return dc_melding_multi(model, config);
}

namespace {

void collect_subtree(const RunLedger& ledger, int id, const IndexMultiset& idx,
                     std::vector<std::pair<int, WeightedParticleSystem>>& out) {
  const LedgerNode& node = ledger.nodes[static_cast<std::size_t>(id)];
  out.emplace_back(id, gather(node.system, idx));
  if (node.is_leaf()) return;
  collect_subtree(ledger, node.left_child, forward_update(idx, node.left_edge()), out);
  collect_subtree(ledger, node.right_child, forward_update(idx, node.right_edge()), out);
}

}  // namespace

WeightedParticleSystem extract_joint_samples(const RunLedger& ledger) {
  if (ledger.root < 0 || ledger.root >= static_cast<int>(ledger.nodes.size()))
    throw ShapeError("ledger has no root node");
  const LedgerNode& root = ledger.nodes[static_cast<std::size_t>(ledger.root)];
  const Index n = root.system.size();
  for (const auto& node : ledger.nodes) {
    if (node.system.size() == 0) throw ShapeError("ledger node " + std::to_string(node.id) + " has no particles");
    if (node.columns.size() != static_cast<std::size_t>(node.system.dim()) || node.owned.size() != node.columns.size())
      throw ShapeError("ledger node " + std::to_string(node.id) + " has an inconsistent column map");
  }

  // aligned[id] = that node's particles reordered to follow the root particles.
  std::vector<std::pair<int, WeightedParticleSystem>> aligned;
  aligned.emplace_back(root.id, root.system);
  if (!root.is_leaf()) {
    // Left spine: root, its left child, that node's left child, ... down to a leaf.
    std::vector<int> left_spine{ledger.root};
    while (!ledger.nodes[static_cast<std::size_t>(left_spine.back())].is_leaf())
      left_spine.push_back(ledger.nodes[static_cast<std::size_t>(left_spine.back())].left_child);
    std::vector<int> right_spine{ledger.root};
    while (!ledger.nodes[static_cast<std::size_t>(right_spine.back())].is_leaf())
      right_spine.push_back(ledger.nodes[static_cast<std::size_t>(right_spine.back())].right_child);

    // back_left_update wants the leaf end first: chain A_1..A_T with A_T the root identity.
    const std::size_t tl = left_spine.size();
    std::vector<IndexMultiset> lchain(tl);
    std::vector<WeightedParticleSystem> lsys(tl - 1);
    for (std::size_t k = 0; k < tl; ++k) {
      const int id = left_spine[tl - 1 - k];
      if (k + 1 == tl) {
        lchain[k] = IndexMultiset::identity(n);
      } else {
        lchain[k] = ledger.nodes[static_cast<std::size_t>(left_spine[tl - 2 - k])].left_edge();
        lsys[k] = ledger.nodes[static_cast<std::size_t>(id)].system;
      }
    }
    const BackUpdateResult lres = back_left_update(std::move(lchain), std::move(lsys));

    const std::size_t tr = right_spine.size();
    std::vector<IndexMultiset> rchain(tr);
    std::vector<WeightedParticleSystem> rsys(tr - 1);
    rchain[0] = IndexMultiset::identity(n);
    for (std::size_t k = 1; k < tr; ++k) {
      rchain[k] = ledger.nodes[static_cast<std::size_t>(right_spine[k - 1])].right_edge();
      rsys[k - 1] = ledger.nodes[static_cast<std::size_t>(right_spine[k])].system;
    }
    const BackUpdateResult rres = back_right_update(std::move(rchain), std::move(rsys));

    // Spine nodes below the root, plus the side subtrees hanging off them.
    for (std::size_t k = 0; k + 1 < tl; ++k) {
      const int id = left_spine[tl - 1 - k];
      aligned.emplace_back(id, lres.systems[k]);
      const LedgerNode& node = ledger.nodes[static_cast<std::size_t>(id)];
      if (!node.is_leaf())
        collect_subtree(ledger, node.right_child, forward_update(lres.chain[k], node.right_edge()), aligned);
    }
    for (std::size_t k = 1; k < tr; ++k) {
      const int id = right_spine[k];
      aligned.emplace_back(id, rres.systems[k - 1]);
      const LedgerNode& node = ledger.nodes[static_cast<std::size_t>(id)];
      if (!node.is_leaf())
        collect_subtree(ledger, node.left_child, forward_update(rres.chain[k], node.left_edge()), aligned);
    }
  }

  // Each coordinate comes from the latest node that moved it.
  RowMatrixXd values = RowMatrixXd::Constant(n, ledger.dim, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> owner(static_cast<std::size_t>(ledger.dim), -1);
  std::sort(aligned.begin(), aligned.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, sys] : aligned) {
    const LedgerNode& node = ledger.nodes[static_cast<std::size_t>(id)];
    for (std::size_t c = 0; c < node.columns.size(); ++c) {
      if (!node.owned[c]) continue;
      const Index g = node.columns[c];
      values.col(g) = sys.values.col(static_cast<Index>(c));
      owner[static_cast<std::size_t>(g)] = id;
    }
  }
  for (Index g = 0; g < ledger.dim; ++g)
    if (owner[static_cast<std::size_t>(g)] < 0)
      throw ShapeError("ledger is incomplete: coordinate '" + ledger.labels[static_cast<std::size_t>(g)] +
                       "' was never sampled");
  return {std::move(values), root.system.log_weights, ledger.labels};
}

}  // namespace dcmeld

namespace dcmeld {

namespace {

using nlohmann::json;

std::string node_file(int id, const char* what) { return "node" + std::to_string(id) + "_" + what; }

json rung_json(const RungDiagnostics& r) {
  return {{"alpha", r.alpha}, {"ess", r.ess}, {"acceptance", r.acceptance}, {"resampled", r.resampled},
          {"scale", r.scale}};
}

}  // namespace

void write_ledger(const std::filesystem::path& dir, const RunLedger& ledger, const DcConfig& config) {
  std::filesystem::create_directories(dir);
  json plan = {{"M", ledger.plan.M}, {"case", to_string(ledger.plan.plan_case)}, {"S", ledger.plan.S}};
  for (const Stage& s : ledger.plan.stages) {
    json st = {{"index", s.index}, {"nodes", s.nodes}};
    if (s.m_pair) st["m_pair"] = {s.m_pair->first, s.m_pair->second};
    plan["stages"].push_back(st);
  }
  json cfg = {{"n_particles", config.n_particles},
              {"schedule",
               {{"mode", config.schedule.mode == TemperingSchedule::Mode::adaptive ? "adaptive" : "fixed"},
                {"ladder", config.schedule.ladder},
                {"cess_target", config.schedule.cess_target},
                {"max_steps", config.schedule.max_steps}}},
              {"kernel",
               {{"n_mcmc_iters", config.kernel.n_mcmc_iters},
                {"adapt_scale", config.kernel.adapt_scale},
                {"target_acceptance", config.kernel.target_acceptance},
                {"initial_scale", config.kernel.initial_scale},
                {"layout", config.kernel.layout == ProposalLayout::joint ? "joint" : "per_coordinate"}}},
              {"merge",
               {{"mode", to_string(config.merge.mode)},
                {"alpha_star", config.merge.alpha_star},
                {"oversample", config.merge.oversample},
                {"mu_tilde", to_string(config.merge.mu_tilde)}}},
              {"resample",
               {{"kind", config.resample.kind == ResampleKind::systematic ? "systematic" : "multinomial"},
                {"threshold", config.resample.threshold}}}};
  json manifest = {{"plan", plan},     {"seed", ledger.seed},     {"config", cfg},
                   {"dim", ledger.dim}, {"labels", ledger.labels}, {"root", ledger.root}};
  manifest["nodes"] = json::array();
  for (const LedgerNode& node : ledger.nodes) {
    json n = {{"id", node.id},
              {"stage", node.stage},
              {"submodels", node.submodels},
              {"left_child", node.left_child},
              {"right_child", node.right_child},
              {"columns", node.columns},
              {"owned", node.owned},
              {"system_csv", node_file(node.id, "system.csv")},
              {"system_bin", node_file(node.id, "system.bin")},
              {"ancestry", node_file(node.id, "ancestry.txt")}};
    write_csv(dir / node_file(node.id, "system.csv"), node.system);
    write_binary(dir / node_file(node.id, "system.bin"), node.system);
    write_indices(dir / node_file(node.id, "ancestry.txt"), node.ancestry);
    if (!node.is_leaf()) {
      n["merge_left"] = node_file(node.id, "merge_left.txt");
      n["merge_right"] = node_file(node.id, "merge_right.txt");
      write_indices(dir / node_file(node.id, "merge_left.txt"), node.merge_left);
      write_indices(dir / node_file(node.id, "merge_right.txt"), node.merge_right);
    }
    n["rungs"] = json::array();
    for (const auto& r : node.rungs) n["rungs"].push_back(rung_json(r));
    manifest["nodes"].push_back(n);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

RunLedger read_ledger(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ShapeError("ledger manifest not found in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ShapeError(std::string("malformed ledger manifest: ") + e.what());
  }
  RunLedger ledger;
  try {
    ledger.plan = plan_stages(manifest.at("plan").at("M").get<int>());
    ledger.seed = manifest.at("seed").get<std::uint64_t>();
    ledger.dim = manifest.at("dim").get<Index>();
    ledger.labels = manifest.at("labels").get<std::vector<std::string>>();
    ledger.root = manifest.at("root").get<int>();
    for (const json& n : manifest.at("nodes")) {
      LedgerNode node;
      node.id = n.at("id").get<int>();
      node.stage = n.at("stage").get<int>();
      node.submodels = n.at("submodels").get<std::vector<int>>();
      node.left_child = n.at("left_child").get<int>();
      node.right_child = n.at("right_child").get<int>();
      node.columns = n.at("columns").get<std::vector<Index>>();
      node.owned = n.at("owned").get<std::vector<bool>>();
      node.system = read_binary(dir / n.at("system_bin").get<std::string>());
      node.ancestry = read_indices(dir / n.at("ancestry").get<std::string>());
      if (n.contains("merge_left")) {
        node.merge_left = read_indices(dir / n.at("merge_left").get<std::string>());
        node.merge_right = read_indices(dir / n.at("merge_right").get<std::string>());
      }
      for (const json& r : n.at("rungs"))
        node.rungs.push_back({r.at("alpha").get<double>(), r.at("ess").get<double>(), r.at("acceptance").get<double>(),
                              r.at("resampled").get<bool>(), r.at("scale").get<double>()});
      if (node.id != static_cast<int>(ledger.nodes.size())) throw ShapeError("ledger nodes are out of order");
      ledger.nodes.push_back(std::move(node));
    }
  } catch (const json::exception& e) {
    throw ShapeError(std::string("incomplete ledger manifest: ") + e.what());
  }
  return ledger;
}

}  // namespace dcmeld
