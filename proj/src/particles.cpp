#include "dcmeld/particles.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace dcmeld {

WeightedParticleSystem::WeightedParticleSystem(RowMatrixXd v, VectorXd lw, std::vector<std::string> l)
    : values(std::move(v)), log_weights(std::move(lw)), labels(std::move(l)) {
  validate();
}

WeightedParticleSystem WeightedParticleSystem::uniform(RowMatrixXd v, std::vector<std::string> l) {
  VectorXd lw = VectorXd::Zero(v.rows());
  return {std::move(v), std::move(lw), std::move(l)};
}

bool WeightedParticleSystem::equally_weighted() const noexcept {
  if (log_weights.size() == 0) return true;
  const double first = log_weights[0];
  return std::isfinite(first) && (log_weights.array() == first).all();
}

void WeightedParticleSystem::validate() const {
  if (values.rows() < 1) throw ShapeError("particle system needs at least one particle");
  if (log_weights.size() != values.rows())
    throw ShapeError("log_weights length " + std::to_string(log_weights.size()) +
                     " does not match particle count " + std::to_string(values.rows()));
  if (static_cast<Index>(labels.size()) != values.cols())
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match dimension " +
                     std::to_string(values.cols()));
  std::set<std::string> seen;
  for (const auto& l : labels)
    if (!seen.insert(l).second) throw ShapeError("duplicate label '" + l + "'");
  if (log_weights.maxCoeff() == kNegInf) throw DegenerateSystemError("all particle weights are zero");
  if (log_weights.hasNaN()) throw NumericalError("log-weights contain NaN");
}

Index WeightedParticleSystem::column(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw ShapeError("no column named '" + label + "'");
  return static_cast<Index>(it - labels.begin());
}

IndexMultiset::IndexMultiset(std::vector<Index> zero_based, Index source_size)
    : idx_(std::move(zero_based)), source_(source_size) {
  for (Index i : idx_)
    if (i < 0 || i >= source_)
      throw ShapeError("ancestor index " + std::to_string(i + 1) + " outside [1, " +
                       std::to_string(source_) + "]");
}

IndexMultiset IndexMultiset::identity(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return {std::move(v), n};
}

IndexMultiset IndexMultiset::from_one_based(const std::vector<Index>& one_based, Index source_size) {
  std::vector<Index> v;
  v.reserve(one_based.size());
  for (Index i : one_based) v.push_back(i - 1);
  return {std::move(v), source_size};
}

std::vector<Index> IndexMultiset::one_based() const {
  std::vector<Index> v;
  v.reserve(idx_.size());
  for (Index i : idx_) v.push_back(i + 1);
  return v;
}

bool IndexMultiset::is_identity() const noexcept {
  if (source_ != size()) return false;
  for (std::size_t i = 0; i < idx_.size(); ++i)
    if (idx_[i] != static_cast<Index>(i)) return false;
  return true;
}

void ResampleScheme::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ConfigError("resample threshold must lie in (0, 1], got " + std::to_string(threshold));
}

IndexMultiset resample_indices(const VectorXd& log_weights, Index n, ResampleKind kind,
                               RandomStream& rng) {
  const VectorXd w = normalized_weights(log_weights);
  const Index src = w.size();
  std::vector<double> cdf(static_cast<std::size_t>(src));
  double acc = 0.0;
  for (Index j = 0; j < src; ++j) cdf[static_cast<std::size_t>(j)] = (acc += w[j]);
  cdf.back() = 1.0;

  // Last index with positive weight, so rounding never selects a zero-weight tail.
  Index last_positive = src - 1;
  while (last_positive > 0 && w[last_positive] == 0.0) --last_positive;

  std::vector<Index> out(static_cast<std::size_t>(n));
  auto locate = [&](double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    Index j = static_cast<Index>(it - cdf.begin());
    return std::min(j, last_positive);
  };
  if (kind == ResampleKind::systematic) {
    const double u0 = rng.uniform();
    for (Index i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i)] = locate((static_cast<double>(i) + u0) / static_cast<double>(n));
  } else {
    for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = locate(rng.uniform());
  }
  return {std::move(out), src};
}

std::pair<WeightedParticleSystem, IndexMultiset> resample(const WeightedParticleSystem& system,
                                                          const ResampleScheme& scheme,
                                                          RandomStream& rng) {
  IndexMultiset a = resample_indices(system.log_weights, system.size(), scheme.kind, rng);
  WeightedParticleSystem out;
  out.values = gather_rows(system.values, a);
  out.log_weights = VectorXd::Zero(system.size());
  out.labels = system.labels;
  return {std::move(out), std::move(a)};
}

RowMatrixXd gather_rows(const RowMatrixXd& m, const IndexMultiset& idx) {
  if (idx.source_size() != m.rows())
    throw ShapeError("index multiset refers into " + std::to_string(idx.source_size()) +
                     " rows but the matrix has " + std::to_string(m.rows()));
  RowMatrixXd out(idx.size(), m.cols());
  for (Index i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

WeightedParticleSystem gather(const WeightedParticleSystem& s, const IndexMultiset& idx) {
  WeightedParticleSystem out;
  out.values = gather_rows(s.values, idx);
  out.log_weights.resize(idx.size());
  for (Index i = 0; i < idx.size(); ++i) out.log_weights[i] = s.log_weights[idx[i]];
  out.labels = s.labels;
  return out;
}

IndexMultiset forward_update(const IndexMultiset& a, const IndexMultiset& b) {
  if (a.source_size() != b.size())
    throw ShapeError("forward_update: A refers into " + std::to_string(a.source_size()) +
                     " entries but B has " + std::to_string(b.size()));
  std::vector<Index> out(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = b[a[i]];
  return {std::move(out), b.source_size()};
}

namespace {

void check_chain(const std::vector<IndexMultiset>& chain,
                 const std::vector<WeightedParticleSystem>& systems, const char* who) {
  if (chain.size() < 2) throw ShapeError(std::string(who) + ": index chain needs at least two entries");
  if (systems.size() + 1 != chain.size())
    throw ShapeError(std::string(who) + ": expected " + std::to_string(chain.size() - 1) +
                     " systems, got " + std::to_string(systems.size()));
}

}  // namespace

BackUpdateResult back_left_update(std::vector<IndexMultiset> chain,
                                  std::vector<WeightedParticleSystem> systems) {
  check_chain(chain, systems, "back_left_update");
  const std::size_t t = chain.size();
  for (std::size_t s = 0; s + 1 < t; ++s) {
    const std::size_t k = t - 2 - s;
    chain[k] = forward_update(chain[k + 1], chain[k]);
    systems[k] = gather(systems[k], chain[k]);
  }
  return {std::move(chain), std::move(systems)};
}

BackUpdateResult back_right_update(std::vector<IndexMultiset> chain,
                                   std::vector<WeightedParticleSystem> systems) {
  check_chain(chain, systems, "back_right_update");
  for (std::size_t k = 1; k < chain.size(); ++k) {
    chain[k] = forward_update(chain[k - 1], chain[k]);
    systems[k - 1] = gather(systems[k - 1], chain[k]);
  }
  return {std::move(chain), std::move(systems)};
}

}  // namespace dcmeld
