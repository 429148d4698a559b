#include "dcmeld/melding.hpp"

#include "dcmeld/stage_plan.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace dcmeld {

double Submodel::log_phi_prior_left(ConstSpan) const {
  throw ConfigError("submodel does not expose a factorised phi prior");
}

double Submodel::log_phi_prior_right(ConstSpan) const {
  throw ConfigError("submodel does not expose a factorised phi prior");
}

void Submodel::sample_phi_prior_right(RandomStream&, MutSpan) const {
  throw ConfigError("submodel does not expose a factorised phi prior");
}

double Submodel::log_joint(ConstSpan phi, ConstSpan psi) const {
  const double a = log_phi_prior(phi);
  if (a == kNegInf) return kNegInf;
  const double b = log_psi_prior(phi, psi);
  if (b == kNegInf) return kNegInf;
  return a + b + log_likelihood(phi, psi);
}

std::vector<Factor> Submodel::conditional_factors() const {
  std::vector<Index> deps(static_cast<std::size_t>(dim_local()));
  std::iota(deps.begin(), deps.end(), Index{0});
  const Index dp = dim_phi();
  return {Factor{std::move(deps),
                 [this, dp](ConstSpan local) {
                   const ConstSpan phi = local.first(static_cast<std::size_t>(dp));
                   const ConstSpan psi = local.subspan(static_cast<std::size_t>(dp));
                   const double a = log_psi_prior(phi, psi);
                   if (a == kNegInf) return kNegInf;
                   return a + log_likelihood(phi, psi);
                 },
                 "conditional"}};
}

std::vector<Factor> Submodel::proposal_factors() const {
  std::vector<Index> deps(static_cast<std::size_t>(dim_local()));
  std::iota(deps.begin(), deps.end(), Index{0});
  const Index dp = dim_phi();
  return {Factor{std::move(deps),
                 [this, dp](ConstSpan local) {
                   return log_psi_proposal(local.first(static_cast<std::size_t>(dp)),
                                           local.subspan(static_cast<std::size_t>(dp)));
                 },
                 "proposal"}};
}

std::string to_string(PoolRole r) {
  switch (r) {
    case PoolRole::original: return "original";
    case PoolRole::correction: return "correction";
    case PoolRole::flat: return "flat";
  }
  return "?";
}

PoolRole pool_role_from_string(const std::string& s) {
  if (s == "original" || s == "original_prior") return PoolRole::original;
  if (s == "correction") return PoolRole::correction;
  if (s == "flat") return PoolRole::flat;
  throw ConfigError("unknown pooling role '" + s + "' (expected original, correction or flat)");
}

std::vector<PoolRole> default_pool_roles(int M) {
  const StagePlan plan = plan_stages(M);
  std::vector<PoolRole> roles(static_cast<std::size_t>(M), PoolRole::correction);
  for (int m : plan.stages.front().submodels()) roles[static_cast<std::size_t>(m - 1)] = PoolRole::original;
  return roles;
}

ChainMeldedModel::ChainMeldedModel(std::vector<std::shared_ptr<const Submodel>> submodels,
                                   PooledPriorSpec pooling)
    : subs_(std::move(submodels)), pooling_(std::move(pooling)) {
  if (subs_.size() < 3) throw ConfigError("a melded chain needs at least three submodels");
  for (const auto& s : subs_)
    if (!s) throw ConfigError("null submodel");
  build_layout();
  build_decomposition();
}

void ChainMeldedModel::build_layout() {
  const int M = this->M();
  if (subs_.front()->dim_phi_left() != 0) throw ShapeError("submodel 1 must not have a left phi block");
  if (subs_.back()->dim_phi_right() != 0)
    throw ShapeError("submodel " + std::to_string(M) + " must not have a right phi block");
  block_offset_.assign(static_cast<std::size_t>(M), 0);
  block_dim_.assign(static_cast<std::size_t>(M), 0);
  Index off = 0;
  for (int b = 1; b < M; ++b) {
    const Index r = subs_[static_cast<std::size_t>(b - 1)]->dim_phi_right();
    const Index l = subs_[static_cast<std::size_t>(b)]->dim_phi_left();
    if (r != l)
      throw ShapeError("submodels " + std::to_string(b) + " and " + std::to_string(b + 1) +
                       " disagree on the size of their shared block (" + std::to_string(r) + " vs " +
                       std::to_string(l) + ")");
    block_offset_[static_cast<std::size_t>(b)] = off;
    block_dim_[static_cast<std::size_t>(b)] = r;
    off += r;
  }
  phi_dim_ = off;
  psi_offset_.assign(static_cast<std::size_t>(M + 1), 0);
  for (int m = 1; m <= M; ++m) {
    psi_offset_[static_cast<std::size_t>(m)] = off;
    off += subs_[static_cast<std::size_t>(m - 1)]->dim_psi();
  }
  dim_ = off;

  labels_.assign(static_cast<std::size_t>(dim_), "");
  for (int b = 1; b < M; ++b) {
    auto names = subs_[static_cast<std::size_t>(b - 1)]->phi_right_labels();
    for (Index k = 0; k < phi_block_dim(b); ++k) {
      std::string name = static_cast<Index>(names.size()) == phi_block_dim(b)
                             ? names[static_cast<std::size_t>(k)]
                             : "phi_" + std::to_string(b) + "_" + std::to_string(b + 1) +
                                   (phi_block_dim(b) > 1 ? "[" + std::to_string(k) + "]" : "");
      labels_[static_cast<std::size_t>(phi_block_offset(b) + k)] = std::move(name);
    }
  }
  for (int m = 1; m <= M; ++m) {
    auto names = submodel(m).psi_labels();
    for (Index k = 0; k < psi_dim(m); ++k) {
      std::string name = static_cast<Index>(names.size()) == psi_dim(m)
                             ? names[static_cast<std::size_t>(k)]
                             : "psi_" + std::to_string(m) + (psi_dim(m) > 1 ? "[" + std::to_string(k) + "]" : "");
      labels_[static_cast<std::size_t>(psi_offset(m) + k)] = std::move(name);
    }
  }
  std::set<std::string> seen;
  for (const auto& l : labels_)
    if (!seen.insert(l).second) throw ShapeError("duplicate coordinate label '" + l + "'");

  local_cols_.assign(static_cast<std::size_t>(M + 1), {});
  for (int m = 1; m <= M; ++m) {
    auto& cols = local_cols_[static_cast<std::size_t>(m)];
    if (m > 1)
      for (Index c : phi_block_columns(m - 1)) cols.push_back(c);
    if (m < M)
      for (Index c : phi_block_columns(m)) cols.push_back(c);
    for (Index c : psi_columns(m)) cols.push_back(c);
  }
}

void ChainMeldedModel::build_decomposition() {
  const int M = this->M();
  auto& lambda = pooling_.lambda;
  if (static_cast<int>(lambda.size()) != M)
    throw ConfigError("pooling.lambda must have " + std::to_string(M) + " entries, got " +
                      std::to_string(lambda.size()));
  for (double l : lambda)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("pooling.lambda entries must be finite and >= 0");
  if (std::accumulate(lambda.begin(), lambda.end(), 0.0) < 1.0)
    warnings_.push_back("pooling weights sum to less than one; the pooled prior may be improper");

  if (pooling_.roles.empty()) pooling_.roles = default_pool_roles(M);
  const auto& roles = pooling_.roles;
  if (static_cast<int>(roles.size()) != M)
    throw ConfigError("pooling.roles must have " + std::to_string(M) + " entries, got " +
                      std::to_string(roles.size()));
  auto role = [&](int m) { return roles[static_cast<std::size_t>(m - 1)]; };
  bool any_correction = false;
  for (int m = 1; m <= M; ++m) any_correction = any_correction || role(m) == PoolRole::correction;

  pieces_.assign(static_cast<std::size_t>(M + 1), {});
  using Piece = PoolContribution::Piece;
  using Slot = PoolContribution::Slot;

  if (pooling_.custom_pool) {
    if (M != 3 || role(2) != PoolRole::correction || role(1) == PoolRole::correction ||
        role(3) == PoolRole::correction)
      throw ConfigError(
          "a custom pooling function requires three submodels with roles (original|flat, correction, "
          "original|flat)");
    for (int m : {1, 3})
      if (role(m) == PoolRole::original) {
        pieces_[static_cast<std::size_t>(m)].push_back({m, Piece::full, Slot::all, 1.0});
        pieces_[2].push_back({m, Piece::full, m == 1 ? Slot::left : Slot::right, -1.0});
      }
    return;
  }

  if (!any_correction) {
    // Without a correction submodel the identity holds only if each pool piece
    // already equals lambda_m log p_m.
    for (int m = 1; m <= M; ++m) {
      const double base = role(m) == PoolRole::original ? 1.0 : 0.0;
      if (lambda[static_cast<std::size_t>(m - 1)] != base)
        throw ConfigError("pooling roles cannot reproduce the pooled prior: submodel " + std::to_string(m) +
                          " has lambda " + std::to_string(lambda[static_cast<std::size_t>(m - 1)]) +
                          " but no correction submodel can absorb the difference");
    }
  }
  bool all_correction = true;
  for (int m = 1; m <= M; ++m) all_correction = all_correction && role(m) == PoolRole::correction;
  if (all_correction) throw ConfigError("pooling roles cannot all be 'correction'");

  for (int m = 1; m <= M; ++m) {
    const double lam = lambda[static_cast<std::size_t>(m - 1)];
    auto& own = pieces_[static_cast<std::size_t>(m)];
    switch (role(m)) {
      case PoolRole::original: own.push_back({m, Piece::full, Slot::all, 1.0}); break;
      case PoolRole::flat: break;
      case PoolRole::correction:
        if (lam != 0.0) own.push_back({m, Piece::full, Slot::all, lam});
        continue;
    }
    const double rem = lam - (role(m) == PoolRole::original ? 1.0 : 0.0);
    if (rem == 0.0) continue;
    auto need_correction = [&](int k) {
      if (role(k) != PoolRole::correction)
        throw ConfigError("pooling remainder of submodel " + std::to_string(m) +
                          " must be absorbed by submodel " + std::to_string(k) +
                          ", which is not a correction submodel");
    };
    if (m == 1) {
      need_correction(2);
      pieces_[2].push_back({1, Piece::full, Slot::left, rem});
    } else if (m == M) {
      need_correction(M - 1);
      pieces_[static_cast<std::size_t>(M - 1)].push_back({M, Piece::full, Slot::right, rem});
    } else {
      if (!submodel(m).phi_prior_factorizes())
        throw ConfigError("submodel " + std::to_string(m) +
                          " needs a factorised phi prior to split its pooling remainder between neighbours");
      need_correction(m - 1);
      need_correction(m + 1);
      pieces_[static_cast<std::size_t>(m - 1)].push_back({m, Piece::left, Slot::right, rem});
      pieces_[static_cast<std::size_t>(m + 1)].push_back({m, Piece::right, Slot::left, rem});
    }
  }
}

const Submodel& ChainMeldedModel::submodel(int m) const {
  if (m < 1 || m > M()) throw ShapeError("submodel index " + std::to_string(m) + " out of range");
  return *subs_[static_cast<std::size_t>(m - 1)];
}

Index ChainMeldedModel::phi_block_offset(int b) const {
  if (b < 1 || b >= M()) throw ShapeError("phi block " + std::to_string(b) + " out of range");
  return block_offset_[static_cast<std::size_t>(b)];
}

Index ChainMeldedModel::phi_block_dim(int b) const {
  if (b < 1 || b >= M()) throw ShapeError("phi block " + std::to_string(b) + " out of range");
  return block_dim_[static_cast<std::size_t>(b)];
}

Index ChainMeldedModel::psi_offset(int m) const {
  submodel(m);
  return psi_offset_[static_cast<std::size_t>(m)];
}

Index ChainMeldedModel::psi_dim(int m) const { return submodel(m).dim_psi(); }

std::vector<Index> ChainMeldedModel::phi_block_columns(int b) const {
  std::vector<Index> c(static_cast<std::size_t>(phi_block_dim(b)));
  std::iota(c.begin(), c.end(), phi_block_offset(b));
  return c;
}

std::vector<Index> ChainMeldedModel::psi_columns(int m) const {
  std::vector<Index> c(static_cast<std::size_t>(psi_dim(m)));
  std::iota(c.begin(), c.end(), psi_offset(m));
  return c;
}

const std::vector<Index>& ChainMeldedModel::local_columns(int m) const {
  submodel(m);
  return local_cols_[static_cast<std::size_t>(m)];
}

std::vector<bool> ChainMeldedModel::discrete_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(dim_), false);
  for (int m = 1; m <= M(); ++m) {
    const auto d = submodel(m).psi_discrete();
    for (Index k = 0; k < psi_dim(m); ++k)
      mask[static_cast<std::size_t>(psi_offset(m) + k)] = d[static_cast<std::size_t>(k)];
  }
  return mask;
}

std::vector<double> ChainMeldedModel::local_vector(int m, ConstSpan theta) const {
  if (static_cast<Index>(theta.size()) != dim_)
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(dim_));
  const auto& cols = local_columns(m);
  std::vector<double> out(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) out[k] = theta[static_cast<std::size_t>(cols[k])];
  return out;
}

double ChainMeldedModel::log_pooled_prior(ConstSpan phi) const {
  if (static_cast<Index>(phi.size()) != phi_dim_)
    throw ShapeError("pooled prior expects " + std::to_string(phi_dim_) + " phi coordinates, got " +
                     std::to_string(phi.size()));
  if (pooling_.custom_pool) return pooling_.custom_pool(phi);
  double total = 0.0;
  std::vector<double> local;
  for (int m = 1; m <= M(); ++m) {
    const double lam = pooling_.lambda[static_cast<std::size_t>(m - 1)];
    if (lam == 0.0) continue;
    local.clear();
    if (m > 1)
      for (Index c : phi_block_columns(m - 1)) local.push_back(phi[static_cast<std::size_t>(c)]);
    if (m < M())
      for (Index c : phi_block_columns(m)) local.push_back(phi[static_cast<std::size_t>(c)]);
    const double v = submodel(m).log_phi_prior(local);
    if (v == kNegInf) return kNegInf;
    total += lam * v;
  }
  return total;
}

double ChainMeldedModel::log_pool_piece(int m, ConstSpan local_phi) const {
  const Submodel& sm = submodel(m);
  if (static_cast<Index>(local_phi.size()) != sm.dim_phi())
    throw ShapeError("pool piece of submodel " + std::to_string(m) + " expects " +
                     std::to_string(sm.dim_phi()) + " coordinates");
  const auto left = local_phi.first(static_cast<std::size_t>(sm.dim_phi_left()));
  const auto right = local_phi.subspan(static_cast<std::size_t>(sm.dim_phi_left()));
  double total = 0.0;
  if (pooling_.custom_pool && m == 2) {
    total = pooling_.custom_pool(local_phi);
    if (total == kNegInf) return kNegInf;
  }
  for (const auto& c : pieces_[static_cast<std::size_t>(m)]) {
    const ConstSpan slot = c.slot == PoolContribution::Slot::all    ? local_phi
                           : c.slot == PoolContribution::Slot::left ? left
                                                                    : right;
    const Submodel& src = submodel(c.source);
    double v = 0.0;
    switch (c.piece) {
      case PoolContribution::Piece::full: v = src.log_phi_prior(slot); break;
      case PoolContribution::Piece::left: v = src.log_phi_prior_left(slot); break;
      case PoolContribution::Piece::right: v = src.log_phi_prior_right(slot); break;
    }
    if (v == kNegInf) return kNegInf;
    total += c.coef * v;
  }
  return total;
}

double ChainMeldedModel::submodel_term_local(int m, ConstSpan local) const {
  const Submodel& sm = submodel(m);
  if (static_cast<Index>(local.size()) != sm.dim_local())
    throw ShapeError("submodel " + std::to_string(m) + " expects " + std::to_string(sm.dim_local()) +
                     " local coordinates");
  const auto phi = local.first(static_cast<std::size_t>(sm.dim_phi()));
  const auto psi = local.subspan(static_cast<std::size_t>(sm.dim_phi()));
  const double pool = log_pool_piece(m, phi);
  if (pool == kNegInf) return kNegInf;
  const double cond = sm.log_psi_prior(phi, psi);
  if (cond == kNegInf) return kNegInf;
  const double v = pool + cond + sm.log_likelihood(phi, psi);
  if (std::isnan(v)) throw NumericalError("submodel " + std::to_string(m) + " density evaluated to NaN");
  return v;
}

double ChainMeldedModel::submodel_term(int m, ConstSpan theta) const {
  const auto local = local_vector(m, theta);
  return submodel_term_local(m, local);
}

double ChainMeldedModel::log_melded_joint(ConstSpan theta) const {
  double total = 0.0;
  for (int m = 1; m <= M(); ++m) {
    const double v = submodel_term(m, theta);
    if (v == kNegInf) return kNegInf;
    total += v;
  }
  return total;
}

double ChainMeldedModel::log_melded_joint(ConstSpan phi, ConstSpan psi) const {
  if (static_cast<Index>(phi.size()) != phi_dim_ || static_cast<Index>(psi.size()) != dim_ - phi_dim_)
    throw ShapeError("log_melded_joint: phi/psi sizes do not match the model layout");
  std::vector<double> theta(phi.begin(), phi.end());
  theta.insert(theta.end(), psi.begin(), psi.end());
  return log_melded_joint(theta);
}

double ChainMeldedModel::log_melded_subset(std::span<const int> subset, ConstSpan theta) const {
  if (subset.empty()) throw ShapeError("submodel subset must not be empty");
  std::set<int> seen;
  double total = 0.0;
  for (int m : subset) {
    if (m < 1 || m > M()) throw ShapeError("subset member " + std::to_string(m) + " out of range");
    if (!seen.insert(m).second) throw ShapeError("subset member " + std::to_string(m) + " repeated");
    const double v = submodel_term(m, theta);
    if (v == kNegInf) return kNegInf;
    total += v;
  }
  return total;
}

}  // namespace dcmeld
