#pragma once

#include "dcmeld/melding.hpp"
#include "dcmeld/target.hpp"

#include <vector>

namespace dcmeld {

// Builders that express melded densities as TemperingTarget terms. `cols`
// maps each local coordinate of submodel m ([phi_left, phi_right, psi]) to a
// coordinate of the sampler's theta vector.

/// Terms of log p_pool,m - log p_m(phi_m) + log p_m(phi_m, psi_m, Y_m).
void append_submodel_terms(std::vector<TargetTerm>& terms, const ChainMeldedModel& model, int m,
                           const std::vector<Index>& cols, double base_coef, double target_coef);

/// Terms of log q_m(psi_m | phi_m).
void append_proposal_terms(std::vector<TargetTerm>& terms, const ChainMeldedModel& model, int m,
                           const std::vector<Index>& cols, double base_coef, double target_coef);

/// log p_m(phi_m) as a single term; `phi_cols` covers only the phi part.
void append_phi_prior_term(std::vector<TargetTerm>& terms, const ChainMeldedModel& model, int m,
                           const std::vector<Index>& phi_cols, double base_coef, double target_coef);

/// The full melded posterior on the global layout, every term at (0, 1),
/// with the model's discrete mask.
TemperingTarget melded_posterior_target(const ChainMeldedModel& model);

}  // namespace dcmeld
