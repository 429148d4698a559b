#include "dcmeld/meld_target.hpp"

#include <numeric>

namespace dcmeld {

namespace {

std::function<double(ConstSpan)> remapped(std::function<double(ConstSpan)> f, std::vector<Index> cols) {
  return [f = std::move(f), cols = std::move(cols)](ConstSpan theta) {
    thread_local std::vector<double> local;
    // Factors never call back into other terms, so one buffer per thread is enough.
    local.resize(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) local[k] = theta[static_cast<std::size_t>(cols[k])];
    return f(local);
  };
}

std::vector<Index> map_deps(const std::vector<Index>& deps, const std::vector<Index>& cols) {
  std::vector<Index> out;
  out.reserve(deps.size());
  for (Index d : deps) out.push_back(cols[static_cast<std::size_t>(d)]);
  return out;
}

void check_cols(const ChainMeldedModel& model, int m, const std::vector<Index>& cols) {
  if (static_cast<Index>(cols.size()) != model.submodel(m).dim_local())
    throw ShapeError("column map for submodel " + std::to_string(m) + " has the wrong length");
}

}  // namespace

void append_submodel_terms(std::vector<TargetTerm>& terms, const ChainMeldedModel& model, int m,
                           const std::vector<Index>& cols, double base_coef, double target_coef) {
  check_cols(model, m, cols);
  const Submodel& sm = model.submodel(m);
  const Index dp = sm.dim_phi();
  std::vector<Index> phi_local(static_cast<std::size_t>(dp));
  std::iota(phi_local.begin(), phi_local.end(), Index{0});
  const std::string tag = "submodel" + std::to_string(m);

  auto pool = [&model, m, dp](ConstSpan local) {
    return model.log_pool_piece(m, local.first(static_cast<std::size_t>(dp)));
  };
  terms.push_back({map_deps(phi_local, cols), remapped(pool, cols), base_coef, target_coef,
                   tag + ":pool"});
  for (auto& f : sm.conditional_factors())
    terms.push_back({map_deps(f.deps, cols), remapped(std::move(f.eval), cols), base_coef, target_coef,
                     tag + ":" + f.name});
}

void append_proposal_terms(std::vector<TargetTerm>& terms, const ChainMeldedModel& model, int m,
                           const std::vector<Index>& cols, double base_coef, double target_coef) {
  check_cols(model, m, cols);
  const std::string tag = "proposal" + std::to_string(m);
  for (auto& f : model.submodel(m).proposal_factors())
    terms.push_back({map_deps(f.deps, cols), remapped(std::move(f.eval), cols), base_coef, target_coef,
                     tag + ":" + f.name});
}

void append_phi_prior_term(std::vector<TargetTerm>& terms, const ChainMeldedModel& model, int m,
                           const std::vector<Index>& phi_cols, double base_coef, double target_coef) {
  const Submodel& sm = model.submodel(m);
  if (static_cast<Index>(phi_cols.size()) != sm.dim_phi())
    throw ShapeError("phi column map for submodel " + std::to_string(m) + " has the wrong length");
  terms.push_back({phi_cols, remapped([&sm](ConstSpan phi) { return sm.log_phi_prior(phi); }, phi_cols),
                   base_coef, target_coef, "phi_prior" + std::to_string(m)});
}

TemperingTarget melded_posterior_target(const ChainMeldedModel& model) {
  std::vector<TargetTerm> terms;
  for (int m = 1; m <= model.M(); ++m) append_submodel_terms(terms, model, m, model.local_columns(m), 0.0, 1.0);
  TemperingTarget t(model.dim(), std::move(terms), model.labels());
  t.set_discrete(model.discrete_mask());
  return t;
}

}  // namespace dcmeld
