#pragma once

#include "dcmeld/melding.hpp"

#include <memory>
#include <vector>

namespace dcmeld {

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};

/// Submodel m observes y_i ~ N(phi_left + phi_right + psi, sigma^2); the end
/// submodels have only one phi block. Every block is scalar.
struct GaussianSubmodelSpec {
  double sigma = 1.0;
  NormalPrior phi_left;   ///< ignored for m = 1
  NormalPrior phi_right;  ///< ignored for m = M
  NormalPrior psi;
  std::vector<double> y;
};

struct GaussianChainSpec {
  std::vector<GaussianSubmodelSpec> submodels;
  int M() const noexcept { return static_cast<int>(submodels.size()); }
  void validate() const;
};

/// Standard-normal priors, unit noise and n_obs data points per submodel
/// simulated from parameters drawn from the priors.
GaussianChainSpec gaussian_chain_default_spec(int M, std::uint64_t data_seed, int n_obs = 10);

std::vector<std::shared_ptr<const Submodel>> gaussian_chain_submodels(const GaussianChainSpec& spec);
ChainMeldedModel gaussian_chain_build(const GaussianChainSpec& spec, PooledPriorSpec pooling);

struct GaussianPosterior {
  VectorXd mean;
  MatrixXd cov;
};

/// Melded posterior under logarithmic pooling with weights lambda, on the
/// global layout [phi_{1,2}, ..., phi_{M-1,M}, psi_1, ..., psi_M].
GaussianPosterior gaussian_chain_exact_posterior(const GaussianChainSpec& spec, const std::vector<double>& lambda);

}  // namespace dcmeld
