#include "dcmeld/models/gaussian_chain.hpp"

#include "dcmeld/models/densities.hpp"

#include <Eigen/Cholesky>

namespace dcmeld {

namespace {

class GaussianSubmodel final : public Submodel {
 public:
  GaussianSubmodel(GaussianSubmodelSpec spec, bool has_left, bool has_right)
      : s_(std::move(spec)), left_(has_left), right_(has_right) {
    for (double y : s_.y) {
      sum_y_ += y;
      sum_y2_ += y * y;
    }
  }

  Index dim_phi_left() const override { return left_ ? 1 : 0; }
  Index dim_phi_right() const override { return right_ ? 1 : 0; }
  Index dim_psi() const override { return 1; }

  bool phi_prior_factorizes() const override { return true; }
  double log_phi_prior_left(ConstSpan p) const override {
    return left_ ? dens::normal(p[0], s_.phi_left.mean, s_.phi_left.sd) : 0.0;
  }
  double log_phi_prior_right(ConstSpan p) const override {
    return right_ ? dens::normal(p[0], s_.phi_right.mean, s_.phi_right.sd) : 0.0;
  }
  double log_phi_prior(ConstSpan phi) const override {
    const auto nl = static_cast<std::size_t>(dim_phi_left());
    return log_phi_prior_left(phi.first(nl)) + log_phi_prior_right(phi.subspan(nl));
  }
  void sample_phi_prior_right(RandomStream& rng, MutSpan p) const override {
    if (right_) p[0] = rng.normal(s_.phi_right.mean, s_.phi_right.sd);
  }
  void sample_phi_prior(RandomStream& rng, MutSpan phi) const override {
    std::size_t k = 0;
    if (left_) phi[k++] = rng.normal(s_.phi_left.mean, s_.phi_left.sd);
    if (right_) phi[k] = rng.normal(s_.phi_right.mean, s_.phi_right.sd);
  }

  double log_psi_prior(ConstSpan, ConstSpan psi) const override { return dens::normal(psi[0], s_.psi.mean, s_.psi.sd); }
  void sample_psi_prior(ConstSpan, RandomStream& rng, MutSpan psi) const override {
    psi[0] = rng.normal(s_.psi.mean, s_.psi.sd);
  }
  std::vector<double> psi_reference(ConstSpan) const override { return {s_.psi.mean}; }

  double log_likelihood(ConstSpan phi, ConstSpan psi) const override {
    double mu = psi[0];
    for (double p : phi) mu += p;
    const double n = static_cast<double>(s_.y.size());
    // sum (y - mu)^2 expanded through sufficient statistics
    const double ss = sum_y2_ - 2.0 * mu * sum_y_ + n * mu * mu;
    return -0.5 * ss / (s_.sigma * s_.sigma) - n * (std::log(s_.sigma) + 0.5 * std::log(2.0 * std::numbers::pi));
  }

 private:
  GaussianSubmodelSpec s_;
  bool left_, right_;
  double sum_y_ = 0.0, sum_y2_ = 0.0;
};

}  // namespace

void GaussianChainSpec::validate() const {
  if (M() < 3) throw ConfigError("model.submodels: a Gaussian chain needs at least three submodels");
  for (int m = 0; m < M(); ++m) {
    const auto& s = submodels[static_cast<std::size_t>(m)];
    const std::string where = "model.submodels[" + std::to_string(m) + "]";
    if (!(s.sigma > 0.0)) throw ConfigError(where + ".sigma must be positive");
    if (!(s.psi.sd > 0.0) || !(s.phi_left.sd > 0.0) || !(s.phi_right.sd > 0.0))
      throw ConfigError(where + ": prior standard deviations must be positive");
  }
}

GaussianChainSpec gaussian_chain_default_spec(int M, std::uint64_t data_seed, int n_obs) {
  if (M < 3) throw ConfigError("model.M must be at least 3");
  if (n_obs < 0) throw ConfigError("model.n_obs must be non-negative");
  GaussianChainSpec spec;
  spec.submodels.resize(static_cast<std::size_t>(M));
  RandomStream rng = RandomStream::derive(data_seed, {static_cast<std::uint64_t>(StreamPurpose::simulate)});
  std::vector<double> phi(static_cast<std::size_t>(M - 1));
  for (double& p : phi) p = rng.normal();
  for (int m = 1; m <= M; ++m) {
    auto& s = spec.submodels[static_cast<std::size_t>(m - 1)];
    const double psi = rng.normal();
    double mu = psi;
    if (m > 1) mu += phi[static_cast<std::size_t>(m - 2)];
    if (m < M) mu += phi[static_cast<std::size_t>(m - 1)];
    for (int i = 0; i < n_obs; ++i) s.y.push_back(rng.normal(mu, s.sigma));
  }
  return spec;
}

std::vector<std::shared_ptr<const Submodel>> gaussian_chain_submodels(const GaussianChainSpec& spec) {
  spec.validate();
  std::vector<std::shared_ptr<const Submodel>> subs;
  for (int m = 1; m <= spec.M(); ++m)
    subs.push_back(std::make_shared<GaussianSubmodel>(spec.submodels[static_cast<std::size_t>(m - 1)], m > 1, m < spec.M()));
  return subs;
}

ChainMeldedModel gaussian_chain_build(const GaussianChainSpec& spec, PooledPriorSpec pooling) {
  return ChainMeldedModel(gaussian_chain_submodels(spec), std::move(pooling));
}

GaussianPosterior gaussian_chain_exact_posterior(const GaussianChainSpec& spec, const std::vector<double>& lambda) {
  spec.validate();
  const int M = spec.M();
  if (static_cast<int>(lambda.size()) != M) throw ConfigError("pooling.lambda must have one weight per submodel");
  const Index d = 2 * M - 1;
  const auto phi_col = [](int b) { return static_cast<Index>(b - 1); };
  const auto psi_col = [M](int m) { return static_cast<Index>(M - 1 + m - 1); };
  MatrixXd prec = MatrixXd::Zero(d, d);
  VectorXd lin = VectorXd::Zero(d);
  auto add_prior = [&](Index c, const NormalPrior& p, double w) {
    prec(c, c) += w / (p.sd * p.sd);
    lin[c] += w * p.mean / (p.sd * p.sd);
  };
  for (int m = 1; m <= M; ++m) {
    const auto& s = spec.submodels[static_cast<std::size_t>(m - 1)];
    const double lam = lambda[static_cast<std::size_t>(m - 1)];
    std::vector<Index> cols;
    if (m > 1) {
      add_prior(phi_col(m - 1), s.phi_left, lam);
      cols.push_back(phi_col(m - 1));
    }
    if (m < M) {
      add_prior(phi_col(m), s.phi_right, lam);
      cols.push_back(phi_col(m));
    }
    add_prior(psi_col(m), s.psi, 1.0);
    cols.push_back(psi_col(m));
    const double n = static_cast<double>(s.y.size());
    double sum_y = 0.0;
    for (double y : s.y) sum_y += y;
    const double tau = 1.0 / (s.sigma * s.sigma);
    for (Index a : cols) {
      lin[a] += tau * sum_y;
      for (Index b : cols) prec(a, b) += tau * n;
    }
  }
  Eigen::LLT<MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericalError("melded Gaussian precision is not positive definite");
  GaussianPosterior out;
  out.mean = llt.solve(lin);
  out.cov = llt.solve(MatrixXd::Identity(d, d));
  return out;
}

}  // namespace dcmeld
