#pragma once

#include "dcmeld/random.hpp"
#include "dcmeld/types.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dcmeld {

/// A log-density piece over a submodel's local coordinates
/// [phi_left, phi_right, psi]. `deps` lists the local coordinates it reads.
struct Factor {
  std::vector<Index> deps;
  std::function<double(ConstSpan local)> eval;
  std::string name;
};

/// One submodel of a chain. phi is the concatenation [phi_left, phi_right];
/// the first submodel has no left block and the last has no right block.
/// Data are bound at construction. Implementations must be safe to call
/// concurrently.
class Submodel {
 public:
  virtual ~Submodel() = default;

  virtual Index dim_phi_left() const = 0;
  virtual Index dim_phi_right() const = 0;
  virtual Index dim_psi() const = 0;
  Index dim_phi() const { return dim_phi_left() + dim_phi_right(); }
  Index dim_local() const { return dim_phi() + dim_psi(); }

  /// log p_m(phi), the marginal prior on the shared parameters.
  virtual double log_phi_prior(ConstSpan phi) const = 0;
  virtual void sample_phi_prior(RandomStream& rng, MutSpan phi) const = 0;

  /// Submodels whose phi prior is a product over the two blocks can expose
  /// the pieces; needed to split pooling remainders of interior submodels
  /// and to propose the unowned centre block of a joint stage.
  virtual bool phi_prior_factorizes() const { return false; }
  virtual double log_phi_prior_left(ConstSpan phi_left) const;
  virtual double log_phi_prior_right(ConstSpan phi_right) const;
  virtual void sample_phi_prior_right(RandomStream& rng, MutSpan phi_right) const;

  /// log p_m(psi | phi).
  virtual double log_psi_prior(ConstSpan phi, ConstSpan psi) const = 0;
  virtual void sample_psi_prior(ConstSpan phi, RandomStream& rng, MutSpan psi) const = 0;
  /// log p_m(Y_m | phi, psi).
  virtual double log_likelihood(ConstSpan phi, ConstSpan psi) const = 0;
  /// log p_m(phi, psi, Y_m).
  double log_joint(ConstSpan phi, ConstSpan psi) const;

  /// Proposal q_m(psi | phi) used to extend merged particles. Defaults to the
  /// psi prior.
  virtual void sample_psi_proposal(ConstSpan phi, RandomStream& rng, MutSpan psi) const {
    sample_psi_prior(phi, rng, psi);
  }
  virtual double log_psi_proposal(ConstSpan phi, ConstSpan psi) const { return log_psi_prior(phi, psi); }

  /// Reference value for psi (prior mean); used as the plug-in value when
  /// weighting candidate tuples during an extended merge.
  virtual std::vector<double> psi_reference(ConstSpan phi) const = 0;
  /// A point of positive density for chain initialisation.
  virtual std::vector<double> initial_psi(ConstSpan phi) const { return psi_reference(phi); }
  /// True for integer-valued psi coordinates.
  virtual std::vector<bool> psi_discrete() const {
    return std::vector<bool>(static_cast<std::size_t>(dim_psi()), false);
  }

  /// Names of the right phi block and of psi; empty means generated names.
  virtual std::vector<std::string> phi_right_labels() const { return {}; }
  virtual std::vector<std::string> psi_labels() const { return {}; }

  /// log p(psi | phi) + log p(Y | phi, psi) split into factors so that
  /// single-coordinate moves only re-evaluate what they touch. The default
  /// is a single factor over every local coordinate.
  virtual std::vector<Factor> conditional_factors() const;
  /// log q(psi | phi) split the same way.
  virtual std::vector<Factor> proposal_factors() const;
};

enum class PoolRole {
  original,    ///< p_pool,m = p_m(phi_m)
  correction,  ///< absorbs whatever the identity needs on its own phi blocks
  flat,        ///< p_pool,m = 1
};

std::string to_string(PoolRole r);
PoolRole pool_role_from_string(const std::string& s);

struct PooledPriorSpec {
  std::vector<double> lambda;
  /// One role per submodel; empty selects defaults from the stage plan.
  std::vector<PoolRole> roles;
  /// Optional replacement for logarithmic pooling, evaluated on the
  /// concatenated phi. Supported when a single correction submodel sees
  /// every phi block (three submodels).
  std::function<double(ConstSpan phi)> custom_pool;
};

/// Roles matching the stage plan: stage-one submodels keep their original
/// prior, later ones carry corrections.
std::vector<PoolRole> default_pool_roles(int M);

/// M submodels joined along a chain. Global coordinates are laid out as
/// [phi_{1,2}, ..., phi_{M-1,M}, psi_1, ..., psi_M].
class ChainMeldedModel {
 public:
  ChainMeldedModel(std::vector<std::shared_ptr<const Submodel>> submodels, PooledPriorSpec pooling);

  int M() const noexcept { return static_cast<int>(subs_.size()); }
  const Submodel& submodel(int m) const;
  const PooledPriorSpec& pooling() const noexcept { return pooling_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  Index dim() const noexcept { return dim_; }
  Index phi_dim() const noexcept { return phi_dim_; }
  /// Block b holds phi_{b,b+1}, b = 1..M-1.
  Index phi_block_offset(int b) const;
  Index phi_block_dim(int b) const;
  Index psi_offset(int m) const;
  Index psi_dim(int m) const;
  std::vector<Index> phi_block_columns(int b) const;
  std::vector<Index> psi_columns(int m) const;
  /// Global columns of submodel m's local vector [phi_left, phi_right, psi].
  const std::vector<Index>& local_columns(int m) const;
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::vector<bool> discrete_mask() const;

  /// sum_m lambda_m log p_m(phi_m), unnormalised.
  double log_pooled_prior(ConstSpan phi) const;
  /// Decomposed piece log p_pool,m evaluated on submodel m's local phi.
  double log_pool_piece(int m, ConstSpan local_phi) const;
  /// log p_pool,m - log p_m(phi_m) + log p_m(phi_m, psi_m, Y_m) on m's local vector.
  double submodel_term_local(int m, ConstSpan local) const;
  double submodel_term(int m, ConstSpan theta) const;

  double log_melded_joint(ConstSpan theta) const;
  double log_melded_joint(ConstSpan phi, ConstSpan psi) const;
  /// Sum of submodel terms over a set of 1-based submodel indices.
  double log_melded_subset(std::span<const int> subset, ConstSpan theta) const;

  std::vector<double> local_vector(int m, ConstSpan theta) const;

 private:
  struct PoolContribution {
    int source;  // 1-based submodel whose prior is evaluated
    enum class Piece { full, left, right } piece;
    enum class Slot { all, left, right } slot;  // which part of the receiver's phi it reads
    double coef;
  };

  void build_layout();
  void build_decomposition();

  std::vector<std::shared_ptr<const Submodel>> subs_;
  PooledPriorSpec pooling_;
  std::vector<std::vector<PoolContribution>> pieces_;
  std::vector<Index> block_offset_, block_dim_, psi_offset_;
  std::vector<std::vector<Index>> local_cols_;
  std::vector<std::string> labels_;
  std::vector<std::string> warnings_;
  Index phi_dim_ = 0;
  Index dim_ = 0;
};

}  // namespace dcmeld
