#pragma once

#include "dcmeld/random.hpp"
#include "dcmeld/types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace dcmeld {

/// N particles in d coordinates with log-weights. Individual particles may
/// carry a log-weight of -inf; at least one must be finite.
struct WeightedParticleSystem {
  RowMatrixXd values;
  VectorXd log_weights;
  std::vector<std::string> labels;

  WeightedParticleSystem() = default;
  WeightedParticleSystem(RowMatrixXd v, VectorXd lw, std::vector<std::string> l);

  /// Equally weighted system (all log-weights zero).
  static WeightedParticleSystem uniform(RowMatrixXd v, std::vector<std::string> l);

  Index size() const noexcept { return values.rows(); }
  Index dim() const noexcept { return values.cols(); }
  ConstSpan particle(Index i) const { return row_span(values, i); }

  bool equally_weighted() const noexcept;
  /// Throws ShapeError or DegenerateSystemError when an invariant fails.
  void validate() const;
  Index column(const std::string& label) const;
};

/// Ordered ancestor indices with duplicates. Stored 0-based; the 1-based
/// view is used for serialization.
class IndexMultiset {
 public:
  IndexMultiset() = default;
  IndexMultiset(std::vector<Index> zero_based, Index source_size);

  static IndexMultiset identity(Index n);
  static IndexMultiset from_one_based(const std::vector<Index>& one_based, Index source_size);

  Index size() const noexcept { return static_cast<Index>(idx_.size()); }
  Index source_size() const noexcept { return source_; }
  Index operator[](Index i) const { return idx_[static_cast<std::size_t>(i)]; }
  const std::vector<Index>& indices() const noexcept { return idx_; }
  std::vector<Index> one_based() const;
  bool is_identity() const noexcept;

  friend bool operator==(const IndexMultiset&, const IndexMultiset&) = default;

 private:
  std::vector<Index> idx_;
  Index source_ = 0;
};

enum class ResampleKind { multinomial, systematic };

struct ResampleScheme {
  ResampleKind kind = ResampleKind::systematic;
  /// Resample when ESS / N falls below this value.
  double threshold = 0.5;
  void validate() const;
};

template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.derived().array() - mx).exp().sum());
}

/// Normalized weights from log-weights; throws on an all -inf input.
template <typename Derived>
VectorXd normalized_weights(const Eigen::DenseBase<Derived>& log_weights) {
  const double mx = log_weights.maxCoeff();
  if (mx == kNegInf) throw DegenerateSystemError("all particle weights are zero");
  if (std::isnan(mx) || mx == std::numeric_limits<double>::infinity())
    throw NumericalError("log-weights contain NaN or +inf");
  VectorXd w = (log_weights.derived().array() - mx).exp().matrix();
  return w / w.sum();
}

/// 1 / sum of squared normalized weights.
template <typename Derived>
double ess(const Eigen::DenseBase<Derived>& log_weights) {
  const VectorXd w = normalized_weights(log_weights);
  return 1.0 / w.squaredNorm();
}

/// Draws n ancestor indices proportional to exp(log_weights).
IndexMultiset resample_indices(const VectorXd& log_weights, Index n, ResampleKind kind,
                               RandomStream& rng);

std::pair<WeightedParticleSystem, IndexMultiset> resample(const WeightedParticleSystem& system,
                                                          const ResampleScheme& scheme,
                                                          RandomStream& rng);

/// Rows of m taken in the order given by idx.
RowMatrixXd gather_rows(const RowMatrixXd& m, const IndexMultiset& idx);
WeightedParticleSystem gather(const WeightedParticleSystem& s, const IndexMultiset& idx);

/// result[i] = b[a[i]].
IndexMultiset forward_update(const IndexMultiset& a, const IndexMultiset& b);

struct BackUpdateResult {
  std::vector<IndexMultiset> chain;
  std::vector<WeightedParticleSystem> systems;
};

/// chain = A_1..A_T with A_T at the root; systems S_1..S_{T-1} are indexed by
/// A_1..A_{T-1}. Moving leftward from the root, each A_k becomes A_k o A_{k+1}
/// and S_k is gathered by the new A_k.
BackUpdateResult back_left_update(std::vector<IndexMultiset> chain,
                                  std::vector<WeightedParticleSystem> systems);

/// Mirror of back_left_update: chain[0] is the root end and systems are
/// aligned with chain[1..T-1]; propagation runs away from the root.
BackUpdateResult back_right_update(std::vector<IndexMultiset> chain,
                                   std::vector<WeightedParticleSystem> systems);

}  // namespace dcmeld
