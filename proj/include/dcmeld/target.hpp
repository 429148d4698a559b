#pragma once

#include "dcmeld/random.hpp"
#include "dcmeld/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dcmeld {

/// A log-density piece f_k(theta) entering the base with coefficient b_k and
/// the target with coefficient t_k. The tempered density at alpha is
/// sum_k ((1 - alpha) b_k + alpha t_k) f_k.
struct TargetTerm {
  std::vector<Index> deps;
  std::function<double(ConstSpan theta)> eval;
  double base_coef = 0.0;
  double target_coef = 1.0;
  std::string name;

  double coef(double alpha) const noexcept { return (1.0 - alpha) * base_coef + alpha * target_coef; }
};

/// Base and target densities of a tempering path, expressed as a list of
/// shared terms so that moves can re-evaluate only what a proposal touches.
/// Coordinates may be marked discrete (integer steps) or frozen (carried
/// along but never moved).
class TemperingTarget {
 public:
  TemperingTarget() = default;
  TemperingTarget(Index dim, std::vector<TargetTerm> terms, std::vector<std::string> labels = {});

  /// Two-term target from whole-vector densities.
  static TemperingTarget from_densities(Index dim, std::function<double(ConstSpan)> log_base,
                                        std::function<double(ConstSpan)> log_target,
                                        std::vector<std::string> labels = {});

  Index dim() const noexcept { return dim_; }
  Index term_count() const noexcept { return static_cast<Index>(terms_.size()); }
  const std::vector<TargetTerm>& terms() const noexcept { return terms_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  void set_discrete(std::vector<bool> mask);
  void set_frozen(std::vector<bool> mask);
  const std::vector<bool>& discrete() const noexcept { return discrete_; }
  const std::vector<bool>& frozen() const noexcept { return frozen_; }
  std::vector<Index> movable_continuous() const;
  std::vector<Index> movable_discrete() const;

  /// Sorted indices of terms that read any of the given coordinates.
  std::vector<int> terms_touching(std::span<const Index> coords) const;
  const std::vector<int>& terms_touching(Index coord) const;

  /// Evaluates one term, raising NumericalError on NaN.
  double eval_term(int k, ConstSpan theta) const;
  void evaluate_terms(ConstSpan theta, MutSpan out) const;

  double log_base(ConstSpan theta) const;
  double log_target(ConstSpan theta) const;
  double tempered(double alpha, ConstSpan theta) const;
  /// log_target - log_base, skipping terms shared with equal coefficients.
  double log_ratio(ConstSpan theta) const;

  /// Same quantities from cached term values.
  double combine(double alpha, ConstSpan values) const;
  double combine_ratio(ConstSpan values) const;
  /// Tempered log-density over a subset of terms.
  double combine_subset(double alpha, std::span<const int> subset, ConstSpan values) const;

  /// Optional initial sampler for theta.
  std::function<void(RandomStream&, MutSpan)> init_sampler;

 private:
  Index dim_ = 0;
  std::vector<TargetTerm> terms_;
  std::vector<std::string> labels_;
  std::vector<bool> discrete_, frozen_;
  std::vector<std::vector<int>> by_coord_;
};

double tempered_log_density(const TemperingTarget& target, double alpha, ConstSpan theta);
/// (alpha_next - alpha_prev) * (log_target - log_base).
double weight_increment(const TemperingTarget& target, double alpha_prev, double alpha_next, ConstSpan theta);

/// Difference of two log-densities that may be -inf: -inf when the new value
/// is -inf, +inf when only the old one is.
inline double log_density_difference(double next, double prev) noexcept {
  if (next == kNegInf) return kNegInf;
  if (prev == kNegInf) return std::numeric_limits<double>::infinity();
  return next - prev;
}

}  // namespace dcmeld
