#include "dcmeld/target.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dcmeld {

TemperingTarget::TemperingTarget(Index dim, std::vector<TargetTerm> terms, std::vector<std::string> labels)
    : dim_(dim), terms_(std::move(terms)), labels_(std::move(labels)) {
  if (dim_ < 0) throw ShapeError("negative target dimension");
  if (labels_.empty())
    for (Index j = 0; j < dim_; ++j) labels_.push_back("theta[" + std::to_string(j) + "]");
  if (static_cast<Index>(labels_.size()) != dim_) throw ShapeError("target labels do not match its dimension");
  discrete_.assign(static_cast<std::size_t>(dim_), false);
  frozen_.assign(static_cast<std::size_t>(dim_), false);
  by_coord_.assign(static_cast<std::size_t>(dim_), {});
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const auto& t = terms_[k];
    if (!t.eval) throw ShapeError("target term '" + t.name + "' has no evaluator");
    if (t.base_coef < 0.0 || t.target_coef < 0.0)
      throw ShapeError("target term '" + t.name + "' has a negative coefficient");
    for (Index d : t.deps) {
      if (d < 0 || d >= dim_) throw ShapeError("target term '" + t.name + "' reads coordinate out of range");
      auto& list = by_coord_[static_cast<std::size_t>(d)];
      if (list.empty() || list.back() != static_cast<int>(k)) list.push_back(static_cast<int>(k));
    }
  }
}

TemperingTarget TemperingTarget::from_densities(Index dim, std::function<double(ConstSpan)> log_base,
                                                std::function<double(ConstSpan)> log_target,
                                                std::vector<std::string> labels) {
  std::vector<Index> all(static_cast<std::size_t>(dim));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<TargetTerm> terms;
  terms.push_back({all, std::move(log_base), 1.0, 0.0, "base"});
  terms.push_back({all, std::move(log_target), 0.0, 1.0, "target"});
  return {dim, std::move(terms), std::move(labels)};
}

void TemperingTarget::set_discrete(std::vector<bool> mask) {
  if (static_cast<Index>(mask.size()) != dim_) throw ShapeError("discrete mask length mismatch");
  discrete_ = std::move(mask);
}

void TemperingTarget::set_frozen(std::vector<bool> mask) {
  if (static_cast<Index>(mask.size()) != dim_) throw ShapeError("frozen mask length mismatch");
  frozen_ = std::move(mask);
}

std::vector<Index> TemperingTarget::movable_continuous() const {
  std::vector<Index> out;
  for (Index j = 0; j < dim_; ++j)
    if (!discrete_[static_cast<std::size_t>(j)] && !frozen_[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

std::vector<Index> TemperingTarget::movable_discrete() const {
  std::vector<Index> out;
  for (Index j = 0; j < dim_; ++j)
    if (discrete_[static_cast<std::size_t>(j)] && !frozen_[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

std::vector<int> TemperingTarget::terms_touching(std::span<const Index> coords) const {
  std::vector<int> out;
  for (Index c : coords) {
    const auto& l = terms_touching(c);
    out.insert(out.end(), l.begin(), l.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const std::vector<int>& TemperingTarget::terms_touching(Index coord) const {
  if (coord < 0 || coord >= dim_) throw ShapeError("coordinate out of range");
  return by_coord_[static_cast<std::size_t>(coord)];
}

double TemperingTarget::eval_term(int k, ConstSpan theta) const {
  const auto& t = terms_[static_cast<std::size_t>(k)];
  const double v = t.eval(theta);
  if (std::isnan(v)) throw NumericalError("term '" + t.name + "' evaluated to NaN");
  return v;
}

void TemperingTarget::evaluate_terms(ConstSpan theta, MutSpan out) const {
  if (static_cast<Index>(theta.size()) != dim_) throw ShapeError("theta has the wrong dimension");
  for (std::size_t k = 0; k < terms_.size(); ++k) out[k] = eval_term(static_cast<int>(k), theta);
}

double TemperingTarget::combine(double alpha, ConstSpan values) const {
  double total = 0.0;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const double c = terms_[k].coef(alpha);
    if (c == 0.0) continue;
    if (values[k] == kNegInf) return kNegInf;
    total += c * values[k];
  }
  return total;
}

double TemperingTarget::combine_subset(double alpha, std::span<const int> subset, ConstSpan values) const {
  double total = 0.0;
  for (int k : subset) {
    const double c = terms_[static_cast<std::size_t>(k)].coef(alpha);
    if (c == 0.0) continue;
    if (values[static_cast<std::size_t>(k)] == kNegInf) return kNegInf;
    total += c * values[static_cast<std::size_t>(k)];
  }
  return total;
}

double TemperingTarget::combine_ratio(ConstSpan values) const {
  double total = 0.0;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const double c = terms_[k].target_coef - terms_[k].base_coef;
    if (c == 0.0) continue;
    // A term that vanishes on either path endpoint removes the particle.
    if (values[k] == kNegInf) return kNegInf;
    total += c * values[k];
  }
  return total;
}

double TemperingTarget::log_base(ConstSpan theta) const { return tempered(0.0, theta); }

double TemperingTarget::log_target(ConstSpan theta) const { return tempered(1.0, theta); }

double TemperingTarget::tempered(double alpha, ConstSpan theta) const {
  if (static_cast<Index>(theta.size()) != dim_) throw ShapeError("theta has the wrong dimension");
  double total = 0.0;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const double c = terms_[k].coef(alpha);
    if (c == 0.0) continue;
    const double v = eval_term(static_cast<int>(k), theta);
    if (v == kNegInf) return kNegInf;
    total += c * v;
  }
  return total;
}

double TemperingTarget::log_ratio(ConstSpan theta) const {
  if (static_cast<Index>(theta.size()) != dim_) throw ShapeError("theta has the wrong dimension");
  double total = 0.0;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const double c = terms_[k].target_coef - terms_[k].base_coef;
    if (c == 0.0) continue;
    const double v = eval_term(static_cast<int>(k), theta);
    if (v == kNegInf) return kNegInf;
    total += c * v;
  }
  return total;
}

double tempered_log_density(const TemperingTarget& target, double alpha, ConstSpan theta) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ShapeError("tempering exponent must lie in [0, 1]");
  return target.tempered(alpha, theta);
}

double weight_increment(const TemperingTarget& target, double alpha_prev, double alpha_next, ConstSpan theta) {
  if (!(0.0 <= alpha_prev && alpha_prev <= alpha_next && alpha_next <= 1.0))
    throw ShapeError("weight_increment needs 0 <= alpha_prev <= alpha_next <= 1");
  if (alpha_next == alpha_prev) return 0.0;
  const double r = target.log_ratio(theta);
  if (r == kNegInf) return kNegInf;
  return (alpha_next - alpha_prev) * r;
}

}  // namespace dcmeld
