#pragma once

#include "dcmeld/particles.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dcmeld {

struct ColumnSummary {
  std::string parameter;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double ess = 0.0;
};

/// Smallest value whose cumulative normalised weight reaches p.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double p);

/// Batch-means effective sample size of a sequence, clipped to [1, n].
double batch_means_ess(std::span<const double> x);

/// Weighted moments and quantiles per column. ESS is Kish's for weighted
/// systems and the batch-means estimate for equally weighted ones.
std::vector<ColumnSummary> summarize(const WeightedParticleSystem& s);

/// Long format: parameter,statistic,value.
void write_summary_csv(std::ostream& out, const std::vector<ColumnSummary>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<ColumnSummary>& rows);

}  // namespace dcmeld
