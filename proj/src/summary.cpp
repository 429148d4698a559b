#include "dcmeld/summary.hpp"

#include "dcmeld/particle_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace dcmeld {

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double p) {
  if (values.size() != weights.size() || values.empty()) throw ShapeError("weighted_quantile: bad input sizes");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double cum = 0.0;
  for (std::size_t k : order) {
    if (weights[k] == 0.0) continue;
    cum += weights[k];
    if (cum >= p * total * (1.0 - 1e-12)) return values[k];
  }
  return values[order.back()];
}

double batch_means_ess(std::span<const double> x) {
  const auto n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  if (var == 0.0) return static_cast<double>(n);
  const auto b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t batches = n / b;
  double bvar = 0.0;
  for (std::size_t k = 0; k < batches; ++k) {
    const double m = std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(k * b),
                                     x.begin() + static_cast<std::ptrdiff_t>((k + 1) * b), 0.0) /
                     static_cast<double>(b);
    bvar += (m - mean) * (m - mean);
  }
  bvar = bvar / static_cast<double>(batches - 1) * static_cast<double>(b);
  const double ess = static_cast<double>(n) * var / bvar;
  return std::clamp(ess, 1.0, static_cast<double>(n));
}

std::vector<ColumnSummary> summarize(const WeightedParticleSystem& s) {
  s.validate();
  const VectorXd w = normalized_weights(s.log_weights);
  const bool equal = s.equally_weighted();
  const double kish = 1.0 / w.squaredNorm();
  std::vector<ColumnSummary> out;
  std::vector<double> col(static_cast<std::size_t>(s.size()));
  const std::span<const double> ws(w.data(), static_cast<std::size_t>(w.size()));
  for (Index c = 0; c < s.dim(); ++c) {
    for (Index i = 0; i < s.size(); ++i) col[static_cast<std::size_t>(i)] = s.values(i, c);
    ColumnSummary r;
    r.parameter = s.labels[static_cast<std::size_t>(c)];
    // Centred on the first value so constant columns come out exact.
    const double shift = col.front();
    double offset = 0.0;
    for (Index i = 0; i < s.size(); ++i) offset += w[i] * (col[static_cast<std::size_t>(i)] - shift);
    r.mean = shift + offset;
    double var = 0.0;
    for (Index i = 0; i < s.size(); ++i) var += w[i] * (col[static_cast<std::size_t>(i)] - r.mean) * (col[static_cast<std::size_t>(i)] - r.mean);
    r.sd = std::sqrt(var);
    r.q025 = weighted_quantile(col, ws, 0.025);
    r.q50 = weighted_quantile(col, ws, 0.5);
    r.q975 = weighted_quantile(col, ws, 0.975);
    r.ess = equal ? batch_means_ess(col) : kish;
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<ColumnSummary>& rows) {
  out << "parameter,statistic,value\n";
  for (const auto& r : rows) {
    const std::pair<const char*, double> stats[] = {{"mean", r.mean}, {"sd", r.sd},   {"q2.5", r.q025},
                                                    {"q50", r.q50},   {"q97.5", r.q975}, {"ess", r.ess}};
    for (const auto& [name, v] : stats) out << r.parameter << ',' << name << ',' << format_double(v) << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ColumnSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_summary_csv(out, rows);
}

}  // namespace dcmeld
