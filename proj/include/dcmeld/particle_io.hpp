#pragma once

#include "dcmeld/particles.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace dcmeld {

/// CSV with header `labels..., log_weight`; values printed with 17
/// significant digits so a round trip is exact.
void write_csv(std::ostream& out, const WeightedParticleSystem& s);
void write_csv(const std::filesystem::path& path, const WeightedParticleSystem& s);
WeightedParticleSystem read_csv(std::istream& in);
WeightedParticleSystem read_csv(const std::filesystem::path& path);

/// Columnar binary dump, little-endian:
///   u64 N, u64 d, then d labels as (u64 length, bytes),
///   N*d f64 values row-major, N f64 log-weights.
void write_binary(const std::filesystem::path& path, const WeightedParticleSystem& s);
WeightedParticleSystem read_binary(const std::filesystem::path& path);

/// One 1-based index per line, preceded by a `source_size=<n>` header line.
void write_indices(const std::filesystem::path& path, const IndexMultiset& idx);
IndexMultiset read_indices(const std::filesystem::path& path);

/// Shortest round-trip text form of a double (printf %.17g).
std::string format_double(double x);

}  // namespace dcmeld
