#include "dcmeld/particle_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dcmeld {

static_assert(std::endian::native == std::endian::little,
              "binary particle dumps assume a little-endian host");

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

double parse_double(const std::string& field) {
  if (field == "-inf") return kNegInf;
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw ShapeError("malformed number '" + field + "'");
  }
  if (used != field.size()) throw ShapeError("malformed number '" + field + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    if (!cur.empty() && cur.back() == '\r') cur.pop_back();
    out.push_back(cur);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  return f;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw Error("cannot open '" + path.string() + "' for reading");
  return f;
}

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw ShapeError("truncated binary particle dump");
  return v;
}

}  // namespace

void write_csv(std::ostream& out, const WeightedParticleSystem& s) {
  for (const auto& l : s.labels) out << l << ',';
  out << "log_weight\n";
  std::string line;
  for (Index i = 0; i < s.size(); ++i) {
    line.clear();
    for (Index j = 0; j < s.dim(); ++j) {
      line += format_double(s.values(i, j));
      line += ',';
    }
    line += format_double(s.log_weights[i]);
    line += '\n';
    out << line;
  }
}

void write_csv(const std::filesystem::path& path, const WeightedParticleSystem& s) {
  auto f = open_out(path);
  write_csv(f, s);
}

WeightedParticleSystem read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ShapeError("empty particle CSV");
  auto header = split_csv_line(line);
  if (header.empty() || header.back() != "log_weight")
    throw ShapeError("particle CSV header must end with 'log_weight'");
  header.pop_back();
  const Index d = static_cast<Index>(header.size());
  std::vector<double> vals;
  std::vector<double> lw;
  Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != d + 1)
      throw ShapeError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(d + 1));
    for (Index j = 0; j < d; ++j) vals.push_back(parse_double(fields[static_cast<std::size_t>(j)]));
    lw.push_back(parse_double(fields.back()));
  }
  RowMatrixXd v = Eigen::Map<RowMatrixXd>(vals.data(), row, d);
  VectorXd w = Eigen::Map<VectorXd>(lw.data(), row);
  return {std::move(v), std::move(w), std::move(header)};
}

WeightedParticleSystem read_csv(const std::filesystem::path& path) {
  auto f = open_in(path);
  return read_csv(f);
}

void write_binary(const std::filesystem::path& path, const WeightedParticleSystem& s) {
  auto f = open_out(path, std::ios::out | std::ios::binary);
  put_u64(f, static_cast<std::uint64_t>(s.size()));
  put_u64(f, static_cast<std::uint64_t>(s.dim()));
  for (const auto& l : s.labels) {
    put_u64(f, l.size());
    f.write(l.data(), static_cast<std::streamsize>(l.size()));
  }
  f.write(reinterpret_cast<const char*>(s.values.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(s.values.size())));
  f.write(reinterpret_cast<const char*>(s.log_weights.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(s.size())));
}

WeightedParticleSystem read_binary(const std::filesystem::path& path) {
  auto f = open_in(path, std::ios::in | std::ios::binary);
  const auto n = static_cast<Index>(get_u64(f));
  const auto d = static_cast<Index>(get_u64(f));
  std::vector<std::string> labels;
  for (Index j = 0; j < d; ++j) {
    const auto len = get_u64(f);
    std::string l(len, '\0');
    if (!f.read(l.data(), static_cast<std::streamsize>(len))) throw ShapeError("truncated label table");
    labels.push_back(std::move(l));
  }
  RowMatrixXd v(n, d);
  VectorXd w(n);
  if (!f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * n * d)) ||
      !f.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(sizeof(double) * n)))
    throw ShapeError("truncated binary particle dump");
  return {std::move(v), std::move(w), std::move(labels)};
}

void write_indices(const std::filesystem::path& path, const IndexMultiset& idx) {
  auto f = open_out(path);
  f << "source_size=" << idx.source_size() << '\n';
  for (Index i : idx.one_based()) f << i << '\n';
}

IndexMultiset read_indices(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("source_size=", 0) != 0)
    throw ShapeError("index file '" + path.string() + "' lacks a source_size header");
  const Index source = std::stoll(line.substr(12));
  std::vector<Index> one;
  while (std::getline(f, line))
    if (!line.empty()) one.push_back(std::stoll(line));
  return IndexMultiset::from_one_based(one, source);
}

}  // namespace dcmeld
