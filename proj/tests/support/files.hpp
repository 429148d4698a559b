#pragma once
// Byte-level comparison of output directories.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace filecmp {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Relative path -> contents for every regular file below dir.
inline std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).generic_string()] = slurp(e.path());
  return out;
}

/// Files that differ between the two trees, ignoring the names in `skip`.
inline std::set<std::string> differing(const std::filesystem::path& a, const std::filesystem::path& b,
                                       const std::set<std::string>& skip) {
  const auto ta = tree(a), tb = tree(b);
  std::set<std::string> out;
  for (const auto& [k, v] : ta) {
    if (skip.count(k)) continue;
    auto it = tb.find(k);
    if (it == tb.end() || it->second != v) out.insert(k);
  }
  for (const auto& [k, v] : tb)
    if (!skip.count(k) && !ta.count(k)) out.insert(k);
  return out;
}

}  // namespace filecmp
