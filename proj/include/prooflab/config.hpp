#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prooflab/errors.hpp"

namespace prooflab {

// Plain-text nested key-value config: one `section.key = value` per line,
// '#' comments. Parsing is strict: duplicate keys are errors, and callers
// must check the key set against a schema before running.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<long long> get_int_list(const std::string& key,
                                      const std::vector<long long>& fallback) const;

  // Throws ParseError naming the first key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace prooflab
