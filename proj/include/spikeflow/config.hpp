#pragma once

#include <map>
#include <set>
#include <string>

#include "spikeflow/common.hpp"

namespace spikeflow {

// Flat key=value text configuration. '#' starts a comment; blank lines are
// ignored. Unknown keys are rejected when a known-key set is supplied.
class Config {
public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  size_t get_size(const std::string& key, size_t fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  // Throws UsageError naming the first key outside the known set.
  void require_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

}  // namespace spikeflow
