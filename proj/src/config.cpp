#include "spikeflow/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace spikeflow {

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected key=value, got '" + line + "'");
    auto trim = [](std::string s) {
      size_t i = s.find_first_not_of(" \t");
      size_t j = s.find_last_not_of(" \t");
      return i == std::string::npos ? std::string() : s.substr(i, j - i + 1);
    };
    std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

std::string Config::get(const std::string& key,
                        const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": not a number: '" + it->second +
                     "'");
  }
}

size_t Config::get_size(const std::string& key, size_t fallback) const {
  double v = get_double(key, double(fallback));
  if (v < 0 || v != std::floor(v))
    throw UsageError("config key " + key + ": expected a non-negative integer");
  return size_t(v);
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": not an integer: '" + it->second +
                     "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw UsageError("config key " + key + ": expected true/false, got '" +
                   it->second + "'");
}

void Config::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (!known.count(key))
      throw UsageError("unknown config key: " + key);
}

}  // namespace spikeflow
