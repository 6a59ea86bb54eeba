#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "spikeflow/tensor.hpp"

namespace spikeflow {

// Named-tensor container with a plain-text manifest, used for checkpoints.
// Layout (little-endian): magic "SFT1", u32 version, u32 manifest length,
// manifest bytes, u64 tensor count, then a name/shape/dtype table (per entry:
// u32 name length, name, u8 dtype, u32 rank, u64 dims, u64 byte offset, u64
// byte length) followed by the data blob. Round trips are bit exact.
class Snapshot {
public:
  struct Entry {
    std::string name;
    int dtype = 0;  // 0 = f32, 1 = f64
    std::vector<size_t> shape;
    std::vector<unsigned char> raw;
  };

  template <typename S>
  void put(const std::string& name, const Tensor<S>& t) {
    Entry e;
    e.name = name;
    e.dtype = dtype_of<S>();
    e.shape = t.shape();
    e.raw.resize(t.numel() * sizeof(S));
    std::memcpy(e.raw.data(), t.data(), e.raw.size());
    auto it = index_.find(name);
    if (it != index_.end()) {
      entries_[it->second] = std::move(e);
    } else {
      index_[name] = entries_.size();
      entries_.push_back(std::move(e));
    }
  }

  template <typename S>
  Tensor<S> get(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != dtype_of<S>())
      throw DataError("tensor '" + name + "' has dtype " +
                      (e.dtype ? std::string("f64") : std::string("f32")));
    Tensor<S> t(e.shape);
    std::memcpy(t.data(), e.raw.data(), e.raw.size());
    return t;
  }

  // Reads regardless of stored width.
  Tensor<double> get_as_double(const std::string& name) const;

  bool has(const std::string& name) const {
    return index_.count(name) != 0;
  }
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void manifest_set(const std::string& key, const std::string& value);
  std::string manifest_get(const std::string& key) const;  // throws if absent
  std::string manifest_get_or(const std::string& key,
                              const std::string& fallback) const;
  const std::map<std::string, std::string>& manifest() const {
    return manifest_;
  }

  void save(const std::string& path) const;
  static Snapshot load(const std::string& path);

private:
  template <typename S>
  static constexpr int dtype_of() {
    static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
    return std::is_same_v<S, float> ? 0 : 1;
  }

  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
  std::map<std::string, std::string> manifest_;
};

}  // namespace spikeflow
