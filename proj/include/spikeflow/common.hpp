#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

namespace spikeflow {

// Error taxonomy, mapped to process exit codes by the CLI:
// UsageError -> 2, DataError -> 3, NumericError -> 4.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based RNG: every draw is a pure function of (seed, stream, counter),
// so shuffling/augmentation stay reproducible regardless of evaluation order.
class Rng {
public:
  Rng(uint64_t seed, uint64_t stream) : key_(mix(seed, stream)), counter_(0) {}

  uint64_t next_u64() { return splitmix64(key_ + counter_++); }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // uniform in [lo, hi)
  double next_range(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  static uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ull + b));
  }

private:
  uint64_t key_;
  uint64_t counter_;
};

// Worker cap for batch-shard parallelism. SPIKEFLOW_THREADS overrides the
// hardware count; results are independent of the cap (ordered reduction).
inline int max_workers() {
  unsigned hw = std::thread::hardware_concurrency();
  int n = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("SPIKEFLOW_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) n = static_cast<int>(v);
  }
  return n;
}

}  // namespace spikeflow
