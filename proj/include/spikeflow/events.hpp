#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikeflow/tensor.hpp"

namespace spikeflow {

enum class Polarity : int8_t { On = 1, Off = -1 };

// One address-event: pixel location, microsecond timestamp, polarity.
struct Event {
  uint16_t x = 0;
  uint16_t y = 0;
  uint64_t t = 0;  // microseconds
  Polarity p = Polarity::On;
};

// Events sorted non-decreasing in t, plus the sensor resolution.
struct EventStream {
  std::vector<Event> events;
  uint16_t width = 0;
  uint16_t height = 0;

  void validate() const;  // throws DataError on bounds/order violations
};

// Bilinear-sampled voxel grid, shape [2, B, H, W] (polarity, bin, row, col).
// Slice 0 holds ON counts, slice 1 OFF counts; entries are >= 0.
struct EventVolume {
  Tensor<double> bins;
  size_t bin_count() const { return bins.dim(1); }
};

// Per-timestep 4-channel arrangement, shape [T, 4, H, W] with T = B/2 and
// channel order (former-ON, former-OFF, latter-ON, latter-OFF).
struct GroupedInput {
  Tensor<double> frames;
  size_t timesteps() const { return frames.dim(0); }
};

// t*_i = (B-1)(t_i - t_1)/(t_N - t_1); a degenerate interval maps all to 0.
std::vector<double> normalize_timestamps(const EventStream& stream, size_t bins);

EventVolume build_event_volume(const EventStream& stream, size_t bins);

GroupedInput group_former_latter(const EventVolume& volume);

// Inverse rearrangement of group_former_latter.
EventVolume ungroup_former_latter(const GroupedInput& grouped);

// Volume flattened to [2B, H, W] channels (ON bins then OFF bins), the analog
// networks' single-pass input.
Tensor<double> volume_to_channels(const EventVolume& volume);

// Pixels with at least one event of either polarity, shape [H, W] in {0,1}.
Tensor<double> event_mask(const EventStream& stream);

// "EVT1" container: 16-byte little-endian header (magic, width u16, height
// u16, count u64), then 16 bytes per event (x u16, y u16, t u64, p i8, pad 3).
EventStream read_events(const std::string& path);
void write_events(const EventStream& stream, const std::string& path);

}  // namespace spikeflow
