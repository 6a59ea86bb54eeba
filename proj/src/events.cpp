#include "spikeflow/events.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace spikeflow {

void EventStream::validate() const {
  uint64_t prev_t = 0;
  for (size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width || e.y >= height)
      throw DataError("event " + std::to_string(i) + " at (" +
                      std::to_string(e.x) + "," + std::to_string(e.y) +
                      ") outside sensor " + std::to_string(width) + "x" +
                      std::to_string(height));
    if (i > 0 && e.t < prev_t) throw DataError("unsorted timestamps");
    prev_t = e.t;
  }
}

std::vector<double> normalize_timestamps(const EventStream& stream,
                                         size_t bins) {
  if (stream.events.empty()) throw DataError("empty stream");
  if (bins < 2) throw UsageError("bin count must be >= 2");
  const uint64_t t1 = stream.events.front().t;
  const uint64_t tn = stream.events.back().t;
  std::vector<double> out(stream.events.size());
  if (tn == t1) return out;  // degenerate interval: all zeros
  const double scale = double(bins - 1) / double(tn - t1);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = double(stream.events[i].t - t1) * scale;
  return out;
}

EventVolume build_event_volume(const EventStream& stream, size_t bins) {
  if (bins < 2 || bins % 2 != 0)
    throw UsageError("bin count must be even and >= 2, got " +
                     std::to_string(bins));
  stream.validate();
  EventVolume vol;
  vol.bins = Tensor<double>({2, bins, stream.height, stream.width});
  if (stream.events.empty()) return vol;
  std::vector<double> ts = normalize_timestamps(stream, bins);
  for (size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    const size_t pol = e.p == Polarity::On ? 0 : 1;
    // Integer pixel coordinates make the spatial kernels unit deposits; the
    // temporal kernel k(a) = max(0, 1-|a|) splits mass across adjacent bins.
    const double t = ts[i];
    const size_t b0 = size_t(std::min(t, double(bins - 1)));
    const double frac = t - double(b0);
    vol.bins.at(pol, b0, e.y, e.x) += 1.0 - frac;
    if (frac > 0.0 && b0 + 1 < bins) vol.bins.at(pol, b0 + 1, e.y, e.x) += frac;
  }
  return vol;
}

GroupedInput group_former_latter(const EventVolume& volume) {
  const size_t b = volume.bin_count();
  if (b % 2 != 0)
    throw UsageError("former/latter grouping needs an even bin count, got " +
                     std::to_string(b));
  const size_t t_steps = b / 2;
  const size_t h = volume.bins.dim(2), w = volume.bins.dim(3);
  GroupedInput g;
  g.frames = Tensor<double>({t_steps, 4, h, w});
  const size_t plane = h * w;
  for (size_t t = 0; t < t_steps; ++t) {
    const double* on_former = &volume.bins.at(0, t, 0, 0);
    const double* off_former = &volume.bins.at(1, t, 0, 0);
    const double* on_latter = &volume.bins.at(0, t_steps + t, 0, 0);
    const double* off_latter = &volume.bins.at(1, t_steps + t, 0, 0);
    double* dst = &g.frames.at(t, 0, 0, 0);
    std::memcpy(dst, on_former, plane * sizeof(double));
    std::memcpy(dst + plane, off_former, plane * sizeof(double));
    std::memcpy(dst + 2 * plane, on_latter, plane * sizeof(double));
    std::memcpy(dst + 3 * plane, off_latter, plane * sizeof(double));
  }
  return g;
}

EventVolume ungroup_former_latter(const GroupedInput& grouped) {
  const size_t t_steps = grouped.frames.dim(0);
  const size_t h = grouped.frames.dim(2), w = grouped.frames.dim(3);
  EventVolume vol;
  vol.bins = Tensor<double>({2, 2 * t_steps, h, w});
  const size_t plane = h * w;
  for (size_t t = 0; t < t_steps; ++t) {
    const double* src = &grouped.frames.at(t, 0, 0, 0);
    std::memcpy(&vol.bins.at(0, t, 0, 0), src, plane * sizeof(double));
    std::memcpy(&vol.bins.at(1, t, 0, 0), src + plane, plane * sizeof(double));
    std::memcpy(&vol.bins.at(0, t_steps + t, 0, 0), src + 2 * plane,
                plane * sizeof(double));
    std::memcpy(&vol.bins.at(1, t_steps + t, 0, 0), src + 3 * plane,
                plane * sizeof(double));
  }
  return vol;
}

Tensor<double> volume_to_channels(const EventVolume& volume) {
  Tensor<double> out = volume.bins;
  out.reshape({volume.bins.dim(0) * volume.bins.dim(1), volume.bins.dim(2),
               volume.bins.dim(3)});
  return out;
}

Tensor<double> event_mask(const EventStream& stream) {
  Tensor<double> mask({stream.height, stream.width});
  for (const Event& e : stream.events) mask.at(e.y, e.x) = 1.0;
  return mask;
}

namespace {

constexpr char kMagic[4] = {'E', 'V', 'T', '1'};

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(char(v & 0xff));
  buf.push_back(char((v >> 8) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const unsigned char* p) {
  return uint16_t(p[0]) | (uint16_t(p[1]) << 8);
}

uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace

EventStream read_events(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open event file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw DataError("bad magic in " + path);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
  EventStream s;
  s.width = get_u16(p + 4);
  s.height = get_u16(p + 6);
  const uint64_t count = get_u64(p + 8);
  if (data.size() != 16 + 16 * count)
    throw DataError("truncated record in " + path + " (expected " +
                    std::to_string(count) + " events)");
  s.events.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    const unsigned char* r = p + 16 + 16 * i;
    Event& e = s.events[i];
    e.x = get_u16(r);
    e.y = get_u16(r + 2);
    e.t = get_u64(r + 4);
    int8_t pol = int8_t(r[12]);
    if (pol != 1 && pol != -1)
      throw DataError("invalid polarity value " + std::to_string(int(pol)) +
                      " in " + path);
    e.p = Polarity(pol);
  }
  s.validate();
  return s;
}

void write_events(const EventStream& stream, const std::string& path) {
  stream.validate();
  std::string buf;
  buf.reserve(16 + 16 * stream.events.size());
  buf.append(kMagic, 4);
  put_u16(buf, stream.width);
  put_u16(buf, stream.height);
  put_u64(buf, stream.events.size());
  for (const Event& e : stream.events) {
    put_u16(buf, e.x);
    put_u16(buf, e.y);
    put_u64(buf, e.t);
    buf.push_back(char(int8_t(e.p)));
    buf.append(3, '\0');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write event file: " + path);
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw DataError("short write to " + path);
}

}  // namespace spikeflow
