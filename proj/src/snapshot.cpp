#include "spikeflow/snapshot.hpp"

#include <fstream>
#include <sstream>

namespace spikeflow {

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  size_t len;
  size_t pos = 0;
  std::string path;

  void need(size_t n) const {
    if (pos + n > len) throw DataError("truncated snapshot: " + path);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

const Snapshot::Entry& Snapshot::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("snapshot has no tensor '" + name + "'");
  return entries_[it->second];
}

Tensor<double> Snapshot::get_as_double(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype == 1) return get<double>(name);
  return get<float>(name).cast<double>();
}

void Snapshot::manifest_set(const std::string& key, const std::string& value) {
  manifest_[key] = value;
}

std::string Snapshot::manifest_get(const std::string& key) const {
  auto it = manifest_.find(key);
  if (it == manifest_.end())
    throw DataError("snapshot manifest missing key '" + key + "'");
  return it->second;
}

std::string Snapshot::manifest_get_or(const std::string& key,
                                      const std::string& fallback) const {
  auto it = manifest_.find(key);
  return it == manifest_.end() ? fallback : it->second;
}

void Snapshot::save(const std::string& path) const {
  std::string manifest_text;
  for (const auto& [k, v] : manifest_) manifest_text += k + "=" + v + "\n";

  std::string buf;
  buf.append("SFT1", 4);
  put_u32(buf, 1);
  put_u32(buf, uint32_t(manifest_text.size()));
  buf += manifest_text;
  put_u64(buf, entries_.size());

  size_t offset = 0;
  for (const Entry& e : entries_) {
    put_u32(buf, uint32_t(e.name.size()));
    buf += e.name;
    buf.push_back(char(e.dtype));
    put_u32(buf, uint32_t(e.shape.size()));
    for (size_t d : e.shape) put_u64(buf, d);
    put_u64(buf, offset);
    put_u64(buf, e.raw.size());
    offset += e.raw.size();
  }
  for (const Entry& e : entries_)
    buf.append(reinterpret_cast<const char*>(e.raw.data()), e.raw.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write snapshot: " + path);
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw DataError("short write to " + path);
}

Snapshot Snapshot::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 12 || data.compare(0, 4, "SFT1") != 0)
    throw DataError("bad magic in snapshot " + path);
  Reader r{reinterpret_cast<const unsigned char*>(data.data()), data.size(), 4,
           path};
  uint32_t version = r.u32();
  if (version != 1)
    throw DataError("unsupported snapshot version " + std::to_string(version));
  Snapshot snap;
  uint32_t manifest_len = r.u32();
  std::istringstream manifest(r.str(manifest_len));
  std::string line;
  while (std::getline(manifest, line)) {
    size_t eq = line.find('=');
    if (eq != std::string::npos)
      snap.manifest_[line.substr(0, eq)] = line.substr(eq + 1);
  }
  uint64_t count = r.u64();
  struct Slot {
    size_t offset, len;
  };
  std::vector<Slot> slots(count);
  snap.entries_.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    Entry& e = snap.entries_[i];
    e.name = r.str(r.u32());
    e.dtype = r.u8();
    if (e.dtype != 0 && e.dtype != 1)
      throw DataError("unknown dtype in snapshot " + path);
    uint32_t rank = r.u32();
    e.shape.resize(rank);
    size_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      e.shape[d] = r.u64();
      numel *= e.shape[d];
    }
    slots[i].offset = r.u64();
    slots[i].len = r.u64();
    size_t elem = e.dtype == 0 ? 4 : 8;
    if (slots[i].len != numel * elem)
      throw DataError("tensor '" + e.name + "' size mismatch in " + path);
    snap.index_[e.name] = i;
  }
  const size_t data_start = r.pos;
  for (uint64_t i = 0; i < count; ++i) {
    Entry& e = snap.entries_[i];
    if (data_start + slots[i].offset + slots[i].len > data.size())
      throw DataError("truncated snapshot: " + path);
    const unsigned char* src =
        reinterpret_cast<const unsigned char*>(data.data()) + data_start +
        slots[i].offset;
    e.raw.assign(src, src + slots[i].len);
  }
  return snap;
}

}  // namespace spikeflow
