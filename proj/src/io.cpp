#include "spikeflow/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace spikeflow {

namespace {

unsigned char to_byte(double v) {
  double q = std::round(std::min(std::max(v, 0.0), 1.0) * 255.0);
  return static_cast<unsigned char>(q);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw DataError("short write to " + path);
}

// Skips netpbm whitespace/comments and parses one unsigned integer.
size_t parse_pnm_int(const std::string& data, size_t* pos) {
  size_t i = *pos;
  while (i < data.size()) {
    if (data[i] == '#') {
      while (i < data.size() && data[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(data[i]))) {
      ++i;
    } else {
      break;
    }
  }
  size_t v = 0;
  bool any = false;
  while (i < data.size() && std::isdigit(static_cast<unsigned char>(data[i]))) {
    v = v * 10 + size_t(data[i] - '0');
    ++i;
    any = true;
  }
  if (!any) throw DataError("malformed netpbm header");
  *pos = i;
  return v;
}

}  // namespace

void write_pgm(const Tensor<double>& image, const std::string& path) {
  if (image.rank() != 2)
    throw UsageError("write_pgm: expected [H,W], got " + image.shape_string());
  const size_t h = image.dim(0), w = image.dim(1);
  std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) +
                    "\n255\n";
  buf.reserve(buf.size() + h * w);
  for (size_t i = 0; i < h * w; ++i) buf.push_back(char(to_byte(image[i])));
  write_file(path, buf);
}

Tensor<double> read_pgm(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
    throw DataError("bad magic in " + path + " (expected P5)");
  size_t pos = 2;
  size_t w = parse_pnm_int(data, &pos);
  size_t h = parse_pnm_int(data, &pos);
  size_t maxval = parse_pnm_int(data, &pos);
  if (maxval == 0 || maxval > 255)
    throw DataError("unsupported maxval in " + path);
  ++pos;  // single whitespace after maxval
  if (data.size() < pos + h * w) throw DataError("truncated pixmap " + path);
  Tensor<double> img({h, w});
  for (size_t i = 0; i < h * w; ++i)
    img[i] = double(static_cast<unsigned char>(data[pos + i])) / double(maxval);
  return img;
}

void write_ppm(const Tensor<double>& rgb, const std::string& path) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3)
    throw UsageError("write_ppm: expected [3,H,W], got " + rgb.shape_string());
  const size_t h = rgb.dim(1), w = rgb.dim(2);
  std::string buf = "P6\n" + std::to_string(w) + " " + std::to_string(h) +
                    "\n255\n";
  buf.reserve(buf.size() + 3 * h * w);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x)
      for (size_t c = 0; c < 3; ++c)
        buf.push_back(char(to_byte(rgb.at(c, y, x))));
  write_file(path, buf);
}

void write_flo(const FlowField& flow, const std::string& path) {
  if (flow.rank() != 3 || flow.dim(0) != 2)
    throw UsageError("write_flo: expected [2,H,W], got " + flow.shape_string());
  const size_t h = flow.dim(1), w = flow.dim(2);
  if (w > 0xffff || h > 0xffff) throw UsageError("write_flo: size exceeds u16");
  std::string buf;
  buf.reserve(8 + 8 * h * w);
  buf.append("FLO1", 4);
  buf.push_back(char(w & 0xff));
  buf.push_back(char((w >> 8) & 0xff));
  buf.push_back(char(h & 0xff));
  buf.push_back(char((h >> 8) & 0xff));
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      float uv[2] = {float(flow.at(0, y, x)), float(flow.at(1, y, x))};
      char bytes[8];
      std::memcpy(bytes, uv, 8);
      buf.append(bytes, 8);
    }
  write_file(path, buf);
}

FlowField read_flo(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < 8 || std::memcmp(data.data(), "FLO1", 4) != 0)
    throw DataError("bad magic in " + path + " (expected FLO1)");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
  const size_t w = size_t(p[4]) | (size_t(p[5]) << 8);
  const size_t h = size_t(p[6]) | (size_t(p[7]) << 8);
  if (data.size() != 8 + 8 * h * w)
    throw DataError("truncated flow file " + path);
  FlowField flow({2, h, w});
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      float uv[2];
      std::memcpy(uv, data.data() + 8 + 8 * (y * w + x), 8);
      flow.at(0, y, x) = uv[0];
      flow.at(1, y, x) = uv[1];
    }
  return flow;
}

Tensor<double> flow_to_color(const FlowField& flow, double flow_scale) {
  if (flow.rank() != 3 || flow.dim(0) != 2)
    throw UsageError("flow_to_color: expected [2,H,W]");
  if (flow_scale <= 0) throw UsageError("flow_to_color: flow_scale must be > 0");
  const size_t h = flow.dim(1), w = flow.dim(2);
  Tensor<double> rgb({3, h, w});
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      const double u = flow.at(0, y, x), v = flow.at(1, y, x);
      const double mag = std::sqrt(u * u + v * v);
      const double sat = std::min(mag / flow_scale, 1.0);
      double hue = std::atan2(v, u);  // [-pi, pi]
      if (hue < 0) hue += 2.0 * M_PI;
      const double hh = hue * 3.0 / M_PI;  // [0, 6)
      const int sector = int(hh) % 6;
      const double f = hh - std::floor(hh);
      const double p = 1.0 - sat;
      const double q = 1.0 - sat * f;
      const double t = 1.0 - sat * (1.0 - f);
      double r, g, b;
      switch (sector) {
        case 0: r = 1; g = t; b = p; break;
        case 1: r = q; g = 1; b = p; break;
        case 2: r = p; g = 1; b = t; break;
        case 3: r = p; g = q; b = 1; break;
        case 4: r = t; g = p; b = 1; break;
        default: r = 1; g = p; b = q; break;
      }
      rgb.at(0, y, x) = r;
      rgb.at(1, y, x) = g;
      rgb.at(2, y, x) = b;
    }
  return rgb;
}

}  // namespace spikeflow
