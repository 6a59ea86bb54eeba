#include "spikeflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "spikeflow/io.hpp"

namespace fs = std::filesystem;

namespace spikeflow {

namespace {

constexpr double kLogFloor = 0.02;  // keeps log intensity finite at black

double wrap(double a, double period) {
  double r = std::fmod(a, period);
  return r < 0 ? r + period : r;
}

// Continuous intensity field in [0,1], defined on all of the plane so the
// pattern can translate/rotate without running out of texture.
using PatternFn = std::function<double(double, double)>;

struct Pattern {
  PatternFn eval;
  bool full_frame;   // true when gt flow covers the whole image
  double background; // reference level for the on-pattern mask
};

Pattern make_pattern(const SceneParams& p) {
  Rng rng(p.seed, 0x5ce11e);
  const double w = double(p.width), h = double(p.height);
  if (p.pattern == "bar") {
    const double bw = std::max(4.0, w / 5.0);
    const double cx = w / 2.0 + rng.next_range(-w / 8.0, w / 8.0);
    const double edge = 1.5;
    return {[=](double x, double) {
              double d = std::abs(x - cx) - bw / 2.0;
              double ramp = std::min(std::max(-d / edge, 0.0), 1.0);
              return 0.15 + 0.75 * ramp;
            },
            false, 0.15};
  }
  if (p.pattern == "disk") {
    const double r0 = std::min(w, h) / 4.0;
    const double cx = w / 2.0 + rng.next_range(-4.0, 4.0);
    const double cy = h / 2.0 + rng.next_range(-4.0, 4.0);
    return {[=](double x, double y) {
              double d = std::hypot(x - cx, y - cy) - r0;
              double ramp = std::min(std::max(-d / 1.5, 0.0), 1.0);
              return 0.15 + 0.75 * ramp;
            },
            false, 0.15};
  }
  if (p.pattern == "checker") {
    const double cell = 6.0 + double(rng.next_below(5));  // 6..10 px
    const double ox = rng.next_range(0.0, cell);
    const double oy = rng.next_range(0.0, cell);
    return {[=](double x, double y) {
              int ix = int(std::floor((x + ox) / cell));
              int iy = int(std::floor((y + oy) / cell));
              return ((ix + iy) & 1) ? 0.85 : 0.15;
            },
            true, 0.0};
  }
  if (p.pattern == "blobs") {
    // density and width follow the frame so small frames keep contrast
    const int n = std::max(3, int((w * h) / 410.0));
    const double smin = std::max(1.0, std::min(w, h) / 16.0);
    std::vector<double> bx(n), by(n), amp(n), sig(n);
    for (int i = 0; i < n; ++i) {
      bx[i] = rng.next_range(0.0, w);
      by[i] = rng.next_range(0.0, h);
      amp[i] = rng.next_range(0.4, 0.8);
      sig[i] = rng.next_range(smin, 2.0 * smin);
    }
    return {[=](double x, double y) {
              double v = 0.1;
              for (int i = 0; i < n; ++i) {
                double dx = wrap(x - bx[i] + w / 2.0, w) - w / 2.0;
                double dy = wrap(y - by[i] + h / 2.0, h) - h / 2.0;
                v += amp[i] * std::exp(-(dx * dx + dy * dy) /
                                       (2.0 * sig[i] * sig[i]));
              }
              return std::min(v, 1.0);
            },
            true, 0.0};
  }
  if (p.pattern == "noise") {
    const int n = 6;
    std::vector<double> fx(n), fy(n), ph(n), a(n);
    for (int i = 0; i < n; ++i) {
      double period = rng.next_range(6.0, 24.0);
      double ang = rng.next_range(0.0, 2.0 * M_PI);
      fx[i] = std::cos(ang) / period;
      fy[i] = std::sin(ang) / period;
      ph[i] = rng.next_range(0.0, 2.0 * M_PI);
      a[i] = rng.next_range(0.5, 1.0);
    }
    double norm = 0;
    for (int i = 0; i < n; ++i) norm += a[i];
    return {[=](double x, double y) {
              double v = 0;
              for (int i = 0; i < n; ++i)
                v += a[i] * std::sin(2.0 * M_PI * (fx[i] * x + fy[i] * y) +
                                     ph[i]);
              return 0.5 + 0.4 * v / norm;
            },
            true, 0.0};
  }
  if (p.pattern == "uniform") {  // degenerate by construction, for tests
    return {[](double, double) { return 0.5; }, true, 0.0};
  }
  throw UsageError("unknown pattern: " + p.pattern);
}

}  // namespace

SynthScene synth_scene(const SceneParams& p) {
  if (p.theta <= 0) throw UsageError("contrast threshold must be > 0");
  const double max_speed = std::min(p.width, p.height) / 4.0;
  if (std::hypot(p.vx, p.vy) > max_speed + 1e-9)
    throw UsageError("velocity magnitude exceeds " + std::to_string(max_speed) +
                     " px per interval");
  Pattern pat = make_pattern(p);

  const double cx = double(p.width) / 2.0, cy = double(p.height) / 2.0;
  const double omega = p.omega_deg * M_PI / 180.0;
  // Pattern coordinate of world point (x, y) at scene time s in [0, 1].
  auto source = [&](double x, double y, double s, double* qx, double* qy) {
    double dx = x - s * p.vx - cx;
    double dy = y - s * p.vy - cy;
    double c = std::cos(-s * omega), sn = std::sin(-s * omega);
    *qx = c * dx - sn * dy + cx;
    *qy = sn * dx + c * dy + cy;
  };
  auto intensity = [&](double x, double y, double s) {
    double qx, qy;
    source(x, y, s, &qx, &qy);
    return pat.eval(qx, qy);
  };

  SynthScene scene;
  scene.params = p;
  scene.image_before = Tensor<double>({p.height, p.width});
  scene.image_after = Tensor<double>({p.height, p.width});
  scene.gt_flow = FlowField({2, p.height, p.width});
  scene.stream.width = uint16_t(p.width);
  scene.stream.height = uint16_t(p.height);

  double lo = 1.0, hi = 0.0;
  const double cw = std::cos(omega), sw = std::sin(omega);
  for (size_t y = 0; y < p.height; ++y)
    for (size_t x = 0; x < p.width; ++x) {
      double v0 = intensity(double(x), double(y), 0.0);
      scene.image_before.at(y, x) = v0;
      scene.image_after.at(y, x) = intensity(double(x), double(y), 1.0);
      lo = std::min(lo, v0);
      hi = std::max(hi, v0);
      // Displacement of the pattern point sitting at (x, y) when s = 0.
      double rx = double(x) - cx, ry = double(y) - cy;
      double u = (cw * rx - sw * ry) - rx + p.vx;
      double vv = (sw * rx + cw * ry) - ry + p.vy;
      if (!pat.full_frame &&
          std::abs(v0 - pat.background) <= 0.01) {
        u = 0.0;
        vv = 0.0;
      }
      scene.gt_flow.at(0, y, x) = u;
      scene.gt_flow.at(1, y, x) = vv;
    }

  const bool moving = p.vx != 0.0 || p.vy != 0.0 || p.omega_deg != 0.0;
  if (!moving) return scene;  // static pattern: empty stream, zero flow
  if (hi - lo < 1e-6) throw DataError("no events generated");

  const size_t steps = size_t(std::max(4.0, std::ceil(p.rate)));
  const double ds = 1.0 / double(steps);
  std::vector<Event> events;
  for (size_t y = 0; y < p.height; ++y) {
    for (size_t x = 0; x < p.width; ++x) {
      double prev = std::log(scene.image_before.at(y, x) + kLogFloor);
      double ref = prev;
      for (size_t k = 1; k <= steps; ++k) {
        const double s1 = double(k) * ds;
        const double cur = std::log(intensity(double(x), double(y), s1) +
                                    kLogFloor);
        const double s0 = s1 - ds;
        while (cur - ref >= p.theta) {
          ref += p.theta;
          double f = (ref - prev) / (cur - prev);
          double ts = s0 + f * ds;
          events.push_back({uint16_t(x), uint16_t(y),
                            uint64_t(std::llround(ts * double(p.duration_us))),
                            Polarity::On});
        }
        while (ref - cur >= p.theta) {
          ref -= p.theta;
          double f = (ref - prev) / (cur - prev);
          double ts = s0 + f * ds;
          events.push_back({uint16_t(x), uint16_t(y),
                            uint64_t(std::llround(ts * double(p.duration_us))),
                            Polarity::Off});
        }
        prev = cur;
      }
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return int8_t(a.p) > int8_t(b.p);
  });
  scene.stream.events = std::move(events);
  return scene;
}

void write_scene(const SynthScene& scene, const std::string& dir) {
  fs::create_directories(dir);
  write_events(scene.stream, dir + "/events.evt1");
  write_pgm(scene.image_before, dir + "/before.pgm");
  write_pgm(scene.image_after, dir + "/after.pgm");
  write_flo(scene.gt_flow, dir + "/flow.flo1");
  std::ofstream meta(dir + "/meta.txt", std::ios::trunc);
  meta << "pattern=" << scene.params.pattern << "\n"
       << "vx=" << scene.params.vx << "\n"
       << "vy=" << scene.params.vy << "\n"
       << "omega_deg=" << scene.params.omega_deg << "\n"
       << "theta=" << scene.params.theta << "\n"
       << "seed=" << scene.params.seed << "\n"
       << "events=" << scene.stream.events.size() << "\n";
}

LoadedScene load_scene(const std::string& dir) {
  LoadedScene s;
  s.stream = read_events(dir + "/events.evt1");
  s.image_before = read_pgm(dir + "/before.pgm");
  s.image_after = read_pgm(dir + "/after.pgm");
  s.gt_flow = read_flo(dir + "/flow.flo1");
  if (s.image_before.dim(0) != s.stream.height ||
      s.image_before.dim(1) != s.stream.width ||
      !s.image_before.same_shape(s.image_after) ||
      s.gt_flow.dim(1) != s.stream.height || s.gt_flow.dim(2) != s.stream.width)
    throw DataError("inconsistent scene files in " + dir);
  return s;
}

std::vector<std::string> list_scenes(const std::string& data_dir) {
  if (!fs::is_directory(data_dir))
    throw DataError("not a dataset directory: " + data_dir);
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(data_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "events.evt1"))
      dirs.push_back(entry.path().string());
  if (dirs.empty() && fs::exists(fs::path(data_dir) / "events.evt1"))
    dirs.push_back(data_dir);  // a single scene is a one-sample dataset
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no scenes found under " + data_dir);
  return dirs;
}

SceneParams scene_params_for_index(const DatasetSpec& spec, size_t index) {
  Rng rng(Rng::mix(spec.seed, 0xda7a5e7 ^ index), 1);
  SceneParams p;
  p.pattern = spec.patterns[index % spec.patterns.size()];
  p.width = spec.width;
  p.height = spec.height;
  p.theta = spec.theta;
  p.rate = spec.rate;
  p.seed = Rng::mix(spec.seed, index);
  const bool rotate = spec.include_rotation && index % 4 == 3;
  if (rotate) {
    double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
    p.omega_deg = sign * rng.next_range(3.0, 8.0);
    p.pattern = index % 2 ? "noise" : "checker";  // rotation needs full texture
  } else {
    double speed = rng.next_range(1.0, spec.max_speed);
    double ang = rng.next_range(0.0, 2.0 * M_PI);
    p.vx = speed * std::cos(ang);
    p.vy = speed * std::sin(ang);
  }
  return p;
}

void write_dataset(const DatasetSpec& spec, const std::string& dir) {
  fs::create_directories(dir);
  for (size_t i = 0; i < spec.count; ++i) {
    SynthScene scene = synth_scene(scene_params_for_index(spec, i));
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu", i);
    write_scene(scene, dir + "/" + name);
  }
}

}  // namespace spikeflow
