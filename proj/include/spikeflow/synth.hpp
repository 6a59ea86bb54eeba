#pragma once

#include <string>
#include <vector>

#include "spikeflow/events.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

// Moving-pattern scene description. Motion over one frame interval is a
// rotation by omega_deg about the image center followed by a translation of
// (vx, vy) pixels; events come from log-intensity threshold crossings sampled
// along that motion.
struct SceneParams {
  std::string pattern = "checker";  // bar|checker|blobs|noise|disk
  double vx = 0.0;                  // pixels per interval
  double vy = 0.0;
  double omega_deg = 0.0;           // degrees per interval
  size_t width = 64;
  size_t height = 64;
  double rate = 64.0;               // integrator samples per interval
  double theta = 0.25;              // contrast threshold on log intensity
  uint64_t seed = 0;
  uint64_t duration_us = 100000;
};

struct SynthScene {
  EventStream stream;
  Tensor<double> image_before;  // [H,W] in [0,1]
  Tensor<double> image_after;
  FlowField gt_flow;            // [2,H,W]
  SceneParams params;
};

SynthScene synth_scene(const SceneParams& params);

// Scene directory layout used by the dataset commands:
//   events.evt1 before.pgm after.pgm flow.flo1 meta.txt
void write_scene(const SynthScene& scene, const std::string& dir);

struct LoadedScene {
  EventStream stream;
  Tensor<double> image_before;
  Tensor<double> image_after;
  FlowField gt_flow;
};

LoadedScene load_scene(const std::string& dir);

// Sorted scene_NNNN subdirectories of a dataset directory.
std::vector<std::string> list_scenes(const std::string& data_dir);

struct DatasetSpec {
  size_t count = 16;
  size_t width = 64;
  size_t height = 64;
  double theta = 0.25;
  double rate = 64.0;
  double max_speed = 4.0;
  bool include_rotation = true;
  uint64_t seed = 0;
  std::vector<std::string> patterns = {"checker", "noise", "blobs", "bar",
                                       "disk"};
};

// Deterministic per-index scene parameters drawn from the dataset seed.
SceneParams scene_params_for_index(const DatasetSpec& spec, size_t index);

void write_dataset(const DatasetSpec& spec, const std::string& dir);

}  // namespace spikeflow
