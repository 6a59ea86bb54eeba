#pragma once

#include <string>

#include "spikeflow/tensor.hpp"

namespace spikeflow {

// Binary portable graymap (P5, maxval 255); values mapped to/from [0,1].
void write_pgm(const Tensor<double>& image, const std::string& path);
Tensor<double> read_pgm(const std::string& path);

// Binary portable pixmap (P6); rgb shaped [3,H,W] with values in [0,1].
void write_ppm(const Tensor<double>& rgb, const std::string& path);

// Flow file: magic "FLO1", width u16, height u16 (little-endian), then
// row-major (u,v) float32 pairs.
void write_flo(const FlowField& flow, const std::string& path);
FlowField read_flo(const std::string& path);

// Color-wheel rendering: hue = direction, saturation = |flow| / flow_scale
// (clipped), value 1. Zero flow renders white.
Tensor<double> flow_to_color(const FlowField& flow, double flow_scale);

}  // namespace spikeflow
