#pragma once

#include <string>
#include <vector>

#include "spikeflow/snapshot.hpp"
#include "spikeflow/snn.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

enum class ModelKind { UNet, FireNet };
enum class NeuronMode { Spiking, Analog };

struct ModelSpec {
  ModelKind kind = ModelKind::UNet;
  size_t base_channels = 64;  // UNet ladder (b, 2b, 4b, 8b); FireNet fixed 32
  NeuronMode neuron = NeuronMode::Spiking;
  size_t timesteps = 5;
  double flow_scale = 40.0;  // max |flow| in pixels after the tanh head
  size_t bins = 10;          // analog input consumes 2*bins channels
  ResetMode reset = ResetMode::Soft;
  double init_v_th = 1.0;
  double init_leak = 1.0;
  double gamma = 10.0;
};

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);
NeuronMode neuron_mode_from_string(const std::string& s);
std::string to_string(NeuronMode m);

// One conv stage; flow heads have no neuron. v_th/leak are shape-{1}
// parameters so the optimizer treats them like any other tensor.
template <typename S>
struct ConvUnit {
  std::string name;
  int stride = 1;
  int pad = 1;
  bool has_neuron = true;
  Parameter<S> weight;  // [OC,IC,KH,KW]
  Parameter<S> bias;    // [OC]
  Parameter<S> v_th;
  Parameter<S> leak;

  size_t out_channels() const { return weight.value.dim(0); }
  size_t in_channels() const { return weight.value.dim(1); }
  size_t kernel() const { return weight.value.dim(2); }
};

template <typename S>
struct NetTrace {
  std::vector<SpikeTrace<S>> layers;  // per neuron layer
  Tensor<S> accum_full;               // pre-tanh full-scale accumulator
  std::vector<Tensor<S>> accums;      // per-scale accumulators, coarse..full
};

template <typename S>
struct ForwardResult {
  Tensor<S> flow;                      // [2,H,W], flow_scale * tanh(accum)
  std::vector<Tensor<S>> scale_flows;  // per head scale, coarse..full
  std::vector<double> activity;        // mean spikes/neuron/timestep per layer
};

template <typename S>
struct NamedParam {
  std::string name;
  Parameter<S>* param;
};

// Geometry of one stage for the operation/energy model.
struct LayerInfo {
  std::string name;
  bool neuron = false;       // conv followed by LIF/ReLU (false: flow head)
  bool spike_input = false;  // consumes binary spikes (AC ops when spiking)
  size_t in_channels = 0, kernel = 0;
  size_t out_channels = 0, out_h = 0, out_w = 0;
};

// Spiking or analog flow network: U-Net family (4 stride-2 encoders, two
// residual blocks, 4 bilinear-upsample decoders with encoder skips and
// per-scale flow heads) or the single-scale FireNet (conv / residual /
// conv / residual / conv with one flow head). Per-timestep head outputs are
// summed into accumulators; the final flow is flow_scale * tanh(accum).
template <typename S>
class FlowNetwork {
public:
  FlowNetwork(const ModelSpec& spec, uint64_t seed);

  // Spiking pass over grouped frames [T,4,H,W]. Membrane state starts at
  // zero for every call. A null trace skips retention (inference).
  ForwardResult<S> forward(const Tensor<S>& frames, NetTrace<S>* trace) const;

  // Analog single pass over the flattened volume [2B,H,W].
  ForwardResult<S> forward_analog(const Tensor<S>& channels,
                                  NetTrace<S>* trace) const;

  // Dispatches on the spec's neuron mode.
  ForwardResult<S> run(const Tensor<S>& frames_or_channels,
                       NetTrace<S>* trace) const;

  // Accumulates parameter gradients (ordered as parameters()) into grads,
  // backpropagating from dL/d(final flow) through the accumulator, heads,
  // and the unrolled timesteps. grad_scale_flows optionally supervises the
  // intermediate scale flows (same order as ForwardResult::scale_flows,
  // entries may be empty).
  void backward(const Tensor<S>& grad_flow, const NetTrace<S>& trace,
                std::vector<Tensor<S>>& grads,
                const std::vector<Tensor<S>>* grad_scale_flows = nullptr) const;

  std::vector<NamedParam<S>> parameters();
  std::vector<Tensor<S>> make_grad_store() const;
  void accumulate_grads(const std::vector<Tensor<S>>& grads);  // into .grad
  void apply_param_floors();  // clamp v_th >= 0.01, leak in (0, 1]

  size_t param_count() const;
  const ModelSpec& spec() const { return spec_; }
  uint64_t seed() const { return seed_; }

  size_t neuron_layer_count() const { return neuron_layer_count_; }
  const std::vector<ConvUnit<S>>& units() const { return units_; }
  std::vector<LayerInfo> layer_infos(size_t in_h, size_t in_w) const;

  void save_params(Snapshot& snap) const;  // layer{i}.weight/bias/v_th/leak
  void load_params(const Snapshot& snap);

private:
  void validate_input(size_t h, size_t w, size_t channels) const;

  ModelSpec spec_;
  uint64_t seed_ = 0;
  std::vector<ConvUnit<S>> units_;  // neuron layers first, then flow heads
  size_t neuron_layer_count_ = 0;
};

void manifest_from_spec(const ModelSpec& spec, uint64_t seed, Snapshot& snap);
ModelSpec spec_from_manifest(const Snapshot& snap);

using FlowNetworkF = FlowNetwork<float>;
using FlowNetworkD = FlowNetwork<double>;

}  // namespace spikeflow
