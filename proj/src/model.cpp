#include "spikeflow/model.hpp"

#include <cmath>

#include "spikeflow/ops.hpp"

namespace spikeflow {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "unet") return ModelKind::UNet;
  if (s == "firenet") return ModelKind::FireNet;
  throw UsageError("unknown model kind: " + s + " (expected unet|firenet)");
}

std::string to_string(ModelKind k) {
  return k == ModelKind::UNet ? "unet" : "firenet";
}

NeuronMode neuron_mode_from_string(const std::string& s) {
  if (s == "spiking") return NeuronMode::Spiking;
  if (s == "analog") return NeuronMode::Analog;
  throw UsageError("unknown neuron mode: " + s + " (expected spiking|analog)");
}

std::string to_string(NeuronMode m) {
  return m == NeuronMode::Spiking ? "spiking" : "analog";
}

namespace {

// Input wiring of one stage. Exactly one of {external input, conv_src,
// up_src} feeds the conv; cat_src concatenates after upsampling; add_src is
// a residual skip added to the conv output current.
struct Wire {
  int conv_src = -1;
  int up_src = -1;
  int cat_src = -1;
  int add_src = -1;
};

struct Topology {
  std::vector<Wire> wires;      // one per neuron layer
  std::vector<int> head_src;    // neuron layer feeding each flow head
};

Topology topology(ModelKind kind) {
  Topology t;
  if (kind == ModelKind::UNet) {
    t.wires.resize(12);
    t.wires[1].conv_src = 0;  // enc2 <- enc1
    t.wires[2].conv_src = 1;
    t.wires[3].conv_src = 2;
    t.wires[4].conv_src = 3;                          // res1a <- enc4
    t.wires[5] = {.conv_src = 4, .add_src = 3};       // res1b
    t.wires[6].conv_src = 5;                          // res2a
    t.wires[7] = {.conv_src = 6, .add_src = 5};       // res2b
    t.wires[8] = {.up_src = 7, .cat_src = 2};         // dec1
    t.wires[9] = {.up_src = 8, .cat_src = 1};
    t.wires[10] = {.up_src = 9, .cat_src = 0};
    t.wires[11] = {.up_src = 10};                     // dec4, full scale
    t.head_src = {8, 9, 10, 11};
  } else {
    t.wires.resize(7);
    t.wires[1].conv_src = 0;                     // r1a <- c1
    t.wires[2] = {.conv_src = 1, .add_src = 0};  // r1b
    t.wires[3].conv_src = 2;                     // c2
    t.wires[4].conv_src = 3;
    t.wires[5] = {.conv_src = 4, .add_src = 3};  // r2b
    t.wires[6].conv_src = 5;                     // c3
    t.head_src = {6};
  }
  return t;
}

template <typename S>
void add_inplace(Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "residual add");
  for (size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

}  // namespace

template <typename S>
FlowNetwork<S>::FlowNetwork(const ModelSpec& spec, uint64_t seed)
    : spec_(spec), seed_(seed) {
  const bool spiking = spec.neuron == NeuronMode::Spiking;
  const size_t in0 = spiking ? 4 : 2 * spec.bins;

  auto push = [&](const std::string& name, size_t ic, size_t oc, size_t k,
                  int stride, int pad, bool has_neuron) {
    ConvUnit<S> u;
    u.name = name;
    u.stride = stride;
    u.pad = pad;
    u.has_neuron = has_neuron;
    const size_t li = units_.size();
    Tensor<S> w({oc, ic, k, k});
    const double bound = std::sqrt(6.0 / double(ic * k * k));
    Rng rng(Rng::mix(seed, li), 17);
    for (size_t i = 0; i < w.numel(); ++i)
      w[i] = S((rng.next_double() * 2.0 - 1.0) * bound);
    u.weight = Parameter<S>(std::move(w));
    // Small positive bias keeps silent membranes inside the surrogate
    // window; flow heads stay at zero so empty input maps to zero flow.
    u.bias = Parameter<S>(Tensor<S>({oc}, has_neuron ? S(0.05) : S(0)));
    if (has_neuron && spiking) {
      u.v_th = Parameter<S>(Tensor<S>({1}, S(spec.init_v_th)));
      u.leak = Parameter<S>(Tensor<S>({1}, S(spec.init_leak)));
    }
    units_.push_back(std::move(u));
  };

  if (spec.kind == ModelKind::UNet) {
    const size_t b = spec.base_channels;
    if (b < 2) throw UsageError("base_channels must be >= 2");
    const size_t d4 = std::max<size_t>(b / 2, 2);
    push("enc1", in0, b, 3, 2, 1, true);
    push("enc2", b, 2 * b, 3, 2, 1, true);
    push("enc3", 2 * b, 4 * b, 3, 2, 1, true);
    push("enc4", 4 * b, 8 * b, 3, 2, 1, true);
    push("res1a", 8 * b, 8 * b, 3, 1, 1, true);
    push("res1b", 8 * b, 8 * b, 3, 1, 1, true);
    push("res2a", 8 * b, 8 * b, 3, 1, 1, true);
    push("res2b", 8 * b, 8 * b, 3, 1, 1, true);
    push("dec1", 12 * b, 4 * b, 3, 1, 1, true);
    push("dec2", 6 * b, 2 * b, 3, 1, 1, true);
    push("dec3", 3 * b, b, 3, 1, 1, true);
    push("dec4", b, d4, 3, 1, 1, true);
    neuron_layer_count_ = 12;
    push("head1", 4 * b, 2, 1, 1, 0, false);
    push("head2", 2 * b, 2, 1, 1, 0, false);
    push("head3", b, 2, 1, 1, 0, false);
    push("head4", d4, 2, 1, 1, 0, false);
  } else {
    push("conv1", in0, 32, 3, 1, 1, true);
    push("res1a", 32, 32, 3, 1, 1, true);
    push("res1b", 32, 32, 3, 1, 1, true);
    push("conv2", 32, 32, 3, 1, 1, true);
    push("res2a", 32, 32, 3, 1, 1, true);
    push("res2b", 32, 32, 3, 1, 1, true);
    push("conv3", 32, 32, 3, 1, 1, true);
    neuron_layer_count_ = 7;
    push("head", 32, 2, 3, 1, 1, false);
  }
}

template <typename S>
void FlowNetwork<S>::validate_input(size_t h, size_t w,
                                    size_t channels) const {
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  const size_t want = spiking ? 4 : 2 * spec_.bins;
  if (channels != want)
    throw UsageError("expected " + std::to_string(want) +
                     " input channels, got " + std::to_string(channels));
  if (spec_.kind == ModelKind::UNet && (h % 16 != 0 || w % 16 != 0))
    throw UsageError("unet input size " + std::to_string(h) + "x" +
                     std::to_string(w) + " must be divisible by 16");
  if (h == 0 || w == 0) throw UsageError("empty input");
}

template <typename S>
ForwardResult<S> FlowNetwork<S>::run(const Tensor<S>& input,
                                     NetTrace<S>* trace) const {
  return spec_.neuron == NeuronMode::Spiking ? forward(input, trace)
                                             : forward_analog(input, trace);
}

template <typename S>
ForwardResult<S> FlowNetwork<S>::forward_analog(const Tensor<S>& channels,
                                                NetTrace<S>* trace) const {
  if (spec_.neuron != NeuronMode::Analog)
    throw UsageError("forward_analog on a spiking network");
  if (channels.rank() != 3)
    throw UsageError("forward_analog expects [2B,H,W], got " +
                     channels.shape_string());
  // One pass: all bins as channels. Reuses the spiking driver with T = 1.
  Tensor<S> framed = channels;
  framed.reshape({1, channels.dim(0), channels.dim(1), channels.dim(2)});
  return forward(framed, trace);
}

template <typename S>
ForwardResult<S> FlowNetwork<S>::forward(const Tensor<S>& frames,
                                         NetTrace<S>* trace) const {
  if (frames.rank() != 4)
    throw UsageError("forward expects [T,C,H,W], got " + frames.shape_string());
  const size_t t_len = frames.dim(0);
  const size_t in_c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
  if (t_len == 0) throw UsageError("forward: zero timesteps");
  validate_input(h, w, in_c);
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  if (spiking && in_c != 4)
    throw UsageError("spiking forward expects 4 channels per timestep");

  const Topology topo = topology(spec_.kind);
  const size_t n_layers = neuron_layer_count_;
  const size_t n_heads = units_.size() - n_layers;

  std::vector<LifState<S>> states(n_layers);
  std::vector<Tensor<S>> out(n_layers);
  std::vector<Tensor<S>> accums(n_heads);
  std::vector<double> spike_sum(n_layers, 0.0);
  std::vector<size_t> neuron_count(n_layers, 0);
  if (trace) {
    trace->layers.assign(n_layers, SpikeTrace<S>{});
    trace->accums.clear();
  }

  for (size_t t = 0; t < t_len; ++t) {
    // frame slice [C,H,W]
    Tensor<S> x({in_c, h, w});
    std::copy(frames.data() + t * x.numel(),
              frames.data() + (t + 1) * x.numel(), x.data());

    for (size_t l = 0; l < n_layers; ++l) {
      const Wire& wire = topo.wires[l];
      const ConvUnit<S>& u = units_[l];
      Tensor<S> in;
      if (wire.up_src >= 0) {
        Tensor<S> upped = upsample_bilinear2x(out[wire.up_src]);
        in = wire.cat_src >= 0 ? concat_channels(upped, out[wire.cat_src])
                               : std::move(upped);
      } else if (wire.conv_src >= 0) {
        in = out[wire.conv_src];
      } else {
        in = std::move(x);
      }
      Tensor<S> cur =
          conv2d(in, u.weight.value, u.bias.value, u.stride, u.pad);
      if (wire.add_src >= 0) add_inplace(cur, out[wire.add_src]);

      Tensor<S> o;
      if (spiking) {
        if (states[l].u.empty()) states[l] = LifState<S>::zeros(cur.shape());
        LifParams<S> lp{u.v_th.value[0], u.leak.value[0], S(spec_.gamma),
                        spec_.reset};
        lif_step(states[l], cur, lp, &o);
        spike_sum[l] += double(o.sum());
      } else {
        o = relu(cur);
      }
      neuron_count[l] = cur.numel();
      if (trace) {
        SpikeTrace<S>& st = trace->layers[l];
        st.input.push_back(std::move(in));
        st.u.push_back(spiking ? states[l].u : cur);
        st.o.push_back(o);
      }
      out[l] = std::move(o);
    }

    for (size_t s = 0; s < n_heads; ++s) {
      const ConvUnit<S>& head = units_[n_layers + s];
      Tensor<S> pred = conv2d(out[topo.head_src[s]], head.weight.value,
                              head.bias.value, head.stride, head.pad);
      if (accums[s].empty())
        accums[s] = std::move(pred);
      else
        add_inplace(accums[s], pred);
    }
  }

  ForwardResult<S> result;
  result.scale_flows.resize(n_heads);
  for (size_t s = 0; s < n_heads; ++s)
    result.scale_flows[s] = scale(tanh(accums[s]), S(spec_.flow_scale));
  result.flow = result.scale_flows.back();
  result.activity.resize(n_layers);
  for (size_t l = 0; l < n_layers; ++l)
    result.activity[l] =
        spiking ? spike_sum[l] / (double(neuron_count[l]) * double(t_len))
                : 0.0;
  if (trace) {
    trace->accums = std::move(accums);
    trace->accum_full = trace->accums.back();
  }
  return result;
}

template <typename S>
void FlowNetwork<S>::backward(const Tensor<S>& grad_flow,
                              const NetTrace<S>& trace,
                              std::vector<Tensor<S>>& grads,
                              const std::vector<Tensor<S>>* grad_scale_flows)
    const {
  const Topology topo = topology(spec_.kind);
  const size_t n_layers = neuron_layer_count_;
  const size_t n_heads = units_.size() - n_layers;
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  if (trace.layers.size() != n_layers || trace.accums.size() != n_heads)
    throw UsageError("backward: trace does not match network");
  const size_t t_len = trace.layers[0].timesteps();
  if (t_len == 0) throw UsageError("backward: incomplete trace");

  // Parameter slot offsets in the flat grad store.
  std::vector<size_t> offset(units_.size());
  {
    size_t at = 0;
    for (size_t i = 0; i < units_.size(); ++i) {
      offset[i] = at;
      at += 2 + ((units_[i].has_neuron && spiking) ? 2 : 0);
    }
    if (grads.size() != at)
      throw UsageError("backward: grad store has wrong arity");
  }

  // d(loss)/d(accumulator) through flow = flow_scale * tanh(accum).
  auto accum_grad = [&](size_t s, const Tensor<S>& gflow) {
    const Tensor<S>& acc = trace.accums[s];
    check_same_shape(gflow, acc, "backward grad_flow");
    Tensor<S> g(acc.shape());
    const S fs = S(spec_.flow_scale);
    for (size_t i = 0; i < acc.numel(); ++i) {
      const S th = std::tanh(acc[i]);
      g[i] = gflow[i] * fs * (S(1) - th * th);
    }
    return g;
  };

  std::vector<Tensor<S>> gacc(n_heads);
  gacc[n_heads - 1] = accum_grad(n_heads - 1, grad_flow);
  if (grad_scale_flows) {
    if (grad_scale_flows->size() != n_heads)
      throw UsageError("backward: grad_scale_flows arity mismatch");
    for (size_t s = 0; s < n_heads; ++s) {
      if ((*grad_scale_flows)[s].empty()) continue;
      Tensor<S> g = accum_grad(s, (*grad_scale_flows)[s]);
      if (gacc[s].empty())
        gacc[s] = std::move(g);
      else
        add_inplace(gacc[s], g);
    }
  }

  // Upstream dL/do per layer per timestep, allocated lazily.
  std::vector<std::vector<Tensor<S>>> up(n_layers);
  auto upstream = [&](size_t l, size_t t) -> Tensor<S>& {
    if (up[l].empty()) up[l].resize(t_len);
    if (up[l][t].empty()) up[l][t] = Tensor<S>(trace.layers[l].o[t].shape());
    return up[l][t];
  };

  // Flow heads: the accumulator is a sum over timesteps, so each timestep's
  // head application sees the same accumulator gradient.
  for (size_t s = 0; s < n_heads; ++s) {
    if (gacc[s].empty()) continue;
    const ConvUnit<S>& head = units_[n_layers + s];
    const size_t src = size_t(topo.head_src[s]);
    for (size_t t = 0; t < t_len; ++t) {
      conv2d_backward(trace.layers[src].o[t], head.weight.value, gacc[s],
                      head.stride, head.pad, &upstream(src, t),
                      &grads[offset[n_layers + s]],
                      &grads[offset[n_layers + s] + 1]);
    }
  }

  // Neuron layers in reverse topological order.
  for (size_t l = n_layers; l-- > 0;) {
    const Wire& wire = topo.wires[l];
    const ConvUnit<S>& u = units_[l];
    const SpikeTrace<S>& st = trace.layers[l];

    std::vector<Tensor<S>> go(t_len);
    for (size_t t = 0; t < t_len; ++t)
      go[t] = up[l].empty() || up[l][t].empty()
                  ? Tensor<S>(st.o[t].shape())
                  : std::move(up[l][t]);
    up[l].clear();

    std::vector<Tensor<S>> gcur;
    if (spiking) {
      LifParams<S> lp{u.v_th.value[0], u.leak.value[0], S(spec_.gamma),
                      spec_.reset};
      LifGrads<S> lg = lif_backward(st, go, lp);
      grads[offset[l] + 2][0] += lg.v_th;
      grads[offset[l] + 3][0] += lg.leak;
      gcur = std::move(lg.current);
    } else {
      gcur.resize(t_len);
      for (size_t t = 0; t < t_len; ++t) {
        gcur[t] = Tensor<S>(st.u[t].shape());
        relu_backward(st.u[t], go[t], gcur[t]);
      }
    }

    for (size_t t = 0; t < t_len; ++t) {
      if (wire.add_src >= 0)
        add_inplace(upstream(size_t(wire.add_src), t), gcur[t]);

      const bool want_gin =
          wire.conv_src >= 0 || wire.up_src >= 0;  // not the input layer
      Tensor<S> gin;
      if (want_gin) gin = Tensor<S>(st.input[t].shape());
      conv2d_backward(st.input[t], u.weight.value, gcur[t], u.stride, u.pad,
                      want_gin ? &gin : nullptr, &grads[offset[l]],
                      &grads[offset[l] + 1]);
      if (!want_gin) continue;

      if (wire.conv_src >= 0) {
        add_inplace(upstream(size_t(wire.conv_src), t), gin);
      } else {
        // Split the concat: upsampled channels first, then the skip channels.
        const size_t src = size_t(wire.up_src);
        Tensor<S> ga({trace.layers[src].o[t].dim(0), gin.dim(1), gin.dim(2)});
        std::copy(gin.data(), gin.data() + ga.numel(), ga.data());
        upsample_bilinear2x_backward(ga, upstream(src, t));
        if (wire.cat_src >= 0) {
          Tensor<S>& gskip = upstream(size_t(wire.cat_src), t);
          const S* rest = gin.data() + ga.numel();
          for (size_t i = 0; i < gskip.numel(); ++i) gskip[i] += rest[i];
        }
      }
    }
  }
}

template <typename S>
std::vector<NamedParam<S>> FlowNetwork<S>::parameters() {
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  std::vector<NamedParam<S>> ps;
  for (size_t i = 0; i < units_.size(); ++i) {
    ConvUnit<S>& u = units_[i];
    const std::string base = "layer" + std::to_string(i);
    ps.push_back({base + ".weight", &u.weight});
    ps.push_back({base + ".bias", &u.bias});
    if (u.has_neuron && spiking) {
      ps.push_back({base + ".v_th", &u.v_th});
      ps.push_back({base + ".leak", &u.leak});
    }
  }
  return ps;
}

template <typename S>
std::vector<Tensor<S>> FlowNetwork<S>::make_grad_store() const {
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  std::vector<Tensor<S>> grads;
  for (const ConvUnit<S>& u : units_) {
    grads.push_back(Tensor<S>(u.weight.value.shape()));
    grads.push_back(Tensor<S>(u.bias.value.shape()));
    if (u.has_neuron && spiking) {
      grads.push_back(Tensor<S>({1}));
      grads.push_back(Tensor<S>({1}));
    }
  }
  return grads;
}

template <typename S>
void FlowNetwork<S>::accumulate_grads(const std::vector<Tensor<S>>& grads) {
  auto ps = parameters();
  if (grads.size() != ps.size())
    throw UsageError("accumulate_grads: arity mismatch");
  for (size_t i = 0; i < ps.size(); ++i) {
    check_same_shape(ps[i].param->grad, grads[i], "accumulate_grads");
    for (size_t j = 0; j < grads[i].numel(); ++j)
      ps[i].param->grad[j] += grads[i][j];
  }
}

template <typename S>
void FlowNetwork<S>::apply_param_floors() {
  if (spec_.neuron != NeuronMode::Spiking) return;
  for (ConvUnit<S>& u : units_) {
    if (!u.has_neuron) continue;
    u.v_th.value[0] = std::max(u.v_th.value[0], S(kMinThreshold));
    u.leak.value[0] =
        std::min(std::max(u.leak.value[0], S(kMinLeak)), S(1));
  }
}

template <typename S>
size_t FlowNetwork<S>::param_count() const {
  size_t n = 0;
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  for (const ConvUnit<S>& u : units_) {
    n += u.weight.value.numel() + u.bias.value.numel();
    if (u.has_neuron && spiking) n += 2;
  }
  return n;
}

template <typename S>
std::vector<LayerInfo> FlowNetwork<S>::layer_infos(size_t in_h,
                                                   size_t in_w) const {
  const Topology topo = topology(spec_.kind);
  std::vector<LayerInfo> infos;
  std::vector<std::pair<size_t, size_t>> sizes(neuron_layer_count_);
  for (size_t l = 0; l < neuron_layer_count_; ++l) {
    const Wire& wire = topo.wires[l];
    size_t h, w;
    if (wire.up_src >= 0) {
      h = 2 * sizes[wire.up_src].first;
      w = 2 * sizes[wire.up_src].second;
    } else if (wire.conv_src >= 0) {
      h = sizes[wire.conv_src].first;
      w = sizes[wire.conv_src].second;
    } else {
      h = in_h;
      w = in_w;
    }
    const ConvUnit<S>& u = units_[l];
    if (u.stride == 2) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    sizes[l] = {h, w};
    infos.push_back({u.name, true, l != 0, u.in_channels(), u.kernel(),
                     u.out_channels(), h, w});
  }
  for (size_t s = 0; s < units_.size() - neuron_layer_count_; ++s) {
    const ConvUnit<S>& u = units_[neuron_layer_count_ + s];
    auto [h, w] = sizes[topo.head_src[s]];
    infos.push_back(
        {u.name, false, true, u.in_channels(), u.kernel(), 2, h, w});
  }
  return infos;
}

template <typename S>
void FlowNetwork<S>::save_params(Snapshot& snap) const {
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  for (size_t i = 0; i < units_.size(); ++i) {
    const ConvUnit<S>& u = units_[i];
    const std::string base = "layer" + std::to_string(i);
    snap.put(base + ".weight", u.weight.value);
    snap.put(base + ".bias", u.bias.value);
    if (u.has_neuron && spiking) {
      snap.put(base + ".v_th", u.v_th.value);
      snap.put(base + ".leak", u.leak.value);
    }
    snap.manifest_set(base + ".name", u.name);
  }
}

template <typename S>
void FlowNetwork<S>::load_params(const Snapshot& snap) {
  const bool spiking = spec_.neuron == NeuronMode::Spiking;
  for (size_t i = 0; i < units_.size(); ++i) {
    ConvUnit<S>& u = units_[i];
    const std::string base = "layer" + std::to_string(i);
    Tensor<S> w = snap.get<S>(base + ".weight");
    check_same_shape(w, u.weight.value, "load_params weight");
    u.weight.value = std::move(w);
    u.bias.value = snap.get<S>(base + ".bias");
    if (u.has_neuron && spiking) {
      u.v_th.value = snap.get<S>(base + ".v_th");
      u.leak.value = snap.get<S>(base + ".leak");
    }
  }
}

void manifest_from_spec(const ModelSpec& spec, uint64_t seed, Snapshot& snap) {
  snap.manifest_set("model.kind", to_string(spec.kind));
  snap.manifest_set("model.base_channels", std::to_string(spec.base_channels));
  snap.manifest_set("model.neuron", to_string(spec.neuron));
  snap.manifest_set("model.timesteps", std::to_string(spec.timesteps));
  snap.manifest_set("model.flow_scale", std::to_string(spec.flow_scale));
  snap.manifest_set("model.bins", std::to_string(spec.bins));
  snap.manifest_set("model.reset",
                    spec.reset == ResetMode::Soft ? "soft" : "hard");
  snap.manifest_set("model.gamma", std::to_string(spec.gamma));
  snap.manifest_set("model.seed", std::to_string(seed));
}

ModelSpec spec_from_manifest(const Snapshot& snap) {
  ModelSpec spec;
  spec.kind = model_kind_from_string(snap.manifest_get("model.kind"));
  spec.base_channels = std::stoul(snap.manifest_get("model.base_channels"));
  spec.neuron = neuron_mode_from_string(snap.manifest_get("model.neuron"));
  spec.timesteps = std::stoul(snap.manifest_get("model.timesteps"));
  spec.flow_scale = std::stod(snap.manifest_get("model.flow_scale"));
  spec.bins = std::stoul(snap.manifest_get("model.bins"));
  spec.reset = snap.manifest_get_or("model.reset", "soft") == "hard"
                   ? ResetMode::Hard
                   : ResetMode::Soft;
  spec.gamma = std::stod(snap.manifest_get_or("model.gamma", "10"));
  return spec;
}

template class FlowNetwork<float>;
template class FlowNetwork<double>;

}  // namespace spikeflow
