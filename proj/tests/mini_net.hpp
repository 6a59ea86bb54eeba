#pragma once

// Shared harness for the BPTT oracle-equivalence checks: a small conv-LIF
// stack evaluated twice, once with the engine primitives and once re-derived
// on the scalar tape.

#include "oracle_tape.hpp"
#include "spikeflow/ops.hpp"
#include "spikeflow/snn.hpp"

namespace mini {

using namespace spikeflow;

struct MiniLayer {
  Tensor<double> w, b;  // [OC,IC,3,3], [OC]
  double v_th, leak;
  int skip_from = -1;  // adds that layer's spikes to the current
};

struct MiniNet {
  std::vector<MiniLayer> layers;
  double gamma = 10.0;
  bool hard_reset = false;
};

struct MiniGrads {
  std::vector<Tensor<double>> w, b;
  std::vector<double> v_th, leak;
};

// Engine route: forward with traces, per-layer lif_backward + conv backward,
// skip currents routed like the residual blocks.
inline MiniGrads engine_grads(const MiniNet& net,
                              const std::vector<Tensor<double>>& inputs,
                              const Tensor<double>& readout,
                              size_t* spike_count = nullptr) {
  const size_t n_layers = net.layers.size();
  const size_t t_len = inputs.size();
  std::vector<SpikeTrace<double>> traces(n_layers);
  std::vector<LifState<double>> states(n_layers);
  size_t spikes = 0;

  for (size_t t = 0; t < t_len; ++t) {
    Tensor<double> x = inputs[t];
    std::vector<Tensor<double>> outs(n_layers);
    for (size_t l = 0; l < n_layers; ++l) {
      const MiniLayer& ml = net.layers[l];
      Tensor<double> in = l == 0 ? x : outs[l - 1];
      Tensor<double> cur = conv2d(in, ml.w, ml.b, 1, 1);
      if (ml.skip_from >= 0)
        for (size_t i = 0; i < cur.numel(); ++i)
          cur[i] += outs[size_t(ml.skip_from)][i];
      if (states[l].u.empty())
        states[l] = LifState<double>::zeros(cur.shape());
      LifParams<double> lp{ml.v_th, ml.leak, net.gamma,
                           net.hard_reset ? ResetMode::Hard : ResetMode::Soft};
      Tensor<double> o;
      lif_step(states[l], cur, lp, &o);
      spikes += size_t(o.sum());
      traces[l].input.push_back(in);
      traces[l].u.push_back(states[l].u);
      traces[l].o.push_back(o);
      outs[l] = std::move(o);
    }
  }
  if (spike_count) *spike_count = spikes;

  // L = sum_t sum_i readout_i * o_last[t][i]
  std::vector<std::vector<Tensor<double>>> upstream(n_layers);
  for (size_t l = 0; l < n_layers; ++l)
    for (size_t t = 0; t < t_len; ++t)
      upstream[l].push_back(Tensor<double>(traces[l].o[t].shape()));
  for (size_t t = 0; t < t_len; ++t)
    for (size_t i = 0; i < readout.numel(); ++i)
      upstream[n_layers - 1][t][i] = readout[i];

  MiniGrads grads;
  grads.w.resize(n_layers);
  grads.b.resize(n_layers);
  grads.v_th.assign(n_layers, 0.0);
  grads.leak.assign(n_layers, 0.0);
  for (size_t l = n_layers; l-- > 0;) {
    const MiniLayer& ml = net.layers[l];
    LifParams<double> lp{ml.v_th, ml.leak, net.gamma,
                         net.hard_reset ? ResetMode::Hard : ResetMode::Soft};
    LifGrads<double> lg = lif_backward(traces[l], upstream[l], lp);
    grads.v_th[l] = lg.v_th;
    grads.leak[l] = lg.leak;
    grads.w[l] = Tensor<double>(ml.w.shape());
    grads.b[l] = Tensor<double>(ml.b.shape());
    for (size_t t = 0; t < t_len; ++t) {
      if (ml.skip_from >= 0)
        for (size_t i = 0; i < lg.current[t].numel(); ++i)
          upstream[size_t(ml.skip_from)][t][i] += lg.current[t][i];
      Tensor<double> gin(traces[l].input[t].shape());
      conv2d_backward(traces[l].input[t], ml.w, lg.current[t], 1, 1,
                      l > 0 ? &gin : nullptr, &grads.w[l], &grads.b[l]);
      if (l > 0)
        for (size_t i = 0; i < gin.numel(); ++i)
          upstream[l - 1][t][i] += gin[i];
    }
  }
  return grads;
}

// Independent route: unroll the same computation on the scalar tape.
inline MiniGrads tape_grads(const MiniNet& net,
                            const std::vector<Tensor<double>>& inputs,
                            const Tensor<double>& readout) {
  oracle::Tape tape;
  const size_t n_layers = net.layers.size();

  std::vector<oracle::ConvVars> convs(n_layers);
  std::vector<oracle::LifVars> lifs(n_layers);
  for (size_t l = 0; l < n_layers; ++l) {
    const MiniLayer& ml = net.layers[l];
    oracle::ConvVars cv;
    cv.oc = ml.w.dim(0);
    cv.ic = ml.w.dim(1);
    cv.k = 3;
    for (size_t i = 0; i < ml.w.numel(); ++i) cv.w.push_back(tape.var(ml.w[i]));
    for (size_t i = 0; i < ml.b.numel(); ++i) cv.b.push_back(tape.var(ml.b[i]));
    convs[l] = std::move(cv);
    lifs[l] = {tape.var(ml.v_th), tape.var(ml.leak), net.gamma,
               net.hard_reset};
  }

  std::vector<oracle::LifNodes> states(n_layers);
  std::vector<int> loss_terms;
  for (const Tensor<double>& frame : inputs) {
    oracle::Grid x =
        oracle::make_grid(frame.dim(0), frame.dim(1), frame.dim(2));
    for (size_t i = 0; i < frame.numel(); ++i) x.ids[i] = tape.constv(frame[i]);
    std::vector<oracle::Grid> outs(n_layers);
    for (size_t l = 0; l < n_layers; ++l) {
      oracle::Grid cur =
          oracle::conv2d(tape, l == 0 ? x : outs[l - 1], convs[l], 1, 1);
      if (net.layers[l].skip_from >= 0) {
        const oracle::Grid& s = outs[size_t(net.layers[l].skip_from)];
        for (size_t i = 0; i < cur.ids.size(); ++i)
          cur.ids[i] = tape.add(cur.ids[i], s.ids[i]);
      }
      outs[l] = oracle::lif_step(tape, cur, lifs[l], states[l]);
    }
    for (size_t i = 0; i < readout.numel(); ++i)
      loss_terms.push_back(
          tape.scale_c(outs[n_layers - 1].ids[i], readout[i]));
  }
  tape.backward(tape.sum(loss_terms));

  MiniGrads grads;
  grads.w.resize(n_layers);
  grads.b.resize(n_layers);
  grads.v_th.assign(n_layers, 0.0);
  grads.leak.assign(n_layers, 0.0);
  for (size_t l = 0; l < n_layers; ++l) {
    grads.w[l] = Tensor<double>(net.layers[l].w.shape());
    grads.b[l] = Tensor<double>(net.layers[l].b.shape());
    for (size_t i = 0; i < grads.w[l].numel(); ++i)
      grads.w[l][i] = tape.grad(convs[l].w[i]);
    for (size_t i = 0; i < grads.b[l].numel(); ++i)
      grads.b[l][i] = tape.grad(convs[l].b[i]);
    grads.v_th[l] = tape.grad(lifs[l].v_th);
    grads.leak[l] = tape.grad(lifs[l].leak);
  }
  return grads;
}

inline MiniNet make_mini_net(uint64_t seed, bool with_skip, bool hard_reset) {
  MiniNet net;
  net.hard_reset = hard_reset;
  auto layer = [&](size_t oc, size_t ic, double v_th, double leak,
                   int skip_from) {
    MiniLayer ml;
    // weights wide enough that a useful number of neurons actually spike
    Rng rng(seed++, 0xbeef);
    ml.w = Tensor<double>({oc, ic, 3, 3});
    for (size_t i = 0; i < ml.w.numel(); ++i)
      ml.w[i] = rng.next_range(-0.6, 0.6);
    ml.b = Tensor<double>({oc});
    for (size_t i = 0; i < ml.b.numel(); ++i)
      ml.b[i] = rng.next_range(-0.1, 0.2);
    ml.v_th = v_th;
    ml.leak = leak;
    ml.skip_from = skip_from;
    net.layers.push_back(std::move(ml));
  };
  layer(2, 1, 0.9, 0.85, -1);
  layer(2, 2, 0.8, 0.95, -1);
  if (with_skip) layer(2, 2, 0.7, 0.9, 0);
  return net;
}

// Largest relative disagreement across every gradient of the two routes.
inline double worst_rel_err(const MiniGrads& a, const MiniGrads& b) {
  auto rel = [](double x, double y) {
    return std::abs(x - y) / std::max(1e-12, std::abs(y));
  };
  double worst = 0;
  for (size_t l = 0; l < a.w.size(); ++l) {
    for (size_t i = 0; i < a.w[l].numel(); ++i)
      worst = std::max(worst, rel(a.w[l][i], b.w[l][i]));
    for (size_t i = 0; i < a.b[l].numel(); ++i)
      worst = std::max(worst, rel(a.b[l][i], b.b[l][i]));
    worst = std::max(worst, rel(a.v_th[l], b.v_th[l]));
    worst = std::max(worst, rel(a.leak[l], b.leak[l]));
  }
  return worst;
}

}  // namespace mini
