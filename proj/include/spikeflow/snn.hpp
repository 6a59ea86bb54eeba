#pragma once

#include <vector>

#include "spikeflow/tensor.hpp"

namespace spikeflow {

enum class ResetMode { Soft, Hard };

// Layer-wise learnable firing threshold and leak, shared by all neurons of
// the layer. gamma is the surrogate width, global and fixed.
template <typename S>
struct LifParams {
  S v_th = S(1);
  S leak = S(1);
  S gamma = S(10);
  ResetMode reset = ResetMode::Soft;
};

constexpr double kMinThreshold = 0.01;
constexpr double kMinLeak = 0.01;

template <typename S>
struct LifState {
  Tensor<S> u;       // membrane potential
  Tensor<S> o_prev;  // previous-timestep binary spikes

  static LifState zeros(const std::vector<size_t>& shape) {
    return {Tensor<S>(shape), Tensor<S>(shape)};
  }
};

// Per-timestep records required by the through-time backward pass:
// input[t] is the tensor the layer's conv consumed, u[t] the post-update
// membrane, o[t] the emitted spikes. u/o at t-1 come from the previous slot
// (zeros before t = 0, matching the per-sample state reset).
template <typename S>
struct SpikeTrace {
  std::vector<Tensor<S>> input;
  std::vector<Tensor<S>> u;
  std::vector<Tensor<S>> o;

  size_t timesteps() const { return u.size(); }
  void clear() {
    input.clear();
    u.clear();
    o.clear();
  }
};

// Membrane update and spiking:
//   u_t = leak * u_{t-1} + current - v_th * o_{t-1}   (soft reset)
//   z_t = u_t / v_th - 1,  o_t = 1 iff z_t > 0
// Hard reset zeroes the carried membrane where the neuron spiked instead of
// subtracting the threshold.
template <typename S>
void lif_step(LifState<S>& state, const Tensor<S>& current,
              const LifParams<S>& params, Tensor<S>* spikes_out,
              Tensor<S>* z_out = nullptr) {
  check_same_shape(state.u, current, "lif_step");
  if (!current.all_finite()) throw NumericError("lif_step: non-finite current");
  const size_t n = current.numel();
  Tensor<S> o(current.shape());
  const S vth = params.v_th, lk = params.leak;
  for (size_t i = 0; i < n; ++i) {
    S u;
    if (params.reset == ResetMode::Soft)
      u = lk * state.u[i] + current[i] - vth * state.o_prev[i];
    else
      u = lk * state.u[i] * (S(1) - state.o_prev[i]) + current[i];
    const S z = u / vth - S(1);
    o[i] = z > S(0) ? S(1) : S(0);
    state.u[i] = u;
    if (z_out) (*z_out)[i] = z;
  }
  state.o_prev = o;
  if (spikes_out) *spikes_out = std::move(o);
}

// Inverse-tangent surrogate: 1 / (1 + gamma z^2) inside the window
// 1 - |z| > 0, zero outside.
template <typename S>
S surrogate_grad_scalar(S z, S gamma) {
  if (S(1) - std::abs(z) <= S(0)) return S(0);
  return S(1) / (S(1) + gamma * z * z);
}

template <typename S>
Tensor<S> surrogate_grad(const Tensor<S>& z, S gamma) {
  if (gamma <= S(0)) throw UsageError("surrogate width must be > 0");
  Tensor<S> out(z.shape());
  for (size_t i = 0; i < z.numel(); ++i)
    out[i] = surrogate_grad_scalar(z[i], gamma);
  return out;
}

template <typename S>
struct LifGrads {
  std::vector<Tensor<S>> current;  // dL/d(input current) per timestep
  S v_th = S(0);
  S leak = S(0);
};

// Reverse sweep over one layer's trace. upstream[t] is dL/do_t as seen from
// later layers at the same timestep. The spike nonlinearity uses the
// surrogate; the reset consumes the previous spike as a detached value, so
// temporal credit flows through the membrane (factor leak) but not through
// the discontinuous reset. Per-timestep terms:
//   dL/dz_t   = upstream_t * surrogate(z_t)
//   dL/du_t   = dL/dz_t / v_th + leak * dL/du_{t+1}
//   d v_th   += dL/dz_t * (-u_t / v_th^2) + dL/du_t * (-o_{t-1})
//   d leak   += dL/du_t * u_{t-1}
//   dL/dc_t   = dL/du_t
template <typename S>
LifGrads<S> lif_backward(const SpikeTrace<S>& trace,
                         const std::vector<Tensor<S>>& upstream,
                         const LifParams<S>& params) {
  const size_t t_len = trace.timesteps();
  if (t_len == 0 || trace.input.size() != t_len || trace.o.size() != t_len)
    throw UsageError("lif_backward: incomplete trace");
  if (upstream.size() != t_len)
    throw UsageError("lif_backward: upstream grads cover " +
                     std::to_string(upstream.size()) + " of " +
                     std::to_string(t_len) + " timesteps");
  const S vth = params.v_th, lk = params.leak, gamma = params.gamma;
  const size_t n = trace.u[0].numel();

  LifGrads<S> grads;
  grads.current.resize(t_len);
  Tensor<S> gu_next(trace.u[0].shape());
  for (size_t ti = t_len; ti-- > 0;) {
    check_same_shape(upstream[ti], trace.u[ti], "lif_backward upstream");
    const Tensor<S>& u_t = trace.u[ti];
    const Tensor<S>* u_prev = ti > 0 ? &trace.u[ti - 1] : nullptr;
    const Tensor<S>* o_prev = ti > 0 ? &trace.o[ti - 1] : nullptr;
    Tensor<S> gu(u_t.shape());
    S d_vth = S(0), d_leak = S(0);
    for (size_t i = 0; i < n; ++i) {
      const S z = u_t[i] / vth - S(1);
      const S gz = upstream[ti][i] * surrogate_grad_scalar(z, gamma);
      S g;
      const S op = o_prev ? (*o_prev)[i] : S(0);
      const S up = u_prev ? (*u_prev)[i] : S(0);
      if (params.reset == ResetMode::Soft) {
        g = gz / vth + lk * gu_next[i];
        d_vth += gz * (-u_t[i] / (vth * vth)) + g * (-op);
        d_leak += g * up;
      } else {
        // u_{t+1} = leak * u_t * (1 - o_t) + c_{t+1}
        g = gz / vth + lk * (S(1) - trace.o[ti][i]) * gu_next[i];
        d_vth += gz * (-u_t[i] / (vth * vth));
        d_leak += g * up * (S(1) - op);
      }
      gu[i] = g;
    }
    grads.v_th += d_vth;
    grads.leak += d_leak;
    grads.current[ti] = gu;
    gu_next = std::move(gu);
  }
  return grads;
}

}  // namespace spikeflow
