#pragma once

#include "spikeflow/tensor.hpp"

namespace spikeflow {

// Layer primitives with explicit backward companions. Gradient outputs
// ACCUMULATE (+=) into caller-provided tensors so layered backward passes can
// sum contributions; callers zero them once per step. Null gradient pointers
// skip that path.

// Cross-correlation. input [N,C,H,W] (or [C,H,W] for a single sample),
// weights [OC,C,KH,KW], bias [OC].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weights,
                 const Tensor<S>& bias, int stride, int pad);

template <typename S>
void conv2d_backward(const Tensor<S>& input, const Tensor<S>& weights,
                     const Tensor<S>& grad_out, int stride, int pad,
                     Tensor<S>* grad_input, Tensor<S>* grad_weights,
                     Tensor<S>* grad_bias);

// 2x bilinear upsampling with half-pixel centers, border clamped. [C,H,W].
template <typename S>
Tensor<S> upsample_bilinear2x(const Tensor<S>& input);

template <typename S>
void upsample_bilinear2x_backward(const Tensor<S>& grad_out,
                                  Tensor<S>& grad_input);

// Inverse warp: out(y,x) = image(y + v(y,x), x + u(y,x)), bilinear sampled,
// coordinates clamped to the border. image [H,W], flow [2,H,W] (u then v).
template <typename S>
Tensor<S> bilinear_warp(const Tensor<S>& image, const Tensor<S>& flow);

template <typename S>
void bilinear_warp_backward(const Tensor<S>& image, const Tensor<S>& flow,
                            const Tensor<S>& grad_out, Tensor<S>* grad_image,
                            Tensor<S>* grad_flow);

// ---- pointwise ----

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename S>
void mul_backward(const Tensor<S>& a, const Tensor<S>& b,
                  const Tensor<S>& grad_out, Tensor<S>* grad_a,
                  Tensor<S>* grad_b) {
  for (size_t i = 0; i < a.numel(); ++i) {
    if (grad_a) (*grad_a)[i] += grad_out[i] * b[i];
    if (grad_b) (*grad_b)[i] += grad_out[i] * a[i];
  }
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out(a.shape());
  for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
  return out;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  for (size_t i = 0; i < a.numel(); ++i) out[i] = std::tanh(a[i]);
  return out;
}

// grad through tanh given the saved output y: g * (1 - y^2).
template <typename S>
void tanh_backward(const Tensor<S>& out, const Tensor<S>& grad_out,
                   Tensor<S>& grad_in) {
  for (size_t i = 0; i < out.numel(); ++i)
    grad_in[i] += grad_out[i] * (S(1) - out[i] * out[i]);
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > S(0) ? a[i] : S(0);
  return out;
}

template <typename S>
void relu_backward(const Tensor<S>& pre, const Tensor<S>& grad_out,
                   Tensor<S>& grad_in) {
  for (size_t i = 0; i < pre.numel(); ++i)
    if (pre[i] > S(0)) grad_in[i] += grad_out[i];
}

// [Ca,H,W] ++ [Cb,H,W] -> [Ca+Cb,H,W], a's channels first.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) ||
      a.dim(2) != b.dim(2))
    throw UsageError("concat_channels: incompatible shapes " +
                     a.shape_string() + " vs " + b.shape_string());
  Tensor<S> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

template <typename S>
void concat_channels_backward(const Tensor<S>& grad_out, Tensor<S>* grad_a,
                              Tensor<S>* grad_b) {
  size_t na = grad_a ? grad_a->numel() : 0;
  if (grad_a)
    for (size_t i = 0; i < na; ++i) (*grad_a)[i] += grad_out[i];
  if (grad_b)
    for (size_t i = 0; i < grad_b->numel(); ++i)
      (*grad_b)[i] += grad_out[na + i];
}

// [C,H,W] -> [C,h,w] window starting at (y0,x0).
template <typename S>
Tensor<S> crop(const Tensor<S>& in, size_t y0, size_t x0, size_t h, size_t w) {
  if (in.rank() != 3 || y0 + h > in.dim(1) || x0 + w > in.dim(2))
    throw UsageError("crop: window " + std::to_string(h) + "x" +
                     std::to_string(w) + "+" + std::to_string(y0) + "+" +
                     std::to_string(x0) + " exceeds " + in.shape_string());
  Tensor<S> out({in.dim(0), h, w});
  for (size_t c = 0; c < in.dim(0); ++c)
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) out.at(c, y, x) = in.at(c, y0 + y, x0 + x);
  return out;
}

template <typename S>
void crop_backward(const Tensor<S>& grad_out, size_t y0, size_t x0,
                   Tensor<S>& grad_in) {
  for (size_t c = 0; c < grad_out.dim(0); ++c)
    for (size_t y = 0; y < grad_out.dim(1); ++y)
      for (size_t x = 0; x < grad_out.dim(2); ++x)
        grad_in.at(c, y0 + y, x0 + x) += grad_out.at(c, y, x);
}

}  // namespace spikeflow
