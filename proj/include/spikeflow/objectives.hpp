#pragma once

#include <cmath>

#include "spikeflow/ops.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

template <typename S>
struct LossConfig {
  S alpha = S(10);            // smoothness weight
  S charbonnier_r = S(0.45);
  S charbonnier_eta = S(1e-3);
};

// Robust penalty rho(x) = (x^2 + eta^2)^r.
template <typename S>
Tensor<S> charbonnier(const Tensor<S>& x, S r, S eta) {
  if (eta <= S(0)) throw UsageError("charbonnier: eta must be > 0");
  Tensor<S> out(x.shape());
  for (size_t i = 0; i < x.numel(); ++i)
    out[i] = std::pow(x[i] * x[i] + eta * eta, r);
  return out;
}

template <typename S>
Tensor<S> charbonnier_grad(const Tensor<S>& x, S r, S eta) {
  Tensor<S> out(x.shape());
  for (size_t i = 0; i < x.numel(); ++i)
    out[i] = S(2) * r * x[i] * std::pow(x[i] * x[i] + eta * eta, r - S(1));
  return out;
}

// Brightness-consistency loss: sum over interior pixels (1-px border masked)
// of rho(img_t - warp(img_tdt, flow)). Gradients flow through the warp into
// the flow only; the images are constants. grad_flow accumulates.
template <typename S>
S photometric_loss(const Tensor<S>& img_t, const Tensor<S>& img_tdt,
                   const Tensor<S>& flow, S r, S eta,
                   Tensor<S>* grad_flow = nullptr) {
  check_same_shape(img_t, img_tdt, "photometric_loss images");
  if (flow.rank() != 3 || flow.dim(0) != 2 || flow.dim(1) != img_t.dim(0) ||
      flow.dim(2) != img_t.dim(1))
    throw UsageError("photometric_loss: flow " + flow.shape_string() +
                     " vs image " + img_t.shape_string());
  const size_t h = img_t.dim(0), w = img_t.dim(1);
  Tensor<S> warped = bilinear_warp(img_tdt, flow);
  S loss = S(0);
  Tensor<S> grad_warp;
  if (grad_flow) grad_warp = Tensor<S>({h, w});
  for (size_t y = 1; y + 1 < h; ++y)
    for (size_t x = 1; x + 1 < w; ++x) {
      const S d = img_t.at(y, x) - warped.at(y, x);
      loss += std::pow(d * d + eta * eta, r);
      if (grad_flow)
        grad_warp.at(y, x) =
            -S(2) * r * d * std::pow(d * d + eta * eta, r - S(1));
    }
  if (grad_flow)
    bilinear_warp_backward(img_tdt, flow, grad_warp, (Tensor<S>*)nullptr,
                           grad_flow);
  return loss;
}

// Total-variation style regularizer: sum of absolute horizontal and vertical
// neighbor differences of u and v. Subgradient 0 at ties.
template <typename S>
S smoothness_loss(const Tensor<S>& flow, Tensor<S>* grad_flow = nullptr) {
  if (flow.rank() != 3 || flow.dim(0) != 2 || flow.dim(1) < 2 ||
      flow.dim(2) < 2)
    throw UsageError("smoothness_loss: expected [2,H,W] with H,W >= 2");
  const size_t h = flow.dim(1), w = flow.dim(2);
  S loss = S(0);
  for (size_t c = 0; c < 2; ++c)
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        if (x + 1 < w) {
          const S d = flow.at(c, y, x) - flow.at(c, y, x + 1);
          loss += std::abs(d);
          if (grad_flow && d != S(0)) {
            const S s = d > S(0) ? S(1) : S(-1);
            grad_flow->at(c, y, x) += s;
            grad_flow->at(c, y, x + 1) -= s;
          }
        }
        if (y + 1 < h) {
          const S d = flow.at(c, y, x) - flow.at(c, y + 1, x);
          loss += std::abs(d);
          if (grad_flow && d != S(0)) {
            const S s = d > S(0) ? S(1) : S(-1);
            grad_flow->at(c, y, x) += s;
            grad_flow->at(c, y + 1, x) -= s;
          }
        }
      }
  return loss;
}

template <typename S>
S total_ssl_loss(const Tensor<S>& img_t, const Tensor<S>& img_tdt,
                 const Tensor<S>& flow, const LossConfig<S>& cfg,
                 Tensor<S>* grad_flow = nullptr) {
  const S photo = photometric_loss(img_t, img_tdt, flow, cfg.charbonnier_r,
                                   cfg.charbonnier_eta, grad_flow);
  Tensor<S> grad_smooth;
  if (grad_flow) grad_smooth = Tensor<S>(flow.shape());
  const S smooth = smoothness_loss(flow, grad_flow ? &grad_smooth : nullptr);
  if (grad_flow)
    for (size_t i = 0; i < grad_flow->numel(); ++i)
      (*grad_flow)[i] += cfg.alpha * grad_smooth[i];
  return photo + cfg.alpha * smooth;
}

// MSE over the K pixels where the ground-truth flow is non-zero.
template <typename S>
S supervised_loss(const Tensor<S>& flow_pred, const Tensor<S>& flow_gt,
                  Tensor<S>* grad_flow = nullptr) {
  check_same_shape(flow_pred, flow_gt, "supervised_loss");
  if (flow_pred.rank() != 3 || flow_pred.dim(0) != 2)
    throw UsageError("supervised_loss: expected [2,H,W]");
  const size_t h = flow_pred.dim(1), w = flow_pred.dim(2);
  size_t valid = 0;
  S loss = S(0);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      if (flow_gt.at(0, y, x) == S(0) && flow_gt.at(1, y, x) == S(0)) continue;
      ++valid;
      for (size_t c = 0; c < 2; ++c) {
        const S d = flow_pred.at(c, y, x) - flow_gt.at(c, y, x);
        loss += d * d;
      }
    }
  if (valid == 0) throw DataError("no supervised pixels");
  const S inv = S(1) / S(valid);
  if (grad_flow) {
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        if (flow_gt.at(0, y, x) == S(0) && flow_gt.at(1, y, x) == S(0))
          continue;
        for (size_t c = 0; c < 2; ++c)
          grad_flow->at(c, y, x) +=
              S(2) * (flow_pred.at(c, y, x) - flow_gt.at(c, y, x)) * inv;
      }
  }
  return loss * inv;
}

// Average endpoint error over masked pixels (mask: [H,W], nonzero = counted).
inline double aee(const Tensor<double>& flow_pred, const Tensor<double>& flow_gt,
                  const Tensor<double>& mask) {
  check_same_shape(flow_pred, flow_gt, "aee");
  if (mask.rank() != 2 || mask.dim(0) != flow_pred.dim(1) ||
      mask.dim(1) != flow_pred.dim(2))
    throw UsageError("aee: mask shape mismatch");
  double total = 0;
  size_t count = 0;
  for (size_t y = 0; y < mask.dim(0); ++y)
    for (size_t x = 0; x < mask.dim(1); ++x) {
      if (mask.at(y, x) == 0.0) continue;
      const double du = flow_pred.at(0, y, x) - flow_gt.at(0, y, x);
      const double dv = flow_pred.at(1, y, x) - flow_gt.at(1, y, x);
      total += std::sqrt(du * du + dv * dv);
      ++count;
    }
  if (count == 0) throw DataError("empty mask");
  return total / double(count);
}

// Percentage of masked pixels whose endpoint error strictly exceeds n pixels.
inline double npe(const Tensor<double>& flow_pred, const Tensor<double>& flow_gt,
                  const Tensor<double>& mask, double n) {
  check_same_shape(flow_pred, flow_gt, "npe");
  if (mask.rank() != 2 || mask.dim(0) != flow_pred.dim(1) ||
      mask.dim(1) != flow_pred.dim(2))
    throw UsageError("npe: mask shape mismatch");
  size_t over = 0, count = 0;
  for (size_t y = 0; y < mask.dim(0); ++y)
    for (size_t x = 0; x < mask.dim(1); ++x) {
      if (mask.at(y, x) == 0.0) continue;
      const double du = flow_pred.at(0, y, x) - flow_gt.at(0, y, x);
      const double dv = flow_pred.at(1, y, x) - flow_gt.at(1, y, x);
      if (std::sqrt(du * du + dv * dv) > n) ++over;
      ++count;
    }
  if (count == 0) throw DataError("empty mask");
  return 100.0 * double(over) / double(count);
}

}  // namespace spikeflow
