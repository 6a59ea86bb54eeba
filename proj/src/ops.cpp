#include "spikeflow/ops.hpp"

namespace spikeflow {

namespace {

struct ConvDims {
  size_t n, c, h, w, oc, kh, kw, oh, ow;
};

// Rank-3 input is treated as a single sample [C,H,W].
template <typename S>
ConvDims conv_dims(const Tensor<S>& input, const Tensor<S>& weights,
                   int stride, int pad) {
  if ((input.rank() != 4 && input.rank() != 3) || weights.rank() != 4)
    throw UsageError("conv2d: expected [N,C,H,W] or [C,H,W] input, got " +
                     input.shape_string() + " and weights " +
                     weights.shape_string());
  const size_t coff = input.rank() == 4 ? 1 : 0;
  if (input.dim(coff) != weights.dim(1))
    throw UsageError("conv2d: input channels " +
                     std::to_string(input.dim(coff)) + " != weight channels " +
                     std::to_string(weights.dim(1)));
  if (stride < 1) throw UsageError("conv2d: stride must be >= 1");
  ConvDims d;
  d.n = input.rank() == 4 ? input.dim(0) : 1;
  d.c = input.dim(coff);
  d.h = input.dim(coff + 1);
  d.w = input.dim(coff + 2);
  d.oc = weights.dim(0);
  d.kh = weights.dim(2);
  d.kw = weights.dim(3);
  long oh = (long(d.h) + 2 * pad - long(d.kh)) / stride + 1;
  long ow = (long(d.w) + 2 * pad - long(d.kw)) / stride + 1;
  if (oh < 1 || ow < 1)
    throw UsageError("conv2d: kernel " + std::to_string(d.kh) + "x" +
                     std::to_string(d.kw) + " too large for input " +
                     input.shape_string());
  d.oh = size_t(oh);
  d.ow = size_t(ow);
  return d;
}

// Valid output-column range so that iw = ow*stride + kw - pad stays in [0, W).
inline void col_range(long kw, int pad, int stride, long in_w, long out_w,
                      long* lo, long* hi) {
  long off = kw - pad;
  long l = off < 0 ? (-off + stride - 1) / stride : 0;
  long h = (in_w - 1 - off) / stride;
  *lo = std::max(0L, l);
  *hi = std::min(out_w - 1, h);
}

}  // namespace

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weights,
                 const Tensor<S>& bias, int stride, int pad) {
  ConvDims d = conv_dims(input, weights, stride, pad);
  if (bias.numel() != d.oc)
    throw UsageError("conv2d: bias size " + std::to_string(bias.numel()) +
                     " != out channels " + std::to_string(d.oc));
  Tensor<S> out = input.rank() == 4 ? Tensor<S>({d.n, d.oc, d.oh, d.ow})
                                    : Tensor<S>({d.oc, d.oh, d.ow});

  for (size_t n = 0; n < d.n; ++n) {
    for (size_t oc = 0; oc < d.oc; ++oc) {
      S* out_plane = out.data() + ((n * d.oc + oc) * d.oh) * d.ow;
      const S b = bias[oc];
      for (size_t i = 0; i < d.oh * d.ow; ++i) out_plane[i] = b;
      for (size_t ic = 0; ic < d.c; ++ic) {
        const S* in_plane = input.data() + ((n * d.c + ic) * d.h) * d.w;
        for (size_t kh = 0; kh < d.kh; ++kh) {
          for (size_t kw = 0; kw < d.kw; ++kw) {
            const S wv = weights.at(oc, ic, kh, kw);
            if (wv == S(0)) continue;
            long lo, hi;
            col_range(long(kw), pad, stride, long(d.w), long(d.ow), &lo, &hi);
            const long coff = long(kw) - pad;
            for (size_t oh = 0; oh < d.oh; ++oh) {
              long ih = long(oh) * stride - pad + long(kh);
              if (ih < 0 || ih >= long(d.h)) continue;
              const S* in_row = in_plane + size_t(ih) * d.w;
              S* out_row = out_plane + oh * d.ow;
              if (stride == 1) {
                const S* ip = in_row + lo + coff;
                for (long ow = lo; ow <= hi; ++ow)
                  out_row[ow] += wv * ip[ow - lo];
              } else {
                for (long ow = lo; ow <= hi; ++ow)
                  out_row[ow] += wv * in_row[ow * stride + coff];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename S>
void conv2d_backward(const Tensor<S>& input, const Tensor<S>& weights,
                     const Tensor<S>& grad_out, int stride, int pad,
                     Tensor<S>* grad_input, Tensor<S>* grad_weights,
                     Tensor<S>* grad_bias) {
  ConvDims d = conv_dims(input, weights, stride, pad);
  const size_t go_off = grad_out.rank() == 4 ? 1 : 0;
  if (grad_out.rank() != input.rank() ||
      (go_off && grad_out.dim(0) != d.n) || grad_out.dim(go_off) != d.oc ||
      grad_out.dim(go_off + 1) != d.oh || grad_out.dim(go_off + 2) != d.ow)
    throw UsageError("conv2d_backward: grad_out shape " +
                     grad_out.shape_string() + " does not match output");
  if (grad_input) check_same_shape(*grad_input, input, "conv2d_backward gin");
  if (grad_weights)
    check_same_shape(*grad_weights, weights, "conv2d_backward gw");

  if (grad_bias) {
    for (size_t n = 0; n < d.n; ++n)
      for (size_t oc = 0; oc < d.oc; ++oc) {
        const S* go = grad_out.data() + ((n * d.oc + oc) * d.oh) * d.ow;
        S acc = S(0);
        for (size_t i = 0; i < d.oh * d.ow; ++i) acc += go[i];
        (*grad_bias)[oc] += acc;
      }
  }

  for (size_t n = 0; n < d.n; ++n) {
    for (size_t oc = 0; oc < d.oc; ++oc) {
      const S* go_plane = grad_out.data() + ((n * d.oc + oc) * d.oh) * d.ow;
      for (size_t ic = 0; ic < d.c; ++ic) {
        const S* in_plane = input.data() + ((n * d.c + ic) * d.h) * d.w;
        S* gin_plane = grad_input
                           ? grad_input->data() + ((n * d.c + ic) * d.h) * d.w
                           : nullptr;
        for (size_t kh = 0; kh < d.kh; ++kh) {
          for (size_t kw = 0; kw < d.kw; ++kw) {
            const S wv = weights.at(oc, ic, kh, kw);
            long lo, hi;
            col_range(long(kw), pad, stride, long(d.w), long(d.ow), &lo, &hi);
            const long coff = long(kw) - pad;
            S wacc = S(0);
            for (size_t oh = 0; oh < d.oh; ++oh) {
              long ih = long(oh) * stride - pad + long(kh);
              if (ih < 0 || ih >= long(d.h)) continue;
              const S* in_row = in_plane + size_t(ih) * d.w;
              const S* go_row = go_plane + oh * d.ow;
              if (grad_weights) {
                if (stride == 1) {
                  const S* ip = in_row + lo + coff;
                  for (long ow = lo; ow <= hi; ++ow)
                    wacc += ip[ow - lo] * go_row[ow];
                } else {
                  for (long ow = lo; ow <= hi; ++ow)
                    wacc += in_row[ow * stride + coff] * go_row[ow];
                }
              }
              if (gin_plane) {
                S* gin_row = gin_plane + size_t(ih) * d.w;
                if (stride == 1) {
                  S* gp = gin_row + lo + coff;
                  for (long ow = lo; ow <= hi; ++ow)
                    gp[ow - lo] += wv * go_row[ow];
                } else {
                  for (long ow = lo; ow <= hi; ++ow)
                    gin_row[ow * stride + coff] += wv * go_row[ow];
                }
              }
            }
            if (grad_weights) grad_weights->at(oc, ic, kh, kw) += wacc;
          }
        }
      }
    }
  }
}

template <typename S>
Tensor<S> upsample_bilinear2x(const Tensor<S>& input) {
  if (input.rank() != 3)
    throw UsageError("upsample_bilinear2x: expected [C,H,W], got " +
                     input.shape_string());
  const size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor<S> out({c, 2 * h, 2 * w});
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t oy = 0; oy < 2 * h; ++oy) {
      double sy = (oy + 0.5) / 2.0 - 0.5;
      double syc = std::min(std::max(sy, 0.0), double(h - 1));
      size_t y0 = size_t(syc);
      size_t y1 = std::min(y0 + 1, h - 1);
      S fy = S(syc - double(y0));
      for (size_t ox = 0; ox < 2 * w; ++ox) {
        double sx = (ox + 0.5) / 2.0 - 0.5;
        double sxc = std::min(std::max(sx, 0.0), double(w - 1));
        size_t x0 = size_t(sxc);
        size_t x1 = std::min(x0 + 1, w - 1);
        S fx = S(sxc - double(x0));
        out.at(ch, oy, ox) =
            (S(1) - fy) * ((S(1) - fx) * input.at(ch, y0, x0) +
                           fx * input.at(ch, y0, x1)) +
            fy * ((S(1) - fx) * input.at(ch, y1, x0) +
                  fx * input.at(ch, y1, x1));
      }
    }
  }
  return out;
}

template <typename S>
void upsample_bilinear2x_backward(const Tensor<S>& grad_out,
                                  Tensor<S>& grad_input) {
  const size_t c = grad_input.dim(0), h = grad_input.dim(1),
               w = grad_input.dim(2);
  if (grad_out.rank() != 3 || grad_out.dim(0) != c ||
      grad_out.dim(1) != 2 * h || grad_out.dim(2) != 2 * w)
    throw UsageError("upsample_bilinear2x_backward: shape mismatch");
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t oy = 0; oy < 2 * h; ++oy) {
      double sy = (oy + 0.5) / 2.0 - 0.5;
      double syc = std::min(std::max(sy, 0.0), double(h - 1));
      size_t y0 = size_t(syc);
      size_t y1 = std::min(y0 + 1, h - 1);
      S fy = S(syc - double(y0));
      for (size_t ox = 0; ox < 2 * w; ++ox) {
        double sx = (ox + 0.5) / 2.0 - 0.5;
        double sxc = std::min(std::max(sx, 0.0), double(w - 1));
        size_t x0 = size_t(sxc);
        size_t x1 = std::min(x0 + 1, w - 1);
        S fx = S(sxc - double(x0));
        const S g = grad_out.at(ch, oy, ox);
        grad_input.at(ch, y0, x0) += g * (S(1) - fy) * (S(1) - fx);
        grad_input.at(ch, y0, x1) += g * (S(1) - fy) * fx;
        grad_input.at(ch, y1, x0) += g * fy * (S(1) - fx);
        grad_input.at(ch, y1, x1) += g * fy * fx;
      }
    }
  }
}

namespace {

// Bilinear sample with clamp-to-border plus the derivatives w.r.t. the
// (unclamped) sample position; derivative is zero once a coordinate clamps.
template <typename S>
void sample_bilinear(const Tensor<S>& img, double sx, double sy, S* value,
                     S* dvx, S* dvy) {
  const size_t h = img.dim(0), w = img.dim(1);
  const bool cx = sx <= 0.0 || sx >= double(w - 1);
  const bool cy = sy <= 0.0 || sy >= double(h - 1);
  double sxc = std::min(std::max(sx, 0.0), double(w - 1));
  double syc = std::min(std::max(sy, 0.0), double(h - 1));
  size_t x0 = size_t(sxc), y0 = size_t(syc);
  size_t x1 = std::min(x0 + 1, w - 1);
  size_t y1 = std::min(y0 + 1, h - 1);
  S fx = S(sxc - double(x0)), fy = S(syc - double(y0));
  const S v00 = img.at(y0, x0), v01 = img.at(y0, x1);
  const S v10 = img.at(y1, x0), v11 = img.at(y1, x1);
  *value = (S(1) - fy) * ((S(1) - fx) * v00 + fx * v01) +
           fy * ((S(1) - fx) * v10 + fx * v11);
  if (dvx)
    *dvx = cx ? S(0) : (S(1) - fy) * (v01 - v00) + fy * (v11 - v10);
  if (dvy)
    *dvy = cy ? S(0) : (S(1) - fx) * (v10 - v00) + fx * (v11 - v01);
}

}  // namespace

template <typename S>
Tensor<S> bilinear_warp(const Tensor<S>& image, const Tensor<S>& flow) {
  if (image.rank() != 2 || flow.rank() != 3 || flow.dim(0) != 2 ||
      flow.dim(1) != image.dim(0) || flow.dim(2) != image.dim(1))
    throw UsageError("bilinear_warp: image " + image.shape_string() +
                     " vs flow " + flow.shape_string());
  const size_t h = image.dim(0), w = image.dim(1);
  Tensor<S> out({h, w});
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      double sx = double(x) + double(flow.at(0, y, x));
      double sy = double(y) + double(flow.at(1, y, x));
      sample_bilinear(image, sx, sy, &out.at(y, x), (S*)nullptr, (S*)nullptr);
    }
  return out;
}

template <typename S>
void bilinear_warp_backward(const Tensor<S>& image, const Tensor<S>& flow,
                            const Tensor<S>& grad_out, Tensor<S>* grad_image,
                            Tensor<S>* grad_flow) {
  const size_t h = image.dim(0), w = image.dim(1);
  check_same_shape(grad_out, image, "bilinear_warp_backward");
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      const S g = grad_out.at(y, x);
      double sx = double(x) + double(flow.at(0, y, x));
      double sy = double(y) + double(flow.at(1, y, x));
      if (grad_flow) {
        S v, dvx, dvy;
        sample_bilinear(image, sx, sy, &v, &dvx, &dvy);
        grad_flow->at(0, y, x) += g * dvx;
        grad_flow->at(1, y, x) += g * dvy;
      }
      if (grad_image) {
        double sxc = std::min(std::max(sx, 0.0), double(w - 1));
        double syc = std::min(std::max(sy, 0.0), double(h - 1));
        size_t x0 = size_t(sxc), y0 = size_t(syc);
        size_t x1 = std::min(x0 + 1, w - 1);
        size_t y1 = std::min(y0 + 1, h - 1);
        S fx = S(sxc - double(x0)), fy = S(syc - double(y0));
        grad_image->at(y0, x0) += g * (S(1) - fy) * (S(1) - fx);
        grad_image->at(y0, x1) += g * (S(1) - fy) * fx;
        grad_image->at(y1, x0) += g * fy * (S(1) - fx);
        grad_image->at(y1, x1) += g * fy * fx;
      }
    }
}

#define SPIKEFLOW_INSTANTIATE_OPS(S)                                          \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&,            \
                               const Tensor<S>&, int, int);                   \
  template void conv2d_backward<S>(const Tensor<S>&, const Tensor<S>&,        \
                                   const Tensor<S>&, int, int, Tensor<S>*,    \
                                   Tensor<S>*, Tensor<S>*);                   \
  template Tensor<S> upsample_bilinear2x<S>(const Tensor<S>&);                \
  template void upsample_bilinear2x_backward<S>(const Tensor<S>&,             \
                                                Tensor<S>&);                  \
  template Tensor<S> bilinear_warp<S>(const Tensor<S>&, const Tensor<S>&);    \
  template void bilinear_warp_backward<S>(const Tensor<S>&, const Tensor<S>&, \
                                          const Tensor<S>&, Tensor<S>*,       \
                                          Tensor<S>*);

SPIKEFLOW_INSTANTIATE_OPS(float)
SPIKEFLOW_INSTANTIATE_OPS(double)

}  // namespace spikeflow
