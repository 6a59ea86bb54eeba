#pragma once

// Test-only reverse-mode tape over scalars: an independent route to the
// gradients of an unrolled spiking network. The spike node evaluates the
// Heaviside step forward and substitutes the inverse-tangent surrogate
// backward; detach blocks gradient flow (the reset path's spike value).

#include <cassert>
#include <cmath>
#include <vector>

namespace oracle {

class Tape {
public:
  int var(double v) { return push(v); }
  int constv(double v) { return push(v); }  // leaf with no parents either

  int add(int a, int b) { return push(v(a) + v(b), a, b, 1.0, 1.0); }
  int sub(int a, int b) { return push(v(a) - v(b), a, b, 1.0, -1.0); }
  int mul(int a, int b) { return push(v(a) * v(b), a, b, v(b), v(a)); }
  int divi(int a, int b) {
    return push(v(a) / v(b), a, b, 1.0 / v(b), -v(a) / (v(b) * v(b)));
  }
  int scale_c(int a, double c) { return push(v(a) * c, a, -1, c, 0.0); }
  int add_c(int a, double c) { return push(v(a) + c, a, -1, 1.0, 0.0); }
  int tanh_n(int a) {
    double t = std::tanh(v(a));
    return push(t, a, -1, 1.0 - t * t, 0.0);
  }
  int spike(int z, double gamma) {
    double zz = v(z);
    double surr = (1.0 - std::abs(zz)) > 0.0 ? 1.0 / (1.0 + gamma * zz * zz)
                                             : 0.0;
    return push(zz > 0.0 ? 1.0 : 0.0, z, -1, surr, 0.0);
  }
  int detach(int a) { return push(v(a), a, -1, 0.0, 0.0); }

  int sum(const std::vector<int>& ids) {
    assert(!ids.empty());
    int acc = ids[0];
    for (size_t i = 1; i < ids.size(); ++i) acc = add(acc, ids[i]);
    return acc;
  }

  double v(int id) const { return nodes_[size_t(id)].v; }
  double grad(int id) const { return nodes_[size_t(id)].g; }
  size_t size() const { return nodes_.size(); }

  void backward(int root) {
    for (auto& n : nodes_) n.g = 0.0;
    nodes_[size_t(root)].g = 1.0;
    for (size_t i = nodes_.size(); i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.g == 0.0) continue;
      if (n.a >= 0) nodes_[size_t(n.a)].g += n.g * n.da;
      if (n.b >= 0) nodes_[size_t(n.b)].g += n.g * n.db;
    }
  }

private:
  struct Node {
    double v;
    double g = 0;
    int a, b;
    double da, db;
  };

  int push(double v, int a = -1, int b = -1, double da = 0, double db = 0) {
    nodes_.push_back({v, 0.0, a, b, da, db});
    return int(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

// Node-id grid [C,H,W] stored row-major.
struct Grid {
  size_t c = 0, h = 0, w = 0;
  std::vector<int> ids;
  int at(size_t ci, size_t yi, size_t xi) const {
    return ids[(ci * h + yi) * w + xi];
  }
  int& at(size_t ci, size_t yi, size_t xi) {
    return ids[(ci * h + yi) * w + xi];
  }
};

inline Grid make_grid(size_t c, size_t h, size_t w) {
  Grid g;
  g.c = c;
  g.h = h;
  g.w = w;
  g.ids.assign(c * h * w, -1);
  return g;
}

// Weight ids shaped [OC,IC,K,K] plus bias ids [OC].
struct ConvVars {
  size_t oc = 0, ic = 0, k = 0;
  std::vector<int> w;
  std::vector<int> b;
  int wat(size_t o, size_t i, size_t ky, size_t kx) const {
    return w[((o * ic + i) * k + ky) * k + kx];
  }
};

inline Grid conv2d(Tape& t, const Grid& in, const ConvVars& cv, int stride,
                   int pad) {
  const size_t oh = (in.h + 2 * size_t(pad) - cv.k) / size_t(stride) + 1;
  const size_t ow = (in.w + 2 * size_t(pad) - cv.k) / size_t(stride) + 1;
  Grid out = make_grid(cv.oc, oh, ow);
  for (size_t o = 0; o < cv.oc; ++o)
    for (size_t y = 0; y < oh; ++y)
      for (size_t x = 0; x < ow; ++x) {
        int acc = cv.b[o];
        for (size_t i = 0; i < cv.ic; ++i)
          for (size_t ky = 0; ky < cv.k; ++ky)
            for (size_t kx = 0; kx < cv.k; ++kx) {
              long iy = long(y) * stride - pad + long(ky);
              long ix = long(x) * stride - pad + long(kx);
              if (iy < 0 || ix < 0 || iy >= long(in.h) || ix >= long(in.w))
                continue;
              acc = t.add(acc, t.mul(cv.wat(o, i, ky, kx),
                                     in.at(i, size_t(iy), size_t(ix))));
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

// Half-pixel 2x bilinear upsampling with border clamp.
inline Grid upsample2x(Tape& t, const Grid& in) {
  Grid out = make_grid(in.c, 2 * in.h, 2 * in.w);
  for (size_t c = 0; c < in.c; ++c)
    for (size_t oy = 0; oy < out.h; ++oy)
      for (size_t ox = 0; ox < out.w; ++ox) {
        double sy = (oy + 0.5) / 2.0 - 0.5;
        double sx = (ox + 0.5) / 2.0 - 0.5;
        double syc = std::min(std::max(sy, 0.0), double(in.h - 1));
        double sxc = std::min(std::max(sx, 0.0), double(in.w - 1));
        size_t y0 = size_t(syc), x0 = size_t(sxc);
        size_t y1 = std::min(y0 + 1, in.h - 1);
        size_t x1 = std::min(x0 + 1, in.w - 1);
        double fy = syc - double(y0), fx = sxc - double(x0);
        int top = t.add(t.scale_c(in.at(c, y0, x0), (1 - fy) * (1 - fx)),
                        t.scale_c(in.at(c, y0, x1), (1 - fy) * fx));
        int bot = t.add(t.scale_c(in.at(c, y1, x0), fy * (1 - fx)),
                        t.scale_c(in.at(c, y1, x1), fy * fx));
        out.at(c, oy, ox) = t.add(top, bot);
      }
  return out;
}

inline Grid concat(const Grid& a, const Grid& b) {
  assert(a.h == b.h && a.w == b.w);
  Grid out = make_grid(a.c + b.c, a.h, a.w);
  std::copy(a.ids.begin(), a.ids.end(), out.ids.begin());
  std::copy(b.ids.begin(), b.ids.end(), out.ids.begin() + long(a.ids.size()));
  return out;
}

struct LifVars {
  int v_th;
  int leak;
  double gamma;
  bool hard_reset = false;
};

struct LifNodes {
  std::vector<int> u, o;  // persistent across timesteps
};

// One LIF update on a grid of currents; state ids live in `state`.
inline Grid lif_step(Tape& t, const Grid& current, const LifVars& lv,
                     LifNodes& state) {
  const size_t n = current.ids.size();
  if (state.u.empty()) {
    state.u.assign(n, -1);
    state.o.assign(n, -1);
    for (size_t i = 0; i < n; ++i) {
      state.u[i] = t.constv(0.0);
      state.o[i] = t.constv(0.0);
    }
  }
  Grid out = make_grid(current.c, current.h, current.w);
  for (size_t i = 0; i < n; ++i) {
    int u;
    if (lv.hard_reset) {
      int keep = t.sub(t.constv(1.0), t.detach(state.o[i]));
      u = t.add(t.mul(lv.leak, t.mul(state.u[i], keep)), current.ids[i]);
    } else {
      int reset = t.mul(lv.v_th, t.detach(state.o[i]));
      u = t.sub(t.add(t.mul(lv.leak, state.u[i]), current.ids[i]), reset);
    }
    int z = t.add_c(t.divi(u, lv.v_th), -1.0);
    int o = t.spike(z, lv.gamma);
    state.u[i] = u;
    state.o[i] = o;
    out.ids[i] = o;
  }
  return out;
}

}  // namespace oracle
