#include "ciscnet/layers.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace ciscnet {

namespace {

std::atomic<int> g_layer_threads{1};

// static round-robin split; every job index runs on exactly one worker
template <typename F>
void run_jobs(int count, const F& fn) {
  int t = std::min(g_layer_threads.load(), count);
  if (t <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < count; i += t) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline int ceil_div(int a, int b) {  // b > 0
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

void set_layer_threads(int n) { g_layer_threads.store(std::max(1, n)); }
int layer_threads() { return g_layer_threads.load(); }

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const std::vector<T>& bias,
                  int stride, int pad) {
  if (w.c != x.c) throw ShapeMismatch("conv2d: weight in_ch != input channels");
  if (!bias.empty() && static_cast<int>(bias.size()) != w.n)
    throw ShapeMismatch("conv2d: bias length != out channels");
  const int kh = w.h, kw = w.w;
  const int oh = conv_out_dim(x.h, kh, stride, pad);
  const int ow = conv_out_dim(x.w, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv2d: empty output");

  Tensor4<T> out(x.n, w.n, oh, ow);
  run_jobs(x.n * w.n, [&](int job) {
    int n = job / w.n, oc = job % w.n;
    T* oplane = out.plane(n, oc);
    if (!bias.empty()) {
      T b = bias[oc];
      for (int i = 0; i < oh * ow; ++i) oplane[i] = b;
    }
    for (int ic = 0; ic < x.c; ++ic) {
      const T* xplane = x.plane(n, ic);
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          T wv = w.at(oc, ic, ky, kx);
          if (wv == T(0)) continue;
          int ox_lo = std::max(0, ceil_div(pad - kx, stride));
          int ox_hi = std::min(ow - 1, (x.w - 1 + pad - kx) / stride);
          int off = kx - pad;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= x.h) continue;
            const T* __restrict__ xrow = xplane + static_cast<size_t>(iy) * x.w;
            T* __restrict__ orow = oplane + static_cast<size_t>(oy) * ow;
            for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xrow[ox * stride + off];
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& w, const Tensor4<T>& up,
                             int stride, int pad, bool need_dx) {
  const int kh = w.h, kw = w.w;
  const int oh = conv_out_dim(x.h, kh, stride, pad);
  const int ow = conv_out_dim(x.w, kw, stride, pad);
  up.require_shape(x.n, w.n, oh, ow, "conv2d_backward upstream");

  ConvGrads<T> g;
  g.dw = Tensor4<T>(w.n, w.c, kh, kw);
  g.db.assign(w.n, T(0));
  if (need_dx) g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);

  // filter gradients: one job per output channel
  run_jobs(w.n, [&](int oc) {
    for (int n = 0; n < x.n; ++n) {
      const T* uplane = up.plane(n, oc);
      T acc = T(0);
      for (int i = 0; i < oh * ow; ++i) acc += uplane[i];
      g.db[oc] += acc;
      for (int ic = 0; ic < x.c; ++ic) {
        const T* xplane = x.plane(n, ic);
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T dw_acc = T(0);
            int ox_lo = std::max(0, ceil_div(pad - kx, stride));
            int ox_hi = std::min(ow - 1, (x.w - 1 + pad - kx) / stride);
            int off = kx - pad;
            for (int oy = 0; oy < oh; ++oy) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= x.h) continue;
              const T* __restrict__ urow = uplane + static_cast<size_t>(oy) * ow;
              const T* __restrict__ xrow = xplane + static_cast<size_t>(iy) * x.w;
              // four fixed-order accumulator chains
              T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
              if (stride == 1) {
                const T* __restrict__ ur = urow + ox_lo;
                const T* __restrict__ xr = xrow + ox_lo + off;
                int len = ox_hi - ox_lo + 1;
                int i = 0;
                for (; i + 3 < len; i += 4) {
                  a0 += ur[i] * xr[i];
                  a1 += ur[i + 1] * xr[i + 1];
                  a2 += ur[i + 2] * xr[i + 2];
                  a3 += ur[i + 3] * xr[i + 3];
                }
                for (; i < len; ++i) a0 += ur[i] * xr[i];
              } else {
                int ox = ox_lo;
                for (; ox + 3 <= ox_hi; ox += 4) {
                  a0 += urow[ox] * xrow[ox * stride + off];
                  a1 += urow[ox + 1] * xrow[(ox + 1) * stride + off];
                  a2 += urow[ox + 2] * xrow[(ox + 2) * stride + off];
                  a3 += urow[ox + 3] * xrow[(ox + 3) * stride + off];
                }
                for (; ox <= ox_hi; ++ox) a0 += urow[ox] * xrow[ox * stride + off];
              }
              dw_acc += (a0 + a1) + (a2 + a3);
            }
            g.dw.at(oc, ic, ky, kx) += dw_acc;
          }
        }
      }
    }
  });

  // input gradient: one job per input plane
  if (need_dx) {
    run_jobs(x.n * x.c, [&](int job) {
      int n = job / x.c, ic = job % x.c;
      T* dxplane = g.dx.plane(n, ic);
      for (int oc = 0; oc < w.n; ++oc) {
        const T* uplane = up.plane(n, oc);
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T wv = w.at(oc, ic, ky, kx);
            if (wv == T(0)) continue;
            int ox_lo = std::max(0, ceil_div(pad - kx, stride));
            int ox_hi = std::min(ow - 1, (x.w - 1 + pad - kx) / stride);
            int off = kx - pad;
            for (int oy = 0; oy < oh; ++oy) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= x.h) continue;
              const T* __restrict__ urow = uplane + static_cast<size_t>(oy) * ow;
              T* __restrict__ dxrow = dxplane + static_cast<size_t>(iy) * x.w;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) dxrow[ox * stride + off] += wv * urow[ox];
            }
          }
        }
      }
    });
  }
  return g;
}

template <typename T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& x, const Tensor4<T>& w, const std::vector<T>& bias,
                            int stride) {
  if (w.n != x.c) throw ShapeMismatch("conv_transpose2d: weight in_ch != input channels");
  const int oc_n = w.c, kh = w.h, kw = w.w;
  if (!bias.empty() && static_cast<int>(bias.size()) != oc_n)
    throw ShapeMismatch("conv_transpose2d: bias length != out channels");
  const int oh = (x.h - 1) * stride + kh;
  const int ow = (x.w - 1) * stride + kw;

  Tensor4<T> out(x.n, oc_n, oh, ow);
  run_jobs(x.n * oc_n, [&](int job) {
    int n = job / oc_n, oc = job % oc_n;
    T* oplane = out.plane(n, oc);
    if (!bias.empty()) {
      T b = bias[oc];
      for (int i = 0; i < oh * ow; ++i) oplane[i] = b;
    }
    for (int ic = 0; ic < x.c; ++ic) {
      const T* xplane = x.plane(n, ic);
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          T wv = w.at(ic, oc, ky, kx);
          if (wv == T(0)) continue;
          for (int iy = 0; iy < x.h; ++iy) {
            const T* __restrict__ xrow = xplane + static_cast<size_t>(iy) * x.w;
            T* __restrict__ orow = oplane + static_cast<size_t>(iy * stride + ky) * ow + kx;
            for (int ix = 0; ix < x.w; ++ix) orow[ix * stride] += wv * xrow[ix];
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor4<T>& x, const Tensor4<T>& w,
                                       const Tensor4<T>& up, int stride, bool need_dx) {
  const int oc_n = w.c, kh = w.h, kw = w.w;
  const int oh = (x.h - 1) * stride + kh;
  const int ow = (x.w - 1) * stride + kw;
  up.require_shape(x.n, oc_n, oh, ow, "conv_transpose2d_backward upstream");

  ConvGrads<T> g;
  g.dw = Tensor4<T>(w.n, w.c, kh, kw);
  g.db.assign(oc_n, T(0));
  if (need_dx) g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);

  run_jobs(oc_n, [&](int oc) {
    for (int n = 0; n < x.n; ++n) {
      const T* uplane = up.plane(n, oc);
      T acc = T(0);
      for (int i = 0; i < oh * ow; ++i) acc += uplane[i];
      g.db[oc] += acc;
    }
  });

  // filter gradients: one job per transpose input channel (dw row)
  run_jobs(x.c, [&](int ic) {
    for (int n = 0; n < x.n; ++n) {
      const T* xplane = x.plane(n, ic);
      for (int oc = 0; oc < oc_n; ++oc) {
        const T* uplane = up.plane(n, oc);
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T dw_acc = T(0);
            for (int iy = 0; iy < x.h; ++iy) {
              const T* __restrict__ xrow = xplane + static_cast<size_t>(iy) * x.w;
              const T* __restrict__ urow = uplane + static_cast<size_t>(iy * stride + ky) * ow + kx;
              T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
              int ix = 0;
              for (; ix + 3 < x.w; ix += 4) {
                a0 += xrow[ix] * urow[ix * stride];
                a1 += xrow[ix + 1] * urow[(ix + 1) * stride];
                a2 += xrow[ix + 2] * urow[(ix + 2) * stride];
                a3 += xrow[ix + 3] * urow[(ix + 3) * stride];
              }
              for (; ix < x.w; ++ix) a0 += xrow[ix] * urow[ix * stride];
              dw_acc += (a0 + a1) + (a2 + a3);
            }
            g.dw.at(ic, oc, ky, kx) += dw_acc;
          }
        }
      }
    }
  });

  if (need_dx) {
    run_jobs(x.n * x.c, [&](int job) {
      int n = job / x.c, ic = job % x.c;
      T* dxplane = g.dx.plane(n, ic);
      for (int oc = 0; oc < oc_n; ++oc) {
        const T* uplane = up.plane(n, oc);
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T wv = w.at(ic, oc, ky, kx);
            if (wv == T(0)) continue;
            for (int iy = 0; iy < x.h; ++iy) {
              const T* __restrict__ urow = uplane + static_cast<size_t>(iy * stride + ky) * ow + kx;
              T* __restrict__ dxrow = dxplane + static_cast<size_t>(iy) * x.w;
              for (int ix = 0; ix < x.w; ++ix) dxrow[ix] += wv * urow[ix * stride];
            }
          }
        }
      }
    });
  }
  return g;
}

template <typename T>
Tensor4<T> group_norm(const Tensor4<T>& x, const std::vector<T>& gamma, const std::vector<T>& beta,
                      int groups, T eps, GroupNormCtx<T>* ctx) {
  if (groups <= 0 || x.c % groups != 0)
    throw IndivisibleGroups(std::to_string(x.c) + " channels, " + std::to_string(groups) + " groups");
  if (static_cast<int>(gamma.size()) != x.c || static_cast<int>(beta.size()) != x.c)
    throw ShapeMismatch("group_norm: gamma/beta length != channels");
  const int cg = x.c / groups;
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const size_t group_elems = plane * cg;

  Tensor4<T> out(x.n, x.c, x.h, x.w);
  Tensor4<T> xhat_store;
  if (ctx) {
    ctx->xhat = Tensor4<T>(x.n, x.c, x.h, x.w);
    ctx->inv_std.assign(static_cast<size_t>(x.n) * groups, T(0));
    ctx->groups = groups;
  }

  for (int n = 0; n < x.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const T* base = x.plane(n, g * cg);
      T mean = T(0);
      for (size_t i = 0; i < group_elems; ++i) mean += base[i];
      mean /= static_cast<T>(group_elems);
      T var = T(0);
      for (size_t i = 0; i < group_elems; ++i) {
        T d = base[i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(group_elems);
      T inv_std = T(1) / std::sqrt(var + eps);
      if (ctx) ctx->inv_std[static_cast<size_t>(n) * groups + g] = inv_std;

      for (int j = 0; j < cg; ++j) {
        int c = g * cg + j;
        const T* xp = x.plane(n, c);
        T* op = out.plane(n, c);
        T* hp = ctx ? ctx->xhat.plane(n, c) : nullptr;
        T gm = gamma[c], bt = beta[c];
        for (size_t i = 0; i < plane; ++i) {
          T xh = (xp[i] - mean) * inv_std;
          if (hp) hp[i] = xh;
          op[i] = gm * xh + bt;
        }
      }
    }
  }
  return out;
}

template <typename T>
GroupNormGrads<T> group_norm_backward(const GroupNormCtx<T>& ctx, const std::vector<T>& gamma,
                                      const Tensor4<T>& up) {
  const Tensor4<T>& xhat = ctx.xhat;
  up.require_shape(xhat.n, xhat.c, xhat.h, xhat.w, "group_norm_backward upstream");
  const int groups = ctx.groups;
  const int cg = xhat.c / groups;
  const size_t plane = static_cast<size_t>(xhat.h) * xhat.w;
  const T m = static_cast<T>(plane * cg);

  GroupNormGrads<T> g;
  g.dx = Tensor4<T>(xhat.n, xhat.c, xhat.h, xhat.w);
  g.dgamma.assign(xhat.c, T(0));
  g.dbeta.assign(xhat.c, T(0));

  for (int n = 0; n < xhat.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      T inv_std = ctx.inv_std[static_cast<size_t>(n) * groups + gi];
      T s1 = T(0), s2 = T(0);
      for (int j = 0; j < cg; ++j) {
        int c = gi * cg + j;
        const T* u = up.plane(n, c);
        const T* h = xhat.plane(n, c);
        T gm = gamma[c];
        for (size_t i = 0; i < plane; ++i) {
          T du = u[i] * gm;
          s1 += du;
          s2 += du * h[i];
        }
      }
      s1 /= m;
      s2 /= m;
      for (int j = 0; j < cg; ++j) {
        int c = gi * cg + j;
        const T* u = up.plane(n, c);
        const T* h = xhat.plane(n, c);
        T* dx = g.dx.plane(n, c);
        T gm = gamma[c];
        T dgm = T(0), dbt = T(0);
        for (size_t i = 0; i < plane; ++i) {
          dgm += u[i] * h[i];
          dbt += u[i];
          dx[i] = inv_std * (u[i] * gm - s1 - h[i] * s2);
        }
        g.dgamma[c] += dgm;
        g.dbeta[c] += dbt;
      }
    }
  }
  return g;
}

// exp(softplus(x)) = 1 + exp(x), so tanh(softplus(x)) needs a single exp:
// ((1+e)^2 - 1) / ((1+e)^2 + 1). Large inputs saturate to the identity.
template <typename T>
T mish_scalar(T x) {
  if (x > T(20)) return x;
  T e = std::exp(x);
  T q = (T(1) + e) * (T(1) + e);
  return x * (q - T(1)) / (q + T(1));
}

namespace {

template <typename T, typename F>
void elementwise_parallel(size_t size, T* out, const F& fn) {
  int t = std::min<int>(g_layer_threads.load(), 4);
  size_t chunk = (size + t - 1) / t;
  run_jobs(t, [&](int job) {
    size_t lo = job * chunk;
    size_t hi = std::min(size, lo + chunk);
    for (size_t i = lo; i < hi; ++i) out[i] = fn(i);
  });
}

}  // namespace

template <typename T>
Tensor4<T> mish(const Tensor4<T>& x) {
  Tensor4<T> out(x.n, x.c, x.h, x.w);
  const T* in = x.data.data();
  elementwise_parallel(x.data.size(), out.data.data(),
                       [in](size_t i) { return mish_scalar(in[i]); });
  return out;
}

template <typename T>
Tensor4<T> mish_backward(const Tensor4<T>& x, const Tensor4<T>& up) {
  up.require_shape(x.n, x.c, x.h, x.w, "mish_backward upstream");
  Tensor4<T> out(x.n, x.c, x.h, x.w);
  const T* in = x.data.data();
  const T* u = up.data.data();
  elementwise_parallel(x.data.size(), out.data.data(), [in, u](size_t i) {
    T v = in[i];
    if (v > T(20)) return u[i];
    T e = std::exp(v);
    T q = (T(1) + e) * (T(1) + e);
    T t = (q - T(1)) / (q + T(1));
    T d = t + v * (T(1) - t * t) * e / (T(1) + e);
    return u[i] * d;
  });
  return out;
}

template <typename T>
Tensor4<T> sum_channels(const Tensor4<T>& x) {
  Tensor4<T> out(x.n, 1, x.h, x.w);
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  for (int n = 0; n < x.n; ++n) {
    T* op = out.plane(n, 0);
    for (int c = 0; c < x.c; ++c) {
      const T* xp = x.plane(n, c);
      for (size_t i = 0; i < plane; ++i) op[i] += xp[i];
    }
  }
  return out;
}

template <typename T>
Tensor4<T> sum_channels_backward(const Tensor4<T>& up, int channels) {
  if (up.c != 1) throw ShapeMismatch("sum_channels_backward: upstream must have 1 channel");
  Tensor4<T> out(up.n, channels, up.h, up.w);
  const size_t plane = static_cast<size_t>(up.h) * up.w;
  for (int n = 0; n < up.n; ++n) {
    const T* u = up.plane(n, 0);
    for (int c = 0; c < channels; ++c) {
      T* op = out.plane(n, c);
      for (size_t i = 0; i < plane; ++i) op[i] = u[i];
    }
  }
  return out;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw ShapeMismatch("concat_channels");
  Tensor4<T> out(a.n, a.c + b.c, a.h, a.w);
  const size_t plane = static_cast<size_t>(a.h) * a.w;
  for (int n = 0; n < a.n; ++n) {
    for (int c = 0; c < a.c; ++c)
      std::copy_n(a.plane(n, c), plane, out.plane(n, c));
    for (int c = 0; c < b.c; ++c)
      std::copy_n(b.plane(n, c), plane, out.plane(n, a.c + c));
  }
  return out;
}

template <typename T>
void split_channels(const Tensor4<T>& joined, int c_a, Tensor4<T>& da, Tensor4<T>& db) {
  if (c_a <= 0 || c_a >= joined.c) throw ShapeMismatch("split_channels");
  da = Tensor4<T>(joined.n, c_a, joined.h, joined.w);
  db = Tensor4<T>(joined.n, joined.c - c_a, joined.h, joined.w);
  const size_t plane = static_cast<size_t>(joined.h) * joined.w;
  for (int n = 0; n < joined.n; ++n) {
    for (int c = 0; c < c_a; ++c)
      std::copy_n(joined.plane(n, c), plane, da.plane(n, c));
    for (int c = c_a; c < joined.c; ++c)
      std::copy_n(joined.plane(n, c), plane, db.plane(n, c - c_a));
  }
}

#define CISCNET_INSTANTIATE(T)                                                                  \
  template Tensor4<T> conv2d<T>(const Tensor4<T>&, const Tensor4<T>&, const std::vector<T>&,   \
                                int, int);                                                      \
  template ConvGrads<T> conv2d_backward<T>(const Tensor4<T>&, const Tensor4<T>&,               \
                                           const Tensor4<T>&, int, int, bool);                  \
  template Tensor4<T> conv_transpose2d<T>(const Tensor4<T>&, const Tensor4<T>&,                \
                                          const std::vector<T>&, int);                          \
  template ConvGrads<T> conv_transpose2d_backward<T>(const Tensor4<T>&, const Tensor4<T>&,     \
                                                     const Tensor4<T>&, int, bool);             \
  template Tensor4<T> group_norm<T>(const Tensor4<T>&, const std::vector<T>&,                  \
                                    const std::vector<T>&, int, T, GroupNormCtx<T>*);           \
  template GroupNormGrads<T> group_norm_backward<T>(const GroupNormCtx<T>&,                     \
                                                    const std::vector<T>&, const Tensor4<T>&);  \
  template T mish_scalar<T>(T);                                                                 \
  template Tensor4<T> mish<T>(const Tensor4<T>&);                                               \
  template Tensor4<T> mish_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                   \
  template Tensor4<T> sum_channels<T>(const Tensor4<T>&);                                       \
  template Tensor4<T> sum_channels_backward<T>(const Tensor4<T>&, int);                         \
  template Tensor4<T> concat_channels<T>(const Tensor4<T>&, const Tensor4<T>&);                 \
  template void split_channels<T>(const Tensor4<T>&, int, Tensor4<T>&, Tensor4<T>&);

CISCNET_INSTANTIATE(float)
CISCNET_INSTANTIATE(double)

#undef CISCNET_INSTANTIATE

}  // namespace ciscnet
