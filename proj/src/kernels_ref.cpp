#include <atomic>

#include "kernels_common.hpp"
#include "ticket/kernels.hpp"

namespace ticket::kernels {

namespace {
std::atomic<bool> g_parallel{
#ifdef _OPENMP
    true
#else
    false
#endif
};
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

namespace ref {

using detail::axpy;
using detail::dot_lanes;
using detail::pad_plane;

template <class T>
static void check_conv_shapes(const TensorT<T>& x, const TensorT<T>& w,
                              const TensorT<T>& b) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be 4-D [B,C,H,W]");
  if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
    throw std::invalid_argument("conv2d: weight must be [Cout,Cin,3,3], got " +
                                shape_str(w.shape));
  if (w.dim(1) != x.dim(1))
    throw std::invalid_argument("conv2d: weight Cin " + std::to_string(w.dim(1)) +
                                " does not match input channels " +
                                std::to_string(x.dim(1)));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw std::invalid_argument("conv2d: bias must be [Cout]");
}

template <class T>
void conv2d_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y) {
  check_conv_shapes(x, w, b);
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0);
  y = TensorT<T>({B, Cout, H, W});

  const int64_t wp = W + 2;
  std::vector<T> xp(static_cast<size_t>(B * Cin * (H + 2) * wp));
  for (int64_t b_i = 0; b_i < B; ++b_i)
    for (int64_t ci = 0; ci < Cin; ++ci)
      pad_plane(&x.data[static_cast<size_t>((b_i * Cin + ci) * H * W)],
                &xp[static_cast<size_t>((b_i * Cin + ci) * (H + 2) * wp)], H, W);

  for (int64_t b_i = 0; b_i < B; ++b_i) {
    for (int64_t co = 0; co < Cout; ++co) {
      T* out = &y.data[static_cast<size_t>((b_i * Cout + co) * H * W)];
      const T bias = b.data[static_cast<size_t>(co)];
      for (int64_t i = 0; i < H * W; ++i) out[i] = bias;
      for (int64_t ci = 0; ci < Cin; ++ci) {
        const T* plane = &xp[static_cast<size_t>((b_i * Cin + ci) * (H + 2) * wp)];
        const T* wk = &w.data[static_cast<size_t>((co * Cin + ci) * 9)];
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx) {
            const T c = wk[ky * 3 + kx];
            for (int64_t oy = 0; oy < H; ++oy)
              axpy(c, plane + (oy + ky) * wp + kx, out + oy * W, W);
          }
      }
    }
  }
}

template <class T>
void conv2d_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0);
  const int64_t wp = W + 2;

  if (gb) {
    for (int64_t co = 0; co < Cout; ++co) {
      T s = 0;
      for (int64_t b_i = 0; b_i < B; ++b_i) {
        const T* g = &gy.data[static_cast<size_t>((b_i * Cout + co) * H * W)];
        for (int64_t i = 0; i < H * W; ++i) s += g[i];
      }
      gb->data[static_cast<size_t>(co)] += s;
    }
  }

  if (gw) {
    std::vector<T> xp(static_cast<size_t>(B * Cin * (H + 2) * wp));
    for (int64_t b_i = 0; b_i < B; ++b_i)
      for (int64_t ci = 0; ci < Cin; ++ci)
        pad_plane(&x.data[static_cast<size_t>((b_i * Cin + ci) * H * W)],
                  &xp[static_cast<size_t>((b_i * Cin + ci) * (H + 2) * wp)], H, W);
    for (int64_t co = 0; co < Cout; ++co) {
      for (int64_t ci = 0; ci < Cin; ++ci) {
        T* wg = &gw->data[static_cast<size_t>((co * Cin + ci) * 9)];
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx) {
            T s = 0;
            for (int64_t b_i = 0; b_i < B; ++b_i) {
              const T* g = &gy.data[static_cast<size_t>((b_i * Cout + co) * H * W)];
              const T* plane =
                  &xp[static_cast<size_t>((b_i * Cin + ci) * (H + 2) * wp)];
              for (int64_t oy = 0; oy < H; ++oy)
                s += dot_lanes(g + oy * W, plane + (oy + ky) * wp + kx, W);
            }
            wg[ky * 3 + kx] += s;
          }
      }
    }
  }

  if (gx) {
    // gx accumulated via padded scratch so kernel offsets never branch
    std::vector<T> gp(static_cast<size_t>((H + 2) * wp));
    for (int64_t b_i = 0; b_i < B; ++b_i) {
      for (int64_t ci = 0; ci < Cin; ++ci) {
        for (auto& v : gp) v = 0;
        for (int64_t co = 0; co < Cout; ++co) {
          const T* g = &gy.data[static_cast<size_t>((b_i * Cout + co) * H * W)];
          const T* wk = &w.data[static_cast<size_t>((co * Cin + ci) * 9)];
          for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
              const T c = wk[ky * 3 + kx];
              for (int64_t oy = 0; oy < H; ++oy)
                axpy(c, g + oy * W, gp.data() + (oy + ky) * wp + kx, W);
            }
        }
        T* out = &gx->data[static_cast<size_t>((b_i * Cin + ci) * H * W)];
        for (int64_t yy = 0; yy < H; ++yy)
          for (int64_t xx = 0; xx < W; ++xx)
            out[yy * W + xx] += gp[static_cast<size_t>((yy + 1) * wp + xx + 1)];
      }
    }
  }
}

template <class T>
void linear_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y) {
  if (x.rank() != 2 || w.rank() != 2)
    throw std::invalid_argument("linear: input and weight must be 2-D");
  if (w.dim(1) != x.dim(1))
    throw std::invalid_argument("linear: weight Din " + std::to_string(w.dim(1)) +
                                " does not match input " + std::to_string(x.dim(1)));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw std::invalid_argument("linear: bias must be [Dout]");
  const int64_t B = x.dim(0), Din = x.dim(1), Dout = w.dim(0);
  y = TensorT<T>({B, Dout});
  for (int64_t b_i = 0; b_i < B; ++b_i) {
    const T* xr = &x.data[static_cast<size_t>(b_i * Din)];
    for (int64_t o = 0; o < Dout; ++o)
      y.data[static_cast<size_t>(b_i * Dout + o)] =
          b.data[static_cast<size_t>(o)] +
          dot_lanes(xr, &w.data[static_cast<size_t>(o * Din)], Din);
  }
}

template <class T>
void linear_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  const int64_t B = x.dim(0), Din = x.dim(1), Dout = w.dim(0);
  if (gb) {
    for (int64_t o = 0; o < Dout; ++o) {
      T s = 0;
      for (int64_t b_i = 0; b_i < B; ++b_i) s += gy.data[static_cast<size_t>(b_i * Dout + o)];
      gb->data[static_cast<size_t>(o)] += s;
    }
  }
  if (gw) {
    for (int64_t o = 0; o < Dout; ++o) {
      T* wg = &gw->data[static_cast<size_t>(o * Din)];
      for (int64_t b_i = 0; b_i < B; ++b_i)
        axpy(gy.data[static_cast<size_t>(b_i * Dout + o)],
             &x.data[static_cast<size_t>(b_i * Din)], wg, Din);
    }
  }
  if (gx) {
    for (int64_t b_i = 0; b_i < B; ++b_i) {
      T* xg = &gx->data[static_cast<size_t>(b_i * Din)];
      for (int64_t o = 0; o < Dout; ++o)
        axpy(gy.data[static_cast<size_t>(b_i * Dout + o)],
             &w.data[static_cast<size_t>(o * Din)], xg, Din);
    }
  }
}

template <class T>
void silu_fwd(const TensorT<T>& x, TensorT<T>& y, TensorT<T>& sig) {
  y = TensorT<T>(x.shape);
  sig = TensorT<T>(x.shape);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const T s = detail::sigmoid(x.data[static_cast<size_t>(i)]);
    sig.data[static_cast<size_t>(i)] = s;
    y.data[static_cast<size_t>(i)] = x.data[static_cast<size_t>(i)] * s;
  }
}

template <class T>
void silu_bwd(const TensorT<T>& x, const TensorT<T>& sig, const TensorT<T>& gy,
              TensorT<T>& gx) {
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const T s = sig.data[static_cast<size_t>(i)];
    const T d = s * (T(1) + x.data[static_cast<size_t>(i)] * (T(1) - s));
    gx.data[static_cast<size_t>(i)] += gy.data[static_cast<size_t>(i)] * d;
  }
}

template <class T>
void add_fwd(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& y) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  y = TensorT<T>(a.shape);
  for (int64_t i = 0; i < a.numel(); ++i)
    y.data[static_cast<size_t>(i)] =
        a.data[static_cast<size_t>(i)] + b.data[static_cast<size_t>(i)];
}

template <class T>
void add_channel_bias_fwd(const TensorT<T>& x, const TensorT<T>& t, TensorT<T>& y) {
  if (x.rank() != 4 || t.rank() != 2 || t.dim(0) != x.dim(0) || t.dim(1) != x.dim(1))
    throw std::invalid_argument("add_channel_bias: expected x [B,C,H,W], t [B,C]");
  y = TensorT<T>(x.shape);
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  for (int64_t b_i = 0; b_i < B; ++b_i)
    for (int64_t c = 0; c < C; ++c) {
      const T bias = t.data[static_cast<size_t>(b_i * C + c)];
      const T* in = &x.data[static_cast<size_t>((b_i * C + c) * HW)];
      T* out = &y.data[static_cast<size_t>((b_i * C + c) * HW)];
      for (int64_t i = 0; i < HW; ++i) out[i] = in[i] + bias;
    }
}

template <class T>
void add_channel_bias_bwd(const TensorT<T>& gy, TensorT<T>& gx, TensorT<T>& gt) {
  const int64_t B = gy.dim(0), C = gy.dim(1), HW = gy.dim(2) * gy.dim(3);
  for (int64_t b_i = 0; b_i < B; ++b_i)
    for (int64_t c = 0; c < C; ++c) {
      const T* g = &gy.data[static_cast<size_t>((b_i * C + c) * HW)];
      T* xg = &gx.data[static_cast<size_t>((b_i * C + c) * HW)];
      T s = 0;
      for (int64_t i = 0; i < HW; ++i) {
        xg[i] += g[i];
        s += g[i];
      }
      gt.data[static_cast<size_t>(b_i * C + c)] += s;
    }
}

template <class T>
void concat_channels_fwd(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& y) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes " +
                                shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  y = TensorT<T>({B, Ca + Cb, a.dim(2), a.dim(3)});
  for (int64_t b_i = 0; b_i < B; ++b_i) {
    for (int64_t c = 0; c < Ca; ++c)
      for (int64_t i = 0; i < HW; ++i)
        y.data[static_cast<size_t>(((b_i * (Ca + Cb)) + c) * HW + i)] =
            a.data[static_cast<size_t>((b_i * Ca + c) * HW + i)];
    for (int64_t c = 0; c < Cb; ++c)
      for (int64_t i = 0; i < HW; ++i)
        y.data[static_cast<size_t>(((b_i * (Ca + Cb)) + Ca + c) * HW + i)] =
            b.data[static_cast<size_t>((b_i * Cb + c) * HW + i)];
  }
}

template <class T>
void concat_channels_bwd(const TensorT<T>& gy, TensorT<T>& ga, TensorT<T>& gb) {
  const int64_t B = ga.dim(0), Ca = ga.dim(1), Cb = gb.dim(1),
                HW = ga.dim(2) * ga.dim(3);
  for (int64_t b_i = 0; b_i < B; ++b_i) {
    for (int64_t c = 0; c < Ca; ++c)
      for (int64_t i = 0; i < HW; ++i)
        ga.data[static_cast<size_t>((b_i * Ca + c) * HW + i)] +=
            gy.data[static_cast<size_t>(((b_i * (Ca + Cb)) + c) * HW + i)];
    for (int64_t c = 0; c < Cb; ++c)
      for (int64_t i = 0; i < HW; ++i)
        gb.data[static_cast<size_t>((b_i * Cb + c) * HW + i)] +=
            gy.data[static_cast<size_t>(((b_i * (Ca + Cb)) + Ca + c) * HW + i)];
  }
}

template <class T>
void avgpool2_fwd(const TensorT<T>& x, TensorT<T>& y) {
  if (x.rank() != 4) throw std::invalid_argument("downsample2: input must be 4-D");
  const int64_t H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("downsample2: odd spatial size " + shape_str(x.shape));
  const int64_t B = x.dim(0), C = x.dim(1), Ho = H / 2, Wo = W / 2;
  y = TensorT<T>({B, C, Ho, Wo});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* in = &x.data[static_cast<size_t>(bc * H * W)];
    T* out = &y.data[static_cast<size_t>(bc * Ho * Wo)];
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        const T* p = in + (2 * oy) * W + 2 * ox;
        out[oy * Wo + ox] = ((p[0] + p[1]) + (p[W] + p[W + 1])) * T(0.25);
      }
  }
}

template <class T>
void avgpool2_bwd(const TensorT<T>& gy, TensorT<T>& gx) {
  const int64_t B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
  const int64_t Ho = H / 2, Wo = W / 2;
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* g = &gy.data[static_cast<size_t>(bc * Ho * Wo)];
    T* out = &gx.data[static_cast<size_t>(bc * H * W)];
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        const T v = g[oy * Wo + ox] * T(0.25);
        T* p = out + (2 * oy) * W + 2 * ox;
        p[0] += v;
        p[1] += v;
        p[W] += v;
        p[W + 1] += v;
      }
  }
}

template <class T>
void upsample2_fwd(const TensorT<T>& x, TensorT<T>& y) {
  if (x.rank() != 4) throw std::invalid_argument("upsample2: input must be 4-D");
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  y = TensorT<T>({B, C, 2 * H, 2 * W});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* in = &x.data[static_cast<size_t>(bc * H * W)];
    T* out = &y.data[static_cast<size_t>(bc * 4 * H * W)];
    for (int64_t iy = 0; iy < H; ++iy)
      for (int64_t ix = 0; ix < W; ++ix) {
        const T v = in[iy * W + ix];
        T* p = out + (2 * iy) * (2 * W) + 2 * ix;
        p[0] = v;
        p[1] = v;
        p[2 * W] = v;
        p[2 * W + 1] = v;
      }
  }
}

template <class T>
void upsample2_bwd(const TensorT<T>& gy, TensorT<T>& gx) {
  const int64_t B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* g = &gy.data[static_cast<size_t>(bc * 4 * H * W)];
    T* out = &gx.data[static_cast<size_t>(bc * H * W)];
    for (int64_t iy = 0; iy < H; ++iy)
      for (int64_t ix = 0; ix < W; ++ix) {
        const T* p = g + (2 * iy) * (2 * W) + 2 * ix;
        out[iy * W + ix] += ((p[0] + p[1]) + (p[2 * W] + p[2 * W + 1]));
      }
  }
}

template <class T>
T mse_fwd(const TensorT<T>& pred, const TensorT<T>& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(pred.shape) +
                                " vs " + shape_str(target.shape));
  const int64_t n = pred.numel();
  // fixed-order four-lane sum, same scheme as dot_lanes
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const T d0 = pred.data[static_cast<size_t>(i)] - target.data[static_cast<size_t>(i)];
    const T d1 = pred.data[static_cast<size_t>(i + 1)] - target.data[static_cast<size_t>(i + 1)];
    const T d2 = pred.data[static_cast<size_t>(i + 2)] - target.data[static_cast<size_t>(i + 2)];
    const T d3 = pred.data[static_cast<size_t>(i + 3)] - target.data[static_cast<size_t>(i + 3)];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  T tail = 0;
  for (; i < n; ++i) {
    const T d = pred.data[static_cast<size_t>(i)] - target.data[static_cast<size_t>(i)];
    tail += d * d;
  }
  return (((s0 + s1) + (s2 + s3)) + tail) / static_cast<T>(n);
}

template <class T>
void mse_bwd(const TensorT<T>& pred, const TensorT<T>& target, T gy,
             TensorT<T>& gpred) {
  const int64_t n = pred.numel();
  const T c = gy * T(2) / static_cast<T>(n);
  for (int64_t i = 0; i < n; ++i)
    gpred.data[static_cast<size_t>(i)] +=
        c * (pred.data[static_cast<size_t>(i)] - target.data[static_cast<size_t>(i)]);
}

#define TICKET_INSTANTIATE_REF(T)                                                   \
  template void conv2d_fwd<T>(const TensorT<T>&, const TensorT<T>&,                 \
                              const TensorT<T>&, TensorT<T>&);                      \
  template void conv2d_bwd<T>(const TensorT<T>&, const TensorT<T>&,                 \
                              const TensorT<T>&, TensorT<T>*, TensorT<T>*,          \
                              TensorT<T>*);                                         \
  template void linear_fwd<T>(const TensorT<T>&, const TensorT<T>&,                 \
                              const TensorT<T>&, TensorT<T>&);                      \
  template void linear_bwd<T>(const TensorT<T>&, const TensorT<T>&,                 \
                              const TensorT<T>&, TensorT<T>*, TensorT<T>*,          \
                              TensorT<T>*);                                         \
  template void silu_fwd<T>(const TensorT<T>&, TensorT<T>&, TensorT<T>&);           \
  template void silu_bwd<T>(const TensorT<T>&, const TensorT<T>&,                   \
                            const TensorT<T>&, TensorT<T>&);                        \
  template void add_fwd<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);      \
  template void add_channel_bias_fwd<T>(const TensorT<T>&, const TensorT<T>&,       \
                                        TensorT<T>&);                               \
  template void add_channel_bias_bwd<T>(const TensorT<T>&, TensorT<T>&,             \
                                        TensorT<T>&);                               \
  template void concat_channels_fwd<T>(const TensorT<T>&, const TensorT<T>&,        \
                                       TensorT<T>&);                                \
  template void concat_channels_bwd<T>(const TensorT<T>&, TensorT<T>&, TensorT<T>&); \
  template void avgpool2_fwd<T>(const TensorT<T>&, TensorT<T>&);                    \
  template void avgpool2_bwd<T>(const TensorT<T>&, TensorT<T>&);                    \
  template void upsample2_fwd<T>(const TensorT<T>&, TensorT<T>&);                   \
  template void upsample2_bwd<T>(const TensorT<T>&, TensorT<T>&);                   \
  template T mse_fwd<T>(const TensorT<T>&, const TensorT<T>&);                      \
  template void mse_bwd<T>(const TensorT<T>&, const TensorT<T>&, T, TensorT<T>&);

TICKET_INSTANTIATE_REF(float)
TICKET_INSTANTIATE_REF(double)

}  // namespace ref
}  // namespace ticket::kernels
