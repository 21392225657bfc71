#pragma once

#include "ticket/tensor.hpp"

namespace ticket::kernels {

// Two interchangeable backends: `ref` is the plain serial implementation kept
// as the ground truth for testing; `par` distributes independent output
// elements across OpenMP threads. Every reduction (conv taps, dot products,
// loss means) runs in a fixed index order in both backends, so results are
// bit-identical between them and across thread counts.
//
// Dot-product reductions use a four-lane split (lanes x%4, combined as
// ((s0+s1)+(s2+s3))+tail) in both backends; this is the documented fixed
// order, chosen so the lanes map onto SSE registers.
bool parallel_enabled();
void set_parallel(bool on);

namespace ref {

// conv2d: 3x3 kernel, stride 1, zero padding 1.
// x [B,Cin,H,W], w [Cout,Cin,3,3], b [Cout] -> y [B,Cout,H,W]
template <class T>
void conv2d_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y);
// Adjoints accumulate (+=) into the provided buffers; pass nullptr to skip.
template <class T>
void conv2d_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb);

// linear: x [B,Din], w [Dout,Din], b [Dout] -> y [B,Dout]
template <class T>
void linear_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y);
template <class T>
void linear_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb);

// silu: y = x * sigmoid(x); sig holds sigmoid(x) for the backward pass
template <class T>
void silu_fwd(const TensorT<T>& x, TensorT<T>& y, TensorT<T>& sig);
template <class T>
void silu_bwd(const TensorT<T>& x, const TensorT<T>& sig, const TensorT<T>& gy,
              TensorT<T>& gx);

template <class T>
void add_fwd(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& y);

// y[b,c,h,w] = x[b,c,h,w] + t[b,c]  (time-embedding injection)
template <class T>
void add_channel_bias_fwd(const TensorT<T>& x, const TensorT<T>& t, TensorT<T>& y);
template <class T>
void add_channel_bias_bwd(const TensorT<T>& gy, TensorT<T>& gx, TensorT<T>& gt);

template <class T>
void concat_channels_fwd(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& y);
template <class T>
void concat_channels_bwd(const TensorT<T>& gy, TensorT<T>& ga, TensorT<T>& gb);

// 2x2 average pooling; H and W must be even
template <class T>
void avgpool2_fwd(const TensorT<T>& x, TensorT<T>& y);
template <class T>
void avgpool2_bwd(const TensorT<T>& gy, TensorT<T>& gx);

// nearest-neighbour 2x upsampling
template <class T>
void upsample2_fwd(const TensorT<T>& x, TensorT<T>& y);
template <class T>
void upsample2_bwd(const TensorT<T>& gy, TensorT<T>& gx);

// mean of squared differences; backward: g += gy * 2*(pred-target)/N
template <class T>
T mse_fwd(const TensorT<T>& pred, const TensorT<T>& target);
template <class T>
void mse_bwd(const TensorT<T>& pred, const TensorT<T>& target, T gy,
             TensorT<T>& gpred);

}  // namespace ref

namespace par {

template <class T>
void conv2d_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y);
template <class T>
void conv2d_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb);
template <class T>
void linear_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y);
template <class T>
void linear_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb);
template <class T>
void silu_fwd(const TensorT<T>& x, TensorT<T>& y, TensorT<T>& sig);
template <class T>
void silu_bwd(const TensorT<T>& x, const TensorT<T>& sig, const TensorT<T>& gy,
              TensorT<T>& gx);

}  // namespace par

// Dispatchers: the heavy kernels go through the parallel backend when
// enabled; the cheap reshuffling ops always use ref (not worth a fork/join).
template <class T>
void conv2d_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y) {
  if (parallel_enabled())
    par::conv2d_fwd(x, w, b, y);
  else
    ref::conv2d_fwd(x, w, b, y);
}
template <class T>
void conv2d_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  if (parallel_enabled())
    par::conv2d_bwd(x, w, gy, gx, gw, gb);
  else
    ref::conv2d_bwd(x, w, gy, gx, gw, gb);
}
template <class T>
void linear_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                TensorT<T>& y) {
  if (parallel_enabled())
    par::linear_fwd(x, w, b, y);
  else
    ref::linear_fwd(x, w, b, y);
}
template <class T>
void linear_bwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  if (parallel_enabled())
    par::linear_bwd(x, w, gy, gx, gw, gb);
  else
    ref::linear_bwd(x, w, gy, gx, gw, gb);
}
template <class T>
void silu_fwd(const TensorT<T>& x, TensorT<T>& y, TensorT<T>& sig) {
  if (parallel_enabled())
    par::silu_fwd(x, y, sig);
  else
    ref::silu_fwd(x, y, sig);
}
template <class T>
void silu_bwd(const TensorT<T>& x, const TensorT<T>& sig, const TensorT<T>& gy,
              TensorT<T>& gx) {
  if (parallel_enabled())
    par::silu_bwd(x, sig, gy, gx);
  else
    ref::silu_bwd(x, sig, gy, gx);
}

}  // namespace ticket::kernels
