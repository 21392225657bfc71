#include "ticket/autodiff.hpp"

#include "ticket/kernels.hpp"

namespace ticket {

namespace k = kernels;

template <class T>
typename TapeT<T>::Id TapeT<T>::leaf(TensorT<T> value, bool needs_grad) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(value);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::conv2d(Id x, Id w, Id b) {
  Node n;
  n.op = Op::Conv2d;
  n.in = {x, w, b};
  k::conv2d_fwd(value(x), value(w), value(b), n.val);
  n.needs_grad = any_needs({x, w, b});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::linear(Id x, Id w, Id b) {
  Node n;
  n.op = Op::Linear;
  n.in = {x, w, b};
  k::linear_fwd(value(x), value(w), value(b), n.val);
  n.needs_grad = any_needs({x, w, b});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::silu(Id x) {
  Node n;
  n.op = Op::Silu;
  n.in = {x, -1, -1};
  k::silu_fwd(value(x), n.val, n.aux);
  n.needs_grad = any_needs({x});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::add(Id a, Id b) {
  Node n;
  n.op = Op::Add;
  n.in = {a, b, -1};
  k::ref::add_fwd(value(a), value(b), n.val);
  n.needs_grad = any_needs({a, b});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::add_channel_bias(Id x, Id t) {
  Node n;
  n.op = Op::AddChannelBias;
  n.in = {x, t, -1};
  k::ref::add_channel_bias_fwd(value(x), value(t), n.val);
  n.needs_grad = any_needs({x, t});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::concat_channels(Id a, Id b) {
  Node n;
  n.op = Op::ConcatChannels;
  n.in = {a, b, -1};
  k::ref::concat_channels_fwd(value(a), value(b), n.val);
  n.needs_grad = any_needs({a, b});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::downsample2(Id x) {
  Node n;
  n.op = Op::Downsample2;
  n.in = {x, -1, -1};
  k::ref::avgpool2_fwd(value(x), n.val);
  n.needs_grad = any_needs({x});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::upsample2(Id x) {
  Node n;
  n.op = Op::Upsample2;
  n.in = {x, -1, -1};
  k::ref::upsample2_fwd(value(x), n.val);
  n.needs_grad = any_needs({x});
  return push(std::move(n));
}

template <class T>
typename TapeT<T>::Id TapeT<T>::mse_loss(Id pred, Id target) {
  Node n;
  n.op = Op::MseLoss;
  n.in = {pred, target, -1};
  n.val = TensorT<T>({1});
  n.val[0] = k::ref::mse_fwd(value(pred), value(target));
  n.needs_grad = any_needs({pred, target});
  return push(std::move(n));
}

template <class T>
const TensorT<T>& TapeT<T>::grad(Id id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.numel() == 0)
    throw std::logic_error("tape: grad queried before backward()");
  return n.grad;
}

template <class T>
void TapeT<T>::backward(Id root) {
  if (value(root).numel() != 1)
    throw std::invalid_argument("tape: backward root must be a scalar");
  for (auto& n : nodes_) {
    n.grad = TensorT<T>(n.val.shape);  // zero-filled
  }
  nodes_[static_cast<size_t>(root)].grad[0] = T(1);

  for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || n.op == Op::Leaf) continue;
    auto g = [&](Id id) -> TensorT<T>* {
      return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad
                 ? &nodes_[static_cast<size_t>(id)].grad
                 : nullptr;
    };
    auto v = [&](Id id) -> const TensorT<T>& { return value(id); };
    switch (n.op) {
      case Op::Conv2d:
        k::conv2d_bwd(v(n.in[0]), v(n.in[1]), n.grad, g(n.in[0]), g(n.in[1]),
                      g(n.in[2]));
        break;
      case Op::Linear:
        k::linear_bwd(v(n.in[0]), v(n.in[1]), n.grad, g(n.in[0]), g(n.in[1]),
                      g(n.in[2]));
        break;
      case Op::Silu:
        if (auto* gx = g(n.in[0])) k::silu_bwd(v(n.in[0]), n.aux, n.grad, *gx);
        break;
      case Op::Add:
        for (int s = 0; s < 2; ++s)
          if (auto* gi = g(n.in[s]))
            for (int64_t j = 0; j < n.grad.numel(); ++j) (*gi)[j] += n.grad[j];
        break;
      case Op::AddChannelBias: {
        auto* gx = g(n.in[0]);
        auto* gt = g(n.in[1]);
        TensorT<T> dummy_x, dummy_t;
        if (!gx) {
          dummy_x = TensorT<T>(v(n.in[0]).shape);
          gx = &dummy_x;
        }
        if (!gt) {
          dummy_t = TensorT<T>(v(n.in[1]).shape);
          gt = &dummy_t;
        }
        k::ref::add_channel_bias_bwd(n.grad, *gx, *gt);
        break;
      }
      case Op::ConcatChannels: {
        auto* ga = g(n.in[0]);
        auto* gb = g(n.in[1]);
        TensorT<T> dummy_a, dummy_b;
        if (!ga) {
          dummy_a = TensorT<T>(v(n.in[0]).shape);
          ga = &dummy_a;
        }
        if (!gb) {
          dummy_b = TensorT<T>(v(n.in[1]).shape);
          gb = &dummy_b;
        }
        k::ref::concat_channels_bwd(n.grad, *ga, *gb);
        break;
      }
      case Op::Downsample2:
        if (auto* gx = g(n.in[0])) k::ref::avgpool2_bwd(n.grad, *gx);
        break;
      case Op::Upsample2:
        if (auto* gx = g(n.in[0])) k::ref::upsample2_bwd(n.grad, *gx);
        break;
      case Op::MseLoss:
        if (auto* gp = g(n.in[0]))
          k::ref::mse_bwd(v(n.in[0]), v(n.in[1]), n.grad[0], *gp);
        // gradient w.r.t. the target is never needed in this project
        break;
      case Op::Leaf:
        break;
    }
  }
}

template class TapeT<float>;
template class TapeT<double>;

}  // namespace ticket
