#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ticket/tensor.hpp"

namespace ticket {

// Reverse-mode tape over the fixed op set used by the U-Net. A forward pass
// records one node per primitive; backward() replays adjoints in reverse
// record order, accumulating into per-node gradient buffers. Leaves that
// never participate in the path to the loss keep an exact zero gradient.
//
// TapeT<float> trains; TapeT<double> backs the finite-difference checks.
template <class T>
class TapeT {
 public:
  using Id = int32_t;

  enum class Op : uint8_t {
    Leaf,
    Conv2d,
    Linear,
    Silu,
    Add,
    AddChannelBias,
    ConcatChannels,
    Downsample2,
    Upsample2,
    MseLoss,
  };

  Id leaf(TensorT<T> value, bool needs_grad);
  Id conv2d(Id x, Id w, Id b);
  Id linear(Id x, Id w, Id b);
  Id silu(Id x);
  Id add(Id a, Id b);
  Id add_channel_bias(Id x, Id t);
  Id concat_channels(Id a, Id b);
  Id downsample2(Id x);
  Id upsample2(Id x);
  Id mse_loss(Id pred, Id target);

  // root must be scalar (one element)
  void backward(Id root);

  const TensorT<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].val; }
  // valid after backward(); zero for non-participating leaves
  const TensorT<T>& grad(Id id) const;

  size_t size() const { return nodes_.size(); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Op op;
    std::array<Id, 3> in{-1, -1, -1};
    TensorT<T> val;
    TensorT<T> aux;   // sigmoid(x) for Silu
    TensorT<T> grad;  // allocated at backward()
    bool needs_grad = false;
  };

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }
  bool any_needs(std::initializer_list<Id> ids) const {
    for (Id i : ids)
      if (i >= 0 && nodes_[static_cast<size_t>(i)].needs_grad) return true;
    return false;
  }

  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace ticket
