#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ticket/autodiff.hpp"
#include "ticket/mask.hpp"
#include "ticket/matrix.hpp"
#include "ticket/params.hpp"

namespace ticket {

// Tiny epsilon-predicting U-Net: sinusoidal time embedding with a 2-layer
// MLP, conv stem, one block per resolution level on the way down, a middle
// block, blocks with skip concatenation on the way up, conv head. No
// normalization layers, no attention. Each block is
//   h -> silu(conv_a) -> (+ time projection per channel) -> silu(conv_b).
struct UNetConfig {
  int channels = 1;
  int image_size = 16;
  int base_channels = 16;
  int levels = 2;
  int time_embed_dim = 32;

  void validate() const;
  bool operator==(const UNetConfig&) const = default;
};

// One prunable weight layer of the forward pass, in execution order; the
// position in this list is the pruning-module index j.
struct LayerSpec {
  bool is_conv = true;
  std::string name;    // e.g. "enc0.conv_a"
  int64_t in_ch = 0;   // conv Cin or linear Din
  int64_t out_ch = 0;  // conv Cout or linear Dout
  int64_t spatial = 0; // output positions per sample (conv: H*W, linear: 1)

  int64_t weight_count() const { return is_conv ? out_ch * in_ch * 9 : out_ch * in_ch; }
};

std::vector<LayerSpec> layer_plan(const UNetConfig& cfg);

// Deterministic fan-in-scaled uniform init of all weights (biases start at
// zero); weights are drawn in entry order from the "init" stream of `seed`.
ParameterSet unet_init(const UNetConfig& cfg, uint64_t seed);

// [len(t), dim] features: first half sin(t*w_k), second half cos(t*w_k),
// w_k log-spaced from 1 down to 1/10000.
Tensor sinusoidal_embedding(const std::vector<int>& t, int dim);

template <class T>
struct ForwardHandles {
  std::vector<int32_t> param_leaves;  // aligned with params.entries
  int32_t x_leaf = -1;
  int32_t out = -1;
};

// Records the full forward pass on the tape. Prunable weights enter the tape
// already multiplied by their mask, so masked weights act exactly as zeros
// and the chain rule delivers exactly-zero gradients at masked positions
// once the caller re-applies the mask to the weight gradient.
template <class T>
ForwardHandles<T> unet_forward(TapeT<T>& tape, const UNetConfig& cfg,
                               const ParameterSet& params, const MaskSet& mask,
                               const TensorT<T>& x_t, const std::vector<int>& t,
                               int t_max);

// Plain inference wrapper; rejects t outside [1, t_max].
Tensor predict_noise(const UNetConfig& cfg, const ParameterSet& params,
                     const MaskSet& mask, const Tensor& x_t,
                     const std::vector<int>& t, int t_max);

// Module j's weight as a 2-D double matrix (conv: out_ch x in_ch*9), with
// masked entries as exact zeros. These are the rows fed to HSIC/CKA.
Matrix2D module_weight_matrix(const ParameterSet& params, const MaskSet& mask,
                              int module);

}  // namespace ticket
