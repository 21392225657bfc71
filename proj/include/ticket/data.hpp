#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ticket/rng.hpp"
#include "ticket/tensor.hpp"

namespace ticket {

struct Dataset {
  Tensor images;       // [N,C,H,W], values in [-1,1]
  std::string source;  // descriptor, e.g. "idx:train-images" or "synthetic:bars"
  uint64_t seed = 0;   // for synthetic sets

  int64_t count() const { return images.dim(0); }
};

// IDX (unsigned byte, 3-D) image parser. Header: big-endian magic
// 0x00000803, then one big-endian u32 per dimension, then the payload.
// Pixels map u8 -> 2*(x/255)-1.
Dataset parse_idx(std::span<const uint8_t> bytes);
std::vector<uint8_t> to_idx(const Dataset& ds);
Dataset load_idx_file(const std::filesystem::path& path);

// 2x2 average pooling of the whole set, after zero-padding (value -1) to the
// given even size. MNIST at 28x28 pads to 32x32 and pools to 16x16.
Dataset pad_and_pool(const Dataset& ds, int pad_to);

enum class SyntheticKind { TwoGaussians, Checkerboard, Bars };
SyntheticKind synthetic_kind_from(const std::string& name);

// Deterministic procedural datasets. Rules (size S, all pixels in [-1,1]):
//  - two-gaussians: one of two fixed Gaussian-bump templates (upper-left or
//    lower-right quadrant, amplitude 1.4, sigma S/6, template values mapped
//    into [-0.7, 0.7]) chosen with probability 1/2, plus N(0, 0.05^2) pixel
//    noise, clamped. Per image the draws are: template bit, then S*S noise
//    values in row-major order.
//  - checkerboard: 2x2-block checkerboard of +/-0.8; one parity bit per image.
//  - bars: uniformly chosen row at +1, all other pixels -1.
Dataset synthetic(SyntheticKind kind, int size, int n, uint64_t seed);

// Analytic mean over images and pixels of the two-gaussians generator,
// ignoring the (negligible) clamp truncation.
double two_gaussians_mean(int size);

// Reproducible shuffled epoch batches; the last short batch is kept. The
// permutation for each epoch comes from `shuffle_rng` (Fisher-Yates).
class BatchStream {
 public:
  BatchStream(const Dataset& ds, int batch_size, Rng shuffle_rng);

  Tensor next();                       // [b,C,H,W]
  std::vector<int64_t> next_indices(); // the same stream, indices only
  int64_t batches_per_epoch() const;

 private:
  void reshuffle();
  const Dataset* ds_;
  int batch_;
  Rng rng_;
  std::vector<int64_t> order_;
  int64_t pos_ = 0;
};

}  // namespace ticket
