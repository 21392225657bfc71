#include "ticket/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ticket {

namespace {

uint32_t read_be32(std::span<const uint8_t> b, size_t off) {
  return (static_cast<uint32_t>(b[off]) << 24) |
         (static_cast<uint32_t>(b[off + 1]) << 16) |
         (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

void write_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

constexpr uint32_t kIdxMagic = 0x00000803;  // unsigned byte, 3 dimensions

}  // namespace

Dataset parse_idx(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4)
    throw std::runtime_error("idx: truncated header (no magic)");
  const uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxMagic)
    throw std::runtime_error("idx: bad magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + " (expected 0x00000803)");
  if (bytes.size() < 16)
    throw std::runtime_error("idx: truncated header (missing dimensions)");
  const uint32_t n = read_be32(bytes, 4);
  const uint32_t h = read_be32(bytes, 8);
  const uint32_t w = read_be32(bytes, 12);
  if (n == 0 || h == 0 || w == 0)
    throw std::runtime_error("idx: zero-sized dimension");
  if (n > (1u << 24) || h > (1u << 12) || w > (1u << 12) ||
      static_cast<uint64_t>(n) * h * w > (1ull << 31))
    throw std::runtime_error("idx: dimension overflow (" + std::to_string(n) + "x" +
                             std::to_string(h) + "x" + std::to_string(w) + ")");
  const uint64_t need = static_cast<uint64_t>(n) * h * w;
  if (bytes.size() - 16 < need)
    throw std::runtime_error("idx: truncated payload (need " + std::to_string(need) +
                             " bytes, have " + std::to_string(bytes.size() - 16) + ")");
  if (bytes.size() - 16 > need)
    throw std::runtime_error("idx: unexpected trailing bytes");

  Dataset ds;
  ds.images = Tensor({static_cast<int64_t>(n), 1, static_cast<int64_t>(h),
                      static_cast<int64_t>(w)});
  for (uint64_t i = 0; i < need; ++i)
    ds.images.data[static_cast<size_t>(i)] =
        static_cast<float>(2.0 * (bytes[16 + i] / 255.0) - 1.0);
  ds.source = "idx";
  return ds;
}

std::vector<uint8_t> to_idx(const Dataset& ds) {
  if (ds.images.dim(1) != 1)
    throw std::invalid_argument("idx: only single-channel datasets serialize to IDX");
  std::vector<uint8_t> out;
  out.reserve(16 + static_cast<size_t>(ds.images.numel()));
  write_be32(out, kIdxMagic);
  write_be32(out, static_cast<uint32_t>(ds.images.dim(0)));
  write_be32(out, static_cast<uint32_t>(ds.images.dim(2)));
  write_be32(out, static_cast<uint32_t>(ds.images.dim(3)));
  for (float v : ds.images.data) {
    const long u = std::lround((static_cast<double>(v) + 1.0) * 127.5);
    out.push_back(static_cast<uint8_t>(std::clamp(u, 0l, 255l)));
  }
  return out;
}

Dataset load_idx_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("idx: cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  Dataset ds = parse_idx(bytes);
  ds.source = "idx:" + path.filename().string();
  return ds;
}

Dataset pad_and_pool(const Dataset& ds, int pad_to) {
  const int64_t N = ds.images.dim(0), C = ds.images.dim(1), H = ds.images.dim(2),
                W = ds.images.dim(3);
  if (pad_to % 2 != 0 || pad_to < H || pad_to < W)
    throw std::invalid_argument("pad_and_pool: pad size must be even and >= image");
  const int64_t P = pad_to, O = P / 2;
  const int64_t oy = (P - H) / 2, ox = (P - W) / 2;
  Dataset out;
  out.images = Tensor::full({N, C, O, O}, -1.0f);
  out.source = ds.source + ":pooled" + std::to_string(O);
  out.seed = ds.seed;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      // padded plane, border at -1
      std::vector<float> pl(static_cast<size_t>(P * P), -1.0f);
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
          pl[static_cast<size_t>((y + oy) * P + (x + ox))] = ds.images.at4(n, c, y, x);
      for (int64_t y = 0; y < O; ++y)
        for (int64_t x = 0; x < O; ++x) {
          const float* p = &pl[static_cast<size_t>(2 * y * P + 2 * x)];
          out.images.at4(n, c, y, x) =
              ((p[0] + p[1]) + (p[P] + p[P + 1])) * 0.25f;
        }
    }
  return out;
}

SyntheticKind synthetic_kind_from(const std::string& name) {
  if (name == "two-gaussians") return SyntheticKind::TwoGaussians;
  if (name == "checkerboard") return SyntheticKind::Checkerboard;
  if (name == "bars") return SyntheticKind::Bars;
  throw std::invalid_argument("unknown synthetic dataset kind: " + name);
}

namespace {

double bump_template(int size, double cy, double cx, int64_t y, int64_t x) {
  const double sigma = size / 6.0;
  const double dy = (y + 0.5) - cy, dx = (x + 0.5) - cx;
  return 1.4 * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)) - 0.7;
}

}  // namespace

Dataset synthetic(SyntheticKind kind, int size, int n, uint64_t seed) {
  if (size != 8 && size != 16)
    throw std::invalid_argument("synthetic: size must be 8 or 16");
  if (n < 1) throw std::invalid_argument("synthetic: need n >= 1");
  Dataset ds;
  ds.images = Tensor({n, 1, size, size});
  ds.seed = seed;
  Rng rng(seed, "data");
  const int64_t per = static_cast<int64_t>(size) * size;
  switch (kind) {
    case SyntheticKind::TwoGaussians: {
      ds.source = "synthetic:two-gaussians:" + std::to_string(size);
      const double cs[2][2] = {{size * 0.25, size * 0.25}, {size * 0.75, size * 0.75}};
      for (int i = 0; i < n; ++i) {
        const uint64_t which = rng.next_below(2);
        float* img = &ds.images.data[static_cast<size_t>(i) * per];
        for (int64_t y = 0; y < size; ++y)
          for (int64_t x = 0; x < size; ++x) {
            const double t = bump_template(size, cs[which][0], cs[which][1], y, x);
            const double v = t + 0.05 * rng.next_normal();
            img[y * size + x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
          }
      }
      break;
    }
    case SyntheticKind::Checkerboard: {
      ds.source = "synthetic:checkerboard:" + std::to_string(size);
      for (int i = 0; i < n; ++i) {
        const uint64_t parity = rng.next_below(2);
        float* img = &ds.images.data[static_cast<size_t>(i) * per];
        for (int64_t y = 0; y < size; ++y)
          for (int64_t x = 0; x < size; ++x)
            img[y * size + x] =
                ((y / 2 + x / 2 + static_cast<int64_t>(parity)) % 2) ? 0.8f : -0.8f;
      }
      break;
    }
    case SyntheticKind::Bars: {
      ds.source = "synthetic:bars:" + std::to_string(size);
      for (int i = 0; i < n; ++i) {
        const int64_t row = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(size)));
        float* img = &ds.images.data[static_cast<size_t>(i) * per];
        for (int64_t y = 0; y < size; ++y)
          for (int64_t x = 0; x < size; ++x)
            img[y * size + x] = (y == row) ? 1.0f : -1.0f;
      }
      break;
    }
  }
  return ds;
}

double two_gaussians_mean(int size) {
  const double cs[2][2] = {{size * 0.25, size * 0.25}, {size * 0.75, size * 0.75}};
  double total = 0.0;
  for (int which = 0; which < 2; ++which)
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x)
        total += bump_template(size, cs[which][0], cs[which][1], y, x);
  return total / (2.0 * size * size);
}

BatchStream::BatchStream(const Dataset& ds, int batch_size, Rng shuffle_rng)
    : ds_(&ds), batch_(batch_size), rng_(shuffle_rng) {
  if (batch_size < 1) throw std::invalid_argument("batches: batch size must be >= 1");
  order_.resize(static_cast<size_t>(ds.count()));
  reshuffle();
}

void BatchStream::reshuffle() {
  const int64_t n = static_cast<int64_t>(order_.size());
  for (int64_t i = 0; i < n; ++i) order_[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng_.next_below(static_cast<uint64_t>(i + 1)));
    std::swap(order_[static_cast<size_t>(i)], order_[static_cast<size_t>(j)]);
  }
  pos_ = 0;
}

int64_t BatchStream::batches_per_epoch() const {
  return (ds_->count() + batch_ - 1) / batch_;
}

std::vector<int64_t> BatchStream::next_indices() {
  if (pos_ >= ds_->count()) reshuffle();
  const int64_t take = std::min<int64_t>(batch_, ds_->count() - pos_);
  std::vector<int64_t> idx(order_.begin() + pos_, order_.begin() + pos_ + take);
  pos_ += take;
  return idx;
}

Tensor BatchStream::next() {
  const auto idx = next_indices();
  const int64_t per = ds_->images.numel() / ds_->count();
  Tensor out({static_cast<int64_t>(idx.size()), ds_->images.dim(1),
              ds_->images.dim(2), ds_->images.dim(3)});
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(&ds_->images.data[static_cast<size_t>(idx[i] * per)], per,
                &out.data[i * static_cast<size_t>(per)]);
  return out;
}

}  // namespace ticket
