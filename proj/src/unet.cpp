#include "ticket/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "ticket/rng.hpp"

namespace ticket {

void UNetConfig::validate() const {
  if (channels <= 0 || image_size <= 0 || base_channels <= 0 || levels <= 0 ||
      time_embed_dim <= 0)
    throw std::invalid_argument("unet config: all counts must be positive");
  const int div = 1 << (levels - 1);
  if (image_size % div != 0)
    throw std::invalid_argument("unet config: image size " +
                                std::to_string(image_size) +
                                " not divisible by 2^(levels-1)=" +
                                std::to_string(div));
  if (image_size / div < 2 && levels > 1)
    throw std::invalid_argument("unet config: too many levels for image size");
  if (time_embed_dim % 2 != 0 || time_embed_dim < 4)
    throw std::invalid_argument("unet config: time_embed_dim must be even and >= 4");
}

std::vector<LayerSpec> layer_plan(const UNetConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> plan;
  const int64_t E = cfg.time_embed_dim;
  const int64_t S = cfg.image_size;
  auto ch = [&](int level) -> int64_t {
    return static_cast<int64_t>(cfg.base_channels) << level;
  };
  auto lin = [&](std::string name, int64_t in, int64_t out) {
    plan.push_back({false, std::move(name), in, out, 1});
  };
  auto conv = [&](std::string name, int64_t in, int64_t out, int level) {
    const int64_t s = S >> level;
    plan.push_back({true, std::move(name), in, out, s * s});
  };
  auto block = [&](const std::string& base, int64_t in, int64_t out, int level) {
    conv(base + ".conv_a", in, out, level);
    lin(base + ".tproj", E, out);
    conv(base + ".conv_b", out, out, level);
  };

  lin("time.lin1", E, E);
  lin("time.lin2", E, E);
  conv("stem", cfg.channels, ch(0), 0);
  for (int l = 0; l < cfg.levels; ++l)
    block("enc" + std::to_string(l), l == 0 ? ch(0) : ch(l - 1), ch(l), l);
  block("mid", ch(cfg.levels - 1), ch(cfg.levels - 1), cfg.levels - 1);
  for (int l = cfg.levels - 2; l >= 0; --l)
    block("dec" + std::to_string(l), ch(l + 1) + ch(l), ch(l), l);
  conv("head", ch(0), cfg.channels, 0);
  return plan;
}

ParameterSet unet_init(const UNetConfig& cfg, uint64_t seed) {
  const auto plan = layer_plan(cfg);
  ParameterSet ps;
  Rng rng(seed, "init");
  for (size_t j = 0; j < plan.size(); ++j) {
    const auto& ls = plan[j];
    ParamEntry w;
    w.module = static_cast<int>(j);
    w.name = ls.name + ".weight";
    w.role = ParamRole::PrunableWeight;
    w.value = ls.is_conv ? Tensor({ls.out_ch, ls.in_ch, 3, 3})
                         : Tensor({ls.out_ch, ls.in_ch});
    const double fan_in = static_cast<double>(ls.is_conv ? ls.in_ch * 9 : ls.in_ch);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& x : w.value.data)
      x = static_cast<float>(rng.uniform(-bound, bound));
    ps.entries.push_back(std::move(w));

    ParamEntry b;
    b.module = static_cast<int>(j);
    b.name = ls.name + ".bias";
    b.role = ParamRole::Bias;
    b.value = Tensor({ls.out_ch});  // zeros
    ps.entries.push_back(std::move(b));
  }
  return ps;
}

Tensor sinusoidal_embedding(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Tensor out({static_cast<int64_t>(t.size()), dim});
  for (size_t b = 0; b < t.size(); ++b) {
    for (int k = 0; k < half; ++k) {
      const double w =
          half > 1 ? std::exp(-std::log(10000.0) * k / (half - 1)) : 1.0;
      const double arg = static_cast<double>(t[b]) * w;
      out.at2(static_cast<int64_t>(b), k) = static_cast<float>(std::sin(arg));
      out.at2(static_cast<int64_t>(b), half + k) = static_cast<float>(std::cos(arg));
    }
  }
  return out;
}

void check_aligned(const ParameterSet& params, const MaskSet& mask) {
  size_t mi = 0;
  for (const auto& e : params.entries) {
    if (e.role != ParamRole::PrunableWeight) continue;
    if (mi >= mask.entries.size())
      throw std::invalid_argument("mask/parameter misalignment: mask too short");
    const auto& me = mask.entries[mi++];
    if (me.name != e.name || me.shape != e.value.shape)
      throw std::invalid_argument("mask/parameter misalignment at " + e.name);
  }
  if (mi != mask.entries.size())
    throw std::invalid_argument("mask/parameter misalignment: mask too long");
}

template <class T>
ForwardHandles<T> unet_forward(TapeT<T>& tape, const UNetConfig& cfg,
                               const ParameterSet& params, const MaskSet& mask,
                               const TensorT<T>& x_t, const std::vector<int>& t,
                               int t_max) {
  cfg.validate();
  check_aligned(params, mask);
  const int64_t B = x_t.dim(0);
  if (x_t.rank() != 4 || x_t.dim(1) != cfg.channels ||
      x_t.dim(2) != cfg.image_size || x_t.dim(3) != cfg.image_size)
    throw std::invalid_argument("unet: bad input shape " + shape_str(x_t.shape));
  if (static_cast<int64_t>(t.size()) != B)
    throw std::invalid_argument("unet: t batch size mismatch");
  for (int tv : t)
    if (tv < 1 || tv > t_max)
      throw std::out_of_range("unet: t=" + std::to_string(tv) +
                              " outside [1," + std::to_string(t_max) + "]");

  ForwardHandles<T> h;
  h.param_leaves.reserve(params.entries.size());
  size_t mi = 0;
  for (const auto& e : params.entries) {
    TensorT<T> v = e.value.template cast<T>();
    if (e.role == ParamRole::PrunableWeight) {
      const auto& me = mask.entries[mi++];
      for (int64_t i = 0; i < v.numel(); ++i)
        if (!me.bits[static_cast<size_t>(i)]) v[i] = T(0);
    }
    h.param_leaves.push_back(tape.leaf(std::move(v), true));
  }

  auto leaf_of = [&](int module, ParamRole role) -> int32_t {
    for (size_t i = 0; i < params.entries.size(); ++i)
      if (params.entries[i].module == module && params.entries[i].role == role)
        return h.param_leaves[i];
    throw std::logic_error("unet: missing parameter for module " +
                           std::to_string(module));
  };

  int next_module = 0;
  auto lin = [&](int32_t x) {
    const int j = next_module++;
    return tape.linear(x, leaf_of(j, ParamRole::PrunableWeight),
                       leaf_of(j, ParamRole::Bias));
  };
  auto conv = [&](int32_t x) {
    const int j = next_module++;
    return tape.conv2d(x, leaf_of(j, ParamRole::PrunableWeight),
                       leaf_of(j, ParamRole::Bias));
  };

  // time embedding MLP
  const Tensor sin_f = sinusoidal_embedding(t, cfg.time_embed_dim);
  int32_t temb = tape.leaf(sin_f.template cast<T>(), false);
  temb = tape.silu(lin(temb));
  temb = lin(temb);

  auto block = [&](int32_t x) {
    int32_t a = tape.silu(conv(x));
    a = tape.add_channel_bias(a, lin(temb));
    return tape.silu(conv(a));
  };

  h.x_leaf = tape.leaf(x_t, false);
  int32_t cur = tape.silu(conv(h.x_leaf));  // stem
  std::vector<int32_t> skips;
  for (int l = 0; l < cfg.levels; ++l) {
    if (l > 0) cur = tape.downsample2(cur);
    cur = block(cur);
    if (l < cfg.levels - 1) skips.push_back(cur);
  }
  cur = block(cur);  // mid
  for (int l = cfg.levels - 2; l >= 0; --l) {
    cur = tape.upsample2(cur);
    cur = tape.concat_channels(cur, skips[static_cast<size_t>(l)]);
    cur = block(cur);
  }
  h.out = conv(cur);  // head
  return h;
}

template ForwardHandles<float> unet_forward<float>(TapeT<float>&, const UNetConfig&,
                                                   const ParameterSet&,
                                                   const MaskSet&,
                                                   const TensorT<float>&,
                                                   const std::vector<int>&, int);
template ForwardHandles<double> unet_forward<double>(TapeT<double>&,
                                                     const UNetConfig&,
                                                     const ParameterSet&,
                                                     const MaskSet&,
                                                     const TensorT<double>&,
                                                     const std::vector<int>&, int);

Tensor predict_noise(const UNetConfig& cfg, const ParameterSet& params,
                     const MaskSet& mask, const Tensor& x_t,
                     const std::vector<int>& t, int t_max) {
  Tape tape;
  const auto h = unet_forward(tape, cfg, params, mask, x_t, t, t_max);
  return tape.value(h.out);
}

Matrix2D module_weight_matrix(const ParameterSet& params, const MaskSet& mask,
                              int module) {
  check_aligned(params, mask);
  const int J = params.module_count();
  if (module < 0 || module >= J)
    throw std::out_of_range("module index " + std::to_string(module) +
                            " out of range (J=" + std::to_string(J) + ")");
  const auto& e = params.entries[static_cast<size_t>(params.prunable_entry(module))];
  const auto& me = mask.by_module(module);
  const int64_t rows = e.value.dim(0);
  const int64_t cols = e.value.numel() / rows;
  Matrix2D m(rows, cols);
  for (int64_t i = 0; i < e.value.numel(); ++i)
    m.data[static_cast<size_t>(i)] =
        me.bits[static_cast<size_t>(i)]
            ? static_cast<double>(e.value[i])
            : 0.0;
  return m;
}

}  // namespace ticket
