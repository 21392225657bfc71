#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "test_util.hpp"
#include "ticket/adam.hpp"
#include "ticket/autodiff.hpp"
#include "ticket/kernels.hpp"

using namespace ticket;
namespace k = kernels;
using testutil::fd_check;
using testutil::random_tensor;
using testutil::scalar_head;

namespace {

// independent direct convolution: explicit bounds checks instead of padding
template <class T>
TensorT<T> conv_oracle(const TensorT<T>& x, const TensorT<T>& w,
                       const TensorT<T>& b) {
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0);
  TensorT<T> y({B, Cout, H, W});
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oy = 0; oy < H; ++oy)
        for (int64_t ox = 0; ox < W; ++ox) {
          T acc = b[co];
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t ky = 0; ky < 3; ++ky)
              for (int64_t kx = 0; kx < 3; ++kx) {
                const int64_t iy = oy + ky - 1, ix = ox + kx - 1;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.at4(bi, ci, iy, ix) * w.at4(co, ci, ky, kx);
              }
          y.at4(bi, co, oy, ox) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Rng rng(1, "test");
  const Tensor x = random_tensor<float>({2, 3, 5, 4}, rng);
  Tensor w({3, 3, 3, 3});
  for (int64_t co = 0; co < 3; ++co) w.at4(co, co, 1, 1) = 1.0f;
  const Tensor b({3});
  Tensor y;
  k::conv2d_fwd(x, w, b, y);
  REQUIRE(y.shape == x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d: all-ones kernel on [[1,2],[3,4]] gives 10 everywhere") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  const Tensor b({1});
  Tensor y;
  k::conv2d_fwd(x, w, b, y);
  const Tensor expect = conv_oracle(x, w, b);
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(y[i] == expect[i]);
    CHECK(y[i] == doctest::Approx(10.0f));
  }
}

TEST_CASE("conv2d: matches the direct oracle on random shapes") {
  Rng rng(2, "test");
  for (int trial = 0; trial < 8; ++trial) {
    const int64_t B = 1 + rng.next_below(3), Cin = 1 + rng.next_below(4);
    const int64_t Cout = 1 + rng.next_below(4);
    const int64_t H = 1 + rng.next_below(6), W = 1 + rng.next_below(6);
    const Tensor x = random_tensor<float>({B, Cin, H, W}, rng);
    const Tensor w = random_tensor<float>({Cout, Cin, 3, 3}, rng);
    const Tensor b = random_tensor<float>({Cout}, rng);
    Tensor y;
    k::conv2d_fwd(x, w, b, y);
    const Tensor expect = conv_oracle(x, w, b);
    for (int64_t i = 0; i < y.numel(); ++i)
      CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d: rejects mismatched shapes with a diagnostic") {
  const Tensor x({1, 2, 4, 4});
  const Tensor w({3, 1, 3, 3});  // Cin mismatch
  const Tensor b({3});
  Tensor y;
  CHECK_THROWS_AS(k::conv2d_fwd(x, w, b, y), std::invalid_argument);
  const Tensor w5({3, 2, 5, 5});
  CHECK_THROWS_AS(k::conv2d_fwd(x, w5, b, y), std::invalid_argument);
}

TEST_CASE("conv2d/linear/silu/pool/mse: gradients match central differences") {
  Rng rng(3, "test");
  for (int trial = 0; trial < 4; ++trial) {
    // conv
    {
      auto x = random_tensor<double>({2, 2, 4, 3}, rng);
      auto w = random_tensor<double>({3, 2, 3, 3}, rng, 0.5);
      auto b = random_tensor<double>({3}, rng, 0.2);
      auto rep = fd_check(
          [&](TapeT<double>& t, const std::vector<TapeT<double>::Id>& in) {
            return scalar_head(t, t.conv2d(in[0], in[1], in[2]), rng);
          },
          {x, w, b});
      CHECK(rep.max_rel_err < 1e-3);
    }
    // linear
    {
      auto x = random_tensor<double>({3, 5}, rng);
      auto w = random_tensor<double>({4, 5}, rng, 0.5);
      auto b = random_tensor<double>({4}, rng, 0.2);
      auto rep = fd_check(
          [&](TapeT<double>& t, const std::vector<TapeT<double>::Id>& in) {
            return scalar_head(t, t.linear(in[0], in[1], in[2]), rng);
          },
          {x, w, b});
      CHECK(rep.max_rel_err < 1e-3);
    }
    // silu + add + channel bias + concat + pool + upsample, chained
    {
      auto x = random_tensor<double>({2, 2, 4, 4}, rng);
      auto t2 = random_tensor<double>({2, 2}, rng);
      auto rep = fd_check(
          [&](TapeT<double>& t, const std::vector<TapeT<double>::Id>& in) {
            auto a = t.silu(in[0]);
            a = t.add_channel_bias(a, in[1]);
            auto down = t.downsample2(a);
            auto up = t.upsample2(down);
            auto cat = t.concat_channels(up, t.add(a, in[0]));
            return scalar_head(t, cat, rng);
          },
          {x, t2});
      CHECK(rep.max_rel_err < 1e-3);
    }
  }
}

TEST_CASE("silu: fixed values") {
  Tensor x({3}, {0.0f, 1.0f, 20.0f});
  Tensor y, s;
  k::silu_fwd(x, y, s);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(std::fabs(y[2] - 20.0f) < 1e-6);
}

TEST_CASE("downsample2/upsample2: fixtures and block-constant round trip") {
  {
    const Tensor x = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor y;
    k::ref::avgpool2_fwd(x, y);
    REQUIRE(y.numel() == 1);
    CHECK(y[0] == 1.0f);
  }
  {
    const Tensor x = Tensor::full({1, 1, 1, 1}, 5.0f);
    Tensor y;
    k::ref::upsample2_fwd(x, y);
    for (int64_t i = 0; i < 4; ++i) CHECK(y[i] == 5.0f);
  }
  {
    // exact round trip on block-constant inputs
    Rng rng(4, "test");
    Tensor coarse = random_tensor<float>({2, 3, 3, 2}, rng);
    Tensor x;
    k::ref::upsample2_fwd(coarse, x);
    Tensor down, up;
    k::ref::avgpool2_fwd(x, down);
    k::ref::upsample2_fwd(down, up);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(up[i] == x[i]);
  }
  {
    const Tensor odd({1, 1, 3, 3});
    Tensor y;
    CHECK_THROWS_AS(k::ref::avgpool2_fwd(odd, y), std::invalid_argument);
  }
}

TEST_CASE("mse: fixtures and analytic gradient") {
  {
    Tensor a({2}, {0.0f, 0.0f});
    Tensor b({2}, {1.0f, 1.0f});
    CHECK(k::ref::mse_fwd(a, a) == 0.0f);
    CHECK(k::ref::mse_fwd(a, b) == 1.0f);
    CHECK_THROWS_AS(k::ref::mse_fwd(a, Tensor({3})), std::invalid_argument);
  }
  {
    Rng rng(5, "test");
    auto pred = random_tensor<double>({2, 6}, rng);
    auto target = random_tensor<double>({2, 6}, rng);
    TapeT<double> tape;
    auto p = tape.leaf(pred, true);
    auto t = tape.leaf(target, false);
    auto l = tape.mse_loss(p, t);
    tape.backward(l);
    const auto& g = tape.grad(p);
    for (int64_t i = 0; i < pred.numel(); ++i)
      CHECK(g[i] == doctest::Approx(2.0 * (pred[i] - target[i]) / pred.numel())
                        .epsilon(1e-12));
  }
}

TEST_CASE("tape: unused leaves get exactly zero gradient; fan-out accumulates") {
  Rng rng(6, "test");
  auto x = random_tensor<double>({2, 3}, rng);
  auto unused = random_tensor<double>({4, 4}, rng);
  TapeT<double> tape;
  auto xid = tape.leaf(x, true);
  auto uid = tape.leaf(unused, true);
  auto out = tape.add(tape.silu(xid), xid);  // x feeds two consumers
  auto loss = tape.mse_loss(out, tape.leaf(TensorT<double>(x.shape), false));
  tape.backward(loss);
  for (int64_t i = 0; i < unused.numel(); ++i) CHECK(tape.grad(uid)[i] == 0.0);

  auto rep = fd_check(
      [&](TapeT<double>& t, const std::vector<TapeT<double>::Id>& in) {
        auto o = t.add(t.silu(in[0]), in[0]);
        return t.mse_loss(o, t.leaf(TensorT<double>(x.shape), false));
      },
      {x});
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParameterSet ps;
  ps.entries.push_back({0, "w", ParamRole::PrunableWeight,
                        Tensor({3}, {1.0f, -2.0f, 3.0f})});
  AdamState st = AdamState::init(ps, {});
  const std::vector<Tensor> grads{Tensor({3})};
  REQUIRE(adam_step(ps, grads, st));
  CHECK(ps.entries[0].value[0] == 1.0f);
  CHECK(ps.entries[0].value[1] == -2.0f);
  CHECK(ps.entries[0].value[2] == 3.0f);
  CHECK(st.step == 1);
}

TEST_CASE("adam: single parameter follows the scalar recurrence") {
  AdamConfig cfg;
  cfg.lr = 0.01f;
  ParameterSet ps;
  ps.entries.push_back({0, "w", ParamRole::PrunableWeight, Tensor({1}, {0.5f})});
  AdamState st = AdamState::init(ps, cfg);

  // direct transcription of the update rule
  float m = 0.0f, v = 0.0f, theta = 0.5f;
  Rng rng(7, "test");
  for (int step = 1; step <= 5; ++step) {
    const float g = rng.normal_f();
    REQUIRE(adam_step(ps, {Tensor({1}, {g})}, st));
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const float mh = m / (1 - std::pow(cfg.beta1, static_cast<float>(step)));
    const float vh = v / (1 - std::pow(cfg.beta2, static_cast<float>(step)));
    theta -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(ps.entries[0].value[0] == theta);
    if (step == 1)
      CHECK(std::fabs(ps.entries[0].value[0] - 0.5f) ==
            doctest::Approx(cfg.lr).epsilon(1e-3));
  }
}

TEST_CASE("adam: non-finite gradient aborts the update and flags it") {
  ParameterSet ps;
  ps.entries.push_back({0, "w", ParamRole::PrunableWeight, Tensor({2}, {1.0f, 2.0f})});
  AdamState st = AdamState::init(ps, {});
  Tensor g({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  CHECK_FALSE(adam_step(ps, {g}, st));
  CHECK(ps.entries[0].value[0] == 1.0f);
  CHECK(ps.entries[0].value[1] == 2.0f);
  CHECK(st.step == 0);
}

TEST_CASE("determinism: identical seeds give bit-identical results") {
  auto run = [] {
    Rng rng(42, "trajectory");
    Tensor x = random_tensor<float>({2, 4, 6, 6}, rng);
    Tensor w = random_tensor<float>({4, 4, 3, 3}, rng);
    Tensor b = random_tensor<float>({4}, rng);
    Tensor y;
    k::conv2d_fwd(x, w, b, y);
    return y;
  };
  const Tensor a = run();
  const Tensor b = run();
  CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0);
}
