// Timing comparison between the serial reference kernels and the OpenMP
// backend, at the tensor shapes the training loop actually uses. Also checks
// that both backends produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ticket/kernels.hpp"
#include "ticket/rng.hpp"
#include "ticket/tensor.hpp"

using ticket::Rng;
using ticket::Tensor;
namespace k = ticket::kernels;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal_f();
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Case {
  const char* name;
  int64_t b, cin, cout, hw;
};

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP: %d threads\n", omp_get_max_threads());
#else
  std::printf("OpenMP: not compiled in (par backend runs serially)\n");
#endif

  Rng rng(7, "bench");
  const Case cases[] = {
      {"conv 16x16 c16->c16 b64", 64, 16, 16, 16},
      {"conv 8x8   c32->c32 b64", 64, 32, 32, 8},
      {"conv 16x16 c48->c16 b64", 64, 48, 16, 16},
  };

  std::printf("%-28s %10s %10s %8s %8s %6s\n", "kernel", "ref ms", "omp ms",
              "ref GF/s", "omp GF/s", "equal");
  for (const auto& c : cases) {
    const Tensor x = random_tensor({c.b, c.cin, c.hw, c.hw}, rng);
    const Tensor w = random_tensor({c.cout, c.cin, 3, 3}, rng);
    const Tensor bias = random_tensor({c.cout}, rng);
    Tensor y_ref, y_omp;
    const double fwd_flops =
        2.0 * c.b * c.hw * c.hw * c.cout * c.cin * 9.0;

    const double t_ref = time_ms([&] { k::ref::conv2d_fwd(x, w, bias, y_ref); }, 5);
    const double t_omp = time_ms([&] { k::par::conv2d_fwd(x, w, bias, y_omp); }, 5);
    std::printf("%-28s %10.3f %10.3f %8.2f %8.2f %6s\n", c.name, t_ref, t_omp,
                fwd_flops / t_ref / 1e6, fwd_flops / t_omp / 1e6,
                bit_equal(y_ref, y_omp) ? "yes" : "NO");

    // backward (all three adjoints)
    const Tensor gy = random_tensor(y_ref.shape, rng);
    Tensor gx_r(x.shape), gw_r(w.shape), gb_r(bias.shape);
    Tensor gx_p(x.shape), gw_p(w.shape), gb_p(bias.shape);
    const double bwd_flops = 2.0 * fwd_flops;
    const double tb_ref = time_ms(
        [&] {
          for (auto& v : gx_r.data) v = 0;
          for (auto& v : gw_r.data) v = 0;
          for (auto& v : gb_r.data) v = 0;
          k::ref::conv2d_bwd(x, w, gy, &gx_r, &gw_r, &gb_r);
        },
        5);
    const double tb_omp = time_ms(
        [&] {
          for (auto& v : gx_p.data) v = 0;
          for (auto& v : gw_p.data) v = 0;
          for (auto& v : gb_p.data) v = 0;
          k::par::conv2d_bwd(x, w, gy, &gx_p, &gw_p, &gb_p);
        },
        5);
    const bool eq = bit_equal(gx_r, gx_p) && bit_equal(gw_r, gw_p) &&
                    bit_equal(gb_r, gb_p);
    std::printf("%-28s %10.3f %10.3f %8.2f %8.2f %6s\n", "  backward", tb_ref,
                tb_omp, bwd_flops / tb_ref / 1e6, bwd_flops / tb_omp / 1e6,
                eq ? "yes" : "NO");
  }

  {
    const Tensor x = random_tensor({64, 32}, rng);
    const Tensor w = random_tensor({32, 32}, rng);
    const Tensor b = random_tensor({32}, rng);
    Tensor y_ref, y_omp;
    const double fl = 2.0 * 64 * 32 * 32;
    const double t_ref = time_ms([&] { k::ref::linear_fwd(x, w, b, y_ref); }, 50);
    const double t_omp = time_ms([&] { k::par::linear_fwd(x, w, b, y_omp); }, 50);
    std::printf("%-28s %10.3f %10.3f %8.2f %8.2f %6s\n", "linear 32->32 b64",
                t_ref, t_omp, fl / t_ref / 1e6, fl / t_omp / 1e6,
                bit_equal(y_ref, y_omp) ? "yes" : "NO");
  }
  {
    const Tensor x = random_tensor({64, 16, 16, 16}, rng);
    Tensor y_ref, s_ref, y_omp, s_omp;
    const double t_ref = time_ms([&] { k::ref::silu_fwd(x, y_ref, s_ref); }, 20);
    const double t_omp = time_ms([&] { k::par::silu_fwd(x, y_omp, s_omp); }, 20);
    std::printf("%-28s %10.3f %10.3f %8s %8s %6s\n", "silu 64x16x16x16", t_ref,
                t_omp, "-", "-", bit_equal(y_ref, y_omp) ? "yes" : "NO");
  }
  return 0;
}
