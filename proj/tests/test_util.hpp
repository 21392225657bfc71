#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ticket/autodiff.hpp"
#include "ticket/rng.hpp"
#include "ticket/tensor.hpp"

namespace ticket::testutil {

template <class T>
TensorT<T> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  TensorT<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(scale * rng.next_normal());
  return t;
}

// Central finite-difference check in double precision. `build` must record
// the graph on the given tape from the supplied input leaves and return a
// scalar node. Returns the worst relative error over every element of every
// input (inputs are expected to stay small, <= a few hundred elements).
struct FdReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

inline FdReport fd_check(
    const std::function<TapeT<double>::Id(TapeT<double>&,
                                          const std::vector<TapeT<double>::Id>&)>& build,
    std::vector<TensorT<double>> inputs) {
  auto eval = [&](const std::vector<TensorT<double>>& xs) {
    TapeT<double> tape;
    std::vector<TapeT<double>::Id> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) ids.push_back(tape.leaf(x, false));
    return tape.value(build(tape, ids))[0];
  };

  TapeT<double> tape;
  std::vector<TapeT<double>::Id> ids;
  for (const auto& x : inputs) ids.push_back(tape.leaf(x, true));
  const auto root = build(tape, ids);
  tape.backward(root);

  FdReport rep;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const TensorT<double>& g = tape.grad(ids[k]);
    for (int64_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k][i];
      const double h = 1e-5 * std::max(1.0, std::fabs(x0));
      auto xs = inputs;
      xs[k][i] = x0 + h;
      const double fp = eval(xs);
      xs[k][i] = x0 - h;
      const double fm = eval(xs);
      const double fd = (fp - fm) / (2.0 * h);
      const double a = g[i];
      const double rel =
          std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-6});
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      rep.checked += 1;
    }
  }
  return rep;
}

// scalar head for tensor-valued ops: mean((out - target)^2) with a fixed
// random target, so upstream gradients are non-uniform
inline TapeT<double>::Id scalar_head(TapeT<double>& tape, TapeT<double>::Id out,
                                     Rng& rng) {
  TensorT<double> target(tape.value(out).shape);
  for (auto& v : target.data) v = rng.next_normal();
  return tape.mse_loss(out, tape.leaf(std::move(target), false));
}

}  // namespace ticket::testutil
