#include "ticket/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ticket {

uint64_t FlopsReport::weight_dense_total() const {
  uint64_t s = 0;
  for (const auto& r : rows) s += r.dense;
  return s;
}

double FlopsReport::weight_effective_total() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.effective;
  return s;
}

std::string FlopsReport::pretty() const {
  std::ostringstream os;
  os << "FLOPs report (one forward pass, batch 1; 1 multiply-accumulate = 2 FLOPs)\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-4s %-14s %14s %10s %16s\n", "j", "module",
                "dense", "density", "effective");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-4d %-14s %14llu %10.6f %16.1f\n", r.module,
                  r.name.c_str(), static_cast<unsigned long long>(r.dense),
                  r.density.value(), r.effective);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-4s %-14s %14llu %10s %16s\n", "-",
                "elementwise", static_cast<unsigned long long>(elementwise_dense),
                "1", "(unchanged)");
  os << line;
  std::snprintf(line, sizeof line,
                "totals: dense %llu, effective %.1f, weight-bearing saving %.6f, "
                "total saving %.6f\n",
                static_cast<unsigned long long>(dense_total()), effective_total(),
                weight_saving(), total_saving());
  os << line;
  return os.str();
}

namespace {

// weight-bearing saving = 1 - (sum_j dense_j * ones_j / total_j) / sum_j dense_j,
// evaluated as an exact reduced fraction when the intermediate products fit.
double exact_weight_saving(const std::vector<FlopsReport::Row>& rows, bool* exact) {
  *exact = true;
  // least common multiple of denominators, with overflow guard
  unsigned long long lcm = 1;
  for (const auto& r : rows) {
    const unsigned long long t = r.density.total;
    const unsigned long long g = std::gcd(lcm, t);
    if (lcm / g > (1ull << 20) || t > (1ull << 40)) {
      *exact = false;
      break;
    }
    lcm = lcm / g * t;
    if (lcm > (1ull << 40)) {
      *exact = false;
      break;
    }
  }
  if (!*exact) {
    double eff = 0.0, dense = 0.0;
    for (const auto& r : rows) {
      eff += static_cast<double>(r.dense) * r.density.value();
      dense += static_cast<double>(r.dense);
    }
    return 1.0 - eff / dense;
  }
  unsigned __int128 num = 0;  // sum dense_j * ones_j * (lcm/total_j)
  unsigned __int128 den = 0;  // lcm * sum dense_j
  for (const auto& r : rows) {
    num += static_cast<unsigned __int128>(r.dense) * r.density.ones *
           (lcm / r.density.total);
    den += static_cast<unsigned __int128>(r.dense) * lcm;
  }
  // reduce so both halves fit a double exactly in the common cases
  unsigned __int128 a = num, b = den;
  while (b) {
    const auto t = a % b;
    a = b;
    b = t;
  }
  if (a == 0) return 1.0;  // num == 0: everything pruned
  num /= a;
  den /= a;
  if (num > (1ull << 53) || den > (1ull << 53)) {
    *exact = false;
    return 1.0 - static_cast<double>(num) / static_cast<double>(den);
  }
  return 1.0 - static_cast<double>(static_cast<uint64_t>(num)) /
                   static_cast<double>(static_cast<uint64_t>(den));
}

}  // namespace

FlopsReport count_flops(const UNetConfig& cfg, std::span<const Density> densities) {
  const auto plan = layer_plan(cfg);
  if (!densities.empty() && densities.size() != plan.size())
    throw std::invalid_argument("count_flops: expected one density per module (" +
                                std::to_string(plan.size()) + ")");
  FlopsReport rep;
  for (size_t j = 0; j < plan.size(); ++j) {
    const auto& ls = plan[j];
    FlopsReport::Row row;
    row.module = static_cast<int>(j);
    row.name = ls.name;
    if (ls.is_conv) {
      const uint64_t hw = static_cast<uint64_t>(ls.spatial);
      row.dense = 2ull * hw * static_cast<uint64_t>(ls.out_ch) *
                      static_cast<uint64_t>(ls.in_ch) * 9ull +
                  hw * static_cast<uint64_t>(ls.out_ch);
    } else {
      row.dense = 2ull * static_cast<uint64_t>(ls.out_ch) *
                      static_cast<uint64_t>(ls.in_ch) +
                  static_cast<uint64_t>(ls.out_ch);
    }
    row.density = densities.empty() ? Density{1, 1} : densities[j];
    if (row.density.total == 0 || row.density.ones > row.density.total)
      throw std::invalid_argument("count_flops: bad density for module " +
                                  std::to_string(j));
    row.effective = static_cast<double>(row.dense) * row.density.value();
    rep.rows.push_back(std::move(row));
  }

  // non-weight elementwise work of one forward pass, 1 FLOP per output element
  const int64_t S = cfg.image_size, E = cfg.time_embed_dim;
  auto ch = [&](int level) -> int64_t {
    return static_cast<int64_t>(cfg.base_channels) << level;
  };
  uint64_t elem = 0;
  elem += static_cast<uint64_t>(E);      // sinusoidal features
  elem += static_cast<uint64_t>(E);      // silu between the two time linears
  auto block_elem = [&](int64_t cout, int64_t spatial) {
    // silu(conv_a), + tproj broadcast add, silu(conv_b)
    return static_cast<uint64_t>(3 * cout * spatial);
  };
  elem += static_cast<uint64_t>(ch(0) * S * S);  // silu after stem
  for (int l = 0; l < cfg.levels; ++l) {
    const int64_t s = (S >> l) * (S >> l);
    if (l > 0) elem += static_cast<uint64_t>(ch(l - 1) * s);  // avg pool outputs
    elem += block_elem(ch(l), s);
  }
  {
    const int64_t s = (S >> (cfg.levels - 1)) * (S >> (cfg.levels - 1));
    elem += block_elem(ch(cfg.levels - 1), s);
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    const int64_t s = (S >> l) * (S >> l);
    elem += static_cast<uint64_t>(ch(l + 1) * s);  // upsample outputs
    elem += block_elem(ch(l), s);
  }
  rep.elementwise_dense = elem;

  rep.weight_saving_ = exact_weight_saving(rep.rows, &rep.exact_saving);
  return rep;
}

FlopsReport count_flops(const UNetConfig& cfg) {
  return count_flops(cfg, std::span<const Density>{});
}

FlopsReport count_flops(const UNetConfig& cfg, const MaskSet& mask) {
  const auto plan = layer_plan(cfg);
  if (mask.entries.size() != plan.size())
    throw std::invalid_argument("count_flops: mask has " +
                                std::to_string(mask.entries.size()) +
                                " modules, config needs " +
                                std::to_string(plan.size()));
  std::vector<Density> d;
  d.reserve(plan.size());
  for (size_t j = 0; j < plan.size(); ++j) {
    const auto& me = mask.entries[j];
    if (me.size() != plan[j].weight_count())
      throw std::invalid_argument("count_flops: mask size mismatch at module " +
                                  std::to_string(j));
    d.push_back({static_cast<uint64_t>(me.ones()), static_cast<uint64_t>(me.size())});
  }
  return count_flops(cfg, d);
}

namespace {

double sq_dist(const float* a, const float* b, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

// median of the nonzero pairwise distances; 0 if all points coincide
double median_pairwise(const std::vector<const float*>& pts, int64_t dim) {
  std::vector<double> d;
  d.reserve(pts.size() * (pts.size() - 1) / 2);
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j) {
      const double v = std::sqrt(sq_dist(pts[i], pts[j], dim));
      if (v > 0.0) d.push_back(v);
    }
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  const size_t n = d.size();
  return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

}  // namespace

double mmd2(const Tensor& x, const Tensor& y, std::optional<double> bandwidth,
            bool* degenerate) {
  const int64_t nx = x.dim(0), ny = y.dim(0);
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("mmd2: need at least 2 samples per set");
  const int64_t dx = x.numel() / nx, dy = y.numel() / ny;
  if (dx != dy) throw std::invalid_argument("mmd2: sample dimension mismatch");

  std::vector<const float*> pooled;
  pooled.reserve(static_cast<size_t>(nx + ny));
  for (int64_t i = 0; i < nx; ++i) pooled.push_back(&x.data[static_cast<size_t>(i * dx)]);
  for (int64_t i = 0; i < ny; ++i) pooled.push_back(&y.data[static_cast<size_t>(i * dy)]);

  bool degen = false;
  double sigma = bandwidth.value_or(0.0);
  if (!bandwidth) {
    sigma = median_pairwise(pooled, dx);
    if (sigma == 0.0) degen = true;
  }
  if (degenerate) *degenerate = degen;

  const double denom = degen ? 1.0 : 2.0 * sigma * sigma;
  auto k = [&](const float* a, const float* b) {
    return degen ? 1.0 : std::exp(-sq_dist(a, b, dx) / denom);
  };

  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (int64_t i = 0; i < nx; ++i)
    for (int64_t j = 0; j < nx; ++j)
      kxx += k(pooled[static_cast<size_t>(i)], pooled[static_cast<size_t>(j)]);
  for (int64_t i = 0; i < ny; ++i)
    for (int64_t j = 0; j < ny; ++j)
      kyy += k(pooled[static_cast<size_t>(nx + i)], pooled[static_cast<size_t>(nx + j)]);
  for (int64_t i = 0; i < nx; ++i)
    for (int64_t j = 0; j < ny; ++j)
      kxy += k(pooled[static_cast<size_t>(i)], pooled[static_cast<size_t>(nx + j)]);
  return kxx / (static_cast<double>(nx) * nx) + kyy / (static_cast<double>(ny) * ny) -
         2.0 * kxy / (static_cast<double>(nx) * ny);
}

double frechet_gaussian(const Tensor& x, const Tensor& y) {
  const int64_t nx = x.dim(0), ny = y.dim(0);
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("frechet: need at least 2 samples per set");
  const int64_t d = x.numel() / nx;
  if (d != y.numel() / ny)
    throw std::invalid_argument("frechet: sample dimension mismatch");

  auto moments = [d](const Tensor& t, int64_t n, std::vector<double>& mu,
                     std::vector<double>& var) {
    mu.assign(static_cast<size_t>(d), 0.0);
    var.assign(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        mu[static_cast<size_t>(j)] += t.data[static_cast<size_t>(i * d + j)];
    for (auto& m : mu) m /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) {
        const double dv =
            t.data[static_cast<size_t>(i * d + j)] - mu[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += dv * dv;
      }
    for (auto& v : var) v = std::max(v / static_cast<double>(n), 0.0);
  };

  std::vector<double> mx, vx, my, vy;
  moments(x, nx, mx, vx);
  moments(y, ny, my, vy);
  double f = 0.0;
  for (int64_t j = 0; j < d; ++j) {
    const double dm = mx[static_cast<size_t>(j)] - my[static_cast<size_t>(j)];
    const double ds =
        std::sqrt(vx[static_cast<size_t>(j)]) - std::sqrt(vy[static_cast<size_t>(j)]);
    f += dm * dm + ds * ds;
  }
  return f;
}

}  // namespace ticket
