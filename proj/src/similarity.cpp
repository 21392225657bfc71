#include "ticket/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ticket {

GramMatrix rbf_gram(const Matrix2D& rows, std::optional<double> bandwidth) {
  const int64_t n = rows.rows, d = rows.cols;
  if (n < 2) throw std::invalid_argument("rbf_gram: need at least 2 rows");

  std::vector<double> d2(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      const double* a = rows.row(i);
      const double* b = rows.row(j);
      for (int64_t c = 0; c < d; ++c) {
        const double dv = a[c] - b[c];
        s += dv * dv;
      }
      d2[static_cast<size_t>(i * n + j)] = s;
      d2[static_cast<size_t>(j * n + i)] = s;
    }

  GramMatrix g;
  g.n = n;
  g.k.assign(static_cast<size_t>(n * n), 1.0);

  double sigma;
  if (bandwidth) {
    sigma = *bandwidth;
    if (!(sigma > 0.0)) throw std::invalid_argument("rbf_gram: bandwidth must be > 0");
  } else {
    std::vector<double> dist;
    dist.reserve(static_cast<size_t>(n * (n - 1) / 2));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j)
        if (d2[static_cast<size_t>(i * n + j)] > 0.0)
          dist.push_back(std::sqrt(d2[static_cast<size_t>(i * n + j)]));
    if (dist.empty()) {
      // all rows identical: sigma undefined, Gram is all ones
      g.degenerate = true;
      g.bandwidth = 0.0;
      return g;
    }
    std::sort(dist.begin(), dist.end());
    const size_t m = dist.size();
    sigma = m % 2 ? dist[m / 2] : 0.5 * (dist[m / 2 - 1] + dist[m / 2]);
  }

  g.bandwidth = sigma;
  const double denom = 2.0 * sigma * sigma;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      g.at(i, j) = std::exp(-d2[static_cast<size_t>(i * n + j)] / denom);
  return g;
}

double hsic(const GramMatrix& K, const GramMatrix& L) {
  const int64_t n = K.n;
  if (L.n != n) throw std::invalid_argument("hsic: Gram size mismatch");
  if (n < 2) throw std::invalid_argument("hsic: need n >= 2");

  // tr(KHLH) = <HKH, HLH>_F since H is idempotent; center both copies.
  auto centered = [n](const GramMatrix& g) {
    std::vector<double> rowm(static_cast<size_t>(n), 0.0);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) s += g.at(i, j);
      rowm[static_cast<size_t>(i)] = s / n;
      total += s;
    }
    total /= static_cast<double>(n) * n;
    std::vector<double> c(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        c[static_cast<size_t>(i * n + j)] = g.at(i, j) - rowm[static_cast<size_t>(i)] -
                                            rowm[static_cast<size_t>(j)] + total;
    return c;
  };

  const auto kc = centered(K);
  const auto lc = centered(L);
  double s = 0.0;
  for (size_t i = 0; i < kc.size(); ++i) s += kc[i] * lc[i];
  const double nm1 = static_cast<double>(n - 1);
  return s / (nm1 * nm1);
}

CkaValue cka(const GramMatrix& K, const GramMatrix& L, CkaMode mode) {
  const double kk = hsic(K, K);
  const double ll = hsic(L, L);
  if (!(kk > 0.0) || !(ll > 0.0)) return {0.0, false};
  const double kl = hsic(K, L);
  switch (mode) {
    case CkaMode::Root:
      return {kl / std::sqrt(kk * ll), true};
    case CkaMode::PaperLiteral:
      return {kl / (kk * ll), true};
  }
  return {0.0, false};
}

SimilarityProfile profile(const ParameterSet& params_a, const MaskSet& mask_a,
                          const ParameterSet& params_b, const MaskSet& mask_b) {
  const int J = params_a.module_count();
  if (params_b.module_count() != J)
    throw std::invalid_argument("profile: tickets have different module counts");
  for (int j = 0; j < J; ++j) {
    const auto& ea = params_a.entries[static_cast<size_t>(params_a.prunable_entry(j))];
    const auto& eb = params_b.entries[static_cast<size_t>(params_b.prunable_entry(j))];
    if (ea.value.shape != eb.value.shape)
      throw std::invalid_argument("profile: architecture mismatch at module " +
                                  std::to_string(j) + " (" + ea.name + ")");
  }

  SimilarityProfile prof;
  for (int j = 0; j < J; ++j) {
    SimilarityProfile::Row row;
    row.module = j;
    const Matrix2D wa = module_weight_matrix(params_a, mask_a, j);
    const Matrix2D wb = module_weight_matrix(params_b, mask_b, j);
    if (wa.rows >= 2) {
      const GramMatrix ka = rbf_gram(wa);
      const GramMatrix kb = rbf_gram(wb);
      row.bandwidth_a = ka.bandwidth;
      row.bandwidth_b = kb.bandwidth;
      row.root = cka(ka, kb, CkaMode::Root);
      row.paper_literal = cka(ka, kb, CkaMode::PaperLiteral);
    }
    prof.rows.push_back(row);
  }
  return prof;
}

}  // namespace ticket
