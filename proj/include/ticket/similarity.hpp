#pragma once

#include <optional>
#include <vector>

#include "ticket/mask.hpp"
#include "ticket/matrix.hpp"
#include "ticket/params.hpp"
#include "ticket/unet.hpp"

namespace ticket {

// n x n RBF kernel matrix K_{j,k} = exp(-||row_j - row_k||^2 / (2 sigma^2)).
// sigma comes from the median heuristic (median of the nonzero pairwise
// distances) unless overridden; if every row coincides the Gram degenerates
// to all-ones and is flagged.
struct GramMatrix {
  int64_t n = 0;
  std::vector<double> k;
  double bandwidth = 0.0;
  bool degenerate = false;

  double at(int64_t i, int64_t j) const { return k[static_cast<size_t>(i * n + j)]; }
  double& at(int64_t i, int64_t j) { return k[static_cast<size_t>(i * n + j)]; }
};

GramMatrix rbf_gram(const Matrix2D& rows,
                    std::optional<double> bandwidth = std::nullopt);

// HSIC(K,L) = tr(KHLH) / (n-1)^2 with the centering matrix H = I - 11^T/n.
double hsic(const GramMatrix& K, const GramMatrix& L);

enum class CkaMode {
  Root,          // HSIC(K,L) / sqrt(HSIC(K,K) HSIC(L,L))  -- default
  PaperLiteral,  // HSIC(K,L) / (HSIC(K,K) HSIC(L,L))
};

struct CkaValue {
  double value = 0.0;
  bool defined = false;  // false when a self-HSIC term degenerates to <= 0
};

CkaValue cka(const GramMatrix& K, const GramMatrix& L, CkaMode mode);

// Per-module CKA between two tickets of the same architecture (both modes,
// plus the bandwidths used). Modules with fewer than two rows cannot form a
// Gram matrix and come back undefined.
struct SimilarityProfile {
  struct Row {
    int module = -1;
    CkaValue root;
    CkaValue paper_literal;
    double bandwidth_a = 0.0;
    double bandwidth_b = 0.0;
  };
  std::vector<Row> rows;
};

SimilarityProfile profile(const ParameterSet& params_a, const MaskSet& mask_a,
                          const ParameterSet& params_b, const MaskSet& mask_b);

}  // namespace ticket
