#pragma once

#include <vector>

#include "sasot/matrix.hpp"

namespace sasot::cif {

struct CifConfig {
  double beta = 1.0;            // firing threshold
  double tail_threshold = 0.5;  // residual fraction of beta above which a
                                // final token fires
};

struct Contribution {
  int frame = 0;
  double weight = 0.0;
};

struct FireResult {
  Matrix embeddings;           // N x d, token n = sum of weight * h[frame]
  std::vector<int> boundaries; // firing frame per token, non-decreasing
  std::vector<std::vector<Contribution>> contributions;
  // Leftover accumulated weight in [0, beta). Zero when the tail token fired
  // (the tail absorbed it), so contributed weight + residual == sum(alpha).
  double residual = 0.0;
  bool tail_fired = false;     // last token carries the residual, its weights
                               // sum to the residual instead of beta
};

// Integrate alpha frame by frame; each time the accumulator reaches beta the
// current frame's weight splits into the part completing the token and the
// remainder carried forward. A frame whose weight spans several multiples of
// beta fires several tokens at the same boundary.
FireResult cif_forward(const Matrix& h, const std::vector<double>& alpha,
                       const CifConfig& cfg);

struct CifGrads {
  Matrix grad_h;                   // T' x d
  std::vector<double> grad_alpha;  // T'
};

// Exact gradients of the piecewise-linear forward map with the firing
// partition held fixed (subgradient at split points).
CifGrads cif_backward(const Matrix& h, const std::vector<double>& alpha,
                      const CifConfig& cfg, const Matrix& upstream);

// alpha * n_target / sum(alpha); the scaled weights sum to n_target.
std::vector<double> scale_alpha(const std::vector<double>& alpha, int n_target);

// |sum(alpha) - n_target|
double quantity_loss(const std::vector<double>& alpha, int n_target);

}  // namespace sasot::cif
