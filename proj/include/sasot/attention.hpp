#pragma once

#include <optional>
#include <vector>

#include "sasot/matrix.hpp"

namespace sasot::attention {

// Denominator floor for renormalization of reweighted rows.
inline constexpr double kRenormEpsilon = 1e-9;

struct AttentionInputs {
  Matrix q;  // N x d_k
  Matrix k;  // N x d_k
  Matrix v;  // N x d_v
  bool causal_mask = false;
  std::optional<Matrix> sim;  // N x N, entries in [-1, 1]
};

struct AttentionOutput {
  Matrix o;        // N x d_v
  Matrix weights;  // N x N final (renormalized) weights; masked entries 0
  // Rows whose visible reweight mass fell below kRenormEpsilon. The floored
  // denominator keeps the output finite instead of branching.
  std::vector<int> degenerate_rows;
};

// sim[i][j] = cos(e_i, e_j), clamped to [-1, 1]. Zero vectors have
// similarity 0 to everything (including themselves off-diagonal); the
// diagonal is forced to 1.
Matrix cosine_similarity_matrix(const Matrix& e);

// softmax(Q K^T / sqrt(d_k)) V; causal masking excludes j > i before the
// softmax, masked weights are exactly 0.
AttentionOutput scaled_dot_attention(const AttentionInputs& inp);

// Post-softmax weights are multiplied elementwise by (1 + sim)/2 and each
// row renormalized over its visible entries.
AttentionOutput speaker_aware_attention(const AttentionInputs& inp);

struct AttentionGrads {
  Matrix grad_q;
  Matrix grad_k;
  Matrix grad_v;
  Matrix grad_sim;
};

// Exact analytic gradients of the speaker-aware composition
// (softmax -> reweight -> renormalize -> V).
AttentionGrads saa_backward(const AttentionInputs& inp, const Matrix& upstream);

}  // namespace sasot::attention
