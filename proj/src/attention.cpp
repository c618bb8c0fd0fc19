#include "sasot/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sasot::attention {

namespace {

constexpr double kSimTolerance = 1e-9;

void validate_shapes(const AttentionInputs& inp, bool need_sim) {
  const int n = inp.q.rows();
  if (inp.k.rows() != n || inp.v.rows() != n)
    throw std::invalid_argument("shape-error: Q, K, V row counts differ");
  if (inp.q.cols() != inp.k.cols())
    throw std::invalid_argument("shape-error: Q and K widths differ");
  if (n < 1) throw std::invalid_argument("shape-error: empty attention input");
  if (need_sim) {
    if (!inp.sim.has_value())
      throw std::invalid_argument("shape-error: sim matrix required");
    const Matrix& sim = *inp.sim;
    if (sim.rows() != n || sim.cols() != n)
      throw std::invalid_argument("shape-error: sim must be NxN");
    for (double v : sim.data())
      if (!std::isfinite(v) || v < -1.0 - kSimTolerance ||
          v > 1.0 + kSimTolerance)
        throw std::invalid_argument(
            "invalid-sim: entry " + std::to_string(v) + " outside [-1, 1]");
  }
}

struct ForwardState {
  Matrix softmax;  // P, masked entries 0
  Matrix reweighted;  // W = P * F (or P when sim absent)
  std::vector<double> denom;  // floored row sums of W
  std::vector<bool> floored;
  AttentionOutput out;
};

ForwardState attend(const AttentionInputs& inp, bool use_sim) {
  validate_shapes(inp, use_sim);
  const int n = inp.q.rows();
  const int dk = inp.q.cols();
  const int dv = inp.v.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  ForwardState st;
  st.softmax = Matrix(n, n);
  st.reweighted = Matrix(n, n);
  st.denom.assign(n, 0.0);
  st.floored.assign(n, false);
  st.out.o = Matrix(n, dv);
  st.out.weights = Matrix(n, n);

  for (int i = 0; i < n; ++i) {
    const int visible = inp.causal_mask ? i + 1 : n;
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(visible);
    for (int j = 0; j < visible; ++j) {
      logits[j] = dot(inp.q.row(i), inp.k.row(j)) * scale;
      max_logit = std::max(max_logit, logits[j]);
    }
    double z = 0.0;
    for (int j = 0; j < visible; ++j) {
      logits[j] = std::exp(logits[j] - max_logit);
      z += logits[j];
    }
    double row_sum = 0.0;
    for (int j = 0; j < visible; ++j) {
      const double p = logits[j] / z;
      st.softmax(i, j) = p;
      const double f = use_sim ? 0.5 * (1.0 + (*inp.sim)(i, j)) : 1.0;
      st.reweighted(i, j) = p * f;
      row_sum += p * f;
    }
    if (use_sim) {
      st.floored[i] = row_sum < kRenormEpsilon;
      st.denom[i] = std::max(row_sum, kRenormEpsilon);
      if (st.floored[i]) st.out.degenerate_rows.push_back(i);
      for (int j = 0; j < visible; ++j)
        st.out.weights(i, j) = st.reweighted(i, j) / st.denom[i];
    } else {
      st.denom[i] = 1.0;
      for (int j = 0; j < visible; ++j)
        st.out.weights(i, j) = st.softmax(i, j);
    }
    for (int j = 0; j < visible; ++j) {
      const double w = st.out.weights(i, j);
      if (w == 0.0) continue;
      for (int c = 0; c < dv; ++c) st.out.o(i, c) += w * inp.v(j, c);
    }
  }
  return st;
}

}  // namespace

Matrix cosine_similarity_matrix(const Matrix& e) {
  const int n = e.rows();
  if (n < 1)
    throw std::invalid_argument("shape-error: need at least one embedding");
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) norms[i] = std::sqrt(dot(e.row(i), e.row(i)));
  Matrix sim(n, n);
  for (int i = 0; i < n; ++i) {
    sim(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double value = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        value = dot(e.row(i), e.row(j)) / (norms[i] * norms[j]);
        value = std::clamp(value, -1.0, 1.0);
      }
      sim(i, j) = value;
      sim(j, i) = value;
    }
  }
  return sim;
}

AttentionOutput scaled_dot_attention(const AttentionInputs& inp) {
  return attend(inp, /*use_sim=*/false).out;
}

AttentionOutput speaker_aware_attention(const AttentionInputs& inp) {
  return attend(inp, /*use_sim=*/true).out;
}

AttentionGrads saa_backward(const AttentionInputs& inp, const Matrix& upstream) {
  const ForwardState st = attend(inp, /*use_sim=*/true);
  const int n = inp.q.rows();
  const int dk = inp.q.cols();
  const int dv = inp.v.cols();
  if (upstream.rows() != n || upstream.cols() != dv)
    throw std::invalid_argument("shape-error: upstream gradient must be Nxd_v");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  AttentionGrads g;
  g.grad_q = Matrix(n, dk);
  g.grad_k = Matrix(n, dk);
  g.grad_v = Matrix(n, dv);
  g.grad_sim = Matrix(n, n);

  // dV += R^T dO
  for (int i = 0; i < n; ++i) {
    const int visible = inp.causal_mask ? i + 1 : n;
    for (int j = 0; j < visible; ++j) {
      const double r = st.out.weights(i, j);
      if (r == 0.0) continue;
      for (int c = 0; c < dv; ++c) g.grad_v(j, c) += r * upstream(i, c);
    }
  }

  Matrix grad_logits(n, n);
  for (int i = 0; i < n; ++i) {
    const int visible = inp.causal_mask ? i + 1 : n;

    // dR = dO V^T, row i restricted to visible columns
    std::vector<double> d_renorm(visible);
    for (int j = 0; j < visible; ++j)
      d_renorm[j] = dot(upstream.row(i), inp.v.row(j));

    // renormalization backward: R = W / denom
    std::vector<double> d_reweighted(visible);
    if (st.floored[i]) {
      // denom pinned at the epsilon floor, a constant
      for (int j = 0; j < visible; ++j)
        d_reweighted[j] = d_renorm[j] / st.denom[i];
    } else {
      double inner = 0.0;
      for (int j = 0; j < visible; ++j)
        inner += d_renorm[j] * st.out.weights(i, j);
      for (int j = 0; j < visible; ++j)
        d_reweighted[j] = (d_renorm[j] - inner) / st.denom[i];
    }

    // W = P * F with F = (1 + sim)/2
    std::vector<double> d_softmax(visible);
    for (int j = 0; j < visible; ++j) {
      const double p = st.softmax(i, j);
      const double f = 0.5 * (1.0 + (*inp.sim)(i, j));
      g.grad_sim(i, j) = 0.5 * d_reweighted[j] * p;
      d_softmax[j] = d_reweighted[j] * f;
    }

    // softmax backward over the visible set
    double inner = 0.0;
    for (int j = 0; j < visible; ++j) inner += d_softmax[j] * st.softmax(i, j);
    for (int j = 0; j < visible; ++j)
      grad_logits(i, j) = st.softmax(i, j) * (d_softmax[j] - inner);
  }

  // logits = Q K^T * scale
  for (int i = 0; i < n; ++i) {
    const int visible = inp.causal_mask ? i + 1 : n;
    for (int j = 0; j < visible; ++j) {
      const double dl = grad_logits(i, j) * scale;
      if (dl == 0.0) continue;
      for (int c = 0; c < dk; ++c) {
        g.grad_q(i, c) += dl * inp.k(j, c);
        g.grad_k(j, c) += dl * inp.q(i, c);
      }
    }
  }
  return g;
}

}  // namespace sasot::attention
