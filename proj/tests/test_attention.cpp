#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "sasot/attention.hpp"
#include "sasot/rng.hpp"
#include "testutil.hpp"

using namespace sasot::attention;
using sasot::Matrix;

namespace {

Matrix random_matrix(sasot::Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

AttentionInputs random_inputs(sasot::Rng& rng, int n, int dk, int dv,
                              bool causal) {
  AttentionInputs inp;
  inp.q = random_matrix(rng, n, dk);
  inp.k = random_matrix(rng, n, dk);
  inp.v = random_matrix(rng, n, dv);
  inp.causal_mask = causal;
  Matrix embeddings = random_matrix(rng, n, 3);
  Matrix sim = cosine_similarity_matrix(embeddings);
  for (double& x : sim.data()) x *= 0.99;  // probe headroom for finite diffs
  inp.sim = sim;
  return inp;
}

// Textbook softmax-attention backward, written independently as an oracle.
struct PlainGrads {
  Matrix dq, dk, dv;
};
PlainGrads plain_attention_backward(const AttentionInputs& inp,
                                    const Matrix& upstream) {
  const int n = inp.q.rows();
  const int dk = inp.q.cols();
  const int dv = inp.v.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Matrix p(n, n);
  for (int i = 0; i < n; ++i) {
    const int visible = inp.causal_mask ? i + 1 : n;
    double max_logit = -1e300;
    std::vector<double> logits(visible);
    for (int j = 0; j < visible; ++j) {
      logits[j] = sasot::dot(inp.q.row(i), inp.k.row(j)) * scale;
      max_logit = std::max(max_logit, logits[j]);
    }
    double z = 0.0;
    for (int j = 0; j < visible; ++j) z += std::exp(logits[j] - max_logit);
    for (int j = 0; j < visible; ++j)
      p(i, j) = std::exp(logits[j] - max_logit) / z;
  }

  PlainGrads g{Matrix(n, dk), Matrix(n, dk), Matrix(n, dv)};
  for (int i = 0; i < n; ++i) {
    const int visible = inp.causal_mask ? i + 1 : n;
    std::vector<double> dp(visible);
    for (int j = 0; j < visible; ++j) {
      dp[j] = sasot::dot(upstream.row(i), inp.v.row(j));
      for (int c = 0; c < dv; ++c) g.dv(j, c) += p(i, j) * upstream(i, c);
    }
    double inner = 0.0;
    for (int j = 0; j < visible; ++j) inner += dp[j] * p(i, j);
    for (int j = 0; j < visible; ++j) {
      const double dl = p(i, j) * (dp[j] - inner) * scale;
      for (int c = 0; c < dk; ++c) {
        g.dq(i, c) += dl * inp.k(j, c);
        g.dk(j, c) += dl * inp.q(i, c);
      }
    }
  }
  return g;
}

}  // namespace

TEST_CASE("cosine similarity matrix") {
  const Matrix same = Matrix::from_rows({{1, 2}, {2, 4}, {0.5, 1}});
  const Matrix sim = cosine_similarity_matrix(same);
  for (double v : sim.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  const Matrix ortho = Matrix::from_rows({{1, 0}, {0, 1}});
  CHECK(cosine_similarity_matrix(ortho)(0, 1) == 0.0);

  const Matrix antipodal = Matrix::from_rows({{1, 0}, {-1, 0}});
  const Matrix anti_sim = cosine_similarity_matrix(antipodal);
  CHECK(anti_sim(0, 1) == doctest::Approx(-1.0));
  CHECK(0.5 * (1.0 + anti_sim(0, 1)) == doctest::Approx(0.0));

  const Matrix with_zero = Matrix::from_rows({{0, 0}, {1, 1}});
  const Matrix zero_sim = cosine_similarity_matrix(with_zero);
  CHECK(zero_sim(0, 0) == 1.0);  // diagonal forced
  CHECK(zero_sim(0, 1) == 0.0);
  CHECK(zero_sim(1, 0) == 0.0);
}

TEST_CASE("single key returns V regardless of Q and K") {
  AttentionInputs inp;
  inp.q = Matrix::from_rows({{5.0, -3.0}});
  inp.k = Matrix::from_rows({{0.1, 0.2}});
  inp.v = Matrix::from_rows({{7.0, 8.0, 9.0}});
  const AttentionOutput out = scaled_dot_attention(inp);
  CHECK(out.o(0, 0) == 7.0);
  CHECK(out.o(0, 2) == 9.0);
  CHECK(out.weights(0, 0) == 1.0);
}

TEST_CASE("a dominant logit saturates toward its value row") {
  sasot::Rng rng(3);
  AttentionInputs inp;
  inp.q = Matrix::from_rows({{100.0}, {0.0}});
  inp.k = Matrix::from_rows({{1.0}, {-1.0}});
  inp.v = random_matrix(rng, 2, 3);
  const AttentionOutput out = scaled_dot_attention(inp);
  for (int c = 0; c < 3; ++c)
    CHECK(out.o(0, c) == doctest::Approx(inp.v(0, c)).epsilon(1e-3));
}

TEST_CASE("softmax rows sum to one; causal row 0 sees only itself") {
  sasot::Rng rng(5);
  AttentionInputs inp = random_inputs(rng, 4, 3, 2, /*causal=*/true);
  const AttentionOutput out = scaled_dot_attention(inp);
  for (int i = 0; i < 4; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j > i) CHECK(out.weights(i, j) == 0.0);
      row_sum += out.weights(i, j);
    }
    CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(out.weights(0, 0) == 1.0);
}

TEST_CASE("all-ones similarity reduces to standard attention") {
  sasot::Rng rng(7);
  for (bool causal : {false, true}) {
    AttentionInputs inp = random_inputs(rng, 5, 4, 3, causal);
    inp.sim = Matrix(5, 5, 1.0);
    const AttentionOutput saa = speaker_aware_attention(inp);
    const AttentionOutput plain = scaled_dot_attention(inp);
    CHECK(testutil::max_abs_diff(saa.o, plain.o) < 1e-12);
    CHECK(testutil::max_abs_diff(saa.weights, plain.weights) < 1e-12);
  }
}

TEST_CASE("hand-computed two-token reweighting") {
  AttentionInputs inp;
  inp.q = Matrix::from_rows({{1.0}, {1.0}});
  inp.k = inp.q;
  inp.v = Matrix::from_rows({{1.0}, {3.0}});
  inp.sim = Matrix::from_rows({{1.0, -1.0}, {-1.0, 1.0}});
  const AttentionOutput out = speaker_aware_attention(inp);
  CHECK(out.weights(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.weights(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.o(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.o(1, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(out.degenerate_rows.empty());
}

TEST_CASE("a fully suppressed row is flagged and stays finite") {
  AttentionInputs inp;
  inp.q = Matrix::from_rows({{1.0}, {1.0}});
  inp.k = inp.q;
  inp.v = Matrix::from_rows({{2.0}, {4.0}});
  inp.sim = Matrix(2, 2, -1.0);  // not a true cosine matrix, range is valid
  const AttentionOutput out = speaker_aware_attention(inp);
  REQUIRE(out.degenerate_rows.size() == 2);
  for (double v : out.o.data()) CHECK(std::isfinite(v));
  CHECK(out.o(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("similarity entries outside [-1,1] are rejected") {
  sasot::Rng rng(9);
  AttentionInputs inp = random_inputs(rng, 3, 2, 2, false);
  (*inp.sim)(0, 1) = 1.5;
  CHECK_THROWS_AS(speaker_aware_attention(inp), std::invalid_argument);
  (*inp.sim)(0, 1) = -1.0 - 1e-6;
  CHECK_THROWS_AS(speaker_aware_attention(inp), std::invalid_argument);
}

TEST_CASE("increasing a similarity entry never decreases its weight") {
  sasot::Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    AttentionInputs inp = random_inputs(rng, 4, 3, 2, trial % 2 == 0);
    const int i = rng.uniform_int(4);
    const int j = inp.causal_mask ? rng.uniform_int(i + 1) : rng.uniform_int(4);
    const double before = speaker_aware_attention(inp).weights(i, j);
    (*inp.sim)(i, j) = std::min(1.0, (*inp.sim)(i, j) + 0.05);
    const double after = speaker_aware_attention(inp).weights(i, j);
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("permuting the token order permutes the output") {
  sasot::Rng rng(15);
  AttentionInputs inp = random_inputs(rng, 5, 3, 3, /*causal=*/false);
  const AttentionOutput base = speaker_aware_attention(inp);

  const std::vector<int> perm{3, 0, 4, 1, 2};
  AttentionInputs shuffled;
  shuffled.q = Matrix(5, 3);
  shuffled.k = Matrix(5, 3);
  shuffled.v = Matrix(5, 3);
  shuffled.sim = Matrix(5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 3; ++c) {
      shuffled.q(i, c) = inp.q(perm[i], c);
      shuffled.k(i, c) = inp.k(perm[i], c);
      shuffled.v(i, c) = inp.v(perm[i], c);
    }
    for (int j = 0; j < 5; ++j)
      (*shuffled.sim)(i, j) = (*inp.sim)(perm[i], perm[j]);
  }
  const AttentionOutput permuted = speaker_aware_attention(shuffled);
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(permuted.o(i, c) ==
            doctest::Approx(base.o(perm[i], c)).epsilon(1e-12));
}

TEST_CASE("saa_backward with all-ones similarity equals plain attention") {
  sasot::Rng rng(17);
  for (bool causal : {false, true}) {
    AttentionInputs inp = random_inputs(rng, 4, 3, 3, causal);
    inp.sim = Matrix(4, 4, 1.0);
    const Matrix upstream = random_matrix(rng, 4, 3);
    const AttentionGrads grads = saa_backward(inp, upstream);
    const PlainGrads plain = plain_attention_backward(inp, upstream);
    CHECK(testutil::max_abs_diff(grads.grad_q, plain.dq) < 1e-9);
    CHECK(testutil::max_abs_diff(grads.grad_k, plain.dk) < 1e-9);
    CHECK(testutil::max_abs_diff(grads.grad_v, plain.dv) < 1e-9);
  }
}

TEST_CASE("saa_backward matches central finite differences") {
  sasot::Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    AttentionInputs inp = random_inputs(rng, 4, 3, 3, trial % 2 == 1);
    const Matrix upstream = random_matrix(rng, 4, 3);
    const AttentionGrads grads = saa_backward(inp, upstream);

    const auto objective = [&] {
      const AttentionOutput out = speaker_aware_attention(inp);
      double total = 0.0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) total += upstream(i, j) * out.o(i, j);
      return total;
    };

    const std::array<std::pair<Matrix*, const Matrix*>, 4> pairs = {
        {{&inp.q, &grads.grad_q},
         {&inp.k, &grads.grad_k},
         {&inp.v, &grads.grad_v},
         {&*inp.sim, &grads.grad_sim}}};
    for (const auto& [input, grad] : pairs) {
      for (std::size_t idx = 0; idx < input->data().size(); ++idx) {
        const double numeric = testutil::central_diff(objective,
                                                      input->data()[idx]);
        CHECK(testutil::grad_rel_err(grad->data()[idx], numeric) < 1e-5);
      }
    }
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  sasot::Rng rng(21);
  AttentionInputs inp = random_inputs(rng, 3, 2, 2, false);
  const AttentionGrads grads = saa_backward(inp, Matrix(3, 2));
  for (double g : grads.grad_q.data()) CHECK(g == 0.0);
  for (double g : grads.grad_k.data()) CHECK(g == 0.0);
  for (double g : grads.grad_v.data()) CHECK(g == 0.0);
  for (double g : grads.grad_sim.data()) CHECK(g == 0.0);
}

TEST_CASE("shape validation") {
  AttentionInputs inp;
  inp.q = Matrix(2, 3);
  inp.k = Matrix(3, 3);
  inp.v = Matrix(2, 2);
  CHECK_THROWS_AS(scaled_dot_attention(inp), std::invalid_argument);
  inp.k = Matrix(2, 3);
  CHECK_THROWS_AS(speaker_aware_attention(inp), std::invalid_argument);  // no sim
  inp.sim = Matrix(3, 3);
  CHECK_THROWS_AS(speaker_aware_attention(inp), std::invalid_argument);
  CHECK_THROWS_AS(saa_backward(inp, Matrix(2, 2)), std::invalid_argument);
}
