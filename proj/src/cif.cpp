#include "sasot/cif.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sasot::cif {

namespace {

void validate_inputs(const Matrix& h, const std::vector<double>& alpha,
                     const CifConfig& cfg) {
  if (cfg.beta <= 0.0)
    throw std::invalid_argument("invalid-config: beta must be positive");
  if (cfg.tail_threshold < 0.0 || cfg.tail_threshold > 1.0)
    throw std::invalid_argument("invalid-config: tail_threshold outside [0, 1]");
  if (static_cast<int>(alpha.size()) != h.rows())
    throw std::invalid_argument(
        "shape-error: alpha length " + std::to_string(alpha.size()) +
        " vs " + std::to_string(h.rows()) + " frames");
  for (double a : alpha)
    if (a < 0.0 || !std::isfinite(a))
      throw std::invalid_argument("invalid-weights: alpha entries must be "
                                  "finite and non-negative");
}

}  // namespace

FireResult cif_forward(const Matrix& h, const std::vector<double>& alpha,
                       const CifConfig& cfg) {
  validate_inputs(h, alpha, cfg);
  const int frames = h.rows();
  const int dim = h.cols();

  FireResult result;
  double acc = 0.0;
  std::vector<Contribution> current;

  std::vector<std::vector<double>> fired_rows;
  auto fire = [&](int boundary) {
    std::vector<double> row(dim, 0.0);
    for (const Contribution& c : current)
      for (int j = 0; j < dim; ++j) row[j] += c.weight * h(c.frame, j);
    fired_rows.push_back(std::move(row));
    result.boundaries.push_back(boundary);
    result.contributions.push_back(std::move(current));
    current.clear();
  };

  for (int t = 0; t < frames; ++t) {
    double remaining = alpha[t];
    while (acc + remaining >= cfg.beta) {
      const double need = cfg.beta - acc;  // > 0: acc < beta between fires
      current.push_back({t, need});
      fire(t);
      remaining -= need;
      acc = 0.0;
    }
    if (remaining > 0.0) {
      current.push_back({t, remaining});
      acc += remaining;
    }
  }

  result.residual = acc;
  if (frames > 0 && acc > cfg.tail_threshold * cfg.beta) {
    fire(frames - 1);
    result.tail_fired = true;
    result.residual = 0.0;
  }

  const int n_tokens = static_cast<int>(fired_rows.size());
  result.embeddings = Matrix(n_tokens, dim);
  for (int n = 0; n < n_tokens; ++n)
    for (int j = 0; j < dim; ++j) result.embeddings(n, j) = fired_rows[n][j];
  return result;
}

CifGrads cif_backward(const Matrix& h, const std::vector<double>& alpha,
                      const CifConfig& cfg, const Matrix& upstream) {
  const FireResult fire = cif_forward(h, alpha, cfg);
  const int frames = h.rows();
  const int dim = h.cols();
  const int n_tokens = fire.embeddings.rows();
  if (upstream.rows() != n_tokens || upstream.cols() != dim)
    throw std::invalid_argument(
        "shape-error: upstream gradient is " + std::to_string(upstream.rows()) +
        "x" + std::to_string(upstream.cols()) + ", expected " +
        std::to_string(n_tokens) + "x" + std::to_string(dim));

  CifGrads grads;
  grads.grad_h = Matrix(frames, dim);
  grads.grad_alpha.assign(frames, 0.0);

  // d c_n / d h_t is just the stored weight.
  for (int n = 0; n < n_tokens; ++n)
    for (const Contribution& c : fire.contributions[n])
      for (int j = 0; j < dim; ++j)
        grads.grad_h(c.frame, j) += c.weight * upstream(n, j);

  // Weights as functions of alpha, partition fixed. Token n covers the
  // cumulative-mass interval [n*beta, (n+1)*beta] (the tail covers
  // [N*beta, sum(alpha)]); frame t covers [S_{t-1}, S_t]. A contribution is
  //   w = min(S_t, hi) - max(S_{t-1}, lo),
  // so d w / d alpha_u is +1 for u <= t unless the min picks the constant hi
  // (the token-closing piece), and -1 for u <= t-1 unless the max picks the
  // constant lo (the token's first piece). Expressed as two prefix masses and
  // resolved with one suffix scan.
  std::vector<double> suffix(frames + 1, 0.0);
  auto add_prefix = [&](int upto, double g) {
    // adds g to grad_alpha[0..upto]
    if (upto >= 0) suffix[upto] += g;
  };
  for (int n = 0; n < n_tokens; ++n) {
    const bool is_tail = fire.tail_fired && n == n_tokens - 1;
    const auto& contribs = fire.contributions[n];
    for (std::size_t i = 0; i < contribs.size(); ++i) {
      const Contribution& c = contribs[i];
      double g = 0.0;
      for (int j = 0; j < dim; ++j) g += upstream(n, j) * h(c.frame, j);
      const bool closing = !is_tail && i + 1 == contribs.size();
      const bool opening = i == 0;
      if (!closing) add_prefix(c.frame, g);
      if (!opening) add_prefix(c.frame - 1, -g);
    }
  }
  double running = 0.0;
  for (int t = frames - 1; t >= 0; --t) {
    running += suffix[t];
    grads.grad_alpha[t] = running;
  }
  return grads;
}

std::vector<double> scale_alpha(const std::vector<double>& alpha, int n_target) {
  if (n_target < 1)
    throw std::invalid_argument("invalid-target: n_target must be >= 1");
  const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  if (sum <= 0.0)
    throw std::invalid_argument("degenerate-weights: alpha sums to zero");
  std::vector<double> scaled(alpha.size());
  const double factor = n_target / sum;
  for (std::size_t i = 0; i < alpha.size(); ++i) scaled[i] = alpha[i] * factor;
  return scaled;
}

double quantity_loss(const std::vector<double>& alpha, int n_target) {
  const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  return std::abs(sum - n_target);
}

}  // namespace sasot::cif
