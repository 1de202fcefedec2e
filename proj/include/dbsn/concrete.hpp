#pragma once

#include "dbsn/rng.hpp"
#include "dbsn/tensor.hpp"

namespace dbsn {

// Sharpened concrete distribution over the (K-1)-simplex.
//
// Sampling:    alpha = softmax((theta + beta * eps) / tau), eps i.i.d. Gumbel.
// beta = 1 is the standard concrete distribution; beta = 0 collapses the
// sample to the deterministic softmax(theta / tau) (the point-estimate limit),
// where the density itself is degenerate and must not be evaluated.
//
// Samples are carried as log(alpha) computed through a log-softmax path so
// that theta_k - tau * log(alpha_k) stays well conditioned for peaked samples.

struct SharpTemp {
  double beta = 1.0;  // noise sharpness in [0, 1]
  double tau = 1.0;   // relaxation temperature, > 0
};

struct EdgeSample {
  TensorT<double> log_alpha;  // rank-1 [K]
  TensorT<double> alpha;      // exp(log_alpha)
  int k() const { return log_alpha.shape()[0]; }
};

// K i.i.d. standard Gumbel draws (-log(-log u), u clamped into the open unit
// interval) as a constant rank-1 tensor.
Tensor sample_gumbel(int k, Rng& rng);

// One relaxed categorical sample; differentiable w.r.t. theta (pathwise).
EdgeSample sample_sharpened(const Tensor& theta, const SharpTemp& st, const Tensor& eps);

// Wraps an explicit simplex point (no tape) so densities can be evaluated at
// arbitrary alphas in tests and diagnostics.
EdgeSample edge_sample_from_alpha(const std::vector<double>& alpha);

// Log density of the sharpened concrete distribution at `sample`:
//   log((K-1)!) + (K-1) log tau - (K-1) log beta - sum_k log alpha_k
//   + sum_k s_k - K * logsumexp_k(s_k),   s_k = (theta_k - tau log alpha_k)/beta.
// Differentiable w.r.t. theta, both explicitly and through log_alpha when the
// sample was produced pathwise. Throws for beta = 0 (degenerate density) and
// for alpha off the simplex beyond tolerance.
Tensor log_pdf_sharpened(const EdgeSample& sample, const Tensor& theta, const SharpTemp& st);

// Prior density: standard concrete (beta = 1) with uniform class
// probabilities (theta = 0) at the given temperature.
Tensor log_pdf_prior(const EdgeSample& sample, double tau);

// Single-sample KL integrand log q(alpha|theta,beta) - log p(alpha); its mean
// over pathwise samples estimates D_KL(q || p).
Tensor kl_mc_term(const EdgeSample& sample, const Tensor& theta, const SharpTemp& st,
                  double tau_prior);

}  // namespace dbsn
