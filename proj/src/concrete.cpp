#include "dbsn/concrete.hpp"

#include <cmath>
#include <stdexcept>

namespace dbsn {

Tensor sample_gumbel(int k, Rng& rng) {
  if (k < 2) throw std::invalid_argument("sample_gumbel: need K >= 2");
  std::vector<double> eps(k);
  for (int i = 0; i < k; ++i) eps[i] = rng.gumbel();
  return Tensor::leaf({k}, std::move(eps));
}

EdgeSample sample_sharpened(const Tensor& theta, const SharpTemp& st, const Tensor& eps) {
  if (theta.rank() != 1 || eps.rank() != 1 || theta.shape() != eps.shape()) {
    throw std::invalid_argument("sample_sharpened: theta/eps length mismatch");
  }
  if (!(st.tau > 0.0)) throw std::invalid_argument("sample_sharpened: tau must be > 0");
  if (st.beta < 0.0 || st.beta > 1.0) throw std::invalid_argument("sample_sharpened: beta outside [0,1]");
  Tensor z = add(theta, mul_scalar(eps, st.beta));
  Tensor log_alpha = log_softmax(mul_scalar(z, 1.0 / st.tau), 0);
  EdgeSample s;
  s.log_alpha = log_alpha;
  s.alpha = exp(log_alpha);
  return s;
}

EdgeSample edge_sample_from_alpha(const std::vector<double>& alpha) {
  std::vector<double> la(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0)) throw std::invalid_argument("edge_sample_from_alpha: entries must be > 0");
    la[i] = std::log(alpha[i]);
  }
  EdgeSample s;
  s.log_alpha = Tensor::leaf({static_cast<int>(alpha.size())}, std::move(la));
  s.alpha = Tensor::leaf({static_cast<int>(alpha.size())}, alpha);
  return s;
}

namespace {

void check_simplex(const EdgeSample& sample) {
  double total = 0.0;
  for (double a : sample.alpha.values()) {
    if (!(a > 0.0)) throw std::invalid_argument("log_pdf: alpha entry not in (0,1)");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("log_pdf: alpha off the simplex (sum = " + std::to_string(total) + ")");
  }
}

}  // namespace

Tensor log_pdf_sharpened(const EdgeSample& sample, const Tensor& theta, const SharpTemp& st) {
  const int k = sample.k();
  if (theta.rank() != 1 || theta.shape()[0] != k) {
    throw std::invalid_argument("log_pdf_sharpened: theta length mismatch");
  }
  if (!(st.beta > 0.0)) throw std::invalid_argument("log_pdf_sharpened: density degenerate at beta = 0");
  if (!(st.tau > 0.0)) throw std::invalid_argument("log_pdf_sharpened: tau must be > 0");
  check_simplex(sample);

  // s_k = (theta_k - tau * log alpha_k) / beta
  Tensor s = mul_scalar(sub(theta, mul_scalar(sample.log_alpha, st.tau)), 1.0 / st.beta);
  Tensor body = sub(sub(sum(s), mul_scalar(logsumexp(s, 0), static_cast<double>(k))),
                    sum(sample.log_alpha));
  const double c = std::lgamma(static_cast<double>(k)) +
                   (k - 1) * (std::log(st.tau) - std::log(st.beta));
  return add_scalar(body, c);
}

Tensor log_pdf_prior(const EdgeSample& sample, double tau) {
  Tensor zero_theta = Tensor::zeros({sample.k()});
  return log_pdf_sharpened(sample, zero_theta, SharpTemp{1.0, tau});
}

Tensor kl_mc_term(const EdgeSample& sample, const Tensor& theta, const SharpTemp& st,
                  double tau_prior) {
  return sub(log_pdf_sharpened(sample, theta, st), log_pdf_prior(sample, tau_prior));
}

}  // namespace dbsn
