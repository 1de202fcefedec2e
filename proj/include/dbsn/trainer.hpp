#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dbsn/dataset.hpp"
#include "dbsn/network.hpp"

namespace dbsn {

// Joint stochastic variational inference over (theta, w): T-sample Monte Carlo
// gradients of  loss = N * E_q[batch NLL] + D_KL(q(alpha|theta) || p(alpha)) + gamma ||w||^2,
// with pathwise (reparameterized) gradients through the sharpened concrete
// sampler. Also hosts the point-estimate and weight-uncertainty baselines.

enum class Method { Dbsn, Map, MapFixedAlpha, McDropout, Bbb, Fbn };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  int mc_samples = 4;          // T
  double weight_decay = 5e-5;  // gamma; the 2*gamma*w term mirrors decay 1e-4

  // shared-weight optimizer: momentum SGD, lr divided at epoch-fraction milestones
  double w_lr = 0.1;
  double w_momentum = 0.9;
  std::vector<double> milestones = {0.5, 0.75};
  double milestone_factor = 0.1;
  double grad_clip_norm = 5.0;  // applies to the w gradient only

  // structure-logit optimizer: Adam
  double theta_lr = 3e-4;
  double theta_beta1 = 0.5;
  double theta_beta2 = 0.999;
  double adam_eps = 1e-8;

  // temperature: tau(t) = max(tau_scale * exp(-tau_decay * t), tau_floor)
  double tau_scale = 3.0;
  double tau_decay = 1.5e-5;
  double tau_floor = 1.0;

  // sharpness: linear beta_start -> beta_end over the whole run
  double beta_start = 1.0;
  double beta_end = 0.5;

  double dropout_rate = 0.2;   // mc_dropout only
  double bbb_sigma_init = 1e-3;  // initial posterior stddev for bbb/fbn

  std::uint64_t seed = 0;

  void validate() const;
};

// tau(t) = max(scale * exp(-decay * t), floor); defaults follow the training
// recipe max(3 * exp(-0.000015 t), 1).
double tau_schedule(std::int64_t t, double scale = 3.0, double decay = 1.5e-5, double floor = 1.0);

// linear decay from `start` at t = 0 to `end` at t >= horizon
double beta_schedule(std::int64_t t, std::int64_t horizon, double start = 1.0, double end = 0.5);

// learning rate after milestone decays, milestones given as epoch fractions
double milestone_lr(double base_lr, int epoch, int total_epochs, const std::vector<double>& milestones,
                    double factor);

struct SgdMomentum {
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;

  void step(std::vector<Tensor>& params, double lr);
};

struct Adam {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m, v;

  void step(std::vector<Tensor>& params);
};

// global-norm clip over a parameter group's gradients; returns the pre-clip norm
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

struct LossBreakdown {
  Tensor loss;  // scalar tape root: nll + kl + l2
  double nll = 0.0;
  double kl = 0.0;
  double l2 = 0.0;
};

// The practical loss for the structure-posterior path, with fixed Gumbel noise
// keyed by (seed, step, sample, edge). Exposed standalone so gradient oracles
// can re-evaluate it under common random numbers.
LossBreakdown elbo_terms(const Tensor& x, const std::vector<int>& y, const StructureLogits& theta,
                         const WeightStore& w, const NetworkSpec& spec, const SharpTemp& st,
                         std::uint64_t seed, std::int64_t step, int mc_samples,
                         std::int64_t dataset_size, int num_batches, double gamma);

struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  double l2 = 0.0;
  double train_error = 0.0;
  double test_error = 0.0;
  double tau = 0.0;
  double beta = 0.0;
  double lr_w = 0.0;
};

// A trained parameter bundle; prediction and evaluation run against this.
struct TrainedModel {
  Method method = Method::Dbsn;
  NetworkSpec spec;
  TrainConfig cfg;
  StructureLogits theta;
  WeightStore weights;
  std::vector<Tensor> rho;  // posterior stddev parameters (bbb/fbn), aligned with weights
  // non-empty when the model was trained against frozen per-edge masks
  // (map_fixed_alpha, refinement members); forward uses these directly
  std::vector<std::vector<double>> fixed_alphas;
  std::int64_t final_step = 0;
  std::int64_t horizon = 0;  // total scheduled steps (epochs * batches per epoch)

  SharpTemp eval_sharp() const;  // schedule values at final_step; beta = 0 for point-structure methods

  // One stochastic member forward keyed by (seed, sample), without a tape.
  Matrix forward_probs(const Matrix& x, std::uint64_t seed, std::uint64_t sample) const;
  // Same member forward as a tape expression of x (input gradients for attacks).
  Tensor forward_logits(const Tensor& x, std::uint64_t seed, std::uint64_t sample) const;
};

class Trainer {
 public:
  Trainer(Method method, const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& data);

  // Train the shared weights against a frozen structure (one alpha vector per
  // edge); theta is left untouched and no structure KL is applied.
  void freeze_structure(std::vector<std::vector<double>> alphas);

  // One optimization step on a batch; updates theta and w simultaneously.
  LossBreakdown train_step(const Matrix& batch_x, const std::vector<int>& batch_y);

  // Runs remaining epochs (resume-aware); callback fires after each epoch.
  void train(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  EpochMetrics evaluate_epoch(int epoch, double loss, double nll, double kl, double l2) const;

  TrainedModel model() const;

  std::int64_t step() const { return step_; }
  int num_batches() const { return num_batches_; }
  std::int64_t horizon() const { return horizon_; }
  double current_tau() const;
  double current_beta() const;

  const StructureLogits& theta() const { return theta_; }
  const WeightStore& weights() const { return weights_; }

  // Flat named state (parameters + optimizer slots + counters) for checkpoints.
  std::map<std::string, std::vector<double>> state() const;
  void load_state(const std::map<std::string, std::vector<double>>& state);

 private:
  struct SampleForward;

  LossBreakdown compute_loss(const Tensor& x, const std::vector<int>& y);
  double dataset_error(const Matrix& x, const std::vector<int>& y) const;
  std::vector<Tensor> weight_side_params();

  Method method_;
  NetworkSpec spec_;
  TrainConfig cfg_;
  const Dataset& data_;
  StructureLogits theta_;
  WeightStore weights_;
  std::vector<Tensor> rho_;
  std::vector<std::vector<double>> fixed_alphas_;
  SgdMomentum w_opt_;
  Adam theta_opt_;
  std::int64_t step_ = 0;
  int num_batches_ = 0;
  std::int64_t horizon_ = 0;
};

// Convenience wrapper: build, train, return the model.
TrainedModel train_model(Method method, const NetworkSpec& spec, const TrainConfig& cfg,
                         const Dataset& data,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace dbsn
