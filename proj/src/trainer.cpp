#include "dbsn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dbsn {

Method method_from_string(const std::string& s) {
  if (s == "dbsn") return Method::Dbsn;
  if (s == "map") return Method::Map;
  if (s == "map_fixed_alpha") return Method::MapFixedAlpha;
  if (s == "mc_dropout") return Method::McDropout;
  if (s == "bbb") return Method::Bbb;
  if (s == "fbn") return Method::Fbn;
  throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Dbsn: return "dbsn";
    case Method::Map: return "map";
    case Method::MapFixedAlpha: return "map_fixed_alpha";
    case Method::McDropout: return "mc_dropout";
    case Method::Bbb: return "bbb";
    case Method::Fbn: return "fbn";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (mc_samples < 1) throw std::invalid_argument("config: mc_samples must be >= 1");
  if (weight_decay < 0) throw std::invalid_argument("config: weight_decay must be >= 0");
  if (!(w_lr > 0) || !(theta_lr > 0)) throw std::invalid_argument("config: learning rates must be > 0");
  if (!(grad_clip_norm > 0)) throw std::invalid_argument("config: grad_clip_norm must be > 0");
  if (!(tau_floor > 0) || !(tau_scale > 0)) throw std::invalid_argument("config: tau params must be > 0");
  if (beta_start < 0 || beta_start > 1 || beta_end < 0 || beta_end > 1) {
    throw std::invalid_argument("config: beta schedule endpoints must lie in [0,1]");
  }
  if (dropout_rate < 0 || dropout_rate >= 1) {
    throw std::invalid_argument("config: dropout_rate must lie in [0,1)");
  }
}

double tau_schedule(std::int64_t t, double scale, double decay, double floor) {
  return std::max(scale * std::exp(-decay * static_cast<double>(t)), floor);
}

double beta_schedule(std::int64_t t, std::int64_t horizon, double start, double end) {
  if (horizon <= 0) throw std::invalid_argument("beta_schedule: horizon must be > 0");
  if (t <= 0) return start;
  if (t >= horizon) return end;
  const double f = static_cast<double>(t) / static_cast<double>(horizon);
  return start + (end - start) * f;
}

double milestone_lr(double base_lr, int epoch, int total_epochs, const std::vector<double>& milestones,
                    double factor) {
  double lr = base_lr;
  for (double frac : milestones) {
    if (static_cast<double>(epoch) >= frac * total_epochs) lr *= factor;
  }
  return lr;
}

void SgdMomentum::step(std::vector<Tensor>& params, double lr) {
  if (velocity.size() != params.size()) velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].values();
    const auto& g = params[i].grad();
    auto& v = velocity[i];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    if (g.empty()) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

void Adam::step(std::vector<Tensor>& params) {
  if (m.size() != params.size()) {
    m.resize(params.size());
    v.resize(params.size());
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].values();
    const auto& g = params[i].grad();
    auto& mi = m[i];
    auto& vi = v[i];
    if (mi.size() != p.size()) mi.assign(p.size(), 0.0);
    if (vi.size() != p.size()) vi.assign(p.size(), 0.0);
    if (g.empty()) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
      vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (p.grad().empty()) continue;
      for (auto& g : p.grad_ref()) g *= scale;
    }
  }
  return norm;
}

namespace {

Tensor batch_nll(const Tensor& logits, const std::vector<int>& y) {
  return neg(mean(gather(log_softmax(logits, 1), y)));
}

Tensor weight_l2(const WeightStore& w) {
  Tensor acc;
  for (const Tensor& p : w.parameters()) {
    Tensor term = sum(mul(p, p));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

// Closed-form KL(N(mu, sigma^2) || N(0, 1)) summed over all weight parameters;
// sigma = softplus(rho).
Tensor gaussian_weight_kl(const std::vector<Tensor>& mu, const std::vector<Tensor>& sigma) {
  Tensor acc;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Tensor half_sq = mul_scalar(add(mul(sigma[i], sigma[i]), mul(mu[i], mu[i])), 0.5);
    Tensor term = sum(add_scalar(sub(half_sq, log(sigma[i])), -0.5));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

struct MethodLossInputs {
  Method method = Method::Dbsn;
  const Tensor* x = nullptr;
  const std::vector<int>* y = nullptr;
  const StructureLogits* theta = nullptr;
  const WeightStore* weights = nullptr;
  const NetworkSpec* spec = nullptr;
  const std::vector<Tensor>* rho = nullptr;                    // bbb/fbn
  const std::vector<std::vector<double>>* fixed_alphas = nullptr;  // frozen masks
  SharpTemp st;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  int mc_samples = 1;
  std::int64_t dataset_size = 0;
  int num_batches = 1;
  double gamma = 0.0;
  double dropout_rate = 0.0;
};

StructureSample structure_from_alphas(const std::vector<std::vector<double>>& alphas) {
  StructureSample out;
  for (const auto& a : alphas) out.edges.push_back(edge_sample_from_alpha(a));
  return out;
}

LossBreakdown method_loss(const MethodLossInputs& in) {
  const bool frozen = in.fixed_alphas != nullptr && !in.fixed_alphas->empty();
  const bool stochastic_weights = in.method == Method::Bbb || in.method == Method::Fbn;
  const bool structure_kl =
      !frozen && (in.method == Method::Dbsn || in.method == Method::Fbn) && in.st.beta > 0.0;

  std::vector<Tensor> sigma;
  if (stochastic_weights) {
    for (const Tensor& r : *in.rho) sigma.push_back(softplus(r));
  }

  Tensor nll_acc, kl_acc;
  for (int s = 0; s < in.mc_samples; ++s) {
    StructureSample structure;
    if (frozen) {
      structure = structure_from_alphas(*in.fixed_alphas);
    } else {
      structure = sample_structure(*in.theta, in.st, in.seed, static_cast<std::uint64_t>(in.step),
                                   static_cast<std::uint64_t>(s));
    }

    WeightStore effective = *in.weights;
    if (stochastic_weights) {
      const std::uint64_t step_u = static_cast<std::uint64_t>(in.step);
      const std::uint64_t s_u = static_cast<std::uint64_t>(s);
      effective = in.weights->transformed([&](const Tensor& p, std::size_t idx) {
        Rng rng = substream(in.seed, {stream::kWeightNoise, step_u, s_u, idx});
        std::vector<double> noise(p.values().size());
        for (auto& n : noise) n = rng.normal();
        Tensor eps = Tensor::leaf(p.shape(), std::move(noise));
        return add(p, mul(sigma[idx], eps));
      });
    }

    DropoutCtx ctx;
    const DropoutCtx* ctx_ptr = nullptr;
    if (in.method == Method::McDropout && in.dropout_rate > 0.0) {
      ctx.rate = in.dropout_rate;
      ctx.seed = subseed(in.seed, {stream::kDropout, static_cast<std::uint64_t>(in.step),
                                   static_cast<std::uint64_t>(s)});
      ctx_ptr = &ctx;
    }

    Tensor logits = network_forward(*in.x, structure, effective, *in.spec, ctx_ptr);
    Tensor nll_s = batch_nll(logits, *in.y);
    nll_acc = nll_acc.defined() ? add(nll_acc, nll_s) : nll_s;

    if (structure_kl) {
      Tensor kl_s = structure_kl_term(structure, *in.theta, in.st, in.st.tau);
      kl_acc = kl_acc.defined() ? add(kl_acc, kl_s) : kl_s;
    }
  }

  const double t_inv = 1.0 / in.mc_samples;
  Tensor nll_term = mul_scalar(nll_acc, t_inv * static_cast<double>(in.dataset_size));
  Tensor kl_term = kl_acc.defined()
                       ? mul_scalar(kl_acc, t_inv / static_cast<double>(in.num_batches))
                       : Tensor::scalar(0.0);
  if (stochastic_weights) {
    std::vector<Tensor> mu;
    for (const Tensor& p : in.weights->parameters()) mu.push_back(p);
    Tensor wkl = mul_scalar(gaussian_weight_kl(mu, sigma), 1.0 / in.num_batches);
    kl_term = add(kl_term, wkl);
  }

  // MAP-family methods carry the delta-posterior L2 penalty; weight-uncertainty
  // methods replace it with the Gaussian weight KL above.
  Tensor l2_term = (!stochastic_weights && in.gamma > 0.0)
                       ? mul_scalar(weight_l2(*in.weights), in.gamma)
                       : Tensor::scalar(0.0);

  LossBreakdown out;
  out.loss = add(add(nll_term, kl_term), l2_term);
  out.nll = nll_term.item();
  out.kl = kl_term.item();
  out.l2 = l2_term.item();
  return out;
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

LossBreakdown elbo_terms(const Tensor& x, const std::vector<int>& y, const StructureLogits& theta,
                         const WeightStore& w, const NetworkSpec& spec, const SharpTemp& st,
                         std::uint64_t seed, std::int64_t step, int mc_samples,
                         std::int64_t dataset_size, int num_batches, double gamma) {
  if (y.empty()) throw std::invalid_argument("elbo_terms: empty batch");
  MethodLossInputs in;
  in.method = Method::Dbsn;
  in.x = &x;
  in.y = &y;
  in.theta = &theta;
  in.weights = &w;
  in.spec = &spec;
  in.st = st;
  in.seed = seed;
  in.step = step;
  in.mc_samples = mc_samples;
  in.dataset_size = dataset_size;
  in.num_batches = num_batches;
  in.gamma = gamma;
  return method_loss(in);
}

Trainer::Trainer(Method method, const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& data)
    : method_(method), spec_(spec), cfg_(cfg), data_(data) {
  cfg_.validate();
  spec_.validate();
  data_.validate();
  if (spec_.input_dim != data_.dim() || spec_.num_classes != data_.num_classes) {
    throw std::invalid_argument("trainer: network spec does not match dataset dimensions");
  }
  theta_ = StructureLogits::init(spec_.cell, cfg_.seed);
  weights_ = WeightStore::init(spec_, cfg_.seed);
  if (method_ == Method::MapFixedAlpha) {
    const int k = spec_.cell.ops_per_edge();
    fixed_alphas_.assign(spec_.cell.num_edges(), std::vector<double>(k, 1.0 / k));
  }
  if (method_ == Method::Bbb || method_ == Method::Fbn) {
    const double rho0 = std::log(std::expm1(cfg_.bbb_sigma_init));
    for (const Tensor& p : weights_.parameters()) {
      rho_.push_back(Tensor::full(p.shape(), rho0, true));
    }
  }
  num_batches_ = (data_.train_x.rows + cfg_.batch_size - 1) / cfg_.batch_size;
  horizon_ = static_cast<std::int64_t>(cfg_.epochs) * num_batches_;
  w_opt_.momentum = cfg_.w_momentum;
  theta_opt_.lr = cfg_.theta_lr;
  theta_opt_.beta1 = cfg_.theta_beta1;
  theta_opt_.beta2 = cfg_.theta_beta2;
  theta_opt_.eps = cfg_.adam_eps;
}

double Trainer::current_tau() const {
  return tau_schedule(step_, cfg_.tau_scale, cfg_.tau_decay, cfg_.tau_floor);
}

double Trainer::current_beta() const {
  if (fixed_alphas_.empty() && (method_ == Method::Dbsn || method_ == Method::Fbn)) {
    return beta_schedule(step_, horizon_, cfg_.beta_start, cfg_.beta_end);
  }
  return 0.0;  // point-estimate or frozen structure
}

void Trainer::freeze_structure(std::vector<std::vector<double>> alphas) {
  if (static_cast<int>(alphas.size()) != spec_.cell.num_edges()) {
    throw std::invalid_argument("freeze_structure: need one alpha vector per edge");
  }
  for (const auto& a : alphas) {
    if (static_cast<int>(a.size()) != spec_.cell.ops_per_edge()) {
      throw std::invalid_argument("freeze_structure: alpha length != ops per edge");
    }
  }
  fixed_alphas_ = std::move(alphas);
}

std::vector<Tensor> Trainer::weight_side_params() {
  std::vector<Tensor> out = weights_.parameters();
  out.insert(out.end(), rho_.begin(), rho_.end());
  return out;
}

LossBreakdown Trainer::compute_loss(const Tensor& x, const std::vector<int>& y) {
  MethodLossInputs in;
  in.method = method_;
  in.x = &x;
  in.y = &y;
  in.theta = &theta_;
  in.weights = &weights_;
  in.spec = &spec_;
  in.rho = &rho_;
  in.fixed_alphas = fixed_alphas_.empty() ? nullptr : &fixed_alphas_;
  in.st = SharpTemp{current_beta(), current_tau()};
  in.seed = cfg_.seed;
  in.step = step_;
  in.mc_samples = cfg_.mc_samples;
  in.dataset_size = data_.train_x.rows;
  in.num_batches = num_batches_;
  in.gamma = cfg_.weight_decay;
  in.dropout_rate = cfg_.dropout_rate;
  return method_loss(in);
}

LossBreakdown Trainer::train_step(const Matrix& batch_x, const std::vector<int>& batch_y) {
  if (batch_y.empty()) throw std::invalid_argument("train_step: empty batch");
  Tensor x = Tensor::leaf({batch_x.rows, batch_x.cols}, batch_x.data);

  Tape tape;
  LossBreakdown lb;
  try {
    lb = compute_loss(x, batch_y);
  } catch (const std::exception& e) {
    throw std::runtime_error("train_step aborted at step " + std::to_string(step_) + ": " + e.what());
  }

  for (Tensor& p : theta_.theta) p.zero_grad();
  auto wparams = weight_side_params();
  for (Tensor& p : wparams) p.zero_grad();

  tape.backward(lb.loss);

  clip_grad_norm(wparams, cfg_.grad_clip_norm);
  const int epoch = static_cast<int>(step_ / num_batches_);
  const double lr = milestone_lr(cfg_.w_lr, epoch, cfg_.epochs, cfg_.milestones, cfg_.milestone_factor);
  w_opt_.step(wparams, lr);
  if (fixed_alphas_.empty()) theta_opt_.step(theta_.theta);
  ++step_;
  return lb;
}

double Trainer::dataset_error(const Matrix& x, const std::vector<int>& y) const {
  if (y.empty()) return 0.0;
  StructureSample structure = fixed_alphas_.empty() ? point_structure(theta_, current_tau())
                                                    : structure_from_alphas(fixed_alphas_);
  Tensor xt = Tensor::leaf({x.rows, x.cols}, x.data);
  Tensor logits = network_forward(xt, structure, weights_, spec_);
  int wrong = 0;
  const int c = spec_.num_classes;
  for (int i = 0; i < x.rows; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    if (best != y[i]) ++wrong;
  }
  return static_cast<double>(wrong) / y.size();
}

EpochMetrics Trainer::evaluate_epoch(int epoch, double loss, double nll, double kl, double l2) const {
  EpochMetrics m;
  m.epoch = epoch;
  m.step = step_;
  m.loss = loss;
  m.nll = nll;
  m.kl = kl;
  m.l2 = l2;
  m.train_error = dataset_error(data_.train_x, data_.train_y);
  m.test_error = dataset_error(data_.test_x, data_.test_y);
  m.tau = current_tau();
  m.beta = current_beta();
  m.lr_w = milestone_lr(cfg_.w_lr, epoch, cfg_.epochs, cfg_.milestones, cfg_.milestone_factor);
  return m;
}

void Trainer::train(const std::function<void(const EpochMetrics&)>& on_epoch) {
  const int n = data_.train_x.rows;
  const int d = data_.train_x.cols;
  while (step_ < horizon_) {
    const int epoch = static_cast<int>(step_ / num_batches_);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng shuffle_rng = substream(cfg_.seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)});
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[i], perm[j]);
    }

    double loss = 0, nll = 0, kl = 0, l2 = 0;
    int batches_run = 0;
    for (int b = static_cast<int>(step_ % num_batches_); b < num_batches_; ++b) {
      const int lo = b * cfg_.batch_size;
      const int hi = std::min(n, lo + cfg_.batch_size);
      Matrix bx(hi - lo, d);
      std::vector<int> by(hi - lo);
      for (int i = lo; i < hi; ++i) {
        for (int j = 0; j < d; ++j) bx.at(i - lo, j) = data_.train_x.at(perm[i], j);
        by[i - lo] = data_.train_y[perm[i]];
      }
      LossBreakdown lb = train_step(bx, by);
      loss += lb.loss.item();
      nll += lb.nll;
      kl += lb.kl;
      l2 += lb.l2;
      ++batches_run;
    }
    const double inv = batches_run > 0 ? 1.0 / batches_run : 0.0;
    if (on_epoch) on_epoch(evaluate_epoch(epoch, loss * inv, nll * inv, kl * inv, l2 * inv));
  }
}

TrainedModel Trainer::model() const {
  TrainedModel m;
  m.method = method_;
  m.spec = spec_;
  m.cfg = cfg_;
  m.theta = theta_;
  m.weights = weights_;
  m.rho = rho_;
  m.fixed_alphas = fixed_alphas_;
  m.final_step = step_;
  m.horizon = horizon_;
  return m;
}

std::map<std::string, std::vector<double>> Trainer::state() const {
  std::map<std::string, std::vector<double>> st;
  for (std::size_t e = 0; e < theta_.theta.size(); ++e) {
    st["theta.e" + std::to_string(e)] = theta_.theta[e].values();
  }
  auto named = weights_.named_parameters();
  for (auto& [name, t] : named) st["w." + name] = t.values();
  for (std::size_t i = 0; i < rho_.size(); ++i) st["rho." + std::to_string(i)] = rho_[i].values();
  for (std::size_t i = 0; i < w_opt_.velocity.size(); ++i) {
    st["opt.w.v." + std::to_string(i)] = w_opt_.velocity[i];
  }
  for (std::size_t i = 0; i < theta_opt_.m.size(); ++i) {
    st["opt.theta.m." + std::to_string(i)] = theta_opt_.m[i];
    st["opt.theta.v." + std::to_string(i)] = theta_opt_.v[i];
  }
  st["meta"] = {static_cast<double>(step_), static_cast<double>(theta_opt_.t)};
  return st;
}

void Trainer::load_state(const std::map<std::string, std::vector<double>>& st) {
  auto fetch = [&st](const std::string& key) -> const std::vector<double>& {
    auto it = st.find(key);
    if (it == st.end()) throw std::runtime_error("load_state: missing key " + key);
    return it->second;
  };
  auto assign = [](Tensor& t, const std::vector<double>& v, const std::string& key) {
    if (t.values().size() != v.size()) throw std::runtime_error("load_state: size mismatch for " + key);
    t.values() = v;
  };

  for (std::size_t e = 0; e < theta_.theta.size(); ++e) {
    const std::string key = "theta.e" + std::to_string(e);
    assign(theta_.theta[e], fetch(key), key);
  }
  auto named = weights_.named_parameters();
  for (auto& [name, t] : named) {
    Tensor tt = t;
    assign(tt, fetch("w." + name), "w." + name);
  }
  for (std::size_t i = 0; i < rho_.size(); ++i) {
    const std::string key = "rho." + std::to_string(i);
    assign(rho_[i], fetch(key), key);
  }

  const auto& meta = fetch("meta");
  if (meta.size() != 2) throw std::runtime_error("load_state: bad meta record");
  step_ = static_cast<std::int64_t>(meta[0]);
  theta_opt_.t = static_cast<std::int64_t>(meta[1]);

  const std::size_t n_wparams = weights_.parameters().size() + rho_.size();
  w_opt_.velocity.assign(n_wparams, {});
  for (std::size_t i = 0; i < n_wparams; ++i) {
    auto it = st.find("opt.w.v." + std::to_string(i));
    if (it != st.end()) w_opt_.velocity[i] = it->second;
  }
  const std::size_t n_theta = theta_.theta.size();
  theta_opt_.m.assign(n_theta, {});
  theta_opt_.v.assign(n_theta, {});
  for (std::size_t i = 0; i < n_theta; ++i) {
    auto itm = st.find("opt.theta.m." + std::to_string(i));
    if (itm != st.end()) theta_opt_.m[i] = itm->second;
    auto itv = st.find("opt.theta.v." + std::to_string(i));
    if (itv != st.end()) theta_opt_.v[i] = itv->second;
  }
}

// ---- TrainedModel ----

SharpTemp TrainedModel::eval_sharp() const {
  SharpTemp st;
  st.tau = tau_schedule(final_step, cfg.tau_scale, cfg.tau_decay, cfg.tau_floor);
  if (method == Method::Dbsn || method == Method::Fbn) {
    st.beta = horizon > 0 ? beta_schedule(final_step, horizon, cfg.beta_start, cfg.beta_end)
                          : cfg.beta_start;
  } else {
    st.beta = 0.0;
  }
  return st;
}

Tensor TrainedModel::forward_logits(const Tensor& x, std::uint64_t seed, std::uint64_t sample) const {
  const SharpTemp st = eval_sharp();
  StructureSample structure;
  if (!fixed_alphas.empty()) {
    structure = structure_from_alphas(fixed_alphas);
  } else if (method == Method::Dbsn || method == Method::Fbn) {
    structure = sample_structure(theta, st, seed, 0, sample);
  } else {
    structure = point_structure(theta, st.tau);
  }

  WeightStore effective = weights;
  if (method == Method::Bbb || method == Method::Fbn) {
    effective = weights.transformed([&](const Tensor& p, std::size_t idx) {
      Rng rng = substream(seed, {stream::kWeightNoise, sample, idx});
      std::vector<double> w(p.values().size());
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = p.values()[j] + softplus_value(rho[idx].values()[j]) * rng.normal();
      }
      return Tensor::leaf(p.shape(), std::move(w));
    });
  }

  DropoutCtx ctx;
  const DropoutCtx* ctx_ptr = nullptr;
  if (method == Method::McDropout && cfg.dropout_rate > 0.0) {
    ctx.rate = cfg.dropout_rate;
    ctx.seed = subseed(seed, {stream::kDropout, sample});
    ctx_ptr = &ctx;
  }
  return network_forward(x, structure, effective, spec, ctx_ptr);
}

Matrix TrainedModel::forward_probs(const Matrix& x, std::uint64_t seed, std::uint64_t sample) const {
  Tensor xt = Tensor::leaf({x.rows, x.cols}, x.data);
  Tensor probs = softmax(forward_logits(xt, seed, sample), 1);
  Matrix out(x.rows, spec.num_classes);
  out.data = probs.values();
  return out;
}

TrainedModel train_model(Method method, const NetworkSpec& spec, const TrainConfig& cfg,
                         const Dataset& data, const std::function<void(const EpochMetrics&)>& on_epoch) {
  Trainer trainer(method, spec, cfg, data);
  trainer.train(on_epoch);
  return trainer.model();
}

}  // namespace dbsn
