#include <doctest.h>

#include <cmath>

#include "dbsn/trainer.hpp"
#include "test_oracles.hpp"

using namespace dbsn;

namespace {

NetworkSpec tiny_spec(int num_nodes = 3, int width = 4, int cells = 1, int classes = 2) {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.num_classes = classes;
  spec.num_cells = cells;
  spec.cell.num_nodes = num_nodes;
  spec.cell.node_width = width;
  spec.cell.op_kinds = {OpKind::Zero, OpKind::Identity, OpKind::Affine, OpKind::AffineRelu};
  return spec;
}

TrainConfig tiny_config(int epochs = 2, int batch = 32, int t = 2) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.mc_samples = t;
  cfg.seed = 17;
  return cfg;
}

Dataset tiny_moons(int n_train = 96, int n_test = 64, std::uint64_t seed = 5) {
  return gen_dataset(DatasetKind::TwoMoons, n_train, n_test, 0.1, seed);
}

std::vector<double> flatten_state(const Trainer& trainer) {
  std::vector<double> out;
  for (const auto& [name, values] : trainer.state()) {
    out.insert(out.end(), values.begin(), values.end());
  }
  return out;
}

}  // namespace

TEST_CASE("temperature schedule") {
  CHECK(tau_schedule(0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(tau_schedule(10000000) == 1.0);
  // crossover where 3 exp(-0.000015 t) = 1, at t = ln(3) / 1.5e-5
  CHECK(tau_schedule(73240) > 1.0);
  CHECK(tau_schedule(73241) == 1.0);
}

TEST_CASE("sharpness schedule") {
  CHECK(beta_schedule(0, 1000) == 1.0);
  CHECK(beta_schedule(1000, 1000) == 0.5);
  CHECK(beta_schedule(5000, 1000) == 0.5);
  CHECK(beta_schedule(500, 1000) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(beta_schedule(1, 0), std::invalid_argument);
}

TEST_CASE("milestone learning-rate decay") {
  const std::vector<double> ms = {0.5, 0.75};
  CHECK(milestone_lr(0.1, 0, 100, ms, 0.1) == doctest::Approx(0.1));
  CHECK(milestone_lr(0.1, 49, 100, ms, 0.1) == doctest::Approx(0.1));
  CHECK(milestone_lr(0.1, 50, 100, ms, 0.1) == doctest::Approx(0.01));
  CHECK(milestone_lr(0.1, 75, 100, ms, 0.1) == doctest::Approx(0.001));
}

TEST_CASE("optimizer steps") {
  SUBCASE("momentum-free SGD is w <- w - lr g") {
    Tensor w = Tensor::leaf({2}, {1.0, -2.0}, true);
    w.grad_ref() = {0.5, -1.0};
    SgdMomentum opt;
    opt.momentum = 0.0;
    std::vector<Tensor> params = {w};
    opt.step(params, 0.1);
    CHECK(w.values()[0] == doctest::Approx(0.95));
    CHECK(w.values()[1] == doctest::Approx(-1.9));
  }
  SUBCASE("momentum accumulates velocity") {
    Tensor w = Tensor::leaf({1}, {0.0}, true);
    SgdMomentum opt;
    opt.momentum = 0.9;
    std::vector<Tensor> params = {w};
    w.grad_ref() = {1.0};
    opt.step(params, 1.0);  // v = 1, w = -1
    w.grad_ref() = {1.0};
    opt.step(params, 1.0);  // v = 1.9, w = -2.9
    CHECK(w.values()[0] == doctest::Approx(-2.9));
  }
  SUBCASE("first Adam step with constant gradient moves by about lr") {
    Tensor w = Tensor::leaf({3}, {0.0, 0.0, 0.0}, true);
    w.grad_ref() = {7.0, -0.3, 123.0};
    Adam opt;
    opt.lr = 3e-4;
    std::vector<Tensor> params = {w};
    opt.step(params);
    for (double v : w.values()) CHECK(std::abs(std::abs(v) - 3e-4) < 1e-6);
  }
  SUBCASE("global-norm clip caps at the threshold") {
    Tensor a = Tensor::leaf({2}, {0.0, 0.0}, true);
    Tensor b = Tensor::leaf({1}, {0.0}, true);
    a.grad_ref() = {30.0, 40.0};  // norm 50 overall
    b.grad_ref() = {0.0};
    std::vector<Tensor> params = {a, b};
    const double before = clip_grad_norm(params, 5.0);
    CHECK(before == doctest::Approx(50.0));
    double after = 0.0;
    for (auto& p : params)
      for (double g : p.grad()) after += g * g;
    CHECK(std::sqrt(after) == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("elbo terms") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons();
  StructureLogits theta = StructureLogits::init(spec.cell, 3);
  WeightStore w = WeightStore::init(spec, 3);
  Tensor x = Tensor::leaf({16, 2}, std::vector<double>(data.train_x.data.begin(),
                                                       data.train_x.data.begin() + 32));
  std::vector<int> y(data.train_y.begin(), data.train_y.begin() + 16);

  SUBCASE("theta = 0, beta = 1, prior tau = tau makes the KL identically zero") {
    for (Tensor& t : theta.theta) std::fill(t.values().begin(), t.values().end(), 0.0);
    LossBreakdown lb = elbo_terms(x, y, theta, w, spec, {1.0, 1.4}, 9, 0, 4, 96, 3, 1e-4);
    CHECK(lb.kl == 0.0);
    CHECK(lb.l2 > 0.0);
  }
  SUBCASE("gamma = 0 removes the l2 term") {
    LossBreakdown lb = elbo_terms(x, y, theta, w, spec, {0.8, 1.2}, 9, 0, 2, 96, 3, 0.0);
    CHECK(lb.l2 == 0.0);
    CHECK(lb.kl != 0.0);
  }
  SUBCASE("reported loss decomposes into nll + kl + l2") {
    LossBreakdown lb = elbo_terms(x, y, theta, w, spec, {0.7, 1.1}, 9, 5, 3, 96, 3, 1e-4);
    CHECK(std::abs(lb.loss.item() - (lb.nll + lb.kl + lb.l2)) < 1e-9);
  }
  SUBCASE("T = 4 has lower loss variance across noise redraws than T = 1") {
    auto loss_variance = [&](int t) {
      double mean = 0.0, sq = 0.0;
      const int trials = 100;
      for (int i = 0; i < trials; ++i) {
        LossBreakdown lb = elbo_terms(x, y, theta, w, spec, {1.0, 1.3}, 100 + i, i, t, 96, 3, 0.0);
        mean += lb.nll;
        sq += lb.nll * lb.nll;
      }
      mean /= trials;
      return sq / trials - mean * mean;
    };
    CHECK(loss_variance(4) < loss_variance(1));
  }
  SUBCASE("pathwise theta gradient matches finite differences") {
    auto f = [&](const Tensor& th0) {
      StructureLogits local = theta;
      local.theta[0] = th0;
      return elbo_terms(x, y, local, w, spec, {0.7, 1.2}, 21, 0, 2, 96, 3, 1e-4).loss;
    };
    Tensor th0 = Tensor::leaf({4}, theta.theta[0].values());
    CHECK(finite_difference_check<double>(f, th0, 1e-6) < 1e-4);
  }
  SUBCASE("weight gradient includes the 2 gamma w decay term") {
    const double gamma = 1e-3;
    auto grads_with_gamma = [&](double g) {
      Tape tape;
      LossBreakdown lb = elbo_terms(x, y, theta, w, spec, {0.7, 1.2}, 33, 0, 2, 96, 3, g);
      for (Tensor& p : w.parameters()) p.zero_grad();
      for (Tensor& t : theta.theta) t.zero_grad();
      tape.backward(lb.loss);
      return w.head.weight.grad();
    };
    const std::vector<double> with = grads_with_gamma(gamma);
    const std::vector<double> without = grads_with_gamma(0.0);
    for (std::size_t i = 0; i < with.size(); ++i) {
      const double decay = 2.0 * gamma * w.head.weight.values()[i];
      CHECK(with[i] - without[i] == doctest::Approx(decay).epsilon(1e-9));
    }
  }
}

TEST_CASE("train_step updates theta and w simultaneously") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons();
  TrainConfig cfg = tiny_config();
  Trainer trainer(Method::Dbsn, spec, cfg, data);

  const std::vector<double> theta_before = trainer.theta().theta[0].values();
  const std::vector<double> head_before = trainer.weights().head.weight.values();

  Matrix bx(16, 2);
  std::vector<int> by(16);
  for (int i = 0; i < 16; ++i) {
    bx.at(i, 0) = data.train_x.at(i, 0);
    bx.at(i, 1) = data.train_x.at(i, 1);
    by[i] = data.train_y[i];
  }
  trainer.train_step(bx, by);

  double theta_delta = 0.0, head_delta = 0.0;
  for (std::size_t i = 0; i < theta_before.size(); ++i) {
    theta_delta += std::abs(trainer.theta().theta[0].values()[i] - theta_before[i]);
  }
  for (std::size_t i = 0; i < head_before.size(); ++i) {
    head_delta += std::abs(trainer.weights().head.weight.values()[i] - head_before[i]);
  }
  CHECK(theta_delta > 0.0);
  CHECK(head_delta > 0.0);
  CHECK(trainer.step() == 1);
}

TEST_CASE("KL term stays nonnegative in expectation over an epoch") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons(128, 32);
  TrainConfig cfg = tiny_config(4, 32, 2);
  Trainer trainer(Method::Dbsn, spec, cfg, data);

  std::vector<double> kls;
  trainer.train([&kls](const EpochMetrics& m) { kls.push_back(m.kl); });
  REQUIRE(!kls.empty());
  double mean = 0.0, sq = 0.0;
  for (double k : kls) {
    mean += k;
    sq += k * k;
  }
  mean /= kls.size();
  const double se = std::sqrt(std::max(sq / kls.size() - mean * mean, 0.0) / kls.size());
  CHECK(mean >= -3.0 * se - 1e-12);
}

TEST_CASE("identical config and seed reproduce final parameters bitwise") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons();
  TrainConfig cfg = tiny_config(3);
  Trainer a(Method::Dbsn, spec, cfg, data);
  Trainer b(Method::Dbsn, spec, cfg, data);
  a.train();
  b.train();
  CHECK(flatten_state(a) == flatten_state(b));
}

TEST_CASE("dbsn with beta frozen at zero matches the MAP trajectory bitwise") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons();
  TrainConfig cfg = tiny_config(3);
  cfg.beta_start = 0.0;
  cfg.beta_end = 0.0;
  Trainer frozen(Method::Dbsn, spec, cfg, data);
  Trainer map(Method::Map, spec, cfg, data);
  frozen.train();
  map.train();
  CHECK(flatten_state(frozen) == flatten_state(map));
}

TEST_CASE("baseline trainers expose the documented structure semantics") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons();
  TrainConfig cfg = tiny_config(1);

  SUBCASE("map_fixed_alpha forwards with the uniform edge mix") {
    Trainer trainer(Method::MapFixedAlpha, spec, cfg, data);
    TrainedModel model = trainer.model();
    REQUIRE(!model.fixed_alphas.empty());
    for (const auto& a : model.fixed_alphas) {
      for (double v : a) CHECK(v == doctest::Approx(0.25));
    }
    // equals the edge-wise mean of operations by construction
    Tensor x = Tensor::leaf({1, 2}, {0.5, -0.5});
    Tensor logits = model.forward_logits(x, 0, 0);
    StructureSample uniform = uniform_structure(spec.cell);
    Tensor expect = network_forward(x, uniform, trainer.weights(), spec);
    CHECK(logits.values() == expect.values());
  }
  SUBCASE("map_fixed_alpha never updates theta") {
    Trainer trainer(Method::MapFixedAlpha, spec, cfg, data);
    const std::vector<double> before = trainer.theta().theta[0].values();
    trainer.train();
    CHECK(trainer.theta().theta[0].values() == before);
  }
  SUBCASE("bbb with posterior variance near zero recovers the MAP nll") {
    TrainConfig bbb_cfg = cfg;
    bbb_cfg.bbb_sigma_init = 1e-12;
    Trainer bbb(Method::Bbb, spec, bbb_cfg, data);
    Trainer map(Method::Map, spec, cfg, data);
    Matrix bx(8, 2);
    std::vector<int> by(8);
    for (int i = 0; i < 8; ++i) {
      bx.at(i, 0) = data.train_x.at(i, 0);
      bx.at(i, 1) = data.train_x.at(i, 1);
      by[i] = data.train_y[i];
    }
    LossBreakdown lb_bbb = bbb.train_step(bx, by);
    LossBreakdown lb_map = map.train_step(bx, by);
    CHECK(lb_bbb.nll == doctest::Approx(lb_map.nll).epsilon(1e-9));
    CHECK(lb_bbb.l2 == 0.0);   // the weight KL replaces the l2 penalty
    CHECK(lb_bbb.kl > 0.0);
  }
  SUBCASE("mc_dropout consumes dropout masks at train time") {
    TrainConfig md_cfg = cfg;
    Trainer a(Method::McDropout, spec, md_cfg, data);
    Trainer b(Method::Map, spec, md_cfg, data);
    Matrix bx(8, 2);
    std::vector<int> by(8);
    for (int i = 0; i < 8; ++i) {
      bx.at(i, 0) = data.train_x.at(i, 0);
      bx.at(i, 1) = data.train_x.at(i, 1);
      by[i] = data.train_y[i];
    }
    LossBreakdown la = a.train_step(bx, by);
    LossBreakdown lb = b.train_step(bx, by);
    CHECK(la.nll != lb.nll);
  }
}

TEST_CASE("non-finite losses abort the step with step diagnostics") {
  NetworkSpec spec = tiny_spec();
  Dataset data = tiny_moons();
  TrainConfig cfg = tiny_config(1);
  Trainer trainer(Method::Dbsn, spec, cfg, data);
  Tensor head = trainer.weights().head.weight;
  for (auto& v : head.values()) v = 1e300;
  Matrix bx(4, 2);
  std::vector<int> by = {0, 1, 0, 1};
  for (int i = 0; i < 4; ++i) {
    bx.at(i, 0) = data.train_x.at(i, 0);
    bx.at(i, 1) = data.train_x.at(i, 1);
  }
  CHECK_THROWS_WITH_AS(trainer.train_step(bx, by),
                       doctest::Contains("train_step aborted at step 0"), std::runtime_error);
}

TEST_CASE("config validation rejects bad hyperparameters") {
  TrainConfig cfg = tiny_config();
  cfg.mc_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.weight_decay = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.grad_clip_norm = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.beta_end = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
