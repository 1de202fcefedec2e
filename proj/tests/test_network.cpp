#include <doctest.h>

#include <cmath>

#include "dbsn/network.hpp"

using namespace dbsn;

namespace {

NetworkSpec small_spec(int num_nodes = 3, int width = 2, int cells = 1) {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.num_classes = 2;
  spec.num_cells = cells;
  spec.cell.num_nodes = num_nodes;
  spec.cell.node_width = width;
  spec.cell.op_kinds = {OpKind::Zero, OpKind::Identity, OpKind::Affine, OpKind::AffineRelu};
  return spec;
}

void set_identity_scaled(AffineParam& p, double s) {
  const int n = p.weight.shape()[0];
  auto& w = p.weight.values();
  std::fill(w.begin(), w.end(), 0.0);
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i) * n + i] = s;
  std::fill(p.bias.values().begin(), p.bias.values().end(), 0.0);
}

EdgeSample one_hot_edge(int k, int hot) {
  std::vector<double> la(k, -100.0), a(k, 0.0);
  la[hot] = 0.0;
  a[hot] = 1.0;
  return {Tensor::leaf({k}, la), Tensor::leaf({k}, a)};
}

}  // namespace

TEST_CASE("edge_forward mixes operations by alpha") {
  Tensor x = Tensor::leaf({1, 2}, {1.0, 2.0});
  std::vector<OpKind> kinds = {OpKind::Identity, OpKind::Zero};
  std::vector<AffineParam> weights(2);

  SUBCASE("one-hot on zero gives the zero tensor") {
    Tensor alpha = Tensor::leaf({2}, {0.0, 1.0});
    Tensor out = edge_forward(x, alpha, weights, kinds);
    CHECK(out.values()[0] == 0.0);
    CHECK(out.values()[1] == 0.0);
  }
  SUBCASE("identity weighted 0.3 scales the input") {
    Tensor alpha = Tensor::leaf({2}, {0.3, 0.7});
    Tensor out = edge_forward(x, alpha, weights, kinds);
    CHECK(out.values()[0] == doctest::Approx(0.3));
    CHECK(out.values()[1] == doctest::Approx(0.6));
  }
  SUBCASE("uniform mix of two identities reproduces the input") {
    std::vector<OpKind> two_ids = {OpKind::Identity, OpKind::Identity};
    Tensor alpha = Tensor::leaf({2}, {0.5, 0.5});
    Tensor out = edge_forward(x, alpha, weights, two_ids);
    CHECK(out.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.values()[1] == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("edge output is the exact convex interpolation of op outputs") {
  NetworkSpec spec = small_spec(2, 3);
  spec.input_dim = 3;
  WeightStore w = WeightStore::init(spec, 3);
  Tensor x = Tensor::leaf({2, 3}, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75});
  std::vector<OpKind> kinds = {OpKind::Identity, OpKind::Affine};
  std::vector<AffineParam> params = {AffineParam{}, w.edge_ops[0][0][2]};

  Tensor affine_only = edge_forward(x, Tensor::leaf({2}, {0.0, 1.0}), params, kinds);
  for (double a : {0.0, 0.25, 0.9, 1.0}) {
    Tensor mixed = edge_forward(x, Tensor::leaf({2}, {a, 1.0 - a}), params, kinds);
    for (std::size_t i = 0; i < mixed.values().size(); ++i) {
      const double expect = a * x.values()[i] + (1.0 - a) * affine_only.values()[i];
      CHECK(mixed.values()[i] == doctest::Approx(expect).epsilon(1e-12));
      const double lo = std::min(x.values()[i], affine_only.values()[i]);
      const double hi = std::max(x.values()[i], affine_only.values()[i]);
      CHECK(mixed.values()[i] >= lo - 1e-12);
      CHECK(mixed.values()[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("cell_forward computes nodes in topological order") {
  SUBCASE("all edges one-hot on zero: output is concat(zeros, input)") {
    NetworkSpec spec = small_spec(3, 2);
    WeightStore w = WeightStore::init(spec, 1);
    StructureSample alpha;
    for (int e = 0; e < 3; ++e) alpha.edges.push_back(one_hot_edge(4, 0));
    Tensor x = Tensor::leaf({1, 2}, {3.0, -2.0});
    Tensor out = cell_forward(x, alpha, w.edge_ops[0], spec.cell);
    CHECK(out.shape() == Shape{1, 6});
    CHECK(out.values() == std::vector<double>{0, 0, 0, 0, 3.0, -2.0});
  }
  SUBCASE("B = 2 single identity edge doubles the input") {
    NetworkSpec spec = small_spec(2, 2);
    WeightStore w = WeightStore::init(spec, 1);
    StructureSample alpha;
    alpha.edges.push_back(one_hot_edge(4, 1));
    Tensor x = Tensor::leaf({1, 2}, {1.0, 4.0});
    Tensor out = cell_forward(x, alpha, w.edge_ops[0], spec.cell);
    CHECK(out.values() == std::vector<double>{1.0, 4.0, 1.0, 4.0});
  }
  SUBCASE("B = 3 hand-evaluated DAG with scaled-identity affine ops") {
    NetworkSpec spec = small_spec(3, 2);
    spec.cell.op_kinds = {OpKind::Identity, OpKind::Affine};
    WeightStore w = WeightStore::init(spec, 1);
    for (int e = 0; e < 3; ++e) set_identity_scaled(w.edge_ops[0][e][1], 2.0);
    // every edge mixes 0.25 * identity + 0.75 * (2 x) = 1.75 x
    StructureSample alpha;
    for (int e = 0; e < 3; ++e) {
      alpha.edges.push_back({Tensor::leaf({2}, {std::log(0.25), std::log(0.75)}),
                             Tensor::leaf({2}, {0.25, 0.75})});
    }
    Tensor x = Tensor::leaf({1, 2}, {1.0, -1.0});
    Tensor out = cell_forward(x, alpha, w.edge_ops[0], spec.cell);
    // N2 = 1.75 x, N3 = 1.75 x + 1.75 N2 = 4.8125 x, output [N2, N3, x]
    CHECK(out.values()[0] == doctest::Approx(1.75));
    CHECK(out.values()[2] == doctest::Approx(4.8125));
    CHECK(out.values()[4] == doctest::Approx(1.0));
  }
}

TEST_CASE("network_forward shapes, determinism and hand case") {
  SUBCASE("zero inputs with zero head bias give row-constant logits") {
    NetworkSpec spec = small_spec(3, 4, 2);
    spec.num_classes = 3;
    WeightStore w = WeightStore::init(spec, 5);
    StructureSample alpha = uniform_structure(spec.cell);
    Tensor x = Tensor::zeros({4, 2});
    Tensor logits = network_forward(x, alpha, w, spec);
    CHECK(logits.shape() == Shape{4, 3});
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 3; ++j) CHECK(logits.at(i, j) == logits.at(0, j));
    }
  }
  SUBCASE("fixed seed and alpha give bitwise-repeatable logits") {
    NetworkSpec spec = small_spec(4, 3, 2);
    WeightStore w = WeightStore::init(spec, 11);
    StructureLogits theta = StructureLogits::init(spec.cell, 11);
    StructureSample alpha = sample_structure(theta, {0.8, 1.5}, 42, 0, 0);
    Tensor x = Tensor::leaf({3, 2}, {0.1, -0.4, 1.2, 0.9, -2.0, 0.3});
    Tensor a = network_forward(x, alpha, w, spec);
    Tensor b = network_forward(x, alpha, w, spec);
    CHECK(a.values() == b.values());
  }
  SUBCASE("one-cell B = 2 network matches hand arithmetic") {
    NetworkSpec spec = small_spec(2, 2, 1);
    spec.cell.op_kinds = {OpKind::Identity, OpKind::Zero};
    WeightStore w = WeightStore::init(spec, 1);
    set_identity_scaled(w.stem, 1.0);
    w.head.weight.values() = {1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0};  // [4, 2]
    std::fill(w.head.bias.values().begin(), w.head.bias.values().end(), 0.0);
    StructureSample alpha;
    alpha.edges.push_back({Tensor::leaf({2}, {std::log(0.5), std::log(0.5)}),
                           Tensor::leaf({2}, {0.5, 0.5})});
    Tensor x = Tensor::leaf({1, 2}, {2.0, -4.0});
    // node2 = 0.5 x, output = [0.5 x, x], logits = 1.5 x
    Tensor logits = network_forward(x, alpha, w, spec);
    CHECK(logits.values()[0] == doctest::Approx(3.0));
    CHECK(logits.values()[1] == doctest::Approx(-6.0));
  }
}

TEST_CASE("zero structure collapses to stem/downsample/head paths only") {
  NetworkSpec spec = small_spec(3, 3, 2);
  WeightStore w1 = WeightStore::init(spec, 21);
  WeightStore w2 = WeightStore::init(spec, 22);
  // share everything except the edge-op weights
  w2.stem = w1.stem;
  w2.downsample = w1.downsample;
  w2.head = w1.head;

  StructureSample zero_alpha;
  for (int e = 0; e < spec.cell.num_edges(); ++e) zero_alpha.edges.push_back(one_hot_edge(4, 0));
  Tensor x = Tensor::leaf({2, 2}, {0.3, 1.1, -0.5, 0.8});
  Tensor a = network_forward(x, zero_alpha, w1, spec);
  Tensor b = network_forward(x, zero_alpha, w2, spec);
  CHECK(a.values() == b.values());
}

TEST_CASE("gradients flow into both alpha and weights") {
  NetworkSpec spec = small_spec(3, 2, 1);
  WeightStore w = WeightStore::init(spec, 31);
  Tensor x = Tensor::leaf({2, 2}, {0.4, -0.2, 1.0, 0.6});

  auto forward_with_alpha0 = [&](const Tensor& a0) {
    StructureSample alpha = uniform_structure(spec.cell);
    alpha.edges[0].alpha = a0;
    Tensor logits = network_forward(x, alpha, w, spec);
    return mean(mul(logits, logits));
  };
  Tensor a0 = Tensor::leaf({4}, {0.1, 0.2, 0.3, 0.4});
  CHECK(finite_difference_check<double>(forward_with_alpha0, a0, 1e-6) < 1e-6);
  {
    Tape tape;
    Tensor a0g = Tensor::leaf({4}, a0.values(), true);
    tape.backward(forward_with_alpha0(a0g));
    double norm = 0.0;
    for (double g : a0g.grad()) norm += g * g;
    CHECK(norm > 0.0);
  }

  auto forward_with_edge_weight = [&](const Tensor& wm) {
    WeightStore local = w;
    local.edge_ops[0][0][2].weight = wm;
    StructureSample alpha = uniform_structure(spec.cell);
    Tensor logits = network_forward(x, alpha, local, spec);
    return mean(mul(logits, logits));
  };
  Tensor wm = Tensor::leaf({2, 2}, w.edge_ops[0][0][2].weight.values());
  CHECK(finite_difference_check<double>(forward_with_edge_weight, wm, 1e-6) < 1e-6);
}

TEST_CASE("weights are shared across structure samples") {
  NetworkSpec spec = small_spec(3, 2, 1);
  WeightStore w = WeightStore::init(spec, 41);
  StructureLogits theta = StructureLogits::init(spec.cell, 41);
  Tensor x = Tensor::leaf({2, 2}, {1.0, 0.0, 0.0, 1.0});

  auto params = w.parameters();
  for (auto& p : params) p.zero_grad();

  for (int s = 0; s < 2; ++s) {
    Tape tape;
    StructureSample alpha = sample_structure(theta, {1.0, 1.0}, 7, 0, s);
    Tensor logits = network_forward(x, alpha, w, spec);
    tape.backward(mean(mul(logits, logits)));
  }
  // both passes accumulated into the same parameter tensors (no copies)
  auto params_again = w.parameters();
  REQUIRE(params.size() == params_again.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(params[i].node().get() == params_again[i].node().get());
  }
  double head_norm = 0.0;
  for (double g : w.head.weight.grad()) head_norm += g * g;
  CHECK(head_norm > 0.0);
}

TEST_CASE("spec bookkeeping") {
  NetworkSpec spec = small_spec(4, 8, 3);
  CHECK(StructureLogits::init(spec.cell, 1).num_edges() == 6);  // B(B-1)/2
  const std::vector<int> widths = spec.cell_widths();
  CHECK(widths[0] == 8);
  CHECK(widths[1] == static_cast<int>(std::ceil(0.4 * 4 * 8)));   // 13
  CHECK(widths[2] == static_cast<int>(std::ceil(0.4 * 4 * 13)));  // 21
  CHECK(spec.final_width() == 4 * widths[2]);

  NetworkSpec bad = spec;
  bad.cell.num_nodes = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.cell.op_kinds = {OpKind::Zero};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CHECK(op_kind_from_string("affine_relu") == OpKind::AffineRelu);
  CHECK_THROWS_AS(op_kind_from_string("conv3x3"), std::invalid_argument);
}

TEST_CASE("normalization toggle standardizes node features") {
  NetworkSpec spec = small_spec(2, 4, 1);
  spec.cell.normalize = true;
  WeightStore w = WeightStore::init(spec, 51);
  StructureSample alpha = uniform_structure(spec.cell);
  Tensor x = Tensor::leaf({3, 4}, {0.5, -1.0, 2.0, 0.3, -0.7, 1.1, 0.2, -0.4, 1.7, 0.6, -1.3, 0.9});
  Tensor out = cell_forward(x, alpha, w.edge_ops[0], spec.cell);
  // node 2 occupies the first 4 columns; each row is standardized
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 4; ++j) mean += out.at(i, j);
    mean /= 4;
    for (int j = 0; j < 4; ++j) var += (out.at(i, j) - mean) * (out.at(i, j) - mean);
    var /= 4;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}
