#include <doctest.h>

#include <cmath>
#include <fstream>

#include "dbsn/eval.hpp"
#include "dbsn/predict.hpp"

using namespace dbsn;

namespace {

NetworkSpec predict_spec() {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.num_classes = 2;
  spec.num_cells = 1;
  spec.cell.num_nodes = 3;
  spec.cell.node_width = 4;
  spec.cell.op_kinds = {OpKind::Zero, OpKind::Identity, OpKind::Affine, OpKind::AffineRelu};
  return spec;
}

TrainedModel quick_model(Method method, int epochs = 3, std::uint64_t seed = 23) {
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.mc_samples = 2;
  cfg.seed = seed;
  return train_model(method, predict_spec(), cfg, data);
}

}  // namespace

TEST_CASE("ensemble probabilities are row-stochastic and deterministic") {
  TrainedModel model = quick_model(Method::Dbsn);
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);

  PredictiveDistribution pred = bayes_ensemble_predict(model, data.test_x, 16, 99);
  CHECK(pred.probs.rows == 48);
  CHECK(pred.probs.cols == 2);
  for (int i = 0; i < pred.probs.rows; ++i) {
    double total = 0.0;
    for (int j = 0; j < pred.probs.cols; ++j) {
      CHECK(pred.probs.at(i, j) >= 0.0);
      total += pred.probs.at(i, j);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  PredictiveDistribution again = bayes_ensemble_predict(model, data.test_x, 16, 99);
  CHECK(pred.probs.data == again.probs.data);
}

TEST_CASE("point-structure model: every member identical, ensemble equals one pass") {
  TrainedModel model = quick_model(Method::Map);
  CHECK(model.eval_sharp().beta == 0.0);
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);

  PredictiveDistribution one = bayes_ensemble_predict(model, data.test_x, 1, 7);
  PredictiveDistribution many = bayes_ensemble_predict(model, data.test_x, 12, 7, true);
  for (std::size_t i = 0; i < one.probs.data.size(); ++i) {
    CHECK(many.probs.data[i] == doctest::Approx(one.probs.data[i]).epsilon(1e-12));
  }
  for (const Matrix& member : many.member_probs) {
    CHECK(member.data == many.member_probs[0].data);
  }
}

TEST_CASE("S = 1 equals the single member forward under the same substream") {
  TrainedModel model = quick_model(Method::Dbsn);
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);
  PredictiveDistribution one = bayes_ensemble_predict(model, data.test_x, 1, 31);
  Matrix member = model.forward_probs(data.test_x, 31, 0);
  CHECK(one.probs.data == member.data);
}

TEST_CASE("permuting the batch permutes the rows identically") {
  TrainedModel model = quick_model(Method::Dbsn);
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);

  Matrix reversed(data.test_x.rows, data.test_x.cols);
  for (int i = 0; i < data.test_x.rows; ++i) {
    for (int j = 0; j < data.test_x.cols; ++j) {
      reversed.at(i, j) = data.test_x.at(data.test_x.rows - 1 - i, j);
    }
  }
  PredictiveDistribution a = bayes_ensemble_predict(model, data.test_x, 8, 11);
  PredictiveDistribution b = bayes_ensemble_predict(model, reversed, 8, 11);
  for (int i = 0; i < a.probs.rows; ++i) {
    for (int j = 0; j < a.probs.cols; ++j) {
      CHECK(a.probs.at(i, j) == doctest::Approx(b.probs.at(a.probs.rows - 1 - i, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("member variance is zero at beta = 0 and positive for the structure posterior") {
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);
  auto member_variance = [&data](const TrainedModel& model) {
    PredictiveDistribution pred = bayes_ensemble_predict(model, data.test_x, 10, 3, true);
    double var = 0.0;
    for (int i = 0; i < pred.probs.rows; ++i) {
      double mean = 0.0, sq = 0.0;
      for (const Matrix& m : pred.member_probs) {
        mean += m.at(i, 0);
        sq += m.at(i, 0) * m.at(i, 0);
      }
      mean /= pred.member_probs.size();
      var += sq / pred.member_probs.size() - mean * mean;
    }
    return var / pred.probs.rows;
  };
  CHECK(member_variance(quick_model(Method::Map)) == 0.0);
  CHECK(member_variance(quick_model(Method::Dbsn)) > 0.0);
}

TEST_CASE("structure ensemble refinement") {
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);
  TrainedModel base = quick_model(Method::Dbsn);
  TrainConfig member_cfg;
  member_cfg.epochs = 3;
  member_cfg.batch_size = 32;
  member_cfg.mc_samples = 1;
  member_cfg.seed = 77;

  SUBCASE("a single member reduces to a fixed-structure point model") {
    RefinedEnsemble one = structure_ensemble_refinement(base, data, 1, member_cfg, 42);
    REQUIRE(one.members.size() == 1);
    CHECK(one.members[0].method == Method::Map);
    REQUIRE(!one.members[0].fixed_alphas.empty());
    PredictiveDistribution via_ensemble = refined_ensemble_predict(one, data.test_x);
    PredictiveDistribution via_member = bayes_ensemble_predict(one.members[0], data.test_x, 1, 0);
    CHECK(via_ensemble.probs.data == via_member.probs.data);
  }
  SUBCASE("members trained on distinct structures disagree on held-out data") {
    RefinedEnsemble ens = structure_ensemble_refinement(base, data, 3, member_cfg, 42);
    CHECK(ens.structures[0] != ens.structures[1]);
    Matrix p0 = ens.members[0].forward_probs(data.test_x, 0, 0);
    Matrix p1 = ens.members[1].forward_probs(data.test_x, 0, 0);
    double disagreement = 0.0;
    for (std::size_t i = 0; i < p0.data.size(); ++i) disagreement += std::abs(p0.data[i] - p1.data[i]);
    CHECK(disagreement > 0.0);
  }
  SUBCASE("the replicated control shares one structure but not weights") {
    RefinedEnsemble ctrl = structure_ensemble_refinement(base, data, 3, member_cfg, 42, true);
    CHECK(ctrl.structures[0] == ctrl.structures[1]);
    CHECK(ctrl.structures[1] == ctrl.structures[2]);
    CHECK(ctrl.members[0].weights.head.weight.values() !=
          ctrl.members[1].weights.head.weight.values());
  }
}

TEST_CASE("prediction CSV export carries labels, argmax, probabilities, entropy") {
  TrainedModel model = quick_model(Method::Map, 1);
  Dataset data = gen_dataset(DatasetKind::TwoMoons, 96, 48, 0.1, 5);
  PredictiveDistribution pred = bayes_ensemble_predict(model, data.test_x, 2, 1);
  const std::string path = "/tmp/dbsn_test_predictions.csv";
  export_predictions_csv(pred, data.test_y, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "label,predicted,p0,p1,entropy");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 48);
}
