#include "dbsn/predict.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dbsn/eval.hpp"
#include "dbsn/parallel.hpp"

namespace dbsn {

void PredictiveDistribution::validate() const {
  for (int i = 0; i < probs.rows; ++i) {
    double total = 0.0;
    for (int j = 0; j < probs.cols; ++j) {
      const double p = probs.at(i, j);
      if (p < 0.0) throw std::runtime_error("predictive distribution: negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::runtime_error("predictive distribution: row does not sum to 1");
    }
  }
}

PredictiveDistribution bayes_ensemble_predict(const TrainedModel& model, const Matrix& x, int s,
                                              std::uint64_t seed, bool keep_members) {
  if (s < 1) throw std::invalid_argument("bayes_ensemble_predict: need S >= 1");
  std::vector<Matrix> members(s);
  parallel_for(s, [&](int i) {
    members[i] = model.forward_probs(x, seed, static_cast<std::uint64_t>(i));
  });

  PredictiveDistribution out;
  out.num_mc_samples = s;
  out.probs = Matrix(x.rows, model.spec.num_classes);
  for (int i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < out.probs.data.size(); ++j) out.probs.data[j] += members[i].data[j];
  }
  const double inv = 1.0 / s;
  for (auto& p : out.probs.data) p *= inv;
  if (keep_members) out.member_probs = std::move(members);
  out.validate();
  return out;
}

RefinedEnsemble structure_ensemble_refinement(const TrainedModel& base, const Dataset& data,
                                              int s_struct, const TrainConfig& member_cfg,
                                              std::uint64_t seed, bool replicate_single) {
  if (s_struct < 1) throw std::invalid_argument("structure_ensemble_refinement: need s_struct >= 1");

  const SharpTemp st = base.eval_sharp();
  const std::uint64_t draw_seed = subseed(seed, {stream::kEval, 1});

  RefinedEnsemble out;
  for (int m = 0; m < s_struct; ++m) {
    const int structure_id = replicate_single ? 0 : m;
    StructureSample sample =
        sample_structure(base.theta, st, draw_seed, 0, static_cast<std::uint64_t>(structure_id));
    std::vector<std::vector<double>> alphas;
    for (const EdgeSample& e : sample.edges) alphas.push_back(e.alpha.values());
    out.structures.push_back(alphas);

    TrainConfig cfg = member_cfg;
    cfg.seed = subseed(seed, {stream::kInit, static_cast<std::uint64_t>(m) + 1});
    Trainer trainer(Method::Map, base.spec, cfg, data);
    trainer.freeze_structure(alphas);
    trainer.train();
    out.members.push_back(trainer.model());
  }
  return out;
}

PredictiveDistribution refined_ensemble_predict(const RefinedEnsemble& ensemble, const Matrix& x) {
  if (ensemble.members.empty()) throw std::invalid_argument("refined_ensemble_predict: no members");
  const int s = static_cast<int>(ensemble.members.size());
  std::vector<Matrix> members(s);
  parallel_for(s, [&](int i) {
    members[i] = ensemble.members[i].forward_probs(x, 0, 0);  // members are deterministic
  });

  PredictiveDistribution out;
  out.num_mc_samples = s;
  out.probs = Matrix(x.rows, ensemble.members[0].spec.num_classes);
  for (int i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < out.probs.data.size(); ++j) out.probs.data[j] += members[i].data[j];
  }
  const double inv = 1.0 / s;
  for (auto& p : out.probs.data) p *= inv;
  out.validate();
  return out;
}

void export_predictions_csv(const PredictiveDistribution& pred, const std::vector<int>& labels,
                            const std::string& path) {
  if (pred.probs.rows != static_cast<int>(labels.size())) {
    throw std::invalid_argument("export_predictions_csv: label count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_predictions_csv: cannot open " + path);
  out << "label,predicted";
  for (int j = 0; j < pred.probs.cols; ++j) out << ",p" << j;
  out << ",entropy\n";
  char buf[64];
  for (int i = 0; i < pred.probs.rows; ++i) {
    int best = 0;
    for (int j = 1; j < pred.probs.cols; ++j) {
      if (pred.probs.at(i, j) > pred.probs.at(i, best)) best = j;
    }
    out << labels[i] << "," << best;
    for (int j = 0; j < pred.probs.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", pred.probs.at(i, j));
      out << "," << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g",
                  predictive_entropy(pred.probs.row(i), pred.probs.cols));
    out << "," << buf << "\n";
  }
}

}  // namespace dbsn
