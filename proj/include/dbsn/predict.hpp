#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbsn/dataset.hpp"
#include "dbsn/trainer.hpp"

namespace dbsn {

// Posterior predictive by Bayes ensemble: the mean of per-sample class
// probabilities over S stochastic member forwards (probability averaging,
// not logit averaging).

struct PredictiveDistribution {
  Matrix probs;  // [batch, num_classes], rows on the simplex
  int num_mc_samples = 0;
  std::vector<Matrix> member_probs;  // retained when requested

  void validate() const;  // row-stochasticity within 1e-6
};

// Member s draws from substreams keyed by (seed, s); evaluation is
// reproducible and member evaluations may run in parallel (reduction happens
// in sample order, so results do not depend on the thread count).
PredictiveDistribution bayes_ensemble_predict(const TrainedModel& model, const Matrix& x, int s,
                                              std::uint64_t seed, bool keep_members = false);

// Separate weights per sampled structure: draws s_struct structures from the
// learned posterior, trains an independent weight store for each with its
// structure frozen, and predicts by uniform probability averaging.
// `replicate_single` trains every member against structure 0 instead (the
// matched control: same structure, different weight seeds).
struct RefinedEnsemble {
  std::vector<TrainedModel> members;
  std::vector<std::vector<std::vector<double>>> structures;  // per member, per edge
};

RefinedEnsemble structure_ensemble_refinement(const TrainedModel& base, const Dataset& data,
                                              int s_struct, const TrainConfig& member_cfg,
                                              std::uint64_t seed, bool replicate_single = false);

PredictiveDistribution refined_ensemble_predict(const RefinedEnsemble& ensemble, const Matrix& x);

// row = datum: true label, predicted label, per-class probabilities, entropy
void export_predictions_csv(const PredictiveDistribution& pred, const std::vector<int>& labels,
                            const std::string& path);

}  // namespace dbsn
