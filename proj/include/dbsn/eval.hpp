#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dbsn/dataset.hpp"
#include "dbsn/predict.hpp"
#include "dbsn/trainer.hpp"

namespace dbsn {

// Uncertainty-quality instrumentation over trained models: calibration,
// predictive entropy, gradient-sign attacks, OOD entropy CDFs and MC-sample
// sweeps.

struct CalibrationBin {
  double midpoint = 0.0;
  double confidence = 0.0;  // mean confidence of members, 0 for empty bins
  double accuracy = 0.0;
  int count = 0;
};

struct CalibrationReport {
  int num_bins = 0;
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
};

// Equal-width bins on (0, 1]; confidence is the max class probability, ties at
// bin edges go to the lower bin.
CalibrationReport ece(const PredictiveDistribution& pred, const std::vector<int>& labels,
                      int num_bins);

// per-bin (midpoint, accuracy, confidence, count) rows for plotting
std::vector<std::array<double, 4>> reliability_data(const CalibrationReport& report);
void write_reliability_csv(const CalibrationReport& report, const std::string& path);

// -sum p log p (natural log, 0 log 0 := 0); rejects rows off the simplex
// beyond 1e-6.
double predictive_entropy(const double* row, int num_classes);
double predictive_entropy(const std::vector<double>& row);

double mean_predictive_entropy(const PredictiveDistribution& pred);
double error_rate(const PredictiveDistribution& pred, const std::vector<int>& labels);
// mean -log p_mean[y] of the ensemble predictive
double test_nll(const PredictiveDistribution& pred, const std::vector<int>& labels);

// Gradient-sign attack against the posterior predictive: the sign gradient is
// of the NLL of the S_attack-sample mean probability. eps_frac scales the
// per-feature input range; results are clamped to the recorded data domain.
Matrix fgsm_attack(const Matrix& x, const std::vector<int>& y, const TrainedModel& model,
                   double eps_frac, int s_attack, std::uint64_t seed,
                   const std::vector<double>& feat_min, const std::vector<double>& feat_max);

// Iterated variant: per-step size eps_frac/iters, re-clamped each step into
// the eps ball around x and the data domain. iters = 1 coincides with FGSM.
Matrix bim_attack(const Matrix& x, const std::vector<int>& y, const TrainedModel& model,
                  double eps_frac, int iters, int s_attack, std::uint64_t seed,
                  const std::vector<double>& feat_min, const std::vector<double>& feat_max);

struct EntropyCurve {
  std::vector<double> eps_sizes;     // strictly increasing fractions of input range
  std::vector<double> mean_entropy;  // each in [0, ln C]
  std::vector<double> accuracy;
};

EntropyCurve attack_entropy_curve(const TrainedModel& model, const Matrix& x,
                                  const std::vector<int>& y, const std::vector<double>& eps_fracs,
                                  int s_attack, std::uint64_t seed,
                                  const std::vector<double>& feat_min,
                                  const std::vector<double>& feat_max, bool use_bim = false,
                                  int bim_iters = 3);
void write_entropy_curve_csv(const EntropyCurve& curve, const std::string& path);

// sorted (entropy, fraction <= entropy) rows over an OOD set
struct CdfTable {
  std::vector<double> entropy;
  std::vector<double> fraction;
};

CdfTable ood_entropy_cdf(const TrainedModel& model, const Matrix& ood_x, int s, std::uint64_t seed);
void write_cdf_csv(const CdfTable& table, const std::string& path);

// Bayes-ensemble quality as a function of the MC sample count. Member s is
// shared across sweep entries (nested prefix means), so curves are comparable.
struct McSweepRow {
  int samples = 0;
  double nll = 0.0;
  double error = 0.0;
  double ece = 0.0;
};

std::vector<McSweepRow> mc_sweep(const TrainedModel& model, const Matrix& x,
                                 const std::vector<int>& y, const std::vector<int>& sample_counts,
                                 std::uint64_t seed, int ece_bins = 15);
void write_mc_sweep_csv(const std::vector<McSweepRow>& rows, const std::string& path);

}  // namespace dbsn
