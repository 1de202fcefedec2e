#include "dbsn/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dbsn/parallel.hpp"

namespace dbsn {

namespace {

int argmax_row(const Matrix& m, int i) {
  int best = 0;
  for (int j = 1; j < m.cols; ++j) {
    if (m.at(i, j) > m.at(i, best)) best = j;
  }
  return best;
}

std::ofstream open_csv(const std::string& path, const char* what) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot open " + path);
  return out;
}

void print_row(std::ofstream& out, std::initializer_list<double> vals) {
  char buf[64];
  bool first = true;
  for (double v : vals) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << (first ? "" : ",") << buf;
    first = false;
  }
  out << "\n";
}

}  // namespace

CalibrationReport ece(const PredictiveDistribution& pred, const std::vector<int>& labels,
                      int num_bins) {
  if (num_bins < 1) throw std::invalid_argument("ece: need num_bins >= 1");
  const int n = pred.probs.rows;
  if (n == 0) throw std::invalid_argument("ece: empty dataset");
  if (n != static_cast<int>(labels.size())) throw std::invalid_argument("ece: label count mismatch");

  CalibrationReport report;
  report.num_bins = num_bins;
  report.bins.resize(num_bins);
  for (int b = 0; b < num_bins; ++b) {
    report.bins[b].midpoint = (b + 0.5) / num_bins;
  }

  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<int> correct(num_bins, 0);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= pred.probs.cols) {
      throw std::invalid_argument("ece: label out of range");
    }
    const int hat = argmax_row(pred.probs, i);
    const double conf = pred.probs.at(i, hat);
    // scan for the half-open bin ((b)/B, (b+1)/B]; edge values fall low
    int bin = num_bins - 1;
    for (int b = 0; b < num_bins; ++b) {
      if (conf <= static_cast<double>(b + 1) / num_bins) {
        bin = b;
        break;
      }
    }
    report.bins[bin].count += 1;
    conf_sum[bin] += conf;
    if (hat == labels[i]) correct[bin] += 1;
  }

  double ece_acc = 0.0;
  for (int b = 0; b < num_bins; ++b) {
    auto& bin = report.bins[b];
    if (bin.count > 0) {
      bin.confidence = conf_sum[b] / bin.count;
      bin.accuracy = static_cast<double>(correct[b]) / bin.count;
      ece_acc += (static_cast<double>(bin.count) / n) * std::abs(bin.accuracy - bin.confidence);
    }
  }
  report.ece = ece_acc;
  return report;
}

std::vector<std::array<double, 4>> reliability_data(const CalibrationReport& report) {
  std::vector<std::array<double, 4>> rows;
  for (const auto& bin : report.bins) {
    rows.push_back({bin.midpoint, bin.accuracy, bin.confidence, static_cast<double>(bin.count)});
  }
  return rows;
}

void write_reliability_csv(const CalibrationReport& report, const std::string& path) {
  auto out = open_csv(path, "write_reliability_csv");
  out << "midpoint,accuracy,confidence,count\n";
  for (const auto& row : reliability_data(report)) {
    print_row(out, {row[0], row[1], row[2], row[3]});
  }
}

double predictive_entropy(const double* row, int num_classes) {
  double total = 0.0, h = 0.0;
  for (int j = 0; j < num_classes; ++j) {
    const double p = row[j];
    if (p < 0.0) throw std::invalid_argument("predictive_entropy: negative probability");
    total += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("predictive_entropy: row off the simplex");
  }
  return h;
}

double predictive_entropy(const std::vector<double>& row) {
  return predictive_entropy(row.data(), static_cast<int>(row.size()));
}

double mean_predictive_entropy(const PredictiveDistribution& pred) {
  double acc = 0.0;
  for (int i = 0; i < pred.probs.rows; ++i) {
    acc += predictive_entropy(pred.probs.row(i), pred.probs.cols);
  }
  return pred.probs.rows > 0 ? acc / pred.probs.rows : 0.0;
}

double error_rate(const PredictiveDistribution& pred, const std::vector<int>& labels) {
  int wrong = 0;
  for (int i = 0; i < pred.probs.rows; ++i) {
    if (argmax_row(pred.probs, i) != labels[i]) ++wrong;
  }
  return pred.probs.rows > 0 ? static_cast<double>(wrong) / pred.probs.rows : 0.0;
}

double test_nll(const PredictiveDistribution& pred, const std::vector<int>& labels) {
  double acc = 0.0;
  for (int i = 0; i < pred.probs.rows; ++i) {
    const double p = std::max(pred.probs.at(i, labels[i]), 1e-300);
    acc -= std::log(p);
  }
  return pred.probs.rows > 0 ? acc / pred.probs.rows : 0.0;
}

namespace {

// d NLL / d x of the S-sample mean predictive at (x, y)
Matrix predictive_nll_input_grad(const Matrix& x, const std::vector<int>& y,
                                 const TrainedModel& model, int s_attack, std::uint64_t seed) {
  Tape tape;
  Tensor xt = Tensor::leaf({x.rows, x.cols}, x.data, /*requires_grad=*/true);
  Tensor prob_acc;
  for (int s = 0; s < s_attack; ++s) {
    Tensor probs = softmax(model.forward_logits(xt, seed, static_cast<std::uint64_t>(s)), 1);
    prob_acc = prob_acc.defined() ? add(prob_acc, probs) : probs;
  }
  Tensor mean_prob = mul_scalar(prob_acc, 1.0 / s_attack);
  Tensor nll = neg(mean(log(gather(mean_prob, y))));
  tape.backward(nll);

  Matrix grad(x.rows, x.cols);
  grad.data = xt.grad_ref();
  return grad;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_domain(const Matrix& x, const std::vector<double>& lo, const std::vector<double>& hi) {
  if (static_cast<int>(lo.size()) != x.cols || static_cast<int>(hi.size()) != x.cols) {
    throw std::invalid_argument("attack: data-domain bounds do not match input width");
  }
}

}  // namespace

Matrix fgsm_attack(const Matrix& x, const std::vector<int>& y, const TrainedModel& model,
                   double eps_frac, int s_attack, std::uint64_t seed,
                   const std::vector<double>& feat_min, const std::vector<double>& feat_max) {
  if (eps_frac < 0.0) throw std::invalid_argument("fgsm_attack: eps must be >= 0");
  if (s_attack < 1) throw std::invalid_argument("fgsm_attack: need s_attack >= 1");
  check_domain(x, feat_min, feat_max);
  if (eps_frac == 0.0) return x;

  Matrix grad = predictive_nll_input_grad(x, y, model, s_attack, subseed(seed, {stream::kAttack}));
  Matrix adv = x;
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) {
      const double eps = eps_frac * (feat_max[j] - feat_min[j]);
      double v = x.at(i, j) + eps * sign(grad.at(i, j));
      v = std::clamp(v, feat_min[j], feat_max[j]);
      adv.at(i, j) = v;
    }
  }
  return adv;
}

Matrix bim_attack(const Matrix& x, const std::vector<int>& y, const TrainedModel& model,
                  double eps_frac, int iters, int s_attack, std::uint64_t seed,
                  const std::vector<double>& feat_min, const std::vector<double>& feat_max) {
  if (iters < 1) throw std::invalid_argument("bim_attack: need iters >= 1");
  if (eps_frac < 0.0) throw std::invalid_argument("bim_attack: eps must be >= 0");
  if (s_attack < 1) throw std::invalid_argument("bim_attack: need s_attack >= 1");
  check_domain(x, feat_min, feat_max);
  if (eps_frac == 0.0) return x;

  Matrix adv = x;
  const double step_frac = eps_frac / iters;
  for (int it = 0; it < iters; ++it) {
    Matrix grad = predictive_nll_input_grad(
        adv, y, model, s_attack, subseed(seed, {stream::kAttack, static_cast<std::uint64_t>(it)}));
    for (int i = 0; i < x.rows; ++i) {
      for (int j = 0; j < x.cols; ++j) {
        const double range = feat_max[j] - feat_min[j];
        double v = adv.at(i, j) + step_frac * range * sign(grad.at(i, j));
        const double eps = eps_frac * range;
        v = std::clamp(v, x.at(i, j) - eps, x.at(i, j) + eps);  // stay in the eps ball
        v = std::clamp(v, feat_min[j], feat_max[j]);
        adv.at(i, j) = v;
      }
    }
  }
  return adv;
}

EntropyCurve attack_entropy_curve(const TrainedModel& model, const Matrix& x,
                                  const std::vector<int>& y, const std::vector<double>& eps_fracs,
                                  int s_attack, std::uint64_t seed,
                                  const std::vector<double>& feat_min,
                                  const std::vector<double>& feat_max, bool use_bim,
                                  int bim_iters) {
  for (std::size_t i = 1; i < eps_fracs.size(); ++i) {
    if (!(eps_fracs[i] > eps_fracs[i - 1])) {
      throw std::invalid_argument("attack_entropy_curve: eps sizes must be strictly increasing");
    }
  }
  EntropyCurve curve;
  for (double eps : eps_fracs) {
    Matrix adv = use_bim ? bim_attack(x, y, model, eps, bim_iters, s_attack, seed, feat_min, feat_max)
                         : fgsm_attack(x, y, model, eps, s_attack, seed, feat_min, feat_max);
    PredictiveDistribution pred =
        bayes_ensemble_predict(model, adv, s_attack, subseed(seed, {stream::kEval, 7}));
    curve.eps_sizes.push_back(eps);
    curve.mean_entropy.push_back(mean_predictive_entropy(pred));
    curve.accuracy.push_back(1.0 - error_rate(pred, y));
  }
  return curve;
}

void write_entropy_curve_csv(const EntropyCurve& curve, const std::string& path) {
  auto out = open_csv(path, "write_entropy_curve_csv");
  out << "eps,mean_entropy,accuracy\n";
  for (std::size_t i = 0; i < curve.eps_sizes.size(); ++i) {
    print_row(out, {curve.eps_sizes[i], curve.mean_entropy[i], curve.accuracy[i]});
  }
}

CdfTable ood_entropy_cdf(const TrainedModel& model, const Matrix& ood_x, int s, std::uint64_t seed) {
  if (ood_x.rows == 0) throw std::invalid_argument("ood_entropy_cdf: empty OOD set");
  PredictiveDistribution pred = bayes_ensemble_predict(model, ood_x, s, seed);
  CdfTable table;
  table.entropy.resize(ood_x.rows);
  for (int i = 0; i < ood_x.rows; ++i) {
    table.entropy[i] = predictive_entropy(pred.probs.row(i), pred.probs.cols);
  }
  std::sort(table.entropy.begin(), table.entropy.end());
  table.fraction.resize(ood_x.rows);
  for (int i = 0; i < ood_x.rows; ++i) {
    table.fraction[i] = static_cast<double>(i + 1) / ood_x.rows;
  }
  return table;
}

void write_cdf_csv(const CdfTable& table, const std::string& path) {
  auto out = open_csv(path, "write_cdf_csv");
  out << "entropy,fraction\n";
  for (std::size_t i = 0; i < table.entropy.size(); ++i) {
    print_row(out, {table.entropy[i], table.fraction[i]});
  }
}

std::vector<McSweepRow> mc_sweep(const TrainedModel& model, const Matrix& x,
                                 const std::vector<int>& y, const std::vector<int>& sample_counts,
                                 std::uint64_t seed, int ece_bins) {
  if (sample_counts.empty()) throw std::invalid_argument("mc_sweep: no sample counts");
  int max_s = 0;
  for (int s : sample_counts) {
    if (s < 1) throw std::invalid_argument("mc_sweep: sample counts must be >= 1");
    max_s = std::max(max_s, s);
  }

  // member s is identical across sweep entries (nested reuse)
  std::vector<Matrix> members(max_s);
  parallel_for(max_s, [&](int i) {
    members[i] = model.forward_probs(x, seed, static_cast<std::uint64_t>(i));
  });

  std::vector<int> sorted_counts = sample_counts;
  std::sort(sorted_counts.begin(), sorted_counts.end());

  std::vector<McSweepRow> rows;
  Matrix acc(x.rows, model.spec.num_classes);
  int used = 0;
  for (int target : sorted_counts) {
    while (used < target) {
      for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += members[used].data[j];
      ++used;
    }
    PredictiveDistribution pred;
    pred.num_mc_samples = target;
    pred.probs = acc;
    for (auto& p : pred.probs.data) p /= used;
    pred.validate();

    McSweepRow row;
    row.samples = target;
    row.nll = test_nll(pred, y);
    row.error = error_rate(pred, y);
    row.ece = ece(pred, y, ece_bins).ece;
    rows.push_back(row);
  }
  return rows;
}

void write_mc_sweep_csv(const std::vector<McSweepRow>& rows, const std::string& path) {
  auto out = open_csv(path, "write_mc_sweep_csv");
  out << "samples,nll,error,ece\n";
  for (const auto& row : rows) {
    print_row(out, {static_cast<double>(row.samples), row.nll, row.error, row.ece});
  }
}

}  // namespace dbsn
