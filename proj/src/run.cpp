#include "dbsn/run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dbsn/checkpoint.hpp"
#include "dbsn/eval.hpp"

namespace dbsn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex8(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%08llx", static_cast<unsigned long long>(h & 0xffffffffULL));
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t eval_seed(const RunConfig& cfg) { return subseed(cfg.seed, {stream::kEval, 0}); }

json evaluate_summary(const RunConfig& cfg, const Dataset& data, const TrainedModel& model, int s) {
  PredictiveDistribution pred = bayes_ensemble_predict(model, data.test_x, s, eval_seed(cfg));
  json j;
  j["method"] = to_string(model.method);
  j["seed"] = cfg.seed;
  j["mc_samples"] = s;
  j["test_error"] = error_rate(pred, data.test_y);
  j["test_nll"] = test_nll(pred, data.test_y);
  j["test_ece"] = ece(pred, data.test_y, cfg.eval.ece_bins).ece;
  j["test_mean_entropy"] = mean_predictive_entropy(pred);
  return j;
}

std::string out_dir_for(const std::string& checkpoint_path, const std::string& requested) {
  if (!requested.empty()) {
    fs::create_directories(requested);
    return requested;
  }
  return fs::path(checkpoint_path).parent_path().string();
}

}  // namespace

std::string prepare_run_dir(const RunConfig& cfg, const std::string& tag) {
  cfg.validate();
  const std::string ds = cfg.dataset.from_csv() ? "csv" : to_string(cfg.dataset.kind);
  const std::string name =
      tag + "-" + ds + "-" + hex8(cfg.config_hash()) + "-s" + std::to_string(cfg.seed);
  fs::path dir = fs::path(cfg.out_dir) / name;
  if (fs::exists(dir) && !cfg.overwrite) {
    throw std::runtime_error("run directory " + dir.string() +
                             " already exists (pass --overwrite to replace)");
  }
  fs::create_directories(dir);
  write_text((dir / "config.json").string(), cfg.to_json_text());
  return dir.string();
}

LoadedRun load_run(const std::string& checkpoint_path) {
  if (!fs::exists(checkpoint_path)) {
    throw std::runtime_error("missing checkpoint: " + checkpoint_path);
  }
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  LoadedRun run{RunConfig::from_json_text(ckpt.config_json), {}, {}};
  run.cfg.validate();
  run.data = run.cfg.build_dataset();
  Trainer trainer(run.cfg.method, run.cfg.network_spec(run.data), run.cfg.train_config(), run.data);
  trainer.load_state(ckpt.state);
  run.model = trainer.model();
  return run;
}

std::string run_train(const RunConfig& cfg, std::string* run_dir_out) {
  cfg.validate();
  Dataset data = cfg.build_dataset();
  NetworkSpec spec = cfg.network_spec(data);
  const std::string dir = prepare_run_dir(cfg, to_string(cfg.method));
  if (run_dir_out) *run_dir_out = dir;

  std::ofstream metrics(dir + "/metrics.csv");
  if (!metrics) throw std::runtime_error("cannot open metrics.csv in " + dir);
  metrics << "epoch,step,loss,nll,kl,l2,train_error,test_error,tau,beta,lr_w\n";

  Trainer trainer(cfg.method, spec, cfg.train_config(), data);
  trainer.train([&metrics](const EpochMetrics& m) {
    metrics << m.epoch << "," << m.step << "," << fmt(m.loss) << "," << fmt(m.nll) << ","
            << fmt(m.kl) << "," << fmt(m.l2) << "," << fmt(m.train_error) << ","
            << fmt(m.test_error) << "," << fmt(m.tau) << "," << fmt(m.beta) << "," << fmt(m.lr_w)
            << "\n";
  });
  metrics.close();

  save_checkpoint(dir + "/checkpoint.bin", cfg.to_json_text(), trainer.state());

  TrainedModel model = trainer.model();
  PredictiveDistribution pred =
      bayes_ensemble_predict(model, data.test_x, cfg.eval.mc_samples, eval_seed(cfg));
  export_predictions_csv(pred, data.test_y, dir + "/predictions.csv");

  json summary = evaluate_summary(cfg, data, model, cfg.eval.mc_samples);
  summary["steps"] = trainer.step();
  summary["run_dir"] = dir;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/final.json", text);
  return text;
}

std::string run_evaluate(const std::string& checkpoint_path, int mc_override,
                         const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_path);
  const int s = mc_override >= 1 ? mc_override : run.cfg.eval.mc_samples;
  const std::string dir = out_dir_for(checkpoint_path, out_dir);

  PredictiveDistribution pred =
      bayes_ensemble_predict(run.model, run.data.test_x, s, eval_seed(run.cfg));
  export_predictions_csv(pred, run.data.test_y, dir + "/eval_predictions.csv");
  CalibrationReport report = ece(pred, run.data.test_y, run.cfg.eval.ece_bins);
  write_reliability_csv(report, dir + "/reliability.csv");

  json summary = evaluate_summary(run.cfg, run.data, run.model, s);
  summary["checkpoint"] = checkpoint_path;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/eval.json", text);
  return text;
}

std::string run_attack(const std::string& checkpoint_path, const std::vector<double>& eps_override,
                       const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_path);
  const std::string dir = out_dir_for(checkpoint_path, out_dir);
  const std::vector<double> eps = eps_override.empty() ? run.cfg.eval.eps_list : eps_override;
  const int s = run.cfg.eval.attack_mc_samples;
  const std::uint64_t seed = subseed(run.cfg.seed, {stream::kAttack, 0});

  EntropyCurve fgsm = attack_entropy_curve(run.model, run.data.test_x, run.data.test_y, eps, s,
                                           seed, run.data.feat_min, run.data.feat_max, false);
  write_entropy_curve_csv(fgsm, dir + "/attack_fgsm.csv");
  EntropyCurve bim = attack_entropy_curve(run.model, run.data.test_x, run.data.test_y, eps, s, seed,
                                          run.data.feat_min, run.data.feat_max, true,
                                          run.cfg.eval.bim_iters);
  write_entropy_curve_csv(bim, dir + "/attack_bim.csv");

  json summary;
  summary["method"] = to_string(run.model.method);
  summary["seed"] = run.cfg.seed;
  summary["attack_mc_samples"] = s;
  summary["eps"] = eps;
  summary["fgsm_entropy"] = fgsm.mean_entropy;
  summary["fgsm_accuracy"] = fgsm.accuracy;
  summary["bim_entropy"] = bim.mean_entropy;
  summary["bim_accuracy"] = bim.accuracy;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/attack.json", text);
  return text;
}

std::string run_ood(const std::string& checkpoint_path, int mc_override,
                    const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_path);
  if (run.cfg.dataset.kind != DatasetKind::Blobs || run.cfg.dataset.from_csv()) {
    throw std::runtime_error("ood: the in-distribution run must use the blobs dataset");
  }
  const std::string dir = out_dir_for(checkpoint_path, out_dir);
  const int s = mc_override >= 1 ? mc_override : run.cfg.eval.attack_mc_samples;

  DatasetOptions opts;
  opts.num_classes = run.cfg.dataset.num_classes;
  opts.ood_offset = run.cfg.dataset.ood_offset;
  Dataset ood = gen_dataset(DatasetKind::BlobsShiftedOod, run.cfg.dataset.n_train,
                            run.cfg.dataset.n_test, run.cfg.dataset.noise,
                            run.cfg.dataset_seed(), opts);

  const std::uint64_t seed = eval_seed(run.cfg);
  CdfTable in_cdf = ood_entropy_cdf(run.model, run.data.test_x, s, seed);
  CdfTable ood_cdf = ood_entropy_cdf(run.model, ood.test_x, s, seed);
  write_cdf_csv(in_cdf, dir + "/entropy_cdf_in.csv");
  write_cdf_csv(ood_cdf, dir + "/entropy_cdf_ood.csv");

  auto mean_of = [](const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / v.size();
  };
  json summary;
  summary["method"] = to_string(run.model.method);
  summary["seed"] = run.cfg.seed;
  summary["mc_samples"] = s;
  summary["ood_offset"] = run.cfg.dataset.ood_offset;
  summary["mean_entropy_in"] = mean_of(in_cdf.entropy);
  summary["mean_entropy_ood"] = mean_of(ood_cdf.entropy);
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/ood.json", text);
  return text;
}

std::string run_mc_sweep(const std::string& checkpoint_path, const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_path);
  const std::string dir = out_dir_for(checkpoint_path, out_dir);
  std::vector<McSweepRow> rows = mc_sweep(run.model, run.data.test_x, run.data.test_y,
                                          run.cfg.eval.mc_sweep_counts, eval_seed(run.cfg),
                                          run.cfg.eval.ece_bins);
  write_mc_sweep_csv(rows, dir + "/mc_sweep.csv");

  json summary;
  summary["method"] = to_string(run.model.method);
  summary["seed"] = run.cfg.seed;
  json per_s = json::array();
  for (const auto& row : rows) {
    per_s.push_back({{"samples", row.samples}, {"nll", row.nll}, {"error", row.error},
                     {"ece", row.ece}});
  }
  summary["sweep"] = per_s;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/mc_sweep.json", text);
  return text;
}

std::string run_refine(const std::string& checkpoint_path, int members_override,
                       const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_path);
  const std::string dir = out_dir_for(checkpoint_path, out_dir);
  const int members = members_override >= 1 ? members_override : run.cfg.eval.refine_members;
  const std::uint64_t seed = subseed(run.cfg.seed, {stream::kEval, 2});

  RefinedEnsemble diverse =
      structure_ensemble_refinement(run.model, run.data, members, run.cfg.train_config(), seed);
  RefinedEnsemble control = structure_ensemble_refinement(run.model, run.data, members,
                                                          run.cfg.train_config(), seed, true);

  PredictiveDistribution diverse_pred = refined_ensemble_predict(diverse, run.data.test_x);
  PredictiveDistribution control_pred = refined_ensemble_predict(control, run.data.test_x);

  std::ofstream csv(dir + "/refine_members.csv");
  if (!csv) throw std::runtime_error("cannot open refine_members.csv in " + dir);
  csv << "member,diverse_error,control_error\n";
  json member_errors = json::array();
  for (int m = 0; m < members; ++m) {
    PredictiveDistribution dm = bayes_ensemble_predict(diverse.members[m], run.data.test_x, 1, 0);
    PredictiveDistribution cm = bayes_ensemble_predict(control.members[m], run.data.test_x, 1, 0);
    const double de = error_rate(dm, run.data.test_y);
    const double ce = error_rate(cm, run.data.test_y);
    csv << m << "," << fmt(de) << "," << fmt(ce) << "\n";
    member_errors.push_back({{"member", m}, {"diverse", de}, {"control", ce}});
  }

  json summary;
  summary["method"] = to_string(run.model.method);
  summary["seed"] = run.cfg.seed;
  summary["members"] = members;
  summary["diverse_error"] = error_rate(diverse_pred, run.data.test_y);
  summary["control_error"] = error_rate(control_pred, run.data.test_y);
  summary["diverse_nll"] = test_nll(diverse_pred, run.data.test_y);
  summary["control_nll"] = test_nll(control_pred, run.data.test_y);
  summary["member_errors"] = member_errors;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/refine.json", text);
  return text;
}

std::string run_baselines_compare(const RunConfig& cfg, std::string* run_dir_out) {
  cfg.validate();
  Dataset data = cfg.build_dataset();
  NetworkSpec spec = cfg.network_spec(data);
  const std::string dir = prepare_run_dir(cfg, "baselines");
  if (run_dir_out) *run_dir_out = dir;

  const Method methods[] = {Method::Dbsn,      Method::Map, Method::MapFixedAlpha,
                            Method::McDropout, Method::Bbb, Method::Fbn};

  std::ofstream csv(dir + "/baselines.csv");
  if (!csv) throw std::runtime_error("cannot open baselines.csv in " + dir);
  csv << "method,error,nll,ece\n";

  json rows = json::array();
  for (Method m : methods) {
    Trainer trainer(m, spec, cfg.train_config(), data);
    trainer.train();
    TrainedModel model = trainer.model();
    PredictiveDistribution pred =
        bayes_ensemble_predict(model, data.test_x, cfg.eval.mc_samples, eval_seed(cfg));
    const double err = error_rate(pred, data.test_y);
    const double nll = test_nll(pred, data.test_y);
    const double e = ece(pred, data.test_y, cfg.eval.ece_bins).ece;
    csv << to_string(m) << "," << fmt(err) << "," << fmt(nll) << "," << fmt(e) << "\n";
    rows.push_back({{"method", to_string(m)}, {"error", err}, {"nll", nll}, {"ece", e}});
  }

  json summary;
  summary["seed"] = cfg.seed;
  summary["rows"] = rows;
  summary["run_dir"] = dir;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir + "/baselines.json", text);
  return text;
}

}  // namespace dbsn
