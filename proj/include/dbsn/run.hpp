#pragma once

#include <string>
#include <vector>

#include "dbsn/config.hpp"
#include "dbsn/predict.hpp"
#include "dbsn/trainer.hpp"

namespace dbsn {

// Run orchestration shared by the CLI and the python bindings. Every command
// writes its tables (one-line-header CSVs) and a JSON summary into the run
// directory and returns the summary text. Output files carry no timestamps,
// so identical config + seed reproduces them byte for byte.

// Content-addressed run directory <out_dir>/<tag>-<dataset>-<hash8>-s<seed>;
// created, with the resolved config echoed into config.json. Throws when the
// directory already exists unless cfg.overwrite is set.
std::string prepare_run_dir(const RunConfig& cfg, const std::string& tag);

// Everything needed to evaluate a stored run.
struct LoadedRun {
  RunConfig cfg;
  Dataset data;
  TrainedModel model;
};

LoadedRun load_run(const std::string& checkpoint_path);

// train: metrics.csv per epoch, checkpoint.bin, predictions.csv, final.json
std::string run_train(const RunConfig& cfg, std::string* run_dir_out = nullptr);

// evaluate: consumes a checkpoint; mc_override < 1 keeps the stored setting
std::string run_evaluate(const std::string& checkpoint_path, int mc_override,
                         const std::string& out_dir);

// attack: FGSM and BIM entropy/accuracy curves over the eps list
std::string run_attack(const std::string& checkpoint_path, const std::vector<double>& eps_override,
                       const std::string& out_dir);

// ood: entropy CDFs for the in-distribution test split and the shifted-blob set
std::string run_ood(const std::string& checkpoint_path, int mc_override, const std::string& out_dir);

// sweep-mc: ensemble quality vs number of MC samples
std::string run_mc_sweep(const std::string& checkpoint_path, const std::string& out_dir);

// refine-ensemble: per-structure member training plus the replicated control
std::string run_refine(const std::string& checkpoint_path, int members_override,
                       const std::string& out_dir);

// baselines-compare: trains every method on the same data and reports
// (error, nll, ece) per method
std::string run_baselines_compare(const RunConfig& cfg, std::string* run_dir_out = nullptr);

}  // namespace dbsn
