#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dbsn/dataset.hpp"
#include "dbsn/network.hpp"
#include "dbsn/trainer.hpp"

namespace dbsn {

// Run configuration: versioned JSON schema, strict key checking (unknown keys
// are errors), flag overrides applied before validation. The serialized echo
// of a resolved config is sufficient to re-run the experiment exactly.

struct DatasetConfig {
  DatasetKind kind = DatasetKind::TwoMoons;
  int n_train = 600;
  int n_test = 400;
  double noise = 0.1;
  std::optional<std::uint64_t> seed;  // follows the run seed when unset
  int num_classes = 2;                // blobs family
  double ood_offset = 8.0;            // blobs_shifted_ood
  std::string csv_train;              // when set (with csv_test), loads from CSV
  std::string csv_test;

  bool from_csv() const { return !csv_train.empty() || !csv_test.empty(); }
};

struct NetworkConfig {
  int num_nodes = 4;
  std::vector<std::string> ops = {"zero", "identity", "affine", "affine_relu"};
  int node_width = 8;
  int num_cells = 2;
  bool normalize = false;
  double downsample_factor = 0.4;
};

struct EvalConfig {
  int mc_samples = 100;        // S for the Bayes ensemble
  int ece_bins = 15;
  int attack_mc_samples = 30;  // S for attacking and attacked-set evaluation
  std::vector<double> eps_list = {0.0, 0.02, 0.05, 0.1};
  int bim_iters = 3;
  std::vector<int> mc_sweep_counts = {1, 2, 5, 10, 20, 50, 100};
  int refine_members = 5;
};

struct RunConfig {
  int version = 1;
  Method method = Method::Dbsn;
  DatasetConfig dataset;
  NetworkConfig network;
  TrainConfig train;
  EvalConfig eval;
  std::string out_dir = "runs";
  bool overwrite = false;
  std::uint64_t seed = 0;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_json_file(const std::string& path);
  std::string to_json_text() const;       // resolved echo, 2-space indent
  std::string canonical_json() const;     // sorted keys, no whitespace
  std::uint64_t config_hash() const;

  std::uint64_t dataset_seed() const { return dataset.seed.value_or(seed); }
  void validate() const;

  Dataset build_dataset() const;
  NetworkSpec network_spec(const Dataset& data) const;
  TrainConfig train_config() const;  // train with the run seed injected
};

}  // namespace dbsn
