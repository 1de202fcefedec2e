#include "dbsn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dbsn {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      throw std::invalid_argument("config: unknown key '" + path + it.key() + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_dataset(const json& obj, DatasetConfig& d) {
  check_keys(obj, "dataset.", {"kind", "n_train", "n_test", "noise", "seed", "num_classes",
                               "ood_offset", "csv_train", "csv_test"});
  if (obj.contains("kind")) d.kind = dataset_kind_from_string(obj.at("kind").get<std::string>());
  read(obj, "n_train", d.n_train);
  read(obj, "n_test", d.n_test);
  read(obj, "noise", d.noise);
  if (obj.contains("seed")) d.seed = obj.at("seed").get<std::uint64_t>();
  read(obj, "num_classes", d.num_classes);
  read(obj, "ood_offset", d.ood_offset);
  read(obj, "csv_train", d.csv_train);
  read(obj, "csv_test", d.csv_test);
}

void parse_network(const json& obj, NetworkConfig& n) {
  check_keys(obj, "network.",
             {"num_nodes", "ops", "node_width", "num_cells", "normalize", "downsample_factor"});
  read(obj, "num_nodes", n.num_nodes);
  read(obj, "ops", n.ops);
  read(obj, "node_width", n.node_width);
  read(obj, "num_cells", n.num_cells);
  read(obj, "normalize", n.normalize);
  read(obj, "downsample_factor", n.downsample_factor);
}

void parse_train(const json& obj, TrainConfig& t) {
  check_keys(obj, "train.",
             {"epochs", "batch_size", "mc_samples", "weight_decay", "w_lr", "w_momentum",
              "milestones", "milestone_factor", "grad_clip_norm", "theta_lr", "theta_beta1",
              "theta_beta2", "adam_eps", "tau_scale", "tau_decay", "tau_floor", "beta_start",
              "beta_end", "dropout_rate", "bbb_sigma_init"});
  read(obj, "epochs", t.epochs);
  read(obj, "batch_size", t.batch_size);
  read(obj, "mc_samples", t.mc_samples);
  read(obj, "weight_decay", t.weight_decay);
  read(obj, "w_lr", t.w_lr);
  read(obj, "w_momentum", t.w_momentum);
  read(obj, "milestones", t.milestones);
  read(obj, "milestone_factor", t.milestone_factor);
  read(obj, "grad_clip_norm", t.grad_clip_norm);
  read(obj, "theta_lr", t.theta_lr);
  read(obj, "theta_beta1", t.theta_beta1);
  read(obj, "theta_beta2", t.theta_beta2);
  read(obj, "adam_eps", t.adam_eps);
  read(obj, "tau_scale", t.tau_scale);
  read(obj, "tau_decay", t.tau_decay);
  read(obj, "tau_floor", t.tau_floor);
  read(obj, "beta_start", t.beta_start);
  read(obj, "beta_end", t.beta_end);
  read(obj, "dropout_rate", t.dropout_rate);
  read(obj, "bbb_sigma_init", t.bbb_sigma_init);
}

void parse_eval(const json& obj, EvalConfig& e) {
  check_keys(obj, "eval.", {"mc_samples", "ece_bins", "attack_mc_samples", "eps_list", "bim_iters",
                            "mc_sweep_counts", "refine_members"});
  read(obj, "mc_samples", e.mc_samples);
  read(obj, "ece_bins", e.ece_bins);
  read(obj, "attack_mc_samples", e.attack_mc_samples);
  read(obj, "eps_list", e.eps_list);
  read(obj, "bim_iters", e.bim_iters);
  read(obj, "mc_sweep_counts", e.mc_sweep_counts);
  read(obj, "refine_members", e.refine_members);
}

json dataset_to_json(const DatasetConfig& d, std::uint64_t resolved_seed) {
  json j;
  j["kind"] = to_string(d.kind);
  j["n_train"] = d.n_train;
  j["n_test"] = d.n_test;
  j["noise"] = d.noise;
  j["seed"] = d.seed.value_or(resolved_seed);
  j["num_classes"] = d.num_classes;
  j["ood_offset"] = d.ood_offset;
  if (!d.csv_train.empty()) j["csv_train"] = d.csv_train;
  if (!d.csv_test.empty()) j["csv_test"] = d.csv_test;
  return j;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
  check_keys(root, "",
             {"version", "method", "dataset", "network", "train", "eval", "out_dir", "overwrite",
              "seed"});

  RunConfig cfg;
  read(root, "version", cfg.version);
  if (cfg.version != 1) {
    throw std::invalid_argument("config: unsupported schema version " + std::to_string(cfg.version));
  }
  if (root.contains("method")) cfg.method = method_from_string(root.at("method").get<std::string>());
  if (root.contains("dataset")) parse_dataset(root.at("dataset"), cfg.dataset);
  if (root.contains("network")) parse_network(root.at("network"), cfg.network);
  if (root.contains("train")) parse_train(root.at("train"), cfg.train);
  if (root.contains("eval")) parse_eval(root.at("eval"), cfg.eval);
  read(root, "out_dir", cfg.out_dir);
  read(root, "overwrite", cfg.overwrite);
  if (root.contains("seed")) cfg.seed = root.at("seed").get<std::uint64_t>();
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
  json root;
  root["version"] = version;
  root["method"] = to_string(method);
  root["dataset"] = dataset_to_json(dataset, seed);
  root["network"] = {{"num_nodes", network.num_nodes},
                     {"ops", network.ops},
                     {"node_width", network.node_width},
                     {"num_cells", network.num_cells},
                     {"normalize", network.normalize},
                     {"downsample_factor", network.downsample_factor}};
  root["train"] = {{"epochs", train.epochs},
                   {"batch_size", train.batch_size},
                   {"mc_samples", train.mc_samples},
                   {"weight_decay", train.weight_decay},
                   {"w_lr", train.w_lr},
                   {"w_momentum", train.w_momentum},
                   {"milestones", train.milestones},
                   {"milestone_factor", train.milestone_factor},
                   {"grad_clip_norm", train.grad_clip_norm},
                   {"theta_lr", train.theta_lr},
                   {"theta_beta1", train.theta_beta1},
                   {"theta_beta2", train.theta_beta2},
                   {"adam_eps", train.adam_eps},
                   {"tau_scale", train.tau_scale},
                   {"tau_decay", train.tau_decay},
                   {"tau_floor", train.tau_floor},
                   {"beta_start", train.beta_start},
                   {"beta_end", train.beta_end},
                   {"dropout_rate", train.dropout_rate},
                   {"bbb_sigma_init", train.bbb_sigma_init}};
  root["eval"] = {{"mc_samples", eval.mc_samples},
                  {"ece_bins", eval.ece_bins},
                  {"attack_mc_samples", eval.attack_mc_samples},
                  {"eps_list", eval.eps_list},
                  {"bim_iters", eval.bim_iters},
                  {"mc_sweep_counts", eval.mc_sweep_counts},
                  {"refine_members", eval.refine_members}};
  root["out_dir"] = out_dir;
  root["overwrite"] = overwrite;
  root["seed"] = seed;
  return root.dump(2) + "\n";
}

std::string RunConfig::canonical_json() const {
  // nlohmann::json objects already iterate in sorted key order
  return json::parse(to_json_text()).dump();
}

std::uint64_t RunConfig::config_hash() const {
  // FNV-1a over the canonical serialization
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical_json()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void RunConfig::validate() const {
  train.validate();
  if (dataset.from_csv()) {
    if (dataset.csv_train.empty() || dataset.csv_test.empty()) {
      throw std::invalid_argument("config: csv_train and csv_test must both be set");
    }
  } else {
    if (dataset.n_train < 1 || dataset.n_test < 1) {
      throw std::invalid_argument("config: dataset sizes must be >= 1");
    }
    if (dataset.noise < 0) throw std::invalid_argument("config: dataset noise must be >= 0");
    if (dataset.num_classes < 2) throw std::invalid_argument("config: need >= 2 classes");
  }
  if (network.ops.size() < 2) throw std::invalid_argument("config: need >= 2 ops per edge");
  for (const auto& op : network.ops) op_kind_from_string(op);  // throws on unknown
  if (eval.mc_samples < 1 || eval.attack_mc_samples < 1 || eval.ece_bins < 1 ||
      eval.bim_iters < 1 || eval.refine_members < 1) {
    throw std::invalid_argument("config: eval counts must be >= 1");
  }
}

Dataset RunConfig::build_dataset() const {
  if (dataset.from_csv()) return dataset_from_csv(dataset.csv_train, dataset.csv_test);
  DatasetOptions opts;
  opts.num_classes = dataset.num_classes;
  opts.ood_offset = dataset.ood_offset;
  return gen_dataset(dataset.kind, dataset.n_train, dataset.n_test, dataset.noise, dataset_seed(),
                     opts);
}

NetworkSpec RunConfig::network_spec(const Dataset& data) const {
  NetworkSpec spec;
  spec.input_dim = data.dim();
  spec.num_classes = data.num_classes;
  spec.num_cells = network.num_cells;
  spec.cell.num_nodes = network.num_nodes;
  spec.cell.node_width = network.node_width;
  spec.cell.normalize = network.normalize;
  spec.cell.op_kinds.clear();
  for (const auto& op : network.ops) spec.cell.op_kinds.push_back(op_kind_from_string(op));
  spec.downsample_factor = network.downsample_factor;
  spec.validate();
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

}  // namespace dbsn
