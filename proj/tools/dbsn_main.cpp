// dbsn workbench CLI: training, evaluation and uncertainty protocols over the
// structure-posterior models. Every subcommand reads a JSON run config (flags
// override fields), writes a run directory and prints the JSON summary.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbsn/checkpoint.hpp"
#include "dbsn/run.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string checkpoint;
  std::string out;
  std::string method;
  std::string dataset;
  std::string eps_list;
  std::int64_t seed = -1;
  int mc = -1;
  int members = -1;
  bool overwrite = false;
};

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(std::stod(cell));
  }
  return out;
}

dbsn::RunConfig load_config(const CommonFlags& flags) {
  dbsn::RunConfig cfg = flags.config_path.empty()
                            ? dbsn::RunConfig{}
                            : dbsn::RunConfig::from_json_file(flags.config_path);
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (flags.mc >= 1) cfg.eval.mc_samples = flags.mc;
  if (!flags.method.empty()) cfg.method = dbsn::method_from_string(flags.method);
  if (!flags.dataset.empty()) cfg.dataset.kind = dbsn::dataset_kind_from_string(flags.dataset);
  if (!flags.eps_list.empty()) cfg.eval.eps_list = parse_eps_list(flags.eps_list);
  if (flags.members >= 1) cfg.eval.refine_members = flags.members;
  if (flags.overwrite) cfg.overwrite = true;
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool wants_checkpoint) {
  cmd->add_option("--config", flags.config_path, "JSON run config");
  cmd->add_option("--seed", flags.seed, "override the run seed");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--mc", flags.mc, "override the ensemble MC sample count");
  cmd->add_option("--method", flags.method, "dbsn|map|map_fixed_alpha|mc_dropout|bbb|fbn");
  cmd->add_option("--dataset", flags.dataset, "two_moons|spirals|blobs|blobs_shifted_ood");
  cmd->add_option("--eps-list", flags.eps_list, "comma-separated attack sizes");
  cmd->add_flag("--overwrite", flags.overwrite, "allow writing into an existing run directory");
  if (wants_checkpoint) {
    cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint.bin of a trained run")
        ->required();
  }
}

int fail(const std::exception& e) {
  nlohmann::json err;
  err["error"] = {{"message", e.what()}};
  std::cerr << err.dump(2) << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep Bayesian structure network workbench"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, attack_f, ood_f, sweep_f, refine_f, compare_f;
  std::string export_in, export_out;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
  add_common(train_cmd, train_f, false);

  auto* eval_cmd = app.add_subcommand("evaluate", "Bayes-ensemble evaluation of a checkpoint");
  add_common(eval_cmd, eval_f, true);

  auto* attack_cmd = app.add_subcommand("attack", "FGSM/BIM predictive-entropy curves");
  add_common(attack_cmd, attack_f, true);

  auto* ood_cmd = app.add_subcommand("ood", "entropy CDF on shifted-blob OOD data");
  add_common(ood_cmd, ood_f, true);

  auto* sweep_cmd = app.add_subcommand("sweep-mc", "ensemble quality vs MC sample count");
  add_common(sweep_cmd, sweep_f, true);

  auto* refine_cmd =
      app.add_subcommand("refine-ensemble", "train per-structure members and assemble them");
  add_common(refine_cmd, refine_f, true);
  refine_cmd->add_option("--members", refine_f.members, "number of sampled structures");

  auto* compare_cmd = app.add_subcommand("baselines-compare", "train and score every method");
  add_common(compare_cmd, compare_f, false);

  auto* export_cmd = app.add_subcommand("checkpoint-export", "dump a checkpoint as JSON");
  export_cmd->add_option("--checkpoint", export_in, "checkpoint.bin path")->required();
  export_cmd->add_option("--json", export_out, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      std::cout << dbsn::run_train(load_config(train_f));
    } else if (eval_cmd->parsed()) {
      std::cout << dbsn::run_evaluate(eval_f.checkpoint, eval_f.mc, eval_f.out);
    } else if (attack_cmd->parsed()) {
      std::cout << dbsn::run_attack(attack_f.checkpoint, parse_eps_list(attack_f.eps_list),
                                    attack_f.out);
    } else if (ood_cmd->parsed()) {
      std::cout << dbsn::run_ood(ood_f.checkpoint, ood_f.mc, ood_f.out);
    } else if (sweep_cmd->parsed()) {
      std::cout << dbsn::run_mc_sweep(sweep_f.checkpoint, sweep_f.out);
    } else if (refine_cmd->parsed()) {
      std::cout << dbsn::run_refine(refine_f.checkpoint, refine_f.members, refine_f.out);
    } else if (compare_cmd->parsed()) {
      std::cout << dbsn::run_baselines_compare(load_config(compare_f));
    } else if (export_cmd->parsed()) {
      dbsn::export_checkpoint_json(export_in, export_out);
      std::cout << "{\"exported\": \"" << export_out << "\"}\n";
    }
  } catch (const std::exception& e) {
    return fail(e);
  }
  return 0;
}
