// rlvr-audit: membership-inference audit toolkit for RLVR-fine-tuned
// policies. Subcommands: simulate | attack | baselines | defend | transfer |
// report.

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mia/cli.hpp"

namespace {

void add_attack_flags(CLI::App* cmd, mia::pipeline::AttackOptions* opt,
                      std::string* source) {
  cmd->add_option("--folds", opt->folds, "cross-validation folds")
      ->default_val(5);
  cmd->add_option("--seed", opt->seed, "random seed")->default_val(1);
  cmd->add_option("--source", *source,
                  "sample set feeding logit-side features (ft|ref)")
      ->default_val("ft")
      ->check(CLI::IsMember({"ft", "ref"}));
  cmd->add_option("--fpr-targets", opt->fpr_targets,
                  "FPR targets for TPR@FPR reporting")
      ->delimiter(',');
  cmd->add_option("--pauc-fmax", opt->pauc_fmax, "pAUC / KS-tail FPR cap");
  cmd->add_option("--hardness-tol", opt->hardness_tol,
                  "tolerance for all-0/all-1 classification");
  cmd->add_option("--trees", opt->n_trees, "random forest size");
}

mia::SampleSource parse_source(const std::string& s) {
  return s == "ref" ? mia::SampleSource::ref : mia::SampleSource::ft;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"membership-inference audit toolkit for RLVR policies"};
  app.require_subcommand(1);

  // simulate
  mia::cli::SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand(
      "simulate", "train the toy RLVR policy and emit an audit trace set");
  sim_cmd->add_option("--config", sim_args.config_path, "SimConfig JSON path")
      ->required();
  sim_cmd->add_option("--out", sim_args.out_traces, "output traces JSONL path")
      ->required();
  sim_cmd->add_option("--history", sim_args.history_path,
                      "training history CSV path");
  sim_cmd->add_option("--emit-n", sim_args.emit_n, "responses per model per prompt")
      ->default_val(8);
  sim_cmd->add_option("--emit-temperature", sim_args.emit_temperature,
                      "sampling temperature for emitted traces")
      ->default_val(0.5);

  // attack
  mia::cli::AttackArgs atk_args;
  std::string atk_source = "ft";
  auto* atk_cmd =
      app.add_subcommand("attack", "run the divergence-in-behavior attack");
  atk_cmd->add_option("--traces", atk_args.traces_path, "traces JSONL")->required();
  atk_cmd->add_option("--report", atk_args.report_path, "output report JSON")
      ->required();
  add_attack_flags(atk_cmd, &atk_args.options, &atk_source);
  atk_cmd->add_option("--feature-only", atk_args.options.feature_only,
                      "score with a single raw feature instead of stacking");
  atk_cmd->add_option("--features-csv", atk_args.features_csv,
                      "also export the feature matrix CSV");
  atk_cmd->add_option("--roc-svg", atk_args.roc_svg,
                      "also emit a log-scale ROC SVG");

  // baselines
  mia::cli::BaselinesArgs base_args;
  std::string base_on = "reference";
  auto* base_cmd =
      app.add_subcommand("baselines", "score memorization baselines");
  base_cmd->add_option("--traces", base_args.traces_path, "traces JSONL")
      ->required();
  base_cmd->add_option("--report", base_args.report_path, "output report JSON")
      ->required();
  base_cmd->add_option("--on", base_on, "scored text: reference|ft-samples")
      ->default_val("reference")
      ->check(CLI::IsMember({"reference", "ft-samples"}));
  base_cmd->add_option("--min-k", base_args.options.min_k, "min-k fraction")
      ->default_val(0.2);
  base_cmd->add_option("--fpr-targets", base_args.options.fpr_targets,
                       "FPR targets")
      ->delimiter(',');
  base_cmd->add_option("--seed", base_args.seed, "seed recorded in provenance")
      ->default_val(1);

  // defend
  mia::cli::DefendArgs def_args;
  std::string def_source = "ft";
  auto* def_cmd =
      app.add_subcommand("defend", "apply a defense and rerun the attack");
  def_cmd->add_option("--traces", def_args.traces_path, "traces JSONL")->required();
  def_cmd->add_option("--report", def_args.report_path, "output report JSON")
      ->required();
  def_cmd
      ->add_option("--defense", def_args.defense.defense,
                   "perturb|gaussian|laplace|dp_decode")
      ->required()
      ->check(CLI::IsMember({"perturb", "gaussian", "laplace", "dp_decode"}));
  def_cmd->add_option("--strength", def_args.defense.strength,
                      "perturbation / decode-noise strength");
  def_cmd->add_option("--clip", def_args.defense.clip, "DP clip bound");
  def_cmd->add_option("--scale", def_args.defense.scale,
                      "absolute DP noise scale (sigma or b)");
  def_cmd->add_option("--delta", def_args.defense.delta, "gaussian delta")
      ->default_val(1e-5);
  def_cmd->add_option("--relative", def_args.defense.relative,
                      "relative DP noise fraction (overrides --scale)");
  def_cmd->add_option("--defense-seed", def_args.defense.seed,
                      "seed for defense randomness")
      ->default_val(1);
  def_cmd->add_option("--sim-config", def_args.sim_config_path,
                      "SimConfig JSON for rescoring / dp_decode");
  add_attack_flags(def_cmd, &def_args.attack, &def_source);

  // transfer
  mia::cli::TransferArgs tr_args;
  std::string tr_source = "ft";
  auto* tr_cmd = app.add_subcommand(
      "transfer", "fit the predictor on one trace set and evaluate on another");
  tr_cmd->add_option("--train-traces", tr_args.train_traces, "shadow traces JSONL");
  tr_cmd->add_option("--eval-traces", tr_args.eval_traces, "target traces JSONL")
      ->required();
  tr_cmd->add_option("--report", tr_args.report_path, "output report JSON")
      ->required();
  tr_cmd->add_option("--save-model", tr_args.save_model,
                     "persist the fitted model as JSON");
  tr_cmd->add_option("--load-model", tr_args.load_model,
                     "evaluate a previously saved model instead of fitting");
  add_attack_flags(tr_cmd, &tr_args.options, &tr_source);

  // report
  mia::cli::ReportArgs rep_args;
  auto* rep_cmd =
      app.add_subcommand("report", "validate and render an EvalReport JSON");
  rep_cmd->add_option("--in", rep_args.in_path, "report JSON path")->required();
  rep_cmd->add_option("--out-dir", rep_args.out_dir,
                      "directory for CSV/SVG artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mia::cli::kExitValidation;
  }

  if (sim_cmd->parsed()) return mia::cli::cmd_simulate(sim_args);
  if (atk_cmd->parsed()) {
    atk_args.options.source = parse_source(atk_source);
    return mia::cli::cmd_attack(atk_args);
  }
  if (base_cmd->parsed()) {
    base_args.options.target = base_on == "ft-samples"
                                   ? mia::baselines::ScoreTarget::ft_samples
                                   : mia::baselines::ScoreTarget::reference_answer;
    return mia::cli::cmd_baselines(base_args);
  }
  if (def_cmd->parsed()) {
    def_args.attack.source = parse_source(def_source);
    return mia::cli::cmd_defend(def_args);
  }
  if (tr_cmd->parsed()) {
    tr_args.options.source = parse_source(tr_source);
    if (tr_args.load_model.empty() && tr_args.train_traces.empty()) {
      std::cerr << "error: transfer requires --train-traces or --load-model\n";
      return mia::cli::kExitValidation;
    }
    return mia::cli::cmd_transfer(tr_args);
  }
  if (rep_cmd->parsed()) return mia::cli::cmd_report(rep_args);
  return mia::cli::kExitValidation;
}
