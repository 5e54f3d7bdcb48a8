#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mia/cli.hpp"
#include "mia/pipeline.hpp"
#include "mia/sim.hpp"

using namespace mia;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

sim::SimConfig quick_config(int n_prompts = 60, int epochs = 5) {
  sim::SimConfig c;
  c.n_prompts = n_prompts;
  c.n_skills = 6;
  c.group_size = 8;
  c.epochs = epochs;
  c.seed = 31;
  return c;
}

TraceSet quick_traces(int n_prompts = 60, int epochs = 5, int n_samples = 6) {
  auto st = sim::init_sim(quick_config(n_prompts, epochs));
  sim::train(st, st.config.epochs);
  return sim::emit_traces(st, n_samples, 0.5);
}

pipeline::AttackOptions quick_options() {
  pipeline::AttackOptions opt;
  opt.folds = 4;
  opt.seed = 3;
  opt.n_trees = 30;
  return opt;
}

}  // namespace

TEST_CASE("run_attack produces a valid, deterministic report") {
  const TraceSet set = quick_traces();
  const auto opt = quick_options();
  const auto res = pipeline::run_attack(set, opt, {{"traces", 99}});
  std::string why;
  REQUIRE(report::validate_report(res.report, &why));
  CHECK(res.report["attack"]["per_fold"].size() == 4);
  CHECK(res.report["per_sample"].size() == set.records.size());
  CHECK(res.report["attack"]["pooled"]["auc"].get<double>() > 0.5);
  CHECK(res.report["hardness"].contains("residual"));
  CHECK(res.report["diagnostics"].contains("tp_percentiles"));

  const auto res2 = pipeline::run_attack(set, opt, {{"traces", 99}});
  CHECK(res.report.dump() == res2.report.dump());
}

TEST_CASE("feature-only attack reproduces the single-feature row") {
  const TraceSet set = quick_traces();
  auto opt = quick_options();
  const auto full = pipeline::run_attack(set, opt);

  opt.feature_only = "ft_score";
  const auto single = pipeline::run_attack(set, opt);
  const auto& row = full.report["single_features"]["ft_score"];
  const auto& pooled = single.report["attack"]["pooled"];
  CHECK(pooled["auc"] == row["auc"]);
  CHECK(pooled["pauc"] == row["pauc"]);
  CHECK(pooled["tpr_at"] == row["tpr_at"]);
}

TEST_CASE("unknown labels are scored but excluded from metrics") {
  TraceSet set = quick_traces();
  for (std::size_t i = 0; i < 10; ++i) set.records[i].label = Label::unknown;
  const auto res = pipeline::run_attack(set, quick_options());
  std::size_t unknown_rows = 0;
  for (const auto& row : res.report["per_sample"]) {
    if (row["label"] == "unknown") {
      ++unknown_rows;
      CHECK_FALSE(row["in_metrics"].get<bool>());
      CHECK(row.contains("prob"));
    }
  }
  CHECK(unknown_rows == 10);
  const auto& pooled = res.report["attack"]["pooled"];
  CHECK(pooled["n_member"].get<int>() + pooled["n_nonmember"].get<int>() ==
        static_cast<int>(set.records.size()) - 10);
}

TEST_CASE("attack with too few labeled records reports insufficient data") {
  TraceSet set = quick_traces(60);
  set.records.resize(6);
  CHECK_THROWS_AS(pipeline::run_attack(set, quick_options()),
                  pipeline::InsufficientData);
}

TEST_CASE("baselines on untrained traces sit near chance") {
  auto st = sim::init_sim(quick_config(120, 0));
  const TraceSet set = sim::emit_traces(st, 6, 0.5);
  pipeline::BaselineOptions opt;
  const json block = pipeline::run_baselines(set, opt);

  // calibrated scores on identical policies are all zeros: AUC exactly 1/2
  CHECK(block["loss"]["calibrated"]["auc"].get<double>() == 0.5);
  CHECK(block["lira"]["raw"]["auc"].get<double>() == 0.5);
  // raw baselines have no membership signal before training
  for (const char* m : {"loss", "zlib", "min_k", "entropy", "neighbor"}) {
    REQUIRE(block[m]["raw"]["available"].get<bool>());
    CHECK(block[m]["raw"]["auc"].get<double>() > 0.35);
    CHECK(block[m]["raw"]["auc"].get<double>() < 0.65);
  }
  // entropy cannot be calibrated under this schema
  CHECK_FALSE(block["entropy"]["calibrated"]["available"].get<bool>());

  // deterministic output
  CHECK(pipeline::run_baselines(set, opt).dump() == block.dump());
}

TEST_CASE("missing entropy fields mark the entropy baseline unavailable") {
  TraceSet set = quick_traces(40, 2);
  for (auto& t : set.records) {
    for (auto& s : t.samples_ft) s.token_entropies_ft.reset();
    for (auto& s : t.samples_ref) s.token_entropies_ft.reset();
    if (t.reference_answer) t.reference_answer->token_entropies_ft.reset();
  }
  const json block = pipeline::run_baselines(set, pipeline::BaselineOptions{});
  CHECK_FALSE(block["entropy"]["raw"]["available"].get<bool>());
  CHECK(block["loss"]["raw"]["available"].get<bool>());
}

TEST_CASE("baselines honor the ft-samples target") {
  TraceSet set = quick_traces(40, 2);
  for (auto& t : set.records) t.reference_answer.reset();
  pipeline::BaselineOptions opt;
  const json on_ref = pipeline::run_baselines(set, opt);
  CHECK_FALSE(on_ref["loss"]["raw"]["available"].get<bool>());

  opt.target = baselines::ScoreTarget::ft_samples;
  const json on_ft = pipeline::run_baselines(set, opt);
  CHECK(on_ft["loss"]["raw"]["available"].get<bool>());
}

TEST_CASE("gaussian defense sweep has strictly decreasing epsilon") {
  const TraceSet set = quick_traces();
  const auto aopt = quick_options();
  double prev = 1e300;
  for (double sigma : {0.05, 0.1, 0.2, 0.4}) {
    pipeline::DefendOptions dopt;
    dopt.defense = "gaussian";
    dopt.clip = 1.0;
    dopt.scale = sigma;
    dopt.seed = 5;
    const json rep = pipeline::run_defend(set, dopt, aopt);
    const double eps = rep["defense"]["epsilon"].get<double>();
    CHECK(eps < prev);
    prev = eps;
    CHECK(rep["defense"]["before"].contains("auc"));
    CHECK(rep["defense"]["after"].contains("auc"));
  }
}

TEST_CASE("strength-zero perturbation defense is a metric no-op") {
  const TraceSet set = quick_traces();
  const auto aopt = quick_options();
  pipeline::DefendOptions dopt;
  dopt.defense = "perturb";
  dopt.strength = 0.0;
  const json rep = pipeline::run_defend(set, dopt, aopt);
  CHECK(rep["defense"]["before"] == rep["defense"]["after"]);
}

TEST_CASE("transfer with train == eval matches the resubstitution oracle") {
  const TraceSet set = quick_traces();
  const auto opt = quick_options();
  const json rep = pipeline::run_transfer(set, set, opt);

  // independent resubstitution path
  const auto feats = features::extract_all(set, opt.source);
  std::vector<std::size_t> rows;
  std::vector<int> y;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    rows.push_back(i);
    y.push_back(feats[i].label == Label::member ? 1 : 0);
  }
  const auto model = classifier::fit_stacking(
      pipeline::feature_matrix(feats, rows), y, opt.folds, opt.seed, opt.n_trees);
  const auto probs = model.predict_proba(pipeline::feature_matrix(feats, rows));
  std::vector<double> m, n;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? m : n).push_back(probs[i]);
  CHECK(rep["transfer"]["metrics"]["auc"].get<double>() ==
        Catch::Approx(metrics::auc(m, n)).margin(1e-12));
}

TEST_CASE("transfer rejects mismatched feature schemas") {
  const TraceSet set = quick_traces(40, 2);
  const auto opt = quick_options();
  const auto feats = features::extract_all(set, opt.source);
  std::vector<std::size_t> rows;
  std::vector<int> y;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    rows.push_back(i);
    y.push_back(feats[i].label == Label::member ? 1 : 0);
  }
  auto model = classifier::fit_stacking(pipeline::feature_matrix(feats, rows), y,
                                        4, 3, 20);
  model.feature_names = {"alien", "schema"};
  CHECK_THROWS_AS(pipeline::run_transfer(set, set, opt, {}, model),
                  std::invalid_argument);
}

TEST_CASE("cmd pipeline end to end with exit codes") {
  const std::string cfg_path = temp_path("mia_cli_cfg.json");
  const std::string traces_path = temp_path("mia_cli_traces.jsonl");
  const std::string report_path = temp_path("mia_cli_report.json");
  {
    json cfg = quick_config(48, 3);
    std::ofstream out(cfg_path);
    out << cfg.dump(2);
  }
  cli::SimulateArgs sim_args;
  sim_args.config_path = cfg_path;
  sim_args.out_traces = traces_path;
  sim_args.emit_n = 6;
  REQUIRE(cli::cmd_simulate(sim_args) == cli::kExitOk);
  CHECK(std::filesystem::exists(traces_path));
  CHECK(std::filesystem::exists(traces_path + ".history.csv"));

  cli::AttackArgs atk;
  atk.traces_path = traces_path;
  atk.report_path = report_path;
  atk.options = quick_options();
  atk.roc_svg = temp_path("mia_cli_roc.svg");
  atk.features_csv = temp_path("mia_cli_features.csv");
  REQUIRE(cli::cmd_attack(atk) == cli::kExitOk);
  CHECK(std::filesystem::exists(atk.roc_svg));
  CHECK(std::filesystem::exists(atk.features_csv));

  // the report command validates and renders
  cli::ReportArgs rep_args;
  rep_args.in_path = report_path;
  CHECK(cli::cmd_report(rep_args) == cli::kExitOk);

  // I/O failure maps to exit 3, validation to exit 2
  cli::AttackArgs bad = atk;
  bad.traces_path = temp_path("mia_cli_missing.jsonl");
  CHECK(cli::cmd_attack(bad) == cli::kExitIo);

  {
    std::ofstream out(temp_path("mia_cli_broken.jsonl"));
    out << "{\"prompt_id\": 5}\n";
  }
  bad.traces_path = temp_path("mia_cli_broken.jsonl");
  CHECK(cli::cmd_attack(bad) == cli::kExitValidation);

  // insufficient data maps to exit 4
  {
    TraceSet tiny = quick_traces(40, 0);
    tiny.records.resize(4);
    write_trace_set(tiny, temp_path("mia_cli_tiny.jsonl"));
  }
  bad.traces_path = temp_path("mia_cli_tiny.jsonl");
  CHECK(cli::cmd_attack(bad) == cli::kExitInsufficientData);

  // byte-identical reruns of simulate + attack
  const std::string traces2 = temp_path("mia_cli_traces2.jsonl");
  sim_args.out_traces = traces2;
  REQUIRE(cli::cmd_simulate(sim_args) == cli::kExitOk);
  std::ifstream a(traces_path, std::ios::binary), b(traces2, std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());

  for (const auto& p :
       {cfg_path, traces_path, traces2, report_path, atk.roc_svg,
        atk.features_csv, temp_path("mia_cli_broken.jsonl"),
        temp_path("mia_cli_tiny.jsonl"), traces_path + ".history.csv",
        traces2 + ".history.csv"})
    std::remove(p.c_str());
}

TEST_CASE("transfer cmd saves and loads models") {
  const std::string traces_path = temp_path("mia_tr_traces.jsonl");
  const std::string report_path = temp_path("mia_tr_report.json");
  const std::string model_path = temp_path("mia_tr_model.json");
  write_trace_set(quick_traces(48, 3), traces_path);

  cli::TransferArgs tr;
  tr.train_traces = traces_path;
  tr.eval_traces = traces_path;
  tr.report_path = report_path;
  tr.save_model = model_path;
  tr.options = quick_options();
  REQUIRE(cli::cmd_transfer(tr) == cli::kExitOk);
  REQUIRE(std::filesystem::exists(model_path));

  cli::TransferArgs tr2;
  tr2.eval_traces = traces_path;
  tr2.report_path = report_path + "2";
  tr2.load_model = model_path;
  tr2.options = quick_options();
  REQUIRE(cli::cmd_transfer(tr2) == cli::kExitOk);

  std::ifstream in(report_path + "2");
  const json rep = json::parse(in);
  CHECK(rep["transfer"]["loaded_model"].get<bool>());

  for (const auto& p : {traces_path, report_path, report_path + "2", model_path})
    std::remove(p.c_str());
}
