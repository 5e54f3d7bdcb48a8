#pragma once

// Command implementations behind the rlvr-audit binary. Each cmd_* function
// takes parsed options, performs one pipeline, writes its artifacts and
// returns a process exit code: 0 success, 2 validation error, 3 I/O error,
// 4 insufficient data.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "mia/pipeline.hpp"

namespace mia::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInsufficientData = 4;

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TraceError(TraceErrorCode::io_failure, "", "", path);
  out << text;
  if (!out) throw TraceError(TraceErrorCode::io_failure, "", "", path);
}

inline void write_report_json(const json& rep, const std::string& path) {
  std::string why;
  if (!report::validate_report(rep, &why))
    throw std::logic_error("generated report fails schema validation: " + why);
  write_text_file(path, rep.dump(2) + "\n");
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const TraceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == TraceErrorCode::io_failure ? kExitIo : kExitValidation;
  } catch (const pipeline::InsufficientData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInsufficientData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

struct SimulateArgs {
  std::string config_path;
  std::string out_traces;
  std::string history_path;  // default: out_traces + ".history.csv"
  int emit_n = 8;
  double emit_temperature = 0.5;
};

inline int cmd_simulate(const SimulateArgs& args) {
  return guarded([&] {
    std::ifstream in(args.config_path);
    if (!in) throw TraceError(TraceErrorCode::io_failure, "", "", args.config_path);
    json cfg_json = json::parse(in);
    const sim::SimConfig config = cfg_json.get<sim::SimConfig>();

    sim::SimState state = sim::init_sim(config);
    sim::train(state, config.epochs);
    const TraceSet traces =
        sim::emit_traces(state, args.emit_n, args.emit_temperature);
    write_trace_set(traces, args.out_traces);

    const std::string history = args.history_path.empty()
                                    ? args.out_traces + ".history.csv"
                                    : args.history_path;
    sim::write_history_csv(state, history);
    std::cout << "wrote " << traces.records.size() << " traces ("
              << traces.count(Label::member) << " member / "
              << traces.count(Label::nonmember) << " nonmember) to "
              << args.out_traces << "\n";
    return kExitOk;
  });
}

struct AttackArgs {
  std::string traces_path;
  std::string report_path;
  pipeline::AttackOptions options;
  std::string features_csv;
  std::string roc_svg;
};

inline int cmd_attack(const AttackArgs& args) {
  return guarded([&] {
    const TraceSet set = load_trace_set(args.traces_path);
    const std::map<std::string, std::uint64_t> hashes = {
        {"traces", report::hash_file(args.traces_path)}};
    const pipeline::AttackResult res =
        pipeline::run_attack(set, args.options, hashes);
    write_report_json(res.report, args.report_path);

    if (!args.features_csv.empty())
      features::write_feature_csv(res.features, args.features_csv);
    if (!args.roc_svg.empty()) {
      std::vector<report::RocSeries> series;
      std::vector<double> member, nonmember;
      for (std::size_t k = 0; k < res.core.y.size(); ++k) {
        const double p = res.core.oof_probs[k];
        if (std::isnan(p)) continue;
        (res.core.y[k] ? member : nonmember).push_back(p);
      }
      series.push_back({"stacking", metrics::roc_curve(member, nonmember)});
      for (std::size_t c = 0; c < features::FeatureVector::kCount; ++c) {
        std::vector<double> m, n;
        for (std::size_t k = 0; k < res.core.labeled_rows.size(); ++k) {
          const double v = res.features[res.core.labeled_rows[k]].value(c);
          if (std::isnan(v)) continue;
          (res.core.y[k] ? m : n).push_back(v);
        }
        if (!m.empty() && !n.empty())
          series.push_back(
              {features::FeatureVector::name(c), metrics::roc_curve(m, n)});
      }
      report::emit_log_roc_svg(series, args.roc_svg);
    }

    const auto& pooled = res.report["attack"]["pooled"];
    std::cout << "attack auc=" << pooled["auc"] << " records="
              << set.records.size() << "\n";
    return kExitOk;
  });
}

struct BaselinesArgs {
  std::string traces_path;
  std::string report_path;
  pipeline::BaselineOptions options;
  std::uint64_t seed = 1;
};

inline int cmd_baselines(const BaselinesArgs& args) {
  return guarded([&] {
    const TraceSet set = load_trace_set(args.traces_path);
    const std::map<std::string, std::uint64_t> hashes = {
        {"traces", report::hash_file(args.traces_path)}};
    json rep = report::make_report_shell("baselines", args.options.to_json(),
                                         args.seed, hashes);
    rep["baselines"] = pipeline::run_baselines(set, args.options);
    write_report_json(rep, args.report_path);
    std::cout << "baselines written to " << args.report_path << "\n";
    return kExitOk;
  });
}

struct DefendArgs {
  std::string traces_path;
  std::string report_path;
  pipeline::DefendOptions defense;
  pipeline::AttackOptions attack;
  std::string sim_config_path;
};

inline int cmd_defend(const DefendArgs& args) {
  return guarded([&] {
    const TraceSet set = load_trace_set(args.traces_path);
    pipeline::DefendOptions dopt = args.defense;
    if (!args.sim_config_path.empty()) {
      std::ifstream in(args.sim_config_path);
      if (!in)
        throw TraceError(TraceErrorCode::io_failure, "", "", args.sim_config_path);
      dopt.sim_config = json::parse(in).get<sim::SimConfig>();
    }
    const std::map<std::string, std::uint64_t> hashes = {
        {"traces", report::hash_file(args.traces_path)}};
    const json rep = pipeline::run_defend(set, dopt, args.attack, hashes);
    write_report_json(rep, args.report_path);
    const auto& block = rep["defense"];
    std::cout << "defense " << dopt.defense << ": auc "
              << block["before"]["auc"] << " -> " << block["after"]["auc"]
              << "\n";
    return kExitOk;
  });
}

struct TransferArgs {
  std::string train_traces;
  std::string eval_traces;
  std::string report_path;
  std::string save_model;
  std::string load_model;
  pipeline::AttackOptions options;
};

inline int cmd_transfer(const TransferArgs& args) {
  return guarded([&] {
    const TraceSet eval_set = load_trace_set(args.eval_traces);
    std::map<std::string, std::uint64_t> hashes = {
        {"eval_traces", report::hash_file(args.eval_traces)}};

    std::optional<classifier::StackingModel> loaded;
    TraceSet train_set;
    if (!args.load_model.empty()) {
      std::ifstream in(args.load_model);
      if (!in) throw TraceError(TraceErrorCode::io_failure, "", "", args.load_model);
      loaded = classifier::stacking_from_json(json::parse(in));
      train_set = eval_set;  // unused when a model is supplied
    } else {
      train_set = load_trace_set(args.train_traces);
      hashes["train_traces"] = report::hash_file(args.train_traces);
    }

    const json rep = pipeline::run_transfer(train_set, eval_set, args.options,
                                            hashes, loaded);
    write_report_json(rep, args.report_path);

    if (!args.save_model.empty() && args.load_model.empty()) {
      const auto train_feats = features::extract_all(train_set, args.options.source);
      std::vector<std::size_t> rows;
      std::vector<int> y;
      for (std::size_t i = 0; i < train_feats.size(); ++i) {
        if (train_feats[i].label == Label::unknown) continue;
        rows.push_back(i);
        y.push_back(train_feats[i].label == Label::member ? 1 : 0);
      }
      classifier::StackingModel model = classifier::fit_stacking(
          pipeline::feature_matrix(train_feats, rows), y, args.options.folds,
          args.options.seed, args.options.n_trees);
      model.feature_names = pipeline::feature_names();
      write_text_file(args.save_model, classifier::to_json(model).dump(2) + "\n");
    }
    std::cout << "transfer auc=" << rep["transfer"]["metrics"]["auc"] << "\n";
    return kExitOk;
  });
}

struct ReportArgs {
  std::string in_path;
  std::string out_dir;  // optional CSV/SVG emission
};

inline int cmd_report(const ReportArgs& args) {
  return guarded([&] {
    std::ifstream in(args.in_path);
    if (!in) throw TraceError(TraceErrorCode::io_failure, "", "", args.in_path);
    const json rep = json::parse(in);
    std::string why;
    if (!report::validate_report(rep, &why))
      throw std::invalid_argument("report fails schema validation: " + why);

    std::cout << "run " << rep["run_id"].get<std::string>() << " kind "
              << rep["kind"].get<std::string>() << "\n";
    if (rep.contains("attack") && rep["attack"].contains("pooled")) {
      const auto& p = rep["attack"]["pooled"];
      std::cout << "  pooled auc " << p["auc"] << "  pauc " << p["pauc"]
                << "  ks_tail " << p["ks_tail"] << "\n";
      for (const auto& [k, v] : p["tpr_at"].items())
        std::cout << "  tpr@" << k << " fpr: " << v << "\n";
    }
    if (rep.contains("single_features")) {
      for (const auto& [name, row] : rep["single_features"].items()) {
        if (!row.value("available", false)) continue;
        std::cout << "  feature " << name << ": auc " << row["auc"]
                  << (row.value("pareto", false) ? " [pareto]" : "") << "\n";
      }
    }
    if (rep.contains("baselines")) {
      for (const auto& [name, entry] : rep["baselines"].items()) {
        for (const char* variant : {"raw", "calibrated"}) {
          if (!entry.contains(variant)) continue;
          const auto& row = entry[variant];
          std::cout << "  baseline " << name << "/" << variant << ": ";
          if (row.value("available", false))
            std::cout << "auc " << row["auc"] << "\n";
          else
            std::cout << "unavailable (" << row.value("reason", "") << ")\n";
        }
      }
    }
    if (rep.contains("defense")) {
      const auto& d = rep["defense"];
      std::cout << "  defense " << d["defense"].get<std::string>() << ": auc "
                << d["before"]["auc"] << " -> " << d["after"]["auc"];
      if (d.contains("epsilon")) std::cout << "  (epsilon " << d["epsilon"] << ")";
      std::cout << "\n";
    }
    if (rep.contains("transfer"))
      std::cout << "  transfer auc " << rep["transfer"]["metrics"]["auc"] << "\n";

    if (!args.out_dir.empty()) {
      if (rep.contains("per_sample")) {
        std::ostringstream csv;
        csv << "prompt_id,label,prob,fold,in_metrics\n";
        for (const auto& row : rep["per_sample"]) {
          csv << row["prompt_id"].get<std::string>() << ','
              << row["label"].get<std::string>() << ',';
          if (row.contains("prob") && !row["prob"].is_null())
            csv << row["prob"].get<double>();
          csv << ',';
          if (row.contains("fold")) csv << row["fold"].get<int>();
          csv << ',' << (row.value("in_metrics", false) ? 1 : 0) << "\n";
        }
        write_text_file(args.out_dir + "/per_sample.csv", csv.str());

        // regenerate the log-scale ROC from stored per-sample scores
        std::vector<double> member, nonmember;
        for (const auto& row : rep["per_sample"]) {
          if (!row.value("in_metrics", false)) continue;
          if (!row.contains("prob") || row["prob"].is_null()) continue;
          const std::string label = row["label"].get<std::string>();
          (label == "member" ? member : nonmember)
              .push_back(row["prob"].get<double>());
        }
        if (!member.empty() && !nonmember.empty())
          report::emit_log_roc_svg(
              {{"stacking", metrics::roc_curve(member, nonmember)}},
              args.out_dir + "/roc.svg");
      }
      std::cout << "artifacts written to " << args.out_dir << "\n";
    }
    return kExitOk;
  });
}

}  // namespace mia::cli
