#pragma once

// End-to-end pipelines behind the CLI: feature extraction -> cross-validated
// stacking -> metrics and diagnostics, the baseline score table, the defense
// harness and cross-set transfer. Everything returns EvalReport JSON blocks.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mia/baselines.hpp"
#include "mia/classifier.hpp"
#include "mia/defenses.hpp"
#include "mia/features.hpp"
#include "mia/hardness.hpp"
#include "mia/metrics.hpp"
#include "mia/report.hpp"
#include "mia/sim.hpp"
#include "mia/trace.hpp"

namespace mia::pipeline {

using json = nlohmann::json;

class InsufficientData : public std::runtime_error {
 public:
  explicit InsufficientData(const std::string& what) : std::runtime_error(what) {}
};

struct AttackOptions {
  int folds = 5;
  std::uint64_t seed = 1;
  SampleSource source = SampleSource::ft;
  std::vector<double> fpr_targets = {0.01, 0.001};
  double pauc_fmax = 0.001;
  double hardness_tol = 0.0;
  int n_trees = 100;
  std::string feature_only;  // empty = full stacking attack

  json to_json() const {
    return json{{"folds", folds},
                {"seed", seed},
                {"source", to_string(source)},
                {"fpr_targets", fpr_targets},
                {"pauc_fmax", pauc_fmax},
                {"hardness_tol", hardness_tol},
                {"n_trees", n_trees},
                {"feature_only", feature_only}};
  }
};

inline classifier::Matrix feature_matrix(
    const std::vector<features::FeatureVector>& feats,
    const std::vector<std::size_t>& rows) {
  classifier::Matrix X(rows.size(), features::FeatureVector::kCount);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < features::FeatureVector::kCount; ++c)
      X.at(i, c) = feats[rows[i]].value(c);
  return X;
}

inline std::vector<std::string> feature_names() {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < features::FeatureVector::kCount; ++c)
    names.push_back(features::FeatureVector::name(c));
  return names;
}

// Result of the classifier stage on a feature table.
struct AttackCore {
  std::vector<std::size_t> labeled_rows;  // indices into the feature table
  std::vector<int> y;                     // 1 = member
  std::vector<double> oof_probs;          // aligned with labeled_rows
  std::vector<int> fold_of;               // aligned with labeled_rows
  report::MetricsBlock pooled;            // metrics over all out-of-fold scores
  json attack_block;
};

namespace detail {

inline void split_scores(const std::vector<double>& probs,
                         const std::vector<int>& y, std::vector<double>& member,
                         std::vector<double>& nonmember) {
  member.clear();
  nonmember.clear();
  for (std::size_t i = 0; i < probs.size(); ++i)
    (y[i] ? member : nonmember).push_back(probs[i]);
}

inline json aggregate_fold_metrics(const std::vector<report::MetricsBlock>& folds) {
  json agg = json::object();
  auto add = [&](const std::string& key, auto getter) {
    double sum = 0.0, mn = 1e300, mx = -1e300;
    for (const auto& f : folds) {
      const double v = getter(f);
      sum += v;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    agg[key] = {{"mean", sum / folds.size()}, {"min", mn}, {"max", mx}};
  };
  add("auc", [](const report::MetricsBlock& b) { return b.auc; });
  add("bal_acc", [](const report::MetricsBlock& b) { return b.bal_acc; });
  add("pauc", [](const report::MetricsBlock& b) { return b.pauc; });
  add("ks_tail", [](const report::MetricsBlock& b) { return b.ks_tail; });
  for (const auto& [key, _] : folds.front().tpr_at) {
    double sum = 0.0, mn = 1e300, mx = -1e300;
    for (const auto& f : folds) {
      const double v = f.tpr_at.at(key);
      sum += v;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    agg["tpr_at"][key] = {{"mean", sum / folds.size()}, {"min", mn}, {"max", mx}};
  }
  return agg;
}

}  // namespace detail

// Cross-validated stacking attack over a feature table. With feature_only
// set, the raw feature value replaces the stacked probability as the score
// (missing values excluded), reproducing the single-feature rows.
inline AttackCore attack_from_features(
    const std::vector<features::FeatureVector>& feats, const AttackOptions& opt) {
  AttackCore core;
  for (std::size_t i = 0; i < feats.size(); ++i)
    if (feats[i].label != Label::unknown) core.labeled_rows.push_back(i);
  if (core.labeled_rows.size() < static_cast<std::size_t>(2 * opt.folds))
    throw InsufficientData("fewer than 2*folds labeled records");
  for (std::size_t i : core.labeled_rows)
    core.y.push_back(feats[i].label == Label::member ? 1 : 0);
  std::size_t members = 0;
  for (int v : core.y) members += v;
  if (members == 0 || members == core.y.size())
    throw InsufficientData("labeled records are single-class");

  if (!opt.feature_only.empty()) {
    // Raw single-feature score path: no model, no folds.
    std::size_t fidx = features::FeatureVector::kCount;
    for (std::size_t c = 0; c < features::FeatureVector::kCount; ++c)
      if (opt.feature_only == features::FeatureVector::name(c)) fidx = c;
    if (fidx == features::FeatureVector::kCount)
      throw std::invalid_argument("unknown feature: " + opt.feature_only);
    std::vector<double> member, nonmember;
    for (std::size_t k = 0; k < core.labeled_rows.size(); ++k) {
      const double v = feats[core.labeled_rows[k]].value(fidx);
      core.oof_probs.push_back(v);
      core.fold_of.push_back(0);
      if (std::isnan(v)) continue;
      (core.y[k] ? member : nonmember).push_back(v);
    }
    if (member.empty() || nonmember.empty())
      throw InsufficientData("feature " + opt.feature_only + " entirely missing");
    core.pooled = report::compute_metrics(member, nonmember, opt.fpr_targets,
                                          opt.pauc_fmax);
    core.attack_block = {{"mode", "feature_only"},
                         {"feature", opt.feature_only},
                         {"pooled", report::metrics_to_json(core.pooled)}};
    return core;
  }

  const classifier::Matrix X = feature_matrix(feats, core.labeled_rows);
  const classifier::CvResult cv =
      classifier::cross_validate(X, core.y, opt.folds, opt.seed, opt.n_trees);
  core.oof_probs = cv.oof_probs;
  core.fold_of = cv.folds.fold_of;

  std::vector<report::MetricsBlock> fold_blocks;
  for (int f = 0; f < opt.folds; ++f) {
    std::vector<double> probs;
    std::vector<int> y;
    for (std::size_t k = 0; k < core.y.size(); ++k) {
      if (core.fold_of[k] != f) continue;
      probs.push_back(core.oof_probs[k]);
      y.push_back(core.y[k]);
    }
    std::vector<double> member, nonmember;
    detail::split_scores(probs, y, member, nonmember);
    auto block = report::compute_metrics(member, nonmember, opt.fpr_targets,
                                         opt.pauc_fmax);
    block.bal_acc = metrics::balanced_accuracy(probs, y);
    fold_blocks.push_back(std::move(block));
  }

  std::vector<double> member, nonmember;
  detail::split_scores(core.oof_probs, core.y, member, nonmember);
  core.pooled =
      report::compute_metrics(member, nonmember, opt.fpr_targets, opt.pauc_fmax);
  core.pooled.bal_acc = metrics::balanced_accuracy(core.oof_probs, core.y);

  json per_fold = json::array();
  for (const auto& b : fold_blocks) per_fold.push_back(report::metrics_to_json(b));
  core.attack_block = {{"mode", "stacking"},
                       {"per_fold", per_fold},
                       {"aggregate", detail::aggregate_fold_metrics(fold_blocks)},
                       {"pooled", report::metrics_to_json(core.pooled)}};
  if (core.pooled.n_nonmember < 1000)
    core.attack_block["tail_note"] =
        "TPR@0.1%FPR is granularity-limited below 1000 negatives; "
        "TPR@1%FPR is the primary tail metric at this scale";
  return core;
}

// Single-feature metric rows plus Pareto-front flags in (pauc, tpr@primary).
inline json single_feature_block(const std::vector<features::FeatureVector>& feats,
                                 const AttackOptions& opt) {
  json block = json::object();
  std::vector<metrics::ParetoPoint> points;
  const std::string primary = report::fpr_key(opt.fpr_targets.front());
  for (std::size_t c = 0; c < features::FeatureVector::kCount; ++c) {
    std::vector<double> member, nonmember;
    std::size_t missing = 0;
    for (const auto& f : feats) {
      if (f.label == Label::unknown) continue;
      const double v = f.value(c);
      if (std::isnan(v)) {
        ++missing;
        continue;
      }
      (f.label == Label::member ? member : nonmember).push_back(v);
    }
    const char* name = features::FeatureVector::name(c);
    if (member.empty() || nonmember.empty()) {
      block[name] = {{"available", false}, {"missing", missing}};
      continue;
    }
    auto m = report::compute_metrics(member, nonmember, opt.fpr_targets,
                                     opt.pauc_fmax);
    json row = report::metrics_to_json(m);
    row["available"] = true;
    row["missing"] = missing;
    block[name] = std::move(row);
    points.push_back({m.pauc, m.tpr_at.at(primary), m.ks_tail, name});
  }
  const auto front = metrics::pareto_front(points);
  for (const auto& p : points) {
    bool on_front = false;
    for (const auto& q : front) on_front = on_front || q.name == p.name;
    block[p.name]["pareto"] = on_front;
  }
  return block;
}

// Percentile diagnostics of feature values for flagged records (true/false
// positives at the strictest threshold with FPR <= the primary target)
// against the nonmember feature distribution.
inline json percentile_diagnostics(const std::vector<features::FeatureVector>& feats,
                                   const AttackCore& core,
                                   const AttackOptions& opt) {
  const double target = opt.fpr_targets.front();
  std::vector<double> member, nonmember;
  detail::split_scores(core.oof_probs, core.y, member, nonmember);

  // strictest (largest) threshold whose FPR stays within the target, taken
  // over achievable operating points
  double threshold = std::numeric_limits<double>::infinity();
  double best_tpr = -1.0;
  for (const auto& p : metrics::roc_curve(member, nonmember)) {
    if (p.fpr <= target && p.tpr > best_tpr) {
      best_tpr = p.tpr;
      threshold = p.threshold;
    }
  }

  std::vector<std::size_t> tps, fps;
  for (std::size_t k = 0; k < core.y.size(); ++k) {
    const bool flagged = core.oof_probs[k] >= threshold;
    if (!flagged) continue;
    (core.y[k] ? tps : fps).push_back(core.labeled_rows[k]);
  }

  auto summarize = [&](const std::vector<std::size_t>& rows) {
    json out = json::object();
    out["count"] = rows.size();
    for (std::size_t c = 0; c < features::FeatureVector::kCount; ++c) {
      std::vector<double> flagged_vals, negative_vals;
      for (std::size_t row : rows) {
        const double v = feats[row].value(c);
        if (!std::isnan(v)) flagged_vals.push_back(v);
      }
      for (std::size_t k = 0; k < core.y.size(); ++k) {
        if (core.y[k]) continue;
        const double v = feats[core.labeled_rows[k]].value(c);
        if (!std::isnan(v)) negative_vals.push_back(v);
      }
      if (flagged_vals.empty() || negative_vals.empty()) continue;
      auto ranks = metrics::percentile_ranks(flagged_vals, negative_vals);
      std::sort(ranks.begin(), ranks.end());
      double mean = 0.0;
      for (double r : ranks) mean += r;
      mean /= ranks.size();
      out[features::FeatureVector::name(c)] = {
          {"mean", mean},
          {"median", ranks[ranks.size() / 2]},
          {"q25", ranks[ranks.size() / 4]},
          {"q75", ranks[(3 * ranks.size()) / 4]}};
    }
    return out;
  };

  return json{{"fpr_target", target},
              {"threshold", std::isinf(threshold) ? json() : json(threshold)},
              {"tp_percentiles", summarize(tps)},
              {"fp_percentiles", summarize(fps)}};
}

// Stratified hardness analysis: the full attack run independently inside
// each split, plus mean cross-model response similarity.
inline json hardness_block(const TraceSet& set,
                           const std::vector<features::FeatureVector>& feats,
                           const AttackOptions& opt) {
  const auto part = hardness::partition(feats, opt.hardness_tol);
  json block = json::object();

  auto run_split = [&](const std::vector<std::size_t>& rows, const char* name) {
    json entry = {{"count", rows.size()}};
    std::vector<features::FeatureVector> sub;
    for (std::size_t i : rows) sub.push_back(feats[i]);
    try {
      AttackOptions sub_opt = opt;
      sub_opt.feature_only.clear();
      const AttackCore core = attack_from_features(sub, sub_opt);
      entry["available"] = true;
      entry["metrics"] = report::metrics_to_json(core.pooled);
    } catch (const InsufficientData& e) {
      entry["available"] = false;
      entry["reason"] = e.what();
    } catch (const std::invalid_argument& e) {
      entry["available"] = false;
      entry["reason"] = e.what();
    }
    block[name] = std::move(entry);
  };
  run_split(part.all0, "all0");
  run_split(part.all1, "all1");
  run_split(part.residual, "residual");

  double rouge = 0.0, ngram = 0.0;
  std::size_t n = 0;
  for (const auto& t : set.records) {
    if (t.samples_ft.empty() || t.samples_ref.empty()) continue;
    const auto s = hardness::group_similarity(t);
    rouge += s.rouge_l;
    ngram += s.ngram;
    ++n;
  }
  if (n) {
    block["similarity"] = {{"rouge_l", rouge / n}, {"ngram", ngram / n},
                           {"prompts", n}};
  }
  block["tolerance"] = opt.hardness_tol;
  return block;
}

struct AttackResult {
  std::vector<features::FeatureVector> features;
  AttackCore core;
  json report;
};

// The full attack pipeline on a trace set: features -> CV stacking ->
// metrics, single-feature rows, hardness and percentile diagnostics.
// Records with unknown labels are scored by a model fit on all labeled data
// but excluded from every metric.
inline AttackResult run_attack(const TraceSet& set, const AttackOptions& opt,
                               const std::map<std::string, std::uint64_t>& hashes = {}) {
  AttackResult res;
  res.features = features::extract_all(set, opt.source);
  res.core = attack_from_features(res.features, opt);

  res.report = report::make_report_shell("attack", opt.to_json(), opt.seed, hashes);
  res.report["attack"] = res.core.attack_block;
  res.report["single_features"] = single_feature_block(res.features, opt);
  if (opt.feature_only.empty()) {
    res.report["diagnostics"] = percentile_diagnostics(res.features, res.core, opt);
    res.report["hardness"] = hardness_block(set, res.features, opt);
  }

  // Per-sample table; unknown-label records get full-model scores.
  json per_sample = json::array();
  std::vector<std::size_t> unknown_rows;
  for (std::size_t i = 0; i < res.features.size(); ++i)
    if (res.features[i].label == Label::unknown) unknown_rows.push_back(i);
  std::vector<double> unknown_probs;
  if (!unknown_rows.empty() && opt.feature_only.empty()) {
    const classifier::Matrix X_lab = feature_matrix(res.features, res.core.labeled_rows);
    const classifier::StackingModel full = classifier::fit_stacking(
        X_lab, res.core.y, opt.folds, opt.seed, opt.n_trees);
    unknown_probs = full.predict_proba(feature_matrix(res.features, unknown_rows));
  }
  std::size_t li = 0, ui = 0;
  for (std::size_t i = 0; i < res.features.size(); ++i) {
    const auto& f = res.features[i];
    json row = {{"prompt_id", f.prompt_id}, {"label", to_string(f.label)}};
    if (f.label == Label::unknown) {
      if (!unknown_probs.empty()) row["prob"] = unknown_probs[ui];
      row["in_metrics"] = false;
      ++ui;
    } else {
      const double p = res.core.oof_probs[li];
      if (std::isnan(p))
        row["prob"] = json();
      else
        row["prob"] = p;
      row["fold"] = res.core.fold_of[li];
      row["in_metrics"] = true;
      ++li;
    }
    per_sample.push_back(std::move(row));
  }
  res.report["per_sample"] = std::move(per_sample);
  return res;
}

// ---------------------------------------------------------------------------
// Baselines

struct BaselineOptions {
  baselines::ScoreTarget target = baselines::ScoreTarget::reference_answer;
  double min_k = 0.2;
  std::vector<double> fpr_targets = {0.01, 0.001};
  double pauc_fmax = 0.001;

  json to_json() const {
    return json{{"target", target == baselines::ScoreTarget::reference_answer
                               ? "reference_answer"
                               : "ft_samples"},
                {"min_k", min_k},
                {"fpr_targets", fpr_targets}};
  }
};

// Score table for all baseline methods, raw and calibrated. A method is
// unavailable (with a reason) unless every labeled record supports it;
// missing inputs are an explicit per-method failure, never a silent skip.
inline json run_baselines(const TraceSet& set, const BaselineOptions& opt) {
  json block = json::object();
  std::vector<const PromptTrace*> labeled;
  for (const auto& t : set.records)
    if (t.label != Label::unknown) labeled.push_back(&t);
  if (labeled.empty()) throw InsufficientData("no labeled records");

  for (auto method : baselines::all_methods()) {
    json entry = json::object();
    for (bool calibrated : {false, true}) {
      const char* variant = calibrated ? "calibrated" : "raw";
      std::vector<double> member, nonmember;
      std::string failure;
      const int orient = calibrated ? baselines::calibrated_orientation(method)
                                    : baselines::raw_orientation(method);
      try {
        for (const PromptTrace* t : labeled) {
          const double raw =
              calibrated
                  ? baselines::calibrated_score(method, *t, opt.target, opt.min_k)
                  : baselines::raw_score(method, *t, opt.target, opt.min_k);
          const double score = orient * raw;
          (t->label == Label::member ? member : nonmember).push_back(score);
        }
      } catch (const baselines::BaselineUnavailable& e) {
        failure = e.what();
      }
      if (!failure.empty()) {
        entry[variant] = {{"available", false}, {"reason", failure}};
        continue;
      }
      if (member.empty() || nonmember.empty()) {
        entry[variant] = {{"available", false}, {"reason", "single-class labels"}};
        continue;
      }
      auto m = report::compute_metrics(member, nonmember, opt.fpr_targets,
                                       opt.pauc_fmax);
      json row = report::metrics_to_json(m);
      row["available"] = true;
      row["orientation"] = orient;
      entry[variant] = std::move(row);
    }
    block[baselines::to_string(method)] = std::move(entry);
  }
  return block;
}

// ---------------------------------------------------------------------------
// Defenses

struct DefendOptions {
  std::string defense;  // perturb | gaussian | laplace | dp_decode
  double strength = 0.0;          // perturb / dp_decode
  double clip = 1.0;              // absolute DP clip bound
  double scale = 0.0;             // absolute DP noise scale
  double delta = 1e-5;            // gaussian
  double relative = 0.0;          // relative DP noise fraction (overrides scale)
  std::uint64_t seed = 1;
  std::optional<sim::SimConfig> sim_config;  // rescoring / dp_decode runs

  json to_json() const {
    json j = {{"defense", defense},   {"strength", strength},
              {"clip", clip},         {"scale", scale},
              {"delta", delta},       {"relative", relative},
              {"seed", seed}};
    if (sim_config) j["sim_config"] = *sim_config;
    return j;
  }
};

// Apply a defense, rerun the attack, and report before/after metrics with
// the privacy budget where applicable.
inline json run_defend(const TraceSet& set, const DefendOptions& dopt,
                       const AttackOptions& aopt,
                       const std::map<std::string, std::uint64_t>& hashes = {}) {
  json rep = report::make_report_shell(
      "defend", json{{"defense", dopt.to_json()}, {"attack", aopt.to_json()}},
      aopt.seed, hashes);
  json block = {{"defense", dopt.defense}, {"params", dopt.to_json()}};

  if (dopt.defense == "perturb") {
    const AttackResult before = run_attack(set, aopt);
    defenses::PerturbConfig cfg;
    cfg.strength = dopt.strength;
    cfg.seed = dopt.seed;
    TraceSet after_set = defenses::perturb_traceset(set, cfg);
    if (dopt.sim_config) {
      sim::SimState st = sim::init_sim(*dopt.sim_config);
      sim::train(st, dopt.sim_config->epochs);
      after_set = sim::rescore_trace_set(st, after_set);
      block["rescored"] = true;
    } else {
      block["rescored"] = false;
    }
    const AttackResult after = run_attack(after_set, aopt);
    block["before"] = before.core.attack_block["pooled"];
    block["after"] = after.core.attack_block["pooled"];
  } else if (dopt.defense == "gaussian" || dopt.defense == "laplace") {
    const auto mech = dopt.defense == "gaussian" ? defenses::DpMechanism::gaussian
                                                 : defenses::DpMechanism::laplace;
    auto feats = features::extract_all(set, aopt.source);
    const AttackCore before = attack_from_features(feats, aopt);

    defenses::DpParams params;
    std::vector<features::FeatureVector> noisy;
    if (dopt.relative > 0.0) {
      const auto mapping =
          defenses::relative_noise_mapping(feats, dopt.relative, mech, dopt.delta);
      params = mapping.params;
      noisy = defenses::add_feature_noise(
          defenses::normalize_features(feats, mapping), params, dopt.seed);
      block["relative_mapping"] = {{"relative", dopt.relative},
                                   {"normalized_range", 1.0},
                                   {"lo", mapping.lo},
                                   {"hi", mapping.hi}};
    } else {
      params.mechanism = mech;
      params.clip_bound = dopt.clip;
      params.noise_scale = dopt.scale;
      params.delta = dopt.delta;
      noisy = defenses::add_feature_noise(feats, params, dopt.seed);
    }
    const AttackCore after = attack_from_features(noisy, aopt);
    block["epsilon"] = defenses::epsilon_for(params);
    block["mechanism_params"] = {{"clip_bound", params.clip_bound},
                                 {"noise_scale", params.noise_scale},
                                 {"delta", params.delta}};
    block["before"] = before.attack_block["pooled"];
    block["after"] = after.attack_block["pooled"];
  } else if (dopt.defense == "dp_decode") {
    if (!dopt.sim_config)
      throw std::invalid_argument("dp_decode defense requires a sim config");
    sim::SimState st = sim::init_sim(*dopt.sim_config);
    sim::train(st, dopt.sim_config->epochs);
    const TraceSet clean = sim::emit_traces(st, 8, 0.5, 0.0);
    const TraceSet noisy = sim::emit_traces(st, 8, 0.5, dopt.strength);
    block["before"] = run_attack(clean, aopt).core.attack_block["pooled"];
    block["after"] = run_attack(noisy, aopt).core.attack_block["pooled"];
  } else {
    throw std::invalid_argument("unknown defense: " + dopt.defense);
  }

  rep["defense"] = std::move(block);
  return rep;
}

// ---------------------------------------------------------------------------
// Transfer: fit on one trace set, evaluate on another.

inline json run_transfer(const TraceSet& train_set, const TraceSet& eval_set,
                         const AttackOptions& opt,
                         const std::map<std::string, std::uint64_t>& hashes = {},
                         const std::optional<classifier::StackingModel>& loaded = {}) {
  const auto train_feats = features::extract_all(train_set, opt.source);
  const auto eval_feats = features::extract_all(eval_set, opt.source);

  classifier::StackingModel model;
  if (loaded) {
    model = *loaded;
    if (model.feature_names != feature_names())
      throw std::invalid_argument("transfer: mismatched feature schemas");
  } else {
    std::vector<std::size_t> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < train_feats.size(); ++i) {
      if (train_feats[i].label == Label::unknown) continue;
      rows.push_back(i);
      y.push_back(train_feats[i].label == Label::member ? 1 : 0);
    }
    if (rows.size() < static_cast<std::size_t>(2 * opt.folds))
      throw InsufficientData("transfer: too few labeled training records");
    model = classifier::fit_stacking(feature_matrix(train_feats, rows), y,
                                     opt.folds, opt.seed, opt.n_trees);
    model.feature_names = feature_names();
  }

  std::vector<std::size_t> eval_rows;
  std::vector<int> eval_y;
  for (std::size_t i = 0; i < eval_feats.size(); ++i) {
    if (eval_feats[i].label == Label::unknown) continue;
    eval_rows.push_back(i);
    eval_y.push_back(eval_feats[i].label == Label::member ? 1 : 0);
  }
  if (eval_rows.empty()) throw InsufficientData("transfer: no labeled eval records");
  const auto probs = model.predict_proba(feature_matrix(eval_feats, eval_rows));

  std::vector<double> member, nonmember;
  detail::split_scores(probs, eval_y, member, nonmember);
  if (member.empty() || nonmember.empty())
    throw InsufficientData("transfer: eval records are single-class");
  auto m = report::compute_metrics(member, nonmember, opt.fpr_targets, opt.pauc_fmax);
  m.bal_acc = metrics::balanced_accuracy(probs, eval_y);

  json rep = report::make_report_shell("transfer", opt.to_json(), opt.seed, hashes);
  rep["transfer"] = {{"metrics", report::metrics_to_json(m)},
                     {"n_train", train_feats.size()},
                     {"n_eval", eval_rows.size()},
                     {"loaded_model", static_cast<bool>(loaded)}};
  return rep;
}

}  // namespace mia::pipeline
