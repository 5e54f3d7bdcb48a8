#pragma once

// Canonical trace data model and the JSONL interchange format. One line per
// audited prompt; an optional leading {"_meta": ...} line carries generator
// metadata. Parsing is strict: every structural invariant maps to a distinct
// error code so producers get actionable diagnostics.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace mia {

using json = nlohmann::json;

enum class Label { member, nonmember, unknown };
enum class SampleSource { ft, ref };

inline std::string to_string(Label l) {
  switch (l) {
    case Label::member: return "member";
    case Label::nonmember: return "nonmember";
    default: return "unknown";
  }
}

inline std::string to_string(SampleSource s) {
  return s == SampleSource::ft ? "ft" : "ref";
}

enum class TraceErrorCode {
  malformed_json,
  missing_field,
  type_error,
  length_mismatch,
  empty_logprobs,
  logprob_positive,
  entropy_negative,
  entropy_length_mismatch,
  reward_out_of_range,
  invalid_label,
  invalid_source,
  source_mismatch,
  duplicate_prompt_id,
  no_records,
  io_failure,
  empty_set,
};

inline const char* to_string(TraceErrorCode c) {
  switch (c) {
    case TraceErrorCode::malformed_json: return "malformed JSON";
    case TraceErrorCode::missing_field: return "missing required field";
    case TraceErrorCode::type_error: return "wrong field type";
    case TraceErrorCode::length_mismatch: return "array-length mismatch";
    case TraceErrorCode::empty_logprobs: return "empty logprob array";
    case TraceErrorCode::logprob_positive: return "logprob > 0";
    case TraceErrorCode::entropy_negative: return "entropy < 0";
    case TraceErrorCode::entropy_length_mismatch: return "entropy-length mismatch";
    case TraceErrorCode::reward_out_of_range: return "reward outside {0,1}";
    case TraceErrorCode::invalid_label: return "invalid label";
    case TraceErrorCode::invalid_source: return "invalid source";
    case TraceErrorCode::source_mismatch: return "sample source mismatch";
    case TraceErrorCode::duplicate_prompt_id: return "duplicate prompt_id";
    case TraceErrorCode::no_records: return "no records";
    case TraceErrorCode::io_failure: return "I/O failure";
    case TraceErrorCode::empty_set: return "refusing to write empty trace set";
  }
  return "unknown";
}

class TraceError : public std::runtime_error {
 public:
  TraceError(TraceErrorCode code, std::string field_path,
             std::string prompt_id = "", std::string detail = "")
      : std::runtime_error(format(code, field_path, prompt_id, detail)),
        code_(code),
        field_path_(std::move(field_path)),
        prompt_id_(std::move(prompt_id)) {}

  TraceErrorCode code() const { return code_; }
  const std::string& field_path() const { return field_path_; }
  const std::string& prompt_id() const { return prompt_id_; }

 private:
  static std::string format(TraceErrorCode code, const std::string& path,
                            const std::string& id, const std::string& detail) {
    std::string msg = to_string(code);
    if (!path.empty()) msg += " at " + path;
    if (!id.empty()) msg += " (prompt_id=" + id + ")";
    if (!detail.empty()) msg += ": " + detail;
    return msg;
  }

  TraceErrorCode code_;
  std::string field_path_;
  std::string prompt_id_;
};

// One sampled response with its verifier outcome and per-token log
// probabilities under both models. The logprob arrays may be jointly absent
// (e.g. after a perturbation defense invalidated them); such a sample still
// carries its text and reward but cannot feed logit-side features.
struct ResponseSample {
  std::string text;
  int reward = 0;  // verifier outcome, 0 or 1
  std::vector<double> token_logprobs_ft;
  std::vector<double> token_logprobs_ref;
  std::optional<std::vector<double>> token_entropies_ft;
  SampleSource source = SampleSource::ft;
  json extras = json::object();

  bool has_logprobs() const { return !token_logprobs_ft.empty(); }

  double seq_logprob_ft() const {
    double s = 0.0;
    for (double v : token_logprobs_ft) s += v;
    return s;
  }
  double seq_logprob_ref() const {
    double s = 0.0;
    for (double v : token_logprobs_ref) s += v;
    return s;
  }

  bool operator==(const ResponseSample&) const = default;
};

struct Neighbor {
  std::string text;
  double seq_logprob_ft = 0.0;
  double seq_logprob_ref = 0.0;
  bool operator==(const Neighbor&) const = default;
};

struct PromptTrace {
  std::string prompt_id;
  std::string prompt_text;
  Label label = Label::unknown;
  std::vector<ResponseSample> samples_ft;
  std::vector<ResponseSample> samples_ref;
  std::optional<ResponseSample> reference_answer;
  std::optional<std::vector<Neighbor>> neighbors;
  std::optional<double> prompt_seq_logprob_ft;
  std::optional<double> prompt_seq_logprob_ref;
  json extras = json::object();

  bool operator==(const PromptTrace&) const = default;
};

struct TraceMeta {
  std::string generator;
  int n_samples = 0;
  double temperature = 0.0;
  std::int64_t seed = 0;
  std::string notes;
  bool operator==(const TraceMeta&) const = default;
};

struct TraceSet {
  std::vector<PromptTrace> records;
  TraceMeta metadata;

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (const auto& r : records)
      if (r.label == l) ++n;
    return n;
  }
};

namespace detail {

inline const json& require(const json& obj, const char* key,
                           const std::string& path, const std::string& id) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw TraceError(TraceErrorCode::missing_field, path + "." + key, id);
  return *it;
}

inline std::vector<double> number_array(const json& v, const std::string& path,
                                        const std::string& id) {
  if (!v.is_array())
    throw TraceError(TraceErrorCode::type_error, path, id, "expected array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number())
      throw TraceError(TraceErrorCode::type_error, path, id, "expected number");
    out.push_back(e.get<double>());
  }
  return out;
}

inline SampleSource parse_source(const json& v, const std::string& path,
                                 const std::string& id) {
  if (!v.is_string())
    throw TraceError(TraceErrorCode::type_error, path, id, "expected string");
  const std::string s = v.get<std::string>();
  if (s == "ft") return SampleSource::ft;
  if (s == "ref") return SampleSource::ref;
  throw TraceError(TraceErrorCode::invalid_source, path, id, s);
}

inline ResponseSample parse_sample(const json& v, const std::string& path,
                                   const std::string& id) {
  if (!v.is_object())
    throw TraceError(TraceErrorCode::type_error, path, id, "expected object");
  ResponseSample s;
  const json& text = require(v, "text", path, id);
  if (!text.is_string())
    throw TraceError(TraceErrorCode::type_error, path + ".text", id);
  s.text = text.get<std::string>();

  const json& reward = require(v, "reward", path, id);
  if (!reward.is_number_integer())
    throw TraceError(TraceErrorCode::type_error, path + ".reward", id);
  s.reward = reward.get<int>();
  if (s.reward != 0 && s.reward != 1)
    throw TraceError(TraceErrorCode::reward_out_of_range, path + ".reward", id,
                     std::to_string(s.reward));

  s.source = parse_source(require(v, "source", path, id), path + ".source", id);

  const bool has_ft = v.contains("token_logprobs_ft");
  const bool has_ref = v.contains("token_logprobs_ref");
  if (has_ft != has_ref)
    throw TraceError(TraceErrorCode::missing_field,
                     path + (has_ft ? ".token_logprobs_ref" : ".token_logprobs_ft"),
                     id, "logprob arrays must be present together");
  if (has_ft) {
    s.token_logprobs_ft =
        number_array(v["token_logprobs_ft"], path + ".token_logprobs_ft", id);
    s.token_logprobs_ref =
        number_array(v["token_logprobs_ref"], path + ".token_logprobs_ref", id);
    if (s.token_logprobs_ft.empty())
      throw TraceError(TraceErrorCode::empty_logprobs,
                       path + ".token_logprobs_ft", id);
    if (s.token_logprobs_ft.size() != s.token_logprobs_ref.size())
      throw TraceError(TraceErrorCode::length_mismatch,
                       path + ".token_logprobs_ref", id,
                       std::to_string(s.token_logprobs_ft.size()) + " vs " +
                           std::to_string(s.token_logprobs_ref.size()));
    for (const auto* arr : {&s.token_logprobs_ft, &s.token_logprobs_ref}) {
      for (double lp : *arr)
        if (lp > 0.0)
          throw TraceError(TraceErrorCode::logprob_positive,
                           path + ".token_logprobs_*", id, std::to_string(lp));
    }
  }

  if (v.contains("token_entropies_ft")) {
    auto ent = number_array(v["token_entropies_ft"],
                            path + ".token_entropies_ft", id);
    if (has_ft && ent.size() != s.token_logprobs_ft.size())
      throw TraceError(TraceErrorCode::entropy_length_mismatch,
                       path + ".token_entropies_ft", id);
    for (double e : ent)
      if (e < 0.0)
        throw TraceError(TraceErrorCode::entropy_negative,
                         path + ".token_entropies_ft", id, std::to_string(e));
    s.token_entropies_ft = std::move(ent);
  }

  static const char* known[] = {"text",
                                "reward",
                                "token_logprobs_ft",
                                "token_logprobs_ref",
                                "token_entropies_ft",
                                "source"};
  for (auto it = v.begin(); it != v.end(); ++it) {
    bool k = false;
    for (const char* key : known) k = k || it.key() == key;
    if (!k) s.extras[it.key()] = it.value();
  }
  return s;
}

inline json sample_to_json(const ResponseSample& s) {
  json v = s.extras.is_object() ? s.extras : json::object();
  v["text"] = s.text;
  v["reward"] = s.reward;
  v["source"] = to_string(s.source);
  if (s.has_logprobs()) {
    v["token_logprobs_ft"] = s.token_logprobs_ft;
    v["token_logprobs_ref"] = s.token_logprobs_ref;
  }
  if (s.token_entropies_ft) v["token_entropies_ft"] = *s.token_entropies_ft;
  return v;
}

}  // namespace detail

// Parse one JSONL line into a fully validated PromptTrace. Unknown fields are
// preserved in the extras map and survive serialization.
inline PromptTrace parse_trace_line(const std::string& line) {
  json v = json::parse(line, nullptr, false);
  if (v.is_discarded())
    throw TraceError(TraceErrorCode::malformed_json, "", "");
  if (!v.is_object())
    throw TraceError(TraceErrorCode::type_error, "", "", "expected object");

  std::string id;
  if (v.contains("prompt_id") && v["prompt_id"].is_string())
    id = v["prompt_id"].get<std::string>();

  PromptTrace t;
  const json& pid = detail::require(v, "prompt_id", "", id);
  if (!pid.is_string())
    throw TraceError(TraceErrorCode::type_error, "prompt_id", id);
  t.prompt_id = pid.get<std::string>();
  id = t.prompt_id;

  const json& ptext = detail::require(v, "prompt_text", "", id);
  if (!ptext.is_string())
    throw TraceError(TraceErrorCode::type_error, "prompt_text", id);
  t.prompt_text = ptext.get<std::string>();

  const json& label = detail::require(v, "label", "", id);
  if (!label.is_string())
    throw TraceError(TraceErrorCode::type_error, "label", id);
  const std::string ls = label.get<std::string>();
  if (ls == "member")
    t.label = Label::member;
  else if (ls == "nonmember")
    t.label = Label::nonmember;
  else if (ls == "unknown")
    t.label = Label::unknown;
  else
    throw TraceError(TraceErrorCode::invalid_label, "label", id, ls);

  const json& sft = detail::require(v, "samples_ft", "", id);
  if (!sft.is_array())
    throw TraceError(TraceErrorCode::type_error, "samples_ft", id);
  for (std::size_t i = 0; i < sft.size(); ++i) {
    auto s = detail::parse_sample(sft[i], "samples_ft[" + std::to_string(i) + "]", id);
    if (s.source != SampleSource::ft)
      throw TraceError(TraceErrorCode::source_mismatch,
                       "samples_ft[" + std::to_string(i) + "].source", id);
    t.samples_ft.push_back(std::move(s));
  }

  const json& sref = detail::require(v, "samples_ref", "", id);
  if (!sref.is_array())
    throw TraceError(TraceErrorCode::type_error, "samples_ref", id);
  for (std::size_t i = 0; i < sref.size(); ++i) {
    auto s = detail::parse_sample(sref[i], "samples_ref[" + std::to_string(i) + "]", id);
    if (s.source != SampleSource::ref)
      throw TraceError(TraceErrorCode::source_mismatch,
                       "samples_ref[" + std::to_string(i) + "].source", id);
    t.samples_ref.push_back(std::move(s));
  }

  if (v.contains("reference_answer"))
    t.reference_answer = detail::parse_sample(v["reference_answer"],
                                              "reference_answer", id);

  if (v.contains("neighbors")) {
    const json& nb = v["neighbors"];
    if (!nb.is_array())
      throw TraceError(TraceErrorCode::type_error, "neighbors", id);
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const std::string path = "neighbors[" + std::to_string(i) + "]";
      const json& e = nb[i];
      if (!e.is_object()) throw TraceError(TraceErrorCode::type_error, path, id);
      Neighbor n;
      const json& txt = detail::require(e, "text", path, id);
      if (!txt.is_string())
        throw TraceError(TraceErrorCode::type_error, path + ".text", id);
      n.text = txt.get<std::string>();
      const json& lf = detail::require(e, "seq_logprob_ft", path, id);
      const json& lr = detail::require(e, "seq_logprob_ref", path, id);
      if (!lf.is_number() || !lr.is_number())
        throw TraceError(TraceErrorCode::type_error, path + ".seq_logprob_*", id);
      n.seq_logprob_ft = lf.get<double>();
      n.seq_logprob_ref = lr.get<double>();
      out.push_back(std::move(n));
    }
    t.neighbors = std::move(out);
  }

  for (const char* key : {"prompt_seq_logprob_ft", "prompt_seq_logprob_ref"}) {
    if (v.contains(key)) {
      if (!v[key].is_number())
        throw TraceError(TraceErrorCode::type_error, key, id);
      const double val = v[key].get<double>();
      if (std::string(key) == "prompt_seq_logprob_ft")
        t.prompt_seq_logprob_ft = val;
      else
        t.prompt_seq_logprob_ref = val;
    }
  }

  static const char* known[] = {"prompt_id",       "prompt_text",
                                "label",           "samples_ft",
                                "samples_ref",     "reference_answer",
                                "neighbors",       "prompt_seq_logprob_ft",
                                "prompt_seq_logprob_ref"};
  for (auto it = v.begin(); it != v.end(); ++it) {
    bool k = false;
    for (const char* key : known) k = k || it.key() == key;
    if (!k) t.extras[it.key()] = it.value();
  }
  return t;
}

inline json trace_to_json(const PromptTrace& t) {
  json v = t.extras.is_object() ? t.extras : json::object();
  v["prompt_id"] = t.prompt_id;
  v["prompt_text"] = t.prompt_text;
  v["label"] = to_string(t.label);
  v["samples_ft"] = json::array();
  for (const auto& s : t.samples_ft)
    v["samples_ft"].push_back(detail::sample_to_json(s));
  v["samples_ref"] = json::array();
  for (const auto& s : t.samples_ref)
    v["samples_ref"].push_back(detail::sample_to_json(s));
  if (t.reference_answer)
    v["reference_answer"] = detail::sample_to_json(*t.reference_answer);
  if (t.neighbors) {
    json nb = json::array();
    for (const auto& n : *t.neighbors)
      nb.push_back({{"text", n.text},
                    {"seq_logprob_ft", n.seq_logprob_ft},
                    {"seq_logprob_ref", n.seq_logprob_ref}});
    v["neighbors"] = std::move(nb);
  }
  if (t.prompt_seq_logprob_ft) v["prompt_seq_logprob_ft"] = *t.prompt_seq_logprob_ft;
  if (t.prompt_seq_logprob_ref) v["prompt_seq_logprob_ref"] = *t.prompt_seq_logprob_ref;
  return v;
}

inline std::string serialize_trace(const PromptTrace& t) {
  return trace_to_json(t).dump();
}

inline TraceSet load_trace_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceError(TraceErrorCode::io_failure, "", "", path);

  TraceSet set;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json probe = json::parse(line, nullptr, false);
    if (line_no == 1 && probe.is_object() && probe.contains("_meta")) {
      const json& m = probe["_meta"];
      set.metadata.generator = m.value("generator", std::string{});
      set.metadata.n_samples = m.value("n_samples", 0);
      set.metadata.temperature = m.value("temperature", 0.0);
      set.metadata.seed = m.value("seed", std::int64_t{0});
      set.metadata.notes = m.value("notes", std::string{});
      continue;
    }
    try {
      PromptTrace t = parse_trace_line(line);
      auto [it, inserted] = seen.emplace(t.prompt_id, line_no);
      if (!inserted)
        throw TraceError(TraceErrorCode::duplicate_prompt_id, "prompt_id",
                         t.prompt_id,
                         "first seen on line " + std::to_string(it->second));
      set.records.push_back(std::move(t));
    } catch (const TraceError& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
      if (e.code() == TraceErrorCode::duplicate_prompt_id) throw;
    }
  }

  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += e + "\n";
    throw TraceError(TraceErrorCode::malformed_json, "", "", msg);
  }
  if (set.records.empty())
    throw TraceError(TraceErrorCode::no_records, "", "", path);
  return set;
}

inline void write_trace_set(const TraceSet& set, const std::string& path) {
  if (set.records.empty())
    throw TraceError(TraceErrorCode::empty_set, "", "", path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TraceError(TraceErrorCode::io_failure, "", "", path);
  json meta = {{"_meta",
                {{"generator", set.metadata.generator},
                 {"n_samples", set.metadata.n_samples},
                 {"temperature", set.metadata.temperature},
                 {"seed", set.metadata.seed},
                 {"notes", set.metadata.notes}}}};
  out << meta.dump() << "\n";
  for (const auto& t : set.records) out << serialize_trace(t) << "\n";
  if (!out) throw TraceError(TraceErrorCode::io_failure, "", "", path);
}

}  // namespace mia
