#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mia/rng.hpp"
#include "mia/trace.hpp"

using namespace mia;

namespace {

json valid_sample(SampleSource source) {
  return json{{"text", "ba ce ."},
              {"reward", 1},
              {"token_logprobs_ft", {-0.5, -1.2, -0.1}},
              {"token_logprobs_ref", {-0.6, -1.0, -0.2}},
              {"token_entropies_ft", {1.1, 0.9, 0.3}},
              {"source", to_string(source)}};
}

json valid_record(const std::string& id = "p1") {
  return json{{"prompt_id", id},
              {"prompt_text", "task 1"},
              {"label", "member"},
              {"samples_ft", json::array({valid_sample(SampleSource::ft)})},
              {"samples_ref", json::array({valid_sample(SampleSource::ref)})}};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TraceErrorCode code_of(const std::string& line) {
  try {
    parse_trace_line(line);
  } catch (const TraceError& e) {
    return e.code();
  }
  FAIL("expected TraceError");
  return TraceErrorCode::malformed_json;
}

}  // namespace

TEST_CASE("minimal valid record round-trips to identical JSON") {
  const std::string line = valid_record().dump();
  const PromptTrace t = parse_trace_line(line);
  CHECK(t.prompt_id == "p1");
  CHECK(t.label == Label::member);
  REQUIRE(t.samples_ft.size() == 1);
  REQUIRE(t.samples_ref.size() == 1);
  // nlohmann objects normalize key order, so dumps compare exactly
  CHECK(serialize_trace(t) == json::parse(line).dump());
  CHECK(parse_trace_line(serialize_trace(t)) == t);
}

TEST_CASE("array-length mismatch is rejected") {
  json r = valid_record();
  r["samples_ft"][0]["token_logprobs_ref"] = {-0.6, -1.0};
  CHECK(code_of(r.dump()) == TraceErrorCode::length_mismatch);
}

TEST_CASE("reward outside {0,1} is rejected") {
  json r = valid_record();
  r["samples_ft"][0]["reward"] = 2;
  CHECK(code_of(r.dump()) == TraceErrorCode::reward_out_of_range);
}

TEST_CASE("every type invariant maps to a distinct error code") {
  json r;

  r = valid_record();
  r["samples_ft"][0]["token_logprobs_ft"][1] = 0.25;
  CHECK(code_of(r.dump()) == TraceErrorCode::logprob_positive);

  r = valid_record();
  r["samples_ft"][0]["token_logprobs_ft"] = json::array();
  r["samples_ft"][0]["token_logprobs_ref"] = json::array();
  CHECK(code_of(r.dump()) == TraceErrorCode::empty_logprobs);

  r = valid_record();
  r["samples_ft"][0]["token_entropies_ft"][0] = -0.1;
  CHECK(code_of(r.dump()) == TraceErrorCode::entropy_negative);

  r = valid_record();
  r["samples_ft"][0]["token_entropies_ft"] = {1.0, 2.0};
  CHECK(code_of(r.dump()) == TraceErrorCode::entropy_length_mismatch);

  r = valid_record();
  r["samples_ft"][0]["source"] = "ref";
  CHECK(code_of(r.dump()) == TraceErrorCode::source_mismatch);

  r = valid_record();
  r["samples_ref"][0]["source"] = "ft";
  CHECK(code_of(r.dump()) == TraceErrorCode::source_mismatch);

  r = valid_record();
  r["samples_ft"][0]["source"] = "neither";
  CHECK(code_of(r.dump()) == TraceErrorCode::invalid_source);

  r = valid_record();
  r["label"] = "maybe";
  CHECK(code_of(r.dump()) == TraceErrorCode::invalid_label);

  r = valid_record();
  r.erase("prompt_text");
  CHECK(code_of(r.dump()) == TraceErrorCode::missing_field);

  r = valid_record();
  r["samples_ft"][0].erase("token_logprobs_ref");
  CHECK(code_of(r.dump()) == TraceErrorCode::missing_field);

  r = valid_record();
  r["prompt_id"] = 7;
  CHECK(code_of(r.dump()) == TraceErrorCode::type_error);

  CHECK(code_of("{not json") == TraceErrorCode::malformed_json);
}

TEST_CASE("errors carry prompt_id and field path") {
  json r = valid_record("p42");
  r["samples_ft"][0]["reward"] = 3;
  try {
    parse_trace_line(r.dump());
    FAIL("expected error");
  } catch (const TraceError& e) {
    CHECK(e.prompt_id() == "p42");
    CHECK(e.field_path() == "samples_ft[0].reward");
  }
}

TEST_CASE("unknown fields survive the round trip") {
  json r = valid_record();
  r["producer_tag"] = "external-runner-7";
  r["samples_ft"][0]["rollout_ms"] = 18;
  const PromptTrace t = parse_trace_line(r.dump());
  CHECK(t.extras["producer_tag"] == "external-runner-7");
  const json back = json::parse(serialize_trace(t));
  CHECK(back["producer_tag"] == "external-runner-7");
  CHECK(back["samples_ft"][0]["rollout_ms"] == 18);
}

TEST_CASE("jointly absent logprob arrays mark an unscored sample") {
  json r = valid_record();
  r["samples_ft"][0].erase("token_logprobs_ft");
  r["samples_ft"][0].erase("token_logprobs_ref");
  r["samples_ft"][0].erase("token_entropies_ft");
  const PromptTrace t = parse_trace_line(r.dump());
  CHECK_FALSE(t.samples_ft[0].has_logprobs());
  CHECK(parse_trace_line(serialize_trace(t)) == t);
}

TEST_CASE("load_trace_set parses a meta line plus records") {
  const std::string path = temp_path("mia_traces_ok.jsonl");
  {
    std::ofstream out(path);
    out << R"({"_meta": {"generator": "test", "n_samples": 8, "temperature": 0.5, "seed": 3, "notes": ""}})"
        << "\n";
    out << valid_record("a").dump() << "\n";
    out << valid_record("b").dump() << "\n";
    out << valid_record("c").dump() << "\n";
  }
  const TraceSet set = load_trace_set(path);
  CHECK(set.records.size() == 3);
  CHECK(set.metadata.generator == "test");
  CHECK(set.metadata.seed == 3);
  CHECK(set.count(Label::member) == 3);
  std::remove(path.c_str());
}

TEST_CASE("duplicate prompt_id is rejected by name") {
  const std::string path = temp_path("mia_traces_dup.jsonl");
  {
    std::ofstream out(path);
    out << valid_record("p1").dump() << "\n";
    out << valid_record("p1").dump() << "\n";
  }
  try {
    load_trace_set(path);
    FAIL("expected duplicate error");
  } catch (const TraceError& e) {
    CHECK(e.code() == TraceErrorCode::duplicate_prompt_id);
    CHECK(e.prompt_id() == "p1");
  }
  std::remove(path.c_str());
}

TEST_CASE("empty file yields a no-records error") {
  const std::string path = temp_path("mia_traces_empty.jsonl");
  { std::ofstream out(path); }
  CHECK_THROWS_AS(load_trace_set(path), TraceError);
  try {
    load_trace_set(path);
  } catch (const TraceError& e) {
    CHECK(e.code() == TraceErrorCode::no_records);
  }
  std::remove(path.c_str());
}

TEST_CASE("line-level errors aggregate with line numbers") {
  const std::string path = temp_path("mia_traces_bad.jsonl");
  {
    std::ofstream out(path);
    out << valid_record("a").dump() << "\n";
    json bad = valid_record("b");
    bad["samples_ft"][0]["reward"] = 9;
    out << bad.dump() << "\n";
    out << "{broken\n";
  }
  try {
    load_trace_set(path);
    FAIL("expected aggregated error");
  } catch (const TraceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("write then load is the identity, including unicode") {
  TraceSet set;
  set.metadata = {"unit-test", 4, 0.7, 99, "notes"};
  PromptTrace t = parse_trace_line(valid_record("u1").dump());
  t.prompt_text = "solve 2×2 → ≤4 émojis ✓";
  set.records.push_back(t);
  set.records.push_back(parse_trace_line(valid_record("u2").dump()));

  const std::string path = temp_path("mia_traces_rt.jsonl");
  write_trace_set(set, path);
  const TraceSet loaded = load_trace_set(path);
  REQUIRE(loaded.records.size() == 2);
  CHECK(loaded.records[0] == set.records[0]);
  CHECK(loaded.records[1] == set.records[1]);
  CHECK(loaded.metadata == set.metadata);
  std::remove(path.c_str());
}

TEST_CASE("writing an empty set is refused") {
  TraceSet set;
  CHECK_THROWS_AS(write_trace_set(set, temp_path("mia_none.jsonl")), TraceError);
}

TEST_CASE("round-trip identity holds for randomized valid records") {
  auto stream = mia::rng::derive(7, "trace-prop");
  for (int it = 0; it < 50; ++it) {
    json r = valid_record("r" + std::to_string(it));
    const int n_ft = 1 + static_cast<int>(stream.below(4));
    r["samples_ft"] = json::array();
    for (int i = 0; i < n_ft; ++i) {
      json s = valid_sample(SampleSource::ft);
      const int len = 1 + static_cast<int>(stream.below(5));
      json lp_ft = json::array(), lp_ref = json::array();
      for (int k = 0; k < len; ++k) {
        lp_ft.push_back(-stream.uniform(0.001, 8.0));
        lp_ref.push_back(-stream.uniform(0.001, 8.0));
      }
      s["token_logprobs_ft"] = lp_ft;
      s["token_logprobs_ref"] = lp_ref;
      s.erase("token_entropies_ft");
      r["samples_ft"].push_back(s);
    }
    if (stream.uniform() < 0.5) {
      r["prompt_seq_logprob_ft"] = -stream.uniform(0.0, 30.0);
      r["prompt_seq_logprob_ref"] = -stream.uniform(0.0, 30.0);
      r["neighbors"] = json::array(
          {{{"text", "na ."},
            {"seq_logprob_ft", -stream.uniform(0.0, 9.0)},
            {"seq_logprob_ref", -stream.uniform(0.0, 9.0)}}});
    }
    const PromptTrace t = parse_trace_line(r.dump());
    CHECK(parse_trace_line(serialize_trace(t)) == t);
  }
}
