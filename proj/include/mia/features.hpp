#pragma once

// The five behavioral-divergence features computed per prompt: advantage
// side (ft_score, base_score = mean verifier reward under each model) and
// logit side (mean k3 divergence, mean sequence log-likelihood ratio, and
// its zlib-normalized variant). Uncomputable fields carry a missing flag and
// a NaN value; they are never silently zero-filled — imputation is the
// classifier's job.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "mia/trace.hpp"

namespace mia::features {

inline constexpr int kZlibLevel = 6;
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct FeatureVector {
  std::string prompt_id;
  Label label = Label::unknown;
  double ft_score = kMissing;
  double base_score = kMissing;
  double divergence = kMissing;
  double likelihood = kMissing;
  double zlib = kMissing;
  SampleSource source = SampleSource::ft;
  bool ft_score_missing = true;
  bool base_score_missing = true;
  bool divergence_missing = true;
  bool likelihood_missing = true;
  bool zlib_missing = true;

  double value(std::size_t i) const {
    switch (i) {
      case 0: return ft_score;
      case 1: return base_score;
      case 2: return divergence;
      case 3: return likelihood;
      default: return zlib;
    }
  }
  static constexpr std::size_t kCount = 5;
  static const char* name(std::size_t i) {
    static const char* names[] = {"ft_score", "base_score", "divergence",
                                  "likelihood", "zlib"};
    return names[i];
  }
};

inline double mean_reward(const std::vector<ResponseSample>& samples) {
  if (samples.empty()) return kMissing;
  double s = 0.0;
  for (const auto& r : samples) s += r.reward;
  return s / samples.size();
}

inline double ft_score(const PromptTrace& t) { return mean_reward(t.samples_ft); }
inline double base_score(const PromptTrace& t) { return mean_reward(t.samples_ref); }

// Per-response k3 divergence: mean over tokens of exp(d) - d - 1 with
// d = logprob_ref - logprob_ft. Nonnegative, zero iff the policies agree on
// every sampled token; unbiased for KL(ft||ref) when tokens are drawn from
// the fine-tuned model.
inline double k3_response(const ResponseSample& s) {
  if (s.token_logprobs_ft.size() != s.token_logprobs_ref.size())
    throw std::invalid_argument("k3_response: logprob length mismatch");
  if (s.token_logprobs_ft.empty()) return kMissing;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.token_logprobs_ft.size(); ++i) {
    const double d = s.token_logprobs_ref[i] - s.token_logprobs_ft[i];
    acc += std::expm1(d) - d;  // exp(d) - d - 1
  }
  return acc / s.token_logprobs_ft.size();
}

inline const std::vector<ResponseSample>& sample_set(const PromptTrace& t,
                                                     SampleSource source) {
  return source == SampleSource::ft ? t.samples_ft : t.samples_ref;
}

inline double divergence_feature(const PromptTrace& t,
                                 SampleSource source = SampleSource::ft) {
  const auto& samples = sample_set(t, source);
  if (samples.empty()) return kMissing;
  double acc = 0.0;
  for (const auto& s : samples) {
    if (!s.has_logprobs()) return kMissing;
    acc += k3_response(s);
  }
  return acc / samples.size();
}

// Mean over samples of the sequence log-likelihood ratio
// sum_t lp_ft - sum_t lp_ref (sequence sums, in nats).
inline double likelihood_feature(const PromptTrace& t,
                                 SampleSource source = SampleSource::ft) {
  const auto& samples = sample_set(t, source);
  if (samples.empty()) return kMissing;
  double acc = 0.0;
  for (const auto& s : samples) {
    if (!s.has_logprobs()) return kMissing;
    acc += s.seq_logprob_ft() - s.seq_logprob_ref();
  }
  return acc / samples.size();
}

// Byte length of the zlib-container DEFLATE compression of the UTF-8 text at
// level 6.
inline std::size_t zlib_len(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("zlib_len: empty text");
  uLongf bound = compressBound(static_cast<uLong>(text.size()));
  std::vector<Bytef> buf(bound);
  const int rc = compress2(buf.data(), &bound,
                           reinterpret_cast<const Bytef*>(text.data()),
                           static_cast<uLong>(text.size()), kZlibLevel);
  if (rc != Z_OK) throw std::runtime_error("zlib_len: compress2 failed");
  return static_cast<std::size_t>(bound);
}

// Mean over samples of (sequence log-likelihood ratio) / zlib_len(text),
// in nats per compressed byte.
inline double zlib_feature(const PromptTrace& t,
                           SampleSource source = SampleSource::ft) {
  const auto& samples = sample_set(t, source);
  if (samples.empty()) return kMissing;
  double acc = 0.0;
  for (const auto& s : samples) {
    if (!s.has_logprobs() || s.text.empty()) return kMissing;
    acc += (s.seq_logprob_ft() - s.seq_logprob_ref()) /
           static_cast<double>(zlib_len(s.text));
  }
  return acc / samples.size();
}

inline FeatureVector extract_features(const PromptTrace& t,
                                      SampleSource source = SampleSource::ft) {
  FeatureVector f;
  f.prompt_id = t.prompt_id;
  f.label = t.label;
  f.source = source;
  f.ft_score = ft_score(t);
  f.base_score = base_score(t);
  f.divergence = divergence_feature(t, source);
  f.likelihood = likelihood_feature(t, source);
  f.zlib = zlib_feature(t, source);
  f.ft_score_missing = std::isnan(f.ft_score);
  f.base_score_missing = std::isnan(f.base_score);
  f.divergence_missing = std::isnan(f.divergence);
  f.likelihood_missing = std::isnan(f.likelihood);
  f.zlib_missing = std::isnan(f.zlib);
  return f;
}

inline std::vector<FeatureVector> extract_all(const TraceSet& set,
                                              SampleSource source = SampleSource::ft) {
  std::vector<FeatureVector> out;
  out.reserve(set.records.size());
  for (const auto& t : set.records) out.push_back(extract_features(t, source));
  return out;
}

inline void write_feature_csv(const std::vector<FeatureVector>& features,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_feature_csv: cannot open " + path);
  out << "prompt_id,label,ft_score,base_score,divergence,likelihood,zlib,source,"
         "ft_score_missing,base_score_missing,divergence_missing,"
         "likelihood_missing,zlib_missing\n";
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& f : features) {
    out << f.prompt_id << ',' << to_string(f.label) << ',' << cell(f.ft_score)
        << ',' << cell(f.base_score) << ',' << cell(f.divergence) << ','
        << cell(f.likelihood) << ',' << cell(f.zlib) << ','
        << to_string(f.source) << ',' << f.ft_score_missing << ','
        << f.base_score_missing << ',' << f.divergence_missing << ','
        << f.likelihood_missing << ',' << f.zlib_missing << "\n";
  }
}

}  // namespace mia::features
