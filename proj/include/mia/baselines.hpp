#pragma once

// Memorization-style baseline scores and their base-model calibration. Each
// method has a raw value with its natural sign plus a membership orientation
// (+1 when larger raw values indicate membership, -1 otherwise); the
// orientation is applied when scores enter ROC analysis and is recorded in
// reports.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mia/features.hpp"
#include "mia/trace.hpp"

namespace mia::baselines {

class BaselineUnavailable : public std::runtime_error {
 public:
  explicit BaselineUnavailable(const std::string& what)
      : std::runtime_error("baseline unavailable: " + what) {}
};

enum class Model { ft, ref };

inline const std::vector<double>& logprobs(const ResponseSample& s, Model m) {
  return m == Model::ft ? s.token_logprobs_ft : s.token_logprobs_ref;
}

// Negative log-likelihood of the target text: -sum_t logprob_t.
inline double loss_score(const ResponseSample& target, Model m = Model::ft) {
  if (!target.has_logprobs()) throw BaselineUnavailable("loss: no logprobs");
  double s = 0.0;
  for (double lp : logprobs(target, m)) s -= lp;
  return s;
}

// Sequence likelihood ratio between fine-tuned and reference model.
inline double lira_score(const ResponseSample& target) {
  if (!target.has_logprobs()) throw BaselineUnavailable("lira: no logprobs");
  return target.seq_logprob_ft() - target.seq_logprob_ref();
}

// NLL normalized by the zlib-compressed byte length of the text.
inline double zlib_score(const ResponseSample& target, Model m = Model::ft) {
  if (target.text.empty()) throw BaselineUnavailable("zlib: empty text");
  return loss_score(target, m) /
         static_cast<double>(features::zlib_len(target.text));
}

// Mean of the ceil(k*|o|) smallest per-token NLLs.
inline double min_k_score(const ResponseSample& target, double k = 0.2,
                          Model m = Model::ft) {
  if (k <= 0.0 || k > 1.0) throw std::invalid_argument("min_k: k outside (0,1]");
  if (!target.has_logprobs()) throw BaselineUnavailable("min_k: no logprobs");
  std::vector<double> nll;
  nll.reserve(logprobs(target, m).size());
  for (double lp : logprobs(target, m)) nll.push_back(-lp);
  std::sort(nll.begin(), nll.end());
  const std::size_t take =
      static_cast<std::size_t>(std::ceil(k * static_cast<double>(nll.size())));
  double s = 0.0;
  for (std::size_t i = 0; i < take; ++i) s += nll[i];
  return s / static_cast<double>(take);
}

// Mean full-distribution token entropy under the fine-tuned model. The exact
// formulation of this baseline is a declared stand-in (mean token entropy),
// marked as such in reports.
inline double entropy_score(const ResponseSample& target) {
  if (!target.token_entropies_ft)
    throw BaselineUnavailable("entropy: token_entropies_ft absent");
  const auto& ent = *target.token_entropies_ft;
  if (ent.empty()) throw BaselineUnavailable("entropy: empty entropies");
  double s = 0.0;
  for (double e : ent) s += e;
  return s / ent.size();
}

// Mean neighbor sequence log-probability minus the prompt's own sequence
// log-probability under the chosen model.
inline double neighbor_score(const PromptTrace& t, Model m = Model::ft) {
  if (!t.neighbors || t.neighbors->empty())
    throw BaselineUnavailable("neighbor: neighbors absent");
  const std::optional<double>& own =
      m == Model::ft ? t.prompt_seq_logprob_ft : t.prompt_seq_logprob_ref;
  if (!own) throw BaselineUnavailable("neighbor: prompt_seq_logprob absent");
  double s = 0.0;
  for (const auto& n : *t.neighbors)
    s += m == Model::ft ? n.seq_logprob_ft : n.seq_logprob_ref;
  return s / t.neighbors->size() - *own;
}

inline double calibrate(double score_ft, double score_ref) {
  return score_ft - score_ref;
}

enum class Method { loss, lira, zlib, min_k, entropy, neighbor };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::loss: return "loss";
    case Method::lira: return "lira";
    case Method::zlib: return "zlib";
    case Method::min_k: return "min_k";
    case Method::entropy: return "entropy";
    case Method::neighbor: return "neighbor";
  }
  return "?";
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> v = {Method::loss,    Method::lira,
                                        Method::zlib,    Method::min_k,
                                        Method::entropy, Method::neighbor};
  return v;
}

// Membership orientation of the raw score: +1 if larger raw values indicate
// membership. loss/zlib/min_k/entropy are "lower is member"; the neighbor
// score is lower when the prompt sits above its neighborhood.
inline int raw_orientation(Method m) {
  switch (m) {
    case Method::lira: return +1;
    default: return -1;
  }
}

// Calibrated scores (metric_ft - metric_ref) flip with the raw orientation:
// e.g. calibrated loss is lower for members, so orientation stays -1.
inline int calibrated_orientation(Method m) { return raw_orientation(m); }

enum class ScoreTarget { reference_answer, ft_samples };

namespace detail {

inline const ResponseSample& reference_target(const PromptTrace& t) {
  if (!t.reference_answer)
    throw BaselineUnavailable("reference_answer absent for " + t.prompt_id);
  return *t.reference_answer;
}

template <typename Fn>
double on_target(const PromptTrace& t, ScoreTarget target, Fn&& fn) {
  if (target == ScoreTarget::reference_answer) return fn(reference_target(t));
  if (t.samples_ft.empty())
    throw BaselineUnavailable("samples_ft empty for " + t.prompt_id);
  double s = 0.0;
  for (const auto& smp : t.samples_ft) s += fn(smp);
  return s / t.samples_ft.size();
}

}  // namespace detail

// Raw score of a method on the designated text (reference answer by default,
// or averaged over fine-tuned samples).
inline double raw_score(Method m, const PromptTrace& t, ScoreTarget target,
                        double min_k_fraction = 0.2) {
  switch (m) {
    case Method::loss:
      return detail::on_target(t, target,
                               [](const ResponseSample& s) { return loss_score(s); });
    case Method::lira:
      return detail::on_target(t, target,
                               [](const ResponseSample& s) { return lira_score(s); });
    case Method::zlib:
      return detail::on_target(t, target,
                               [](const ResponseSample& s) { return zlib_score(s); });
    case Method::min_k:
      return detail::on_target(t, target, [&](const ResponseSample& s) {
        return min_k_score(s, min_k_fraction);
      });
    case Method::entropy:
      return detail::on_target(t, target, [](const ResponseSample& s) {
        return entropy_score(s);
      });
    case Method::neighbor:
      return neighbor_score(t, Model::ft);
  }
  throw std::logic_error("unreachable");
}

// Calibrated score metric_ft - metric_ref. lira is already a model
// difference and entropy lacks reference-model entropies in the trace
// schema; both raise BaselineUnavailable.
inline double calibrated_score(Method m, const PromptTrace& t, ScoreTarget target,
                               double min_k_fraction = 0.2) {
  switch (m) {
    case Method::loss:
      return detail::on_target(t, target, [](const ResponseSample& s) {
        return calibrate(loss_score(s, Model::ft), loss_score(s, Model::ref));
      });
    case Method::zlib:
      return detail::on_target(t, target, [](const ResponseSample& s) {
        return calibrate(zlib_score(s, Model::ft), zlib_score(s, Model::ref));
      });
    case Method::min_k:
      return detail::on_target(t, target, [&](const ResponseSample& s) {
        return calibrate(min_k_score(s, min_k_fraction, Model::ft),
                         min_k_score(s, min_k_fraction, Model::ref));
      });
    case Method::neighbor:
      return calibrate(neighbor_score(t, Model::ft), neighbor_score(t, Model::ref));
    case Method::lira:
      throw BaselineUnavailable("lira is already model-calibrated");
    case Method::entropy:
      throw BaselineUnavailable("entropy: no reference-model entropies in schema");
  }
  throw std::logic_error("unreachable");
}

}  // namespace mia::baselines
