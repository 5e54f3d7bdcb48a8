#pragma once

// Defense evaluation primitives: seeded character-level perturbation of
// response texts, and local differential privacy on extracted feature
// vectors with closed-form single-shot (epsilon, delta) accounting.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mia/features.hpp"
#include "mia/rng.hpp"
#include "mia/trace.hpp"

namespace mia::defenses {

// Operation mix applied within the perturbation budget: swap 20%, delete
// 10%, keyboard typo 10%, case toggle 30%, punctuation insert 10%,
// punctuation remove 10%, double space 10%.
struct PerturbConfig {
  double strength = 0.0;  // fraction of characters receiving an operation
  double w_swap = 0.20;
  double w_delete = 0.10;
  double w_typo = 0.10;
  double w_case = 0.30;
  double w_punct_insert = 0.10;
  double w_punct_remove = 0.10;
  double w_double_space = 0.10;
  std::uint64_t seed = 0;

  void validate() const {
    if (strength < 0.0 || strength > 1.0)
      throw std::invalid_argument("perturb: strength outside [0,1]");
    const double sum = w_swap + w_delete + w_typo + w_case + w_punct_insert +
                       w_punct_remove + w_double_space;
    if (std::fabs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("perturb: op weights must sum to 1");
  }
};

// QWERTY adjacency for keyboard-style typos.
inline const std::map<char, std::string>& qwerty_neighbors() {
  static const std::map<char, std::string> m = {
      {'q', "wa"},    {'w', "qes"},   {'e', "wrd"},  {'r', "etf"},
      {'t', "ryg"},   {'y', "tuh"},   {'u', "yij"},  {'i', "uok"},
      {'o', "ipl"},   {'p', "ol"},    {'a', "qsz"},  {'s', "awdx"},
      {'d', "sefc"},  {'f', "drgv"},  {'g', "fthb"}, {'h', "gyjn"},
      {'j', "hukm"},  {'k', "jilm"},  {'l', "kop"},  {'z', "asx"},
      {'x', "zsdc"},  {'c', "xdfv"},  {'v', "cfgb"}, {'b', "vghn"},
      {'n', "bhjm"},  {'m', "njk"}};
  return m;
}

inline const std::string& punctuation_chars() {
  static const std::string p = ".,!?;:'-";
  return p;
}

// Apply exactly ceil(strength * len) seeded random character operations.
// Each budgeted operation redraws (op, position) until it finds an
// applicable pair, so the budget is spent on real edits; later operations
// may still overlap or cancel earlier ones. Deterministic under (text, cfg).
inline std::string perturb_text(const std::string& text, const PerturbConfig& cfg) {
  cfg.validate();
  if (text.empty() || cfg.strength == 0.0) return text;

  auto stream = rng::derive(cfg.seed, "perturb", rng::hash_str(text));
  std::string s = text;
  const std::size_t ops = static_cast<std::size_t>(
      std::ceil(cfg.strength * static_cast<double>(text.size())));
  const std::vector<double> weights = {cfg.w_swap,         cfg.w_delete,
                                       cfg.w_typo,         cfg.w_case,
                                       cfg.w_punct_insert, cfg.w_punct_remove,
                                       cfg.w_double_space};

  for (std::size_t k = 0; k < ops; ++k) {
    if (s.empty()) break;
    for (int attempt = 0; attempt < 16; ++attempt) {
      const std::size_t op = stream.categorical(weights);
      const std::size_t pos = stream.below(s.size());
      bool applied = true;
      switch (op) {
        case 0: {  // swap adjacent characters
          const std::size_t i = std::min(pos, s.size() >= 2 ? s.size() - 2 : 0);
          if (s.size() >= 2 && s[i] != s[i + 1])
            std::swap(s[i], s[i + 1]);
          else
            applied = false;
          break;
        }
        case 1:  // delete a character
          if (s.size() > 1)
            s.erase(pos, 1);
          else
            applied = false;
          break;
        case 2: {  // keyboard typo
          const char lower = static_cast<char>(
              std::tolower(static_cast<unsigned char>(s[pos])));
          auto it = qwerty_neighbors().find(lower);
          if (it != qwerty_neighbors().end()) {
            const char repl = it->second[stream.below(it->second.size())];
            s[pos] = std::isupper(static_cast<unsigned char>(s[pos]))
                         ? static_cast<char>(
                               std::toupper(static_cast<unsigned char>(repl)))
                         : repl;
          } else {
            applied = false;
          }
          break;
        }
        case 3: {  // toggle case
          const unsigned char c = static_cast<unsigned char>(s[pos]);
          if (std::islower(c))
            s[pos] = static_cast<char>(std::toupper(c));
          else if (std::isupper(c))
            s[pos] = static_cast<char>(std::tolower(c));
          else
            applied = false;
          break;
        }
        case 4: {  // insert punctuation
          const char p =
              punctuation_chars()[stream.below(punctuation_chars().size())];
          s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), p);
          break;
        }
        case 5: {  // remove one punctuation mark, if any
          std::vector<std::size_t> marks;
          for (std::size_t i = 0; i < s.size(); ++i)
            if (punctuation_chars().find(s[i]) != std::string::npos)
              marks.push_back(i);
          if (!marks.empty() && s.size() > 1)
            s.erase(marks[stream.below(marks.size())], 1);
          else
            applied = false;
          break;
        }
        default:  // inject a double space
          s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), ' ');
          break;
      }
      if (applied) break;
    }
  }
  return s;
}

// Perturb every sample text in the set. Token log-probabilities and
// entropies no longer describe the transformed text, so they are dropped;
// recomputing them is the producer's job (the simulator can rescore).
inline TraceSet perturb_traceset(const TraceSet& in, const PerturbConfig& cfg) {
  cfg.validate();
  TraceSet out = in;
  out.metadata.notes += (out.metadata.notes.empty() ? "" : "; ");
  out.metadata.notes += "perturbed strength=" + std::to_string(cfg.strength);
  if (cfg.strength == 0.0) return out;
  std::size_t sample_index = 0;
  for (auto& t : out.records) {
    auto apply = [&](ResponseSample& s) {
      PerturbConfig local = cfg;
      local.seed = rng::mix(cfg.seed, rng::mix(rng::hash_str(t.prompt_id),
                                               sample_index++));
      s.text = perturb_text(s.text, local);
      s.token_logprobs_ft.clear();
      s.token_logprobs_ref.clear();
      s.token_entropies_ft.reset();
    };
    for (auto& s : t.samples_ft) apply(s);
    for (auto& s : t.samples_ref) apply(s);
    if (t.reference_answer) apply(*t.reference_answer);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local differential privacy on feature vectors

enum class DpMechanism { gaussian, laplace };

struct DpParams {
  DpMechanism mechanism = DpMechanism::gaussian;
  double clip_bound = 1.0;   // l2 bound C (gaussian) or l1 bound C1 (laplace)
  double noise_scale = 1.0;  // sigma (gaussian) or b (laplace)
  double delta = 1e-5;       // gaussian only

  // noise_scale 0 is the documented zero-noise limit (clipping only); the
  // epsilon formulas themselves require a positive scale.
  void validate() const {
    if (clip_bound <= 0.0) throw std::invalid_argument("dp: clip_bound <= 0");
    if (noise_scale < 0.0) throw std::invalid_argument("dp: noise_scale < 0");
    if (mechanism == DpMechanism::gaussian && !(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("dp: delta outside (0,1)");
  }
};

// Gaussian mechanism budget with sensitivity bounded by 2C:
// epsilon = 2C * sqrt(2 ln(1.25/delta)) / sigma.
inline double gaussian_epsilon(double clip_bound, double delta, double sigma) {
  if (clip_bound <= 0.0 || sigma <= 0.0 || !(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gaussian_epsilon: invalid params");
  return 2.0 * clip_bound * std::sqrt(2.0 * std::log(1.25 / delta)) / sigma;
}

// Laplace mechanism budget with l1 sensitivity bounded by 2C1:
// epsilon = 2C1 / b.
inline double laplace_epsilon(double clip_bound_l1, double b) {
  if (clip_bound_l1 <= 0.0 || b <= 0.0)
    throw std::invalid_argument("laplace_epsilon: invalid params");
  return 2.0 * clip_bound_l1 / b;
}

inline double epsilon_for(const DpParams& p) {
  return p.mechanism == DpMechanism::gaussian
             ? gaussian_epsilon(p.clip_bound, p.delta, p.noise_scale)
             : laplace_epsilon(p.clip_bound, p.noise_scale);
}

// Clip each feature vector to the norm bound (l2 for gaussian, l1 for
// laplace) over its present coordinates, then add i.i.d. noise of the given
// scale per coordinate. Missing coordinates stay missing. Per-record noise
// streams derive from (seed, prompt_id), so results are order-independent.
inline std::vector<features::FeatureVector> add_feature_noise(
    const std::vector<features::FeatureVector>& in, const DpParams& params,
    std::uint64_t seed) {
  params.validate();
  std::vector<features::FeatureVector> out = in;
  for (auto& f : out) {
    double* vals[5] = {&f.ft_score, &f.base_score, &f.divergence, &f.likelihood,
                       &f.zlib};
    double norm = 0.0;
    for (double* v : vals) {
      if (!std::isnan(*v))
        norm += params.mechanism == DpMechanism::gaussian ? (*v) * (*v)
                                                          : std::fabs(*v);
    }
    if (params.mechanism == DpMechanism::gaussian) norm = std::sqrt(norm);
    if (norm > params.clip_bound) {
      const double scale = params.clip_bound / norm;
      for (double* v : vals)
        if (!std::isnan(*v)) *v *= scale;
    }
    auto stream = rng::derive(seed, "ldp", rng::hash_str(f.prompt_id));
    for (double* v : vals) {
      if (std::isnan(*v)) continue;
      *v += params.mechanism == DpMechanism::gaussian
                ? stream.normal(0.0, params.noise_scale)
                : stream.laplace(params.noise_scale);
    }
  }
  return out;
}

// Map a "relative noise" fraction to absolute DP parameters by min-max
// normalizing each feature to [0,1] first (per-feature range computed over
// finite values); the noise scale then equals the relative fraction and the
// clip bound sqrt(d) (l2) or d (l1) admits every normalized vector.
struct RelativeNoiseMapping {
  std::vector<double> lo, hi;  // per-feature ranges used for normalization
  DpParams params;
};

inline RelativeNoiseMapping relative_noise_mapping(
    const std::vector<features::FeatureVector>& feats, double relative_scale,
    DpMechanism mech, double delta = 1e-5) {
  if (relative_scale <= 0.0)
    throw std::invalid_argument("relative_noise_mapping: scale <= 0");
  RelativeNoiseMapping m;
  const std::size_t d = features::FeatureVector::kCount;
  m.lo.assign(d, std::numeric_limits<double>::infinity());
  m.hi.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto& f : feats) {
    for (std::size_t i = 0; i < d; ++i) {
      const double v = f.value(i);
      if (std::isnan(v)) continue;
      m.lo[i] = std::min(m.lo[i], v);
      m.hi[i] = std::max(m.hi[i], v);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(m.lo[i])) {
      m.lo[i] = 0.0;
      m.hi[i] = 1.0;
    }
    if (m.hi[i] <= m.lo[i]) m.hi[i] = m.lo[i] + 1.0;
  }
  m.params.mechanism = mech;
  m.params.noise_scale = relative_scale;
  m.params.delta = delta;
  m.params.clip_bound = mech == DpMechanism::gaussian
                            ? std::sqrt(static_cast<double>(d))
                            : static_cast<double>(d);
  return m;
}

inline std::vector<features::FeatureVector> normalize_features(
    const std::vector<features::FeatureVector>& feats,
    const RelativeNoiseMapping& m) {
  std::vector<features::FeatureVector> out = feats;
  for (auto& f : out) {
    double* vals[5] = {&f.ft_score, &f.base_score, &f.divergence, &f.likelihood,
                       &f.zlib};
    for (std::size_t i = 0; i < features::FeatureVector::kCount; ++i) {
      if (std::isnan(*vals[i])) continue;
      *vals[i] = (*vals[i] - m.lo[i]) / (m.hi[i] - m.lo[i]);
    }
  }
  return out;
}

}  // namespace mia::defenses
