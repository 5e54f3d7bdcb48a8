#pragma once

// Desk-scale RLVR trainer on a synthetic verifiable task. Policies are
// tabular softmax logits over a small vocabulary, parameterized as
// shared-per-skill plus per-prompt tensors: skill-level learning generalizes
// to held-out prompts while prompt-level learning creates member-specific
// divergence. Token 0 is the stop symbol; the verifier checks that the last
// non-stop token of a response equals the prompt's answer token.
//
// All randomness is drawn from streams derived from (seed, purpose,
// epoch/prompt indices), so training runs and emitted trace sets are
// reproducible bit-for-bit at any parallelism degree.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mia/rng.hpp"
#include "mia/trace.hpp"

namespace mia::sim {

enum class Algo { grpo, dapo };

inline const char* to_string(Algo a) { return a == Algo::grpo ? "grpo" : "dapo"; }

struct SimConfig {
  int vocab_size = 16;  // token 0 = stop
  int max_len = 8;
  int n_prompts = 0;
  double member_fraction = 0.5;
  int n_skills = 8;
  int group_size = 16;
  int epochs = 30;
  double lr_shared = 6.0;
  double lr_prompt = 30.0;
  double beta = 0.001;
  Algo algo = Algo::grpo;
  double clip_low = 0.2;
  double clip_high = 0.2;
  int minibatches_per_rollout = 2;
  int overlong_soft_limit = 6;
  double dp_decode_strength = 0.0;
  double train_temperature = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size < 3) throw std::invalid_argument("vocab_size must be >= 3");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    if (n_prompts < 1) throw std::invalid_argument("n_prompts must be >= 1");
    if (!(member_fraction > 0.0 && member_fraction < 1.0))
      throw std::invalid_argument("member_fraction must be in (0,1)");
    if (n_skills < 1) throw std::invalid_argument("n_skills must be >= 1");
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (lr_shared <= 0.0 || lr_prompt <= 0.0)
      throw std::invalid_argument("learning rates must be > 0");
    if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
    if (clip_low > clip_high)
      throw std::invalid_argument("clip_low must be <= clip_high");
    if (minibatches_per_rollout < 1)
      throw std::invalid_argument("minibatches_per_rollout must be >= 1");
    if (algo == Algo::dapo && overlong_soft_limit > max_len)
      throw std::invalid_argument("overlong_soft_limit must be <= max_len");
    if (dp_decode_strength < 0.0)
      throw std::invalid_argument("dp_decode_strength must be >= 0");
    if (train_temperature <= 0.0)
      throw std::invalid_argument("train_temperature must be > 0");
  }
};

inline void to_json(json& j, const SimConfig& c) {
  j = json{{"vocab_size", c.vocab_size},
           {"max_len", c.max_len},
           {"n_prompts", c.n_prompts},
           {"member_fraction", c.member_fraction},
           {"n_skills", c.n_skills},
           {"group_size", c.group_size},
           {"epochs", c.epochs},
           {"lr_shared", c.lr_shared},
           {"lr_prompt", c.lr_prompt},
           {"beta", c.beta},
           {"algo", std::string(to_string(c.algo))},
           {"clip_low", c.clip_low},
           {"clip_high", c.clip_high},
           {"minibatches_per_rollout", c.minibatches_per_rollout},
           {"overlong_soft_limit", c.overlong_soft_limit},
           {"dp_decode_strength", c.dp_decode_strength},
           {"train_temperature", c.train_temperature},
           {"seed", c.seed}};
}

inline void from_json(const json& j, SimConfig& c) {
  SimConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_len = j.value("max_len", d.max_len);
  c.n_prompts = j.at("n_prompts").get<int>();
  c.member_fraction = j.value("member_fraction", d.member_fraction);
  c.n_skills = j.value("n_skills", d.n_skills);
  c.group_size = j.value("group_size", d.group_size);
  c.epochs = j.value("epochs", d.epochs);
  c.lr_shared = j.value("lr_shared", d.lr_shared);
  c.lr_prompt = j.value("lr_prompt", d.lr_prompt);
  c.beta = j.value("beta", d.beta);
  const std::string algo = j.value("algo", std::string("grpo"));
  if (algo == "grpo")
    c.algo = Algo::grpo;
  else if (algo == "dapo")
    c.algo = Algo::dapo;
  else
    throw std::invalid_argument("unknown algo: " + algo);
  if (c.algo == Algo::dapo) {
    c.clip_low = 0.2;
    c.clip_high = 0.28;
    c.beta = 0.0;
  }
  c.clip_low = j.value("clip_low", c.clip_low);
  c.clip_high = j.value("clip_high", c.clip_high);
  c.beta = j.value("beta", c.beta);
  c.minibatches_per_rollout =
      j.value("minibatches_per_rollout", d.minibatches_per_rollout);
  c.overlong_soft_limit = j.value("overlong_soft_limit", d.overlong_soft_limit);
  c.dp_decode_strength = j.value("dp_decode_strength", d.dp_decode_strength);
  c.train_temperature = j.value("train_temperature", d.train_temperature);
  c.seed = j.value("seed", d.seed);
}

// Initialization shape constants. The per-prompt answer-logit bias spreads
// base accuracies over (0,1) so that all three hardness strata occur.
inline constexpr double kInitNoiseSd = 0.05;
inline constexpr double kAnswerBiasLo = -3.0;
inline constexpr double kAnswerBiasHi = 6.0;
inline constexpr double kStopBias = 0.7;
inline constexpr double kOverlongLambda = 1.0;

struct Policy {
  int n_skills = 0;
  int n_prompts = 0;
  int max_len = 0;
  int vocab = 0;
  std::vector<double> shared_logits;  // [skill][pos][vocab]
  std::vector<double> prompt_logits;  // [prompt][pos][vocab]

  double& shared(int skill, int pos, int v) {
    return shared_logits[(static_cast<std::size_t>(skill) * max_len + pos) * vocab + v];
  }
  double shared(int skill, int pos, int v) const {
    return shared_logits[(static_cast<std::size_t>(skill) * max_len + pos) * vocab + v];
  }
  double& prompt(int p, int pos, int v) {
    return prompt_logits[(static_cast<std::size_t>(p) * max_len + pos) * vocab + v];
  }
  double prompt(int p, int pos, int v) const {
    return prompt_logits[(static_cast<std::size_t>(p) * max_len + pos) * vocab + v];
  }
};

inline std::uint64_t policy_hash(const Policy& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::vector<double>& v) {
    for (double d : v) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(d));
      std::memcpy(&bits, &d, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(p.shared_logits);
  feed(p.prompt_logits);
  return h;
}

struct EpochStats {
  double train_reward = 0.0;
  double test_reward = 0.0;
  double mean_abs_param_delta = 0.0;  // mean |theta - theta_ref|
  bool dapo_batch_empty = false;
};

struct SimState {
  SimConfig config;
  Policy policy;
  Policy ref_policy;  // frozen snapshot of the initial policy
  std::vector<int> answers;  // per-prompt correct token
  std::vector<bool> member;  // per-prompt membership flag
  std::vector<EpochStats> history;
  int epoch = 0;
  std::uint64_t ref_hash = 0;

  int skill_of(int p) const { return p % config.n_skills; }

  bool ref_policy_intact() const { return policy_hash(ref_policy) == ref_hash; }
};

// Text rendering of token sequences: stop is "."; other tokens are short
// consonant-vowel syllables. Unknown words tokenize to a content token
// derived from their hash, so character perturbations scramble the token
// stream the way a real tokenizer would.
inline std::string word_for_token(int token) {
  if (token == 0) return ".";
  static const char* cons = "bcdfghjklmnpqrstvwz";
  static const char* vowels = "aeiou";
  const int i = token - 1;
  if (i < 19 * 5) return std::string{cons[i / 5], vowels[i % 5]};
  return "t" + std::to_string(token);
}

inline std::string render_tokens(const std::vector<int>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += word_for_token(tokens[i]);
  }
  return out;
}

inline int token_for_word(const std::string& word, int vocab_size) {
  if (word == ".") return 0;
  for (int t = 1; t < vocab_size; ++t)
    if (word_for_token(t) == word) return t;
  return 1 + static_cast<int>(rng::hash_str(word) % (vocab_size - 1));
}

inline std::vector<int> tokenize_text(const std::string& text, int vocab_size) {
  std::vector<int> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(token_for_word(cur, vocab_size));
      cur.clear();
    }
  };
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return tokens;
}

namespace detail {

// Softmax over effective logits at (prompt, pos), with optional additive
// decode noise and temperature applied to the logits first.
inline void next_token_probs(const SimState& st, const Policy& pol, int p, int pos,
                             double temperature, rng::Stream* noise_stream,
                             double noise_sd, std::vector<double>& probs) {
  const int V = st.config.vocab_size;
  const int skill = st.skill_of(p);
  probs.resize(V);
  double mx = -1e300;
  for (int v = 0; v < V; ++v) {
    double logit = pol.shared(skill, pos, v) + pol.prompt(p, pos, v);
    if (noise_stream && noise_sd > 0.0) logit += noise_stream->normal(0.0, noise_sd);
    if (temperature > 0.0) logit /= temperature;
    probs[v] = logit;
    mx = std::max(mx, logit);
  }
  double z = 0.0;
  for (int v = 0; v < V; ++v) {
    probs[v] = std::exp(probs[v] - mx);
    z += probs[v];
  }
  for (int v = 0; v < V; ++v) probs[v] /= z;
}

// Untempered log-probability of token v at (prompt, pos) under pol.
inline double token_logprob(const SimState& st, const Policy& pol, int p, int pos,
                            int v) {
  const int V = st.config.vocab_size;
  const int skill = st.skill_of(p);
  double mx = -1e300;
  for (int u = 0; u < V; ++u)
    mx = std::max(mx, pol.shared(skill, pos, u) + pol.prompt(p, pos, u));
  double z = 0.0;
  for (int u = 0; u < V; ++u)
    z += std::exp(pol.shared(skill, pos, u) + pol.prompt(p, pos, u) - mx);
  return pol.shared(skill, pos, v) + pol.prompt(p, pos, v) - mx - std::log(z);
}

inline double token_entropy(const SimState& st, const Policy& pol, int p, int pos) {
  const int V = st.config.vocab_size;
  const int skill = st.skill_of(p);
  double mx = -1e300;
  for (int u = 0; u < V; ++u)
    mx = std::max(mx, pol.shared(skill, pos, u) + pol.prompt(p, pos, u));
  double z = 0.0, dot = 0.0;
  for (int u = 0; u < V; ++u) {
    const double l = pol.shared(skill, pos, u) + pol.prompt(p, pos, u) - mx;
    const double e = std::exp(l);
    z += e;
    dot += e * l;
  }
  return std::log(z) - dot / z;  // in nats, >= 0
}

}  // namespace detail

inline SimState init_sim(const SimConfig& config) {
  config.validate();
  SimState st;
  st.config = config;
  const int V = config.vocab_size, L = config.max_len;

  st.policy.n_skills = config.n_skills;
  st.policy.n_prompts = config.n_prompts;
  st.policy.max_len = L;
  st.policy.vocab = V;
  st.policy.shared_logits.assign(
      static_cast<std::size_t>(config.n_skills) * L * V, 0.0);
  st.policy.prompt_logits.assign(
      static_cast<std::size_t>(config.n_prompts) * L * V, 0.0);

  // Answers are assigned per skill so that shared (skill-level) learning can
  // generalize to held-out prompts of the same skill; the marginal
  // distribution over prompts is uniform on {1..V-1}.
  auto answer_stream = rng::derive(config.seed, "answers");
  std::vector<int> skill_answer(config.n_skills);
  for (int k = 0; k < config.n_skills; ++k)
    skill_answer[k] = 1 + static_cast<int>(answer_stream.below(V - 1));
  st.answers.resize(config.n_prompts);
  for (int p = 0; p < config.n_prompts; ++p)
    st.answers[p] = skill_answer[st.skill_of(p)];

  // Membership labels: an exact round(n * fraction) count, assignment
  // independent of difficulty.
  const int n_members =
      static_cast<int>(std::lround(config.n_prompts * config.member_fraction));
  std::vector<int> order(config.n_prompts);
  for (int p = 0; p < config.n_prompts; ++p) order[p] = p;
  auto label_stream = rng::derive(config.seed, "labels");
  label_stream.shuffle(order);
  st.member.assign(config.n_prompts, false);
  for (int i = 0; i < n_members; ++i) st.member[order[i]] = true;

  auto noise_stream = rng::derive(config.seed, "init-noise");
  for (double& x : st.policy.shared_logits)
    x = noise_stream.normal(0.0, kInitNoiseSd);
  for (double& x : st.policy.prompt_logits)
    x = noise_stream.normal(0.0, kInitNoiseSd);
  for (int k = 0; k < config.n_skills; ++k)
    for (int pos = 0; pos < L; ++pos) st.policy.shared(k, pos, 0) += kStopBias;

  auto bias_stream = rng::derive(config.seed, "difficulty");
  for (int p = 0; p < config.n_prompts; ++p) {
    const double bias = bias_stream.uniform(kAnswerBiasLo, kAnswerBiasHi);
    for (int pos = 0; pos < L; ++pos)
      st.policy.prompt(p, pos, st.answers[p]) += bias;
  }

  st.ref_policy = st.policy;
  st.ref_hash = policy_hash(st.ref_policy);
  return st;
}

// Verifier: 1 iff the last non-stop token equals the prompt's answer token.
// Truncated responses (no stop within max_len) are still verified by their
// final token; a bare stop has no non-stop token and scores 0.
inline int verify_tokens(const std::vector<int>& tokens, int answer) {
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it)
    if (*it != 0) return *it == answer ? 1 : 0;
  return 0;
}

inline int verifier(const ResponseSample& sample, int prompt_id,
                    const SimState& st) {
  return verify_tokens(tokenize_text(sample.text, st.config.vocab_size),
                       st.answers.at(prompt_id));
}

// Group-normalized advantages with population standard deviation; a
// zero-variance group yields all-zero advantages.
inline std::vector<double> group_advantages(const std::vector<double>& rewards) {
  if (rewards.empty()) throw std::invalid_argument("group_advantages: empty");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= rewards.size();
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= rewards.size();
  const double sd = std::sqrt(var);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd > 0.0)
    for (std::size_t i = 0; i < rewards.size(); ++i)
      adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

// Per-token gradient coefficient m = advantage + beta * (ratio - 1), with
// ratio = pi_ref / pi_theta at the sampled token.
inline double gradient_coefficient(double advantage, double ratio_ref_over_ft,
                                   double beta) {
  if (ratio_ref_over_ft <= 0.0)
    throw std::invalid_argument("gradient_coefficient: nonpositive ratio");
  return advantage + beta * (ratio_ref_over_ft - 1.0);
}

// Gradient factor of the clipped surrogate for one token: zero when the
// update is clipped out on the profitable side, ratio * advantage otherwise.
inline double clipped_token_coefficient(double ratio, double advantage,
                                        double clip_low, double clip_high) {
  const bool clipped_out = (advantage > 0.0 && ratio > 1.0 + clip_high) ||
                           (advantage < 0.0 && ratio < 1.0 - clip_low);
  return clipped_out ? 0.0 : ratio * advantage;
}

struct SampledResponse {
  std::vector<int> tokens;
  std::vector<double> logprobs_policy;  // untempered, under the sampling policy
  std::vector<double> logprobs_ref;     // untempered, under ref_policy
  std::vector<double> entropies_ft;     // under the current (fine-tuned) policy
  int reward = 0;
};

// Sample one group of responses for a prompt. temperature <= 0 selects
// greedy decoding. Decode noise (dp_decode_strength) perturbs logits before
// sampling only; recorded logprobs stay noise-free.
inline std::vector<SampledResponse> sample_group_stream(
    const SimState& st, const Policy& pol, int prompt_id, int group_size,
    double temperature, double decode_noise_sd, rng::Stream& stream) {
  if (prompt_id < 0 || prompt_id >= st.config.n_prompts)
    throw std::invalid_argument("sample_group: unknown prompt_id");
  const int L = st.config.max_len;
  std::vector<SampledResponse> out(group_size);
  std::vector<double> probs;
  for (int g = 0; g < group_size; ++g) {
    auto& r = out[g];
    for (int pos = 0; pos < L; ++pos) {
      detail::next_token_probs(st, pol, prompt_id, pos, temperature,
                               decode_noise_sd > 0.0 ? &stream : nullptr,
                               decode_noise_sd, probs);
      int tok;
      if (temperature <= 0.0) {
        tok = 0;
        for (int v = 1; v < st.config.vocab_size; ++v)
          if (probs[v] > probs[tok]) tok = v;
      } else {
        tok = static_cast<int>(stream.categorical(probs));
      }
      r.tokens.push_back(tok);
      if (tok == 0) break;
    }
    for (int pos = 0; pos < static_cast<int>(r.tokens.size()); ++pos) {
      r.logprobs_policy.push_back(
          detail::token_logprob(st, pol, prompt_id, pos, r.tokens[pos]));
      r.logprobs_ref.push_back(
          detail::token_logprob(st, st.ref_policy, prompt_id, pos, r.tokens[pos]));
      r.entropies_ft.push_back(
          detail::token_entropy(st, st.policy, prompt_id, pos));
    }
    r.reward = verify_tokens(r.tokens, st.answers[prompt_id]);
  }
  return out;
}

inline std::vector<SampledResponse> sample_group(const SimState& st, int prompt_id,
                                                 int group_size, double temperature) {
  auto stream = rng::derive(st.config.seed, "adhoc-sample", st.epoch, prompt_id);
  return sample_group_stream(st, st.policy, prompt_id, group_size, temperature,
                             st.config.dp_decode_strength, stream);
}

// One rollout unit: a sampled response with its advantage and the behavior
// policy's (theta_old) untempered logprobs for importance ratios.
struct RolloutItem {
  int prompt = 0;
  std::vector<int> tokens;
  std::vector<double> logprobs_old;
  double advantage = 0.0;
};

struct Gradient {
  std::vector<double> shared;
  std::vector<double> prompt;
};

// Analytic gradient of the clipped surrogate objective at the current
// policy, for a batch of rollout items.
//
//   GRPO: J = 1/|B| sum_i 1/|o_i| sum_t [ min(rho*A, clip(rho)*A) - beta*k3 ]
//   DAPO: J = 1/(sum_i |o_i|) sum_i sum_t min(rho*A, clip(rho)*A)
//
// with rho = pi_theta / pi_theta_old and k3 computed against the frozen
// reference policy.
inline Gradient surrogate_gradient(const SimState& st,
                                   const std::vector<RolloutItem>& batch) {
  const auto& c = st.config;
  Gradient g;
  g.shared.assign(st.policy.shared_logits.size(), 0.0);
  g.prompt.assign(st.policy.prompt_logits.size(), 0.0);
  if (batch.empty()) return g;

  double token_total = 0.0;
  for (const auto& item : batch) token_total += item.tokens.size();

  std::vector<double> probs;
  for (const auto& item : batch) {
    const int p = item.prompt;
    const int skill = st.skill_of(p);
    const double item_weight =
        c.algo == Algo::dapo
            ? 1.0 / token_total
            : 1.0 / (static_cast<double>(batch.size()) * item.tokens.size());
    for (std::size_t t = 0; t < item.tokens.size(); ++t) {
      const int pos = static_cast<int>(t);
      const int tok = item.tokens[t];
      detail::next_token_probs(st, st.policy, p, pos, 1.0, nullptr, 0.0, probs);
      const double lp_cur = std::log(probs[tok]);
      const double ratio = std::exp(lp_cur - item.logprobs_old[t]);
      double coef = clipped_token_coefficient(ratio, item.advantage, c.clip_low,
                                              c.clip_high);
      if (c.algo == Algo::grpo && c.beta > 0.0) {
        const double lp_ref = detail::token_logprob(st, st.ref_policy, p, pos, tok);
        const double r_ref = std::exp(lp_ref - lp_cur);
        coef += c.beta * (r_ref - 1.0);
      }
      if (coef == 0.0) continue;
      const double w = item_weight * coef;
      const std::size_t base =
          (static_cast<std::size_t>(p) * c.max_len + pos) * c.vocab_size;
      const std::size_t sbase =
          (static_cast<std::size_t>(skill) * c.max_len + pos) * c.vocab_size;
      for (int v = 0; v < c.vocab_size; ++v) {
        const double d = ((v == tok) ? 1.0 : 0.0) - probs[v];
        g.prompt[base + v] += w * d;
        g.shared[sbase + v] += w * d;
      }
    }
  }
  return g;
}

// Surrogate objective value matching surrogate_gradient; used for
// diagnostics and gradient checks.
inline double surrogate_objective(const SimState& st,
                                  const std::vector<RolloutItem>& batch) {
  const auto& c = st.config;
  if (batch.empty()) return 0.0;
  double token_total = 0.0;
  for (const auto& item : batch) token_total += item.tokens.size();

  double total = 0.0;
  std::vector<double> probs;
  for (const auto& item : batch) {
    const int p = item.prompt;
    double item_sum = 0.0;
    for (std::size_t t = 0; t < item.tokens.size(); ++t) {
      const int pos = static_cast<int>(t);
      const int tok = item.tokens[t];
      detail::next_token_probs(st, st.policy, p, pos, 1.0, nullptr, 0.0, probs);
      const double lp_cur = std::log(probs[tok]);
      const double ratio = std::exp(lp_cur - item.logprobs_old[t]);
      const double clipped = std::clamp(ratio, 1.0 - c.clip_low, 1.0 + c.clip_high);
      double term = std::min(ratio * item.advantage, clipped * item.advantage);
      if (c.algo == Algo::grpo && c.beta > 0.0) {
        const double lp_ref = detail::token_logprob(st, st.ref_policy, p, pos, tok);
        const double d = lp_ref - lp_cur;
        term -= c.beta * (std::expm1(d) - d);
      }
      item_sum += term;
    }
    total += c.algo == Algo::dapo
                 ? item_sum / token_total
                 : item_sum / (static_cast<double>(batch.size()) * item.tokens.size());
  }
  return total;
}

inline double overlong_penalty(std::size_t length, const SimConfig& c) {
  if (c.algo != Algo::dapo || c.overlong_soft_limit >= c.max_len) return 0.0;
  const double over =
      std::max(0.0, static_cast<double>(length) - c.overlong_soft_limit);
  return kOverlongLambda * over /
         static_cast<double>(c.max_len - c.overlong_soft_limit);
}

// Collect one on-policy rollout over all member prompts: group sampling,
// reward shaping (DAPO), dynamic-sampling exclusion (DAPO) and group
// advantage normalization. Returns the items plus the mean verifier reward.
struct RolloutResult {
  std::vector<RolloutItem> items;
  double mean_reward = 0.0;
  bool dapo_batch_empty = false;
};

inline RolloutResult collect_rollout(const SimState& st) {
  const auto& c = st.config;
  RolloutResult out;
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  bool any_group = false;
  for (int p = 0; p < c.n_prompts; ++p) {
    if (!st.member[p]) continue;
    auto stream = rng::derive(c.seed, "rollout", st.epoch, p);
    auto group = sample_group_stream(st, st.policy, p, c.group_size,
                                     c.train_temperature, c.dp_decode_strength,
                                     stream);
    int correct = 0;
    for (const auto& r : group) {
      reward_sum += r.reward;
      ++reward_count;
      correct += r.reward;
    }
    any_group = true;
    if (c.algo == Algo::dapo && (correct == 0 || correct == c.group_size))
      continue;  // dynamic sampling: all-wrong / all-right groups carry no signal
    std::vector<double> shaped(group.size());
    for (std::size_t i = 0; i < group.size(); ++i)
      shaped[i] = group[i].reward - overlong_penalty(group[i].tokens.size(), c);
    const auto adv = group_advantages(shaped);
    for (std::size_t i = 0; i < group.size(); ++i) {
      RolloutItem item;
      item.prompt = p;
      item.tokens = std::move(group[i].tokens);
      item.logprobs_old = std::move(group[i].logprobs_policy);
      item.advantage = adv[i];
      out.items.push_back(std::move(item));
    }
  }
  out.mean_reward = reward_count ? reward_sum / reward_count : 0.0;
  out.dapo_batch_empty = c.algo == Algo::dapo && any_group && out.items.empty();
  return out;
}

inline double evaluate_reward(const SimState& st, bool members) {
  const auto& c = st.config;
  double sum = 0.0;
  std::size_t count = 0;
  for (int p = 0; p < c.n_prompts; ++p) {
    if (st.member[p] != members) continue;
    auto stream = rng::derive(c.seed, "eval", st.epoch, p);
    auto group = sample_group_stream(st, st.policy, p, c.group_size,
                                     c.train_temperature, c.dp_decode_strength,
                                     stream);
    for (const auto& r : group) {
      sum += r.reward;
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

inline double mean_abs_delta_from_ref(const SimState& st) {
  double sum = 0.0;
  for (std::size_t i = 0; i < st.policy.shared_logits.size(); ++i)
    sum += std::fabs(st.policy.shared_logits[i] - st.ref_policy.shared_logits[i]);
  for (std::size_t i = 0; i < st.policy.prompt_logits.size(); ++i)
    sum += std::fabs(st.policy.prompt_logits[i] - st.ref_policy.prompt_logits[i]);
  return sum / (st.policy.shared_logits.size() + st.policy.prompt_logits.size());
}

// One epoch: a single rollout over member prompts with a theta_old snapshot,
// followed by minibatches_per_rollout clipped policy-gradient steps.
inline EpochStats train_step(SimState& st) {
  const auto& c = st.config;
  EpochStats stats;

  RolloutResult rollout = collect_rollout(st);
  stats.train_reward = rollout.mean_reward;
  stats.dapo_batch_empty = rollout.dapo_batch_empty;

  if (!rollout.items.empty()) {
    std::vector<std::size_t> order(rollout.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto shuffle_stream = rng::derive(c.seed, "minibatch", st.epoch);
    shuffle_stream.shuffle(order);

    const int M = c.minibatches_per_rollout;
    for (int m = 0; m < M; ++m) {
      const std::size_t lo = order.size() * m / M;
      const std::size_t hi = order.size() * (m + 1) / M;
      if (lo == hi) continue;
      std::vector<RolloutItem> batch;
      batch.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(rollout.items[order[i]]);
      const Gradient g = surrogate_gradient(st, batch);
      for (std::size_t i = 0; i < g.shared.size(); ++i)
        st.policy.shared_logits[i] += c.lr_shared * g.shared[i];
      for (std::size_t i = 0; i < g.prompt.size(); ++i)
        st.policy.prompt_logits[i] += c.lr_prompt * g.prompt[i];
    }
  }

  stats.test_reward = evaluate_reward(st, false);
  stats.mean_abs_param_delta = mean_abs_delta_from_ref(st);
  st.history.push_back(stats);
  ++st.epoch;
  return stats;
}

inline void train(SimState& st, int epochs) {
  for (int e = 0; e < epochs; ++e) train_step(st);
  if (!st.ref_policy_intact())
    throw std::logic_error("reference policy mutated during training");
}

inline void write_history_csv(const SimState& st, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "epoch,train_reward,test_reward,mean_abs_param_delta\n";
  for (std::size_t e = 0; e < st.history.size(); ++e) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g\n", e,
                  st.history[e].train_reward, st.history[e].test_reward,
                  st.history[e].mean_abs_param_delta);
    out << buf;
  }
}

namespace detail {

inline ResponseSample to_response_sample(const SimState& st, int p,
                                         const SampledResponse& r,
                                         SampleSource source) {
  ResponseSample s;
  s.text = render_tokens(r.tokens);
  s.reward = r.reward;
  s.source = source;
  s.token_logprobs_ref = r.logprobs_ref;
  s.token_entropies_ft = r.entropies_ft;
  // Scored under the current (fine-tuned) policy regardless of which model
  // generated the tokens.
  s.token_logprobs_ft.reserve(r.tokens.size());
  for (std::size_t t = 0; t < r.tokens.size(); ++t)
    s.token_logprobs_ft.push_back(
        token_logprob(st, st.policy, p, static_cast<int>(t), r.tokens[t]));
  return s;
}

}  // namespace detail

// Emit the audit trace set: for every prompt, n_samples responses from the
// fine-tuned policy and n_samples from the frozen reference, each scored
// under both models with untempered log-probabilities. decode_noise_override
// replaces config.dp_decode_strength at emission time (decode-side defense).
inline TraceSet emit_traces(const SimState& st, int n_samples = 8,
                            double temperature = 0.5,
                            std::optional<double> decode_noise_override = {}) {
  if (n_samples < 1) throw std::invalid_argument("emit_traces: n_samples < 1");
  const auto& c = st.config;
  const double noise = decode_noise_override.value_or(c.dp_decode_strength);

  TraceSet set;
  set.metadata.generator = std::string("rlvr-sim/") + to_string(c.algo);
  set.metadata.n_samples = n_samples;
  set.metadata.temperature = temperature;
  set.metadata.seed = static_cast<std::int64_t>(c.seed);
  set.metadata.notes =
      "logprobs are untempered natural-log model probabilities";

  char idbuf[32];
  for (int p = 0; p < c.n_prompts; ++p) {
    PromptTrace t;
    std::snprintf(idbuf, sizeof(idbuf), "p%05d", p);
    t.prompt_id = idbuf;
    t.prompt_text = "task " + std::to_string(p) + " of skill " +
                    std::to_string(st.skill_of(p));
    t.label = st.member[p] ? Label::member : Label::nonmember;

    auto ft_stream = rng::derive(c.seed, "emit-ft", p);
    for (auto& r : sample_group_stream(st, st.policy, p, n_samples, temperature,
                                       noise, ft_stream))
      t.samples_ft.push_back(detail::to_response_sample(st, p, r, SampleSource::ft));

    auto ref_stream = rng::derive(c.seed, "emit-ref", p);
    for (auto& r : sample_group_stream(st, st.ref_policy, p, n_samples,
                                       temperature, noise, ref_stream)) {
      auto s = detail::to_response_sample(st, p, r, SampleSource::ref);
      t.samples_ref.push_back(std::move(s));
    }

    // Gold answer [answer, stop] scored under both models, plus a toy
    // neighborhood of wrong-answer variants for the neighbor baseline.
    const std::vector<int> gold = {st.answers[p], 0};
    ResponseSample ref_ans;
    ref_ans.text = render_tokens(gold);
    ref_ans.reward = 1;
    ref_ans.source = SampleSource::ref;
    std::vector<double> gold_ent;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const int pos = static_cast<int>(i);
      ref_ans.token_logprobs_ft.push_back(
          detail::token_logprob(st, st.policy, p, pos, gold[i]));
      ref_ans.token_logprobs_ref.push_back(
          detail::token_logprob(st, st.ref_policy, p, pos, gold[i]));
      gold_ent.push_back(detail::token_entropy(st, st.policy, p, pos));
    }
    ref_ans.token_entropies_ft = std::move(gold_ent);
    t.prompt_seq_logprob_ft = ref_ans.seq_logprob_ft();
    t.prompt_seq_logprob_ref = ref_ans.seq_logprob_ref();
    t.reference_answer = std::move(ref_ans);

    auto nb_stream = rng::derive(c.seed, "neighbors", p);
    std::vector<Neighbor> neighbors;
    const int n_neighbors = std::min(4, c.vocab_size - 2);
    std::vector<int> used;
    while (static_cast<int>(neighbors.size()) < n_neighbors) {
      const int cand = 1 + static_cast<int>(nb_stream.below(c.vocab_size - 1));
      if (cand == st.answers[p]) continue;
      if (std::find(used.begin(), used.end(), cand) != used.end()) continue;
      used.push_back(cand);
      Neighbor n;
      const std::vector<int> alt = {cand, 0};
      n.text = render_tokens(alt);
      n.seq_logprob_ft = detail::token_logprob(st, st.policy, p, 0, cand) +
                         detail::token_logprob(st, st.policy, p, 1, 0);
      n.seq_logprob_ref = detail::token_logprob(st, st.ref_policy, p, 0, cand) +
                          detail::token_logprob(st, st.ref_policy, p, 1, 0);
      neighbors.push_back(std::move(n));
    }
    t.neighbors = std::move(neighbors);

    set.records.push_back(std::move(t));
  }
  return set;
}

// Re-verify and re-score every sample of a trace set under the simulator's
// policies after its texts were transformed (e.g. by a perturbation defense).
// Texts are tokenized back; unknown words map to hash-derived tokens, so
// character noise scrambles the token stream and its scores.
inline TraceSet rescore_trace_set(const SimState& st, const TraceSet& in) {
  TraceSet out = in;
  for (auto& t : out.records) {
    const int p = std::stoi(t.prompt_id.substr(1));
    auto rescore = [&](ResponseSample& s) {
      std::vector<int> tokens = tokenize_text(s.text, st.config.vocab_size);
      if (static_cast<int>(tokens.size()) > st.config.max_len)
        tokens.resize(st.config.max_len);
      if (tokens.empty()) tokens.push_back(0);
      s.reward = verify_tokens(tokens, st.answers[p]);
      s.token_logprobs_ft.clear();
      s.token_logprobs_ref.clear();
      std::vector<double> ent;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int pos = static_cast<int>(i);
        s.token_logprobs_ft.push_back(
            detail::token_logprob(st, st.policy, p, pos, tokens[i]));
        s.token_logprobs_ref.push_back(
            detail::token_logprob(st, st.ref_policy, p, pos, tokens[i]));
        ent.push_back(detail::token_entropy(st, st.policy, p, pos));
      }
      s.token_entropies_ft = std::move(ent);
    };
    for (auto& s : t.samples_ft) rescore(s);
    for (auto& s : t.samples_ref) rescore(s);
    if (t.reference_answer) rescore(*t.reference_answer);
  }
  return out;
}

}  // namespace mia::sim
