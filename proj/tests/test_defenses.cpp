#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "mia/defenses.hpp"
#include "mia/features.hpp"
#include "mia/rng.hpp"
#include "mia/sim.hpp"

using namespace mia;

namespace {

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

features::FeatureVector fv(const std::string& id, double ft, double base,
                           double div, double lik, double zl) {
  features::FeatureVector f;
  f.prompt_id = id;
  f.ft_score = ft;
  f.base_score = base;
  f.divergence = div;
  f.likelihood = lik;
  f.zlib = zl;
  f.ft_score_missing = f.base_score_missing = f.divergence_missing =
      f.likelihood_missing = f.zlib_missing = false;
  return f;
}

}  // namespace

TEST_CASE("perturbation strength zero is the identity") {
  defenses::PerturbConfig cfg;
  cfg.strength = 0.0;
  cfg.seed = 1;
  CHECK(defenses::perturb_text("hello world", cfg) == "hello world");
}

TEST_CASE("perturbation is deterministic under (text, config)") {
  defenses::PerturbConfig cfg;
  cfg.strength = 0.15;
  cfg.seed = 7;
  const std::string text = "the quick brown fox jumps over the lazy dog";
  CHECK(defenses::perturb_text(text, cfg) == defenses::perturb_text(text, cfg));
  cfg.seed = 8;
  CHECK(defenses::perturb_text(text, cfg) !=
        defenses::perturb_text(text, {0.15, 0.20, 0.10, 0.10, 0.30, 0.10, 0.10,
                                      0.10, 7}));
}

TEST_CASE("edit distance stays within the budget band over 100 seeds") {
  auto stream = rng::derive(3, "edit-src");
  std::string text;
  for (int i = 0; i < 100; ++i)
    text.push_back(static_cast<char>('a' + stream.below(26)));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    defenses::PerturbConfig cfg;
    cfg.strength = 0.1;
    cfg.seed = seed;
    const std::string out = defenses::perturb_text(text, cfg);
    const std::size_t d = levenshtein(text, out);
    CHECK(d >= 5);
    CHECK(d <= 20);
  }
}

TEST_CASE("op weights must sum to one") {
  defenses::PerturbConfig cfg;
  cfg.strength = 0.1;
  cfg.w_swap = 0.5;  // breaks the sum
  CHECK_THROWS_AS(defenses::perturb_text("abc", cfg), std::invalid_argument);
}

TEST_CASE("perturb_traceset drops stale logprobs deterministically") {
  auto c = sim::SimConfig{};
  c.n_prompts = 40;
  c.vocab_size = 16;
  c.max_len = 8;
  c.n_skills = 4;
  c.group_size = 4;
  c.seed = 5;
  auto st = sim::init_sim(c);
  const TraceSet set = sim::emit_traces(st, 4, 0.8);

  defenses::PerturbConfig zero;
  zero.strength = 0.0;
  const TraceSet unchanged = defenses::perturb_traceset(set, zero);
  for (std::size_t i = 0; i < set.records.size(); ++i)
    CHECK(unchanged.records[i] == set.records[i]);
  CHECK(unchanged.metadata.notes != set.metadata.notes);

  defenses::PerturbConfig cfg;
  cfg.strength = 0.1;
  cfg.seed = 11;
  const TraceSet out = defenses::perturb_traceset(set, cfg);
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    for (std::size_t k = 0; k < set.records[i].samples_ft.size(); ++k) {
      const auto& after = out.records[i].samples_ft[k];
      CHECK_FALSE(after.has_logprobs());
      CHECK_FALSE(after.token_entropies_ft.has_value());
    }
  }

  const TraceSet out2 = defenses::perturb_traceset(set, cfg);
  for (std::size_t i = 0; i < out.records.size(); ++i)
    CHECK(out.records[i] == out2.records[i]);
}

TEST_CASE("perturbation at strength 0.1 changes most non-trivial zlib lengths") {
  // response-length texts (~30 syllable words) rather than the simulator's
  // few-word strings: one op per ten characters
  auto stream = rng::derive(19, "zlib-texts");
  static const char* cons = "bcdfghjklmnpqrstvwz";
  static const char* vowels = "aeiou";
  std::size_t changed = 0, total = 0;
  for (int it = 0; it < 200; ++it) {
    std::string text;
    for (int w = 0; w < 30; ++w) {
      if (w) text.push_back(' ');
      for (int syl = 0; syl < 2; ++syl) {
        text.push_back(cons[stream.below(19)]);
        text.push_back(vowels[stream.below(5)]);
      }
    }
    defenses::PerturbConfig cfg;
    cfg.strength = 0.1;
    cfg.seed = 1000 + it;
    const std::string out = defenses::perturb_text(text, cfg);
    ++total;
    changed += features::zlib_len(text) != features::zlib_len(out);
  }
  CHECK(changed >= (9 * total) / 10);
}

TEST_CASE("gaussian epsilon matches the closed form") {
  CHECK(defenses::gaussian_epsilon(1.0, 1e-5, 1.0) ==
        Catch::Approx(9.689610525210778).margin(1e-9));
  // linear in 1/sigma and in C
  CHECK(defenses::gaussian_epsilon(1.0, 1e-5, 2.0) ==
        Catch::Approx(defenses::gaussian_epsilon(1.0, 1e-5, 1.0) / 2.0).margin(1e-12));
  CHECK(defenses::gaussian_epsilon(0.5, 1e-5, 1.0) ==
        Catch::Approx(defenses::gaussian_epsilon(1.0, 1e-5, 1.0) / 2.0).margin(1e-12));
  CHECK_THROWS_AS(defenses::gaussian_epsilon(1.0, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("laplace epsilon matches the closed form and inverts the bound") {
  CHECK(defenses::laplace_epsilon(1.0, 0.5) == 4.0);
  auto stream = rng::derive(13, "lap-inv");
  for (int it = 0; it < 50; ++it) {
    const double c1 = stream.uniform(0.1, 5.0);
    const double eps = stream.uniform(0.1, 8.0);
    const double b = 2.0 * c1 / eps;  // b >= Delta1/eps at equality
    CHECK(defenses::laplace_epsilon(c1, b) == Catch::Approx(eps).margin(1e-12));
  }
  // monotone decreasing in b
  double prev = 1e300;
  for (double b = 0.1; b < 10.0; b += 0.3) {
    const double e = defenses::laplace_epsilon(1.0, b);
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("epsilon is monotone in noise scale for both mechanisms") {
  double prev_g = 1e300, prev_l = 1e300;
  for (int i = 1; i <= 10; ++i) {
    const double s = 0.2 * i;
    const double eg = defenses::gaussian_epsilon(1.0, 1e-5, s);
    const double el = defenses::laplace_epsilon(1.0, s);
    CHECK(eg < prev_g);
    CHECK(el < prev_l);
    prev_g = eg;
    prev_l = el;
  }
}

TEST_CASE("feature noise clips to the norm bound before adding noise") {
  std::vector<features::FeatureVector> feats = {
      fv("a", 3.0, 4.0, 0.0, 0.0, 0.0),   // l2 norm 5
      fv("b", 0.1, 0.1, 0.1, 0.1, 0.1)};  // inside the ball
  defenses::DpParams p;
  p.mechanism = defenses::DpMechanism::gaussian;
  p.clip_bound = 1.0;
  p.noise_scale = 0.0;  // zero-noise limit isolates the projection
  const auto out = defenses::add_feature_noise(feats, p, 3);
  const double n0 = std::sqrt(out[0].ft_score * out[0].ft_score +
                              out[0].base_score * out[0].base_score);
  CHECK(n0 == Catch::Approx(1.0).margin(1e-12));
  CHECK(out[1].ft_score == Catch::Approx(0.1).margin(1e-12));  // untouched

  // l1 clipping for laplace
  p.mechanism = defenses::DpMechanism::laplace;
  const auto out1 = defenses::add_feature_noise(feats, p, 3);
  const double l1 = std::fabs(out1[0].ft_score) + std::fabs(out1[0].base_score);
  CHECK(l1 == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("feature noise is deterministic and respects missingness") {
  std::vector<features::FeatureVector> feats = {fv("a", 0.5, 0.2, 0.1, 1.0, 0.01)};
  feats[0].likelihood = features::kMissing;
  feats[0].likelihood_missing = true;
  defenses::DpParams p;
  p.clip_bound = 10.0;
  p.noise_scale = 0.3;
  const auto a = defenses::add_feature_noise(feats, p, 7);
  const auto b = defenses::add_feature_noise(feats, p, 7);
  CHECK(a[0].ft_score == b[0].ft_score);
  CHECK(a[0].zlib == b[0].zlib);
  CHECK(std::isnan(a[0].likelihood));
  CHECK(a[0].ft_score != feats[0].ft_score);
}

TEST_CASE("relative noise mapping normalizes features to unit range") {
  std::vector<features::FeatureVector> feats = {
      fv("a", 0.0, 0.2, 0.0, -4.0, -0.02), fv("b", 1.0, 0.8, 0.5, 6.0, 0.04),
      fv("c", 0.5, 0.5, 0.25, 1.0, 0.01)};
  const auto m = defenses::relative_noise_mapping(
      feats, 0.2, defenses::DpMechanism::gaussian);
  CHECK(m.params.noise_scale == 0.2);
  CHECK(m.params.clip_bound == Catch::Approx(std::sqrt(5.0)));
  const auto norm = defenses::normalize_features(feats, m);
  for (const auto& f : norm) {
    for (std::size_t i = 0; i < features::FeatureVector::kCount; ++i) {
      CHECK(f.value(i) >= -1e-12);
      CHECK(f.value(i) <= 1.0 + 1e-12);
    }
  }
  CHECK(norm[0].likelihood == Catch::Approx(0.0).margin(1e-12));
  CHECK(norm[1].likelihood == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("rescoring perturbed simulator traces re-verifies rewards") {
  sim::SimConfig c;
  c.n_prompts = 20;
  c.n_skills = 4;
  c.group_size = 4;
  c.epochs = 2;
  c.seed = 9;
  auto st = sim::init_sim(c);
  sim::train(st, c.epochs);
  const TraceSet set = sim::emit_traces(st, 4, 0.5);

  defenses::PerturbConfig cfg;
  cfg.strength = 0.2;
  cfg.seed = 21;
  const TraceSet perturbed = defenses::perturb_traceset(set, cfg);
  const TraceSet rescored = sim::rescore_trace_set(st, perturbed);
  bool any_reward_flip = false;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    for (std::size_t k = 0; k < set.records[i].samples_ft.size(); ++k) {
      const auto& s = rescored.records[i].samples_ft[k];
      REQUIRE(s.has_logprobs());  // scores recomputed for the perturbed text
      for (double lp : s.token_logprobs_ft) CHECK(lp <= 0.0);
      any_reward_flip |= s.reward != set.records[i].samples_ft[k].reward;
    }
  }
  CHECK(any_reward_flip);  // character noise corrupts some answers
}
