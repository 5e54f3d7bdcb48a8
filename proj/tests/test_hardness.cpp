#include <catch2/catch_amalgamated.hpp>

#include "mia/hardness.hpp"
#include "mia/rng.hpp"

using namespace mia;

namespace {

features::FeatureVector fv(double ft, double base) {
  features::FeatureVector f;
  f.ft_score = ft;
  f.base_score = base;
  f.ft_score_missing = false;
  f.base_score_missing = false;
  return f;
}

}  // namespace

TEST_CASE("hardness classification") {
  CHECK(hardness::classify(1.0, 1.0) == hardness::Split::all1);
  CHECK(hardness::classify(0.0, 0.0) == hardness::Split::all0);
  CHECK(hardness::classify(0.75, 0.25) == hardness::Split::residual);
  CHECK(hardness::classify(1.0, 0.875) == hardness::Split::residual);
  // tolerance flag relaxes equality
  CHECK(hardness::classify(1.0, 0.9375, 1.0 / 16.0) == hardness::Split::all1);
}

TEST_CASE("partition is exact and exhaustive") {
  std::vector<features::FeatureVector> feats = {
      fv(1.0, 1.0), fv(0.0, 0.0), fv(0.25, 0.75), fv(0.0, 0.0), fv(1.0, 0.5)};
  const auto p = hardness::partition(feats);
  CHECK(p.all1 == std::vector<std::size_t>{0});
  CHECK(p.all0 == std::vector<std::size_t>{1, 3});
  CHECK(p.residual == std::vector<std::size_t>{2, 4});
  CHECK(p.all0.size() + p.all1.size() + p.residual.size() == feats.size());
}

TEST_CASE("rouge_l LCS F1") {
  const std::vector<std::string> x = {"a", "b", "c", "d"};
  const std::vector<std::string> y = {"a", "c", "d"};
  CHECK(hardness::rouge_l(x, y) == Catch::Approx(6.0 / 7.0).margin(1e-12));
  CHECK(hardness::rouge_l(x, x) == 1.0);
  CHECK(hardness::rouge_l(x, {"q", "r"}) == 0.0);
  CHECK(hardness::rouge_l_text("ba ce da", "ba da") ==
        Catch::Approx(0.8).margin(1e-12));  // LCS 2, P=1, R=2/3
}

TEST_CASE("rouge_l symmetry of F1") {
  auto stream = rng::derive(3, "rouge-sym");
  const std::vector<std::string> words = {"ba", "ce", "di", "fo", "gu"};
  for (int it = 0; it < 30; ++it) {
    std::vector<std::string> a, b;
    for (std::size_t i = 0; i < 1 + stream.below(6); ++i)
      a.push_back(words[stream.below(words.size())]);
    for (std::size_t i = 0; i < 1 + stream.below(6); ++i)
      b.push_back(words[stream.below(words.size())]);
    const double f_ab = hardness::rouge_l(a, b);
    CHECK(f_ab >= 0.0);
    CHECK(f_ab <= 1.0);
    CHECK(f_ab == Catch::Approx(hardness::rouge_l(b, a)).margin(1e-12));
  }
}

TEST_CASE("ngram overlap") {
  CHECK(hardness::ngram_overlap("hello", "hello") == 1.0);
  CHECK(hardness::ngram_overlap("ab", "cd") == 0.0);  // both below n: convention 0
  CHECK(hardness::ngram_overlap("abcd", "xyz") == 0.0);

  // set-arithmetic oracle on a random pair
  auto stream = rng::derive(5, "ngram-oracle");
  for (int it = 0; it < 30; ++it) {
    std::string a, b;
    for (int i = 0; i < 10; ++i) a.push_back(static_cast<char>('a' + stream.below(4)));
    for (int i = 0; i < 12; ++i) b.push_back(static_cast<char>('a' + stream.below(4)));
    std::set<std::string> ga, gb;
    for (std::size_t i = 0; i + 3 <= a.size(); ++i) ga.insert(a.substr(i, 3));
    for (std::size_t i = 0; i + 3 <= b.size(); ++i) gb.insert(b.substr(i, 3));
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    const double expected =
        static_cast<double>(inter) / (ga.size() + gb.size() - inter);
    CHECK(hardness::ngram_overlap(a, b) == Catch::Approx(expected).margin(1e-12));
    CHECK(hardness::ngram_overlap(a, b) ==
          Catch::Approx(hardness::ngram_overlap(b, a)).margin(1e-12));
  }
}

TEST_CASE("group similarity over cross pairs") {
  PromptTrace t;
  auto mk = [](const std::string& text, SampleSource src) {
    ResponseSample s;
    s.text = text;
    s.reward = 1;
    s.source = src;
    s.token_logprobs_ft = {-1.0};
    s.token_logprobs_ref = {-1.0};
    return s;
  };
  t.samples_ft = {mk("ba ce da", SampleSource::ft)};
  t.samples_ref = {mk("ba ce da", SampleSource::ref)};
  auto s = hardness::group_similarity(t);
  CHECK(s.rouge_l == 1.0);
  CHECK(s.ngram == 1.0);

  // single pair equals the pairwise values
  t.samples_ref = {mk("ba da", SampleSource::ref)};
  s = hardness::group_similarity(t);
  CHECK(s.rouge_l == Catch::Approx(hardness::rouge_l_text("ba ce da", "ba da")));
  CHECK(s.ngram == Catch::Approx(hardness::ngram_overlap("ba ce da", "ba da")));

  // permutation invariance over the sample lists
  t.samples_ft = {mk("ba ce", SampleSource::ft), mk("da fo", SampleSource::ft)};
  t.samples_ref = {mk("ba fo", SampleSource::ref), mk("ce da", SampleSource::ref)};
  const auto s1 = hardness::group_similarity(t);
  std::swap(t.samples_ft[0], t.samples_ft[1]);
  std::swap(t.samples_ref[0], t.samples_ref[1]);
  const auto s2 = hardness::group_similarity(t);
  CHECK(s1.rouge_l == Catch::Approx(s2.rouge_l).margin(1e-12));
  CHECK(s1.ngram == Catch::Approx(s2.ngram).margin(1e-12));
}
