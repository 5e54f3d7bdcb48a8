#pragma once

// Example-hardness stratification (all-0 / all-1 / residual by empirical
// mean reward) and response-similarity diagnostics (Rouge-L over whitespace
// tokens, Jaccard overlap of character 3-grams).

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "mia/features.hpp"
#include "mia/trace.hpp"

namespace mia::hardness {

enum class Split { all0, all1, residual };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::all0: return "all0";
    case Split::all1: return "all1";
    default: return "residual";
  }
}

// all0: both empirical mean rewards equal 0; all1: both equal 1; residual:
// everything else. tolerance relaxes equality to within the given margin
// (e.g. 1/(2N)); the default is exact.
inline Split classify(double ft_score, double base_score, double tolerance = 0.0) {
  const bool both_zero = ft_score <= tolerance && base_score <= tolerance;
  const bool both_one = ft_score >= 1.0 - tolerance && base_score >= 1.0 - tolerance;
  if (both_zero) return Split::all0;
  if (both_one) return Split::all1;
  return Split::residual;
}

struct Partition {
  std::vector<std::size_t> all0;
  std::vector<std::size_t> all1;
  std::vector<std::size_t> residual;
};

// Exact, exhaustive partition of record indices by hardness stratum.
inline Partition partition(const std::vector<features::FeatureVector>& features,
                           double tolerance = 0.0) {
  Partition p;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (f.ft_score_missing || f.base_score_missing) {
      p.residual.push_back(i);
      continue;
    }
    switch (classify(f.ft_score, f.base_score, tolerance)) {
      case Split::all0: p.all0.push_back(i); break;
      case Split::all1: p.all1.push_back(i); break;
      case Split::residual: p.residual.push_back(i); break;
    }
  }
  return p;
}

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// LCS-based F1: P = LCS/|y|, R = LCS/|x|, F = 2PR/(P+R); 0 when LCS = 0.
inline double rouge_l(const std::vector<std::string>& x,
                      const std::vector<std::string>& y) {
  if (x.empty() || y.empty()) return 0.0;
  const std::size_t n = x.size(), m = y.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / m;
  const double r = lcs / n;
  return 2.0 * p * r / (p + r);
}

inline double rouge_l_text(const std::string& x, const std::string& y) {
  return rouge_l(whitespace_tokens(x), whitespace_tokens(y));
}

// Jaccard similarity of character n-gram sets; 0 when both sets are empty.
inline double ngram_overlap(const std::string& x, const std::string& y,
                            std::size_t n = 3) {
  auto grams = [n](const std::string& s) {
    std::set<std::string> g;
    if (s.size() >= n)
      for (std::size_t i = 0; i + n <= s.size(); ++i) g.insert(s.substr(i, n));
    return g;
  };
  const auto gx = grams(x), gy = grams(y);
  if (gx.empty() && gy.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& g : gx) inter += gy.count(g);
  const std::size_t uni = gx.size() + gy.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct SimilarityStats {
  double rouge_l = 0.0;
  double ngram = 0.0;
};

// Mean pairwise similarity over all |ft| x |ref| cross pairs of sampled
// responses.
inline SimilarityStats group_similarity(const PromptTrace& t) {
  SimilarityStats s;
  if (t.samples_ft.empty() || t.samples_ref.empty()) return s;
  std::size_t pairs = 0;
  for (const auto& a : t.samples_ft) {
    const auto ta = whitespace_tokens(a.text);
    for (const auto& b : t.samples_ref) {
      s.rouge_l += rouge_l(ta, whitespace_tokens(b.text));
      s.ngram += ngram_overlap(a.text, b.text);
      ++pairs;
    }
  }
  s.rouge_l /= pairs;
  s.ngram /= pairs;
  return s;
}

}  // namespace mia::hardness
