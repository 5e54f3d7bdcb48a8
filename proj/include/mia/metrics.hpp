#pragma once

// Attack evaluation metrics: ROC curves, AUC, low-FPR tail metrics, balanced
// accuracy, percentile diagnostics and Pareto fronts. Scores follow the
// "higher = more likely member" convention. Ties count 1/2 in AUC and
// percentile ranks; ties at a decision threshold predict nonmember.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mia::metrics {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// All achievable operating points (score >= threshold predicts member), one
// per distinct score, bracketed by (0,0) and (1,1). fpr/tpr are monotone
// non-decreasing along the curve.
inline std::vector<RocPoint> roc_curve(const std::vector<double>& member_scores,
                                       const std::vector<double>& nonmember_scores) {
  if (member_scores.empty() || nonmember_scores.empty())
    throw std::invalid_argument("roc_curve: empty class");

  std::vector<double> m = member_scores;
  std::vector<double> n = nonmember_scores;
  std::sort(m.begin(), m.end(), std::greater<double>());
  std::sort(n.begin(), n.end(), std::greater<double>());

  std::vector<double> thresholds;
  thresholds.reserve(m.size() + n.size());
  thresholds.insert(thresholds.end(), m.begin(), m.end());
  thresholds.insert(thresholds.end(), n.begin(), n.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  std::vector<RocPoint> curve;
  curve.reserve(thresholds.size() + 1);
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});

  std::size_t mi = 0, ni = 0;
  for (double t : thresholds) {
    while (mi < m.size() && m[mi] >= t) ++mi;
    while (ni < n.size() && n[ni] >= t) ++ni;
    curve.push_back({static_cast<double>(ni) / n.size(),
                     static_cast<double>(mi) / m.size(), t});
  }
  return curve;  // last point is (1,1) at the minimum score
}

// Trapezoid AUC; equals the Mann-Whitney pair count with ties counted 1/2.
inline double auc(const std::vector<double>& member_scores,
                  const std::vector<double>& nonmember_scores) {
  const auto curve = roc_curve(member_scores, nonmember_scores);
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) *
            (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  }
  return area;
}

// Max TPR over operating points with empirical FPR <= target. No
// interpolation: with n negatives the FPR grid has resolution 1/n.
inline double tpr_at_fpr(const std::vector<double>& member_scores,
                         const std::vector<double>& nonmember_scores,
                         double target_fpr) {
  if (target_fpr <= 0.0 || target_fpr >= 1.0)
    throw std::invalid_argument("tpr_at_fpr: target outside (0,1)");
  double best = 0.0;
  for (const auto& p : roc_curve(member_scores, nonmember_scores))
    if (p.fpr <= target_fpr) best = std::max(best, p.tpr);
  return best;
}

// Trapezoid area of the ROC restricted to fpr in [0, f_max], divided by
// f_max so that perfect separation scores 1.
inline double pauc(const std::vector<double>& member_scores,
                   const std::vector<double>& nonmember_scores,
                   double f_max = 0.001) {
  if (f_max <= 0.0 || f_max > 1.0)
    throw std::invalid_argument("pauc: f_max outside (0,1]");
  const auto curve = roc_curve(member_scores, nonmember_scores);
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double x0 = curve[i - 1].fpr, y0 = curve[i - 1].tpr;
    const double x1 = curve[i].fpr, y1 = curve[i].tpr;
    if (x0 >= f_max) break;
    if (x1 <= x0) continue;  // vertical segment
    const double xr = std::min(x1, f_max);
    const double yr = y0 + (y1 - y0) * (xr - x0) / (x1 - x0);
    area += (xr - x0) * (y0 + yr) * 0.5;
  }
  return area / f_max;
}

// Restricted tail separation: max over operating points with fpr <= f_max of
// (tpr - fpr).
inline double ks_tail(const std::vector<double>& member_scores,
                      const std::vector<double>& nonmember_scores,
                      double f_max = 0.001) {
  double best = 0.0;
  for (const auto& p : roc_curve(member_scores, nonmember_scores))
    if (p.fpr <= f_max) best = std::max(best, p.tpr - p.fpr);
  return best;
}

// (TPR + TNR) / 2 at a fixed probability threshold; a tie at the threshold
// predicts nonmember.
inline double balanced_accuracy(const std::vector<double>& probs,
                                const std::vector<int>& labels,
                                double threshold = 0.5) {
  if (probs.size() != labels.size())
    throw std::invalid_argument("balanced_accuracy: size mismatch");
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred_member = probs[i] > threshold;
    if (labels[i] == 1)
      (pred_member ? tp : fn)++;
    else
      (pred_member ? fp : tn)++;
  }
  if (tp + fn == 0 || tn + fp == 0)
    throw std::invalid_argument("balanced_accuracy: single-class labels");
  const double tpr = static_cast<double>(tp) / (tp + fn);
  const double tnr = static_cast<double>(tn) / (tn + fp);
  return 0.5 * (tpr + tnr);
}

// Percentile rank of each flagged value within the negative distribution:
// 100 * (#neg < v + 0.5 * #neg == v) / n_neg.
inline std::vector<double> percentile_ranks(const std::vector<double>& flagged,
                                            const std::vector<double>& negatives) {
  if (negatives.empty())
    throw std::invalid_argument("percentile_ranks: empty negatives");
  std::vector<double> sorted = negatives;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(flagged.size());
  for (double v : flagged) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), v);
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), v);
    const double below = static_cast<double>(lo - sorted.begin());
    const double equal = static_cast<double>(hi - lo);
    out.push_back(100.0 * (below + 0.5 * equal) / sorted.size());
  }
  return out;
}

struct ParetoPoint {
  double pauc = 0.0;
  double tpr = 0.0;
  double ks_tail = 0.0;
  std::string name;
};

// Points not dominated in (pauc, tpr): another point dominates if it is >=
// in both coordinates and > in at least one.
inline std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> front;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      if (q.pauc >= p.pauc && q.tpr >= p.tpr &&
          (q.pauc > p.pauc || q.tpr > p.tpr)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  return front;
}

}  // namespace mia::metrics
