#pragma once

// The membership predictor: a stacking ensemble of a random forest and a
// logistic-regression pipeline, combined by a logistic-regression
// meta-learner fit on out-of-fold base probabilities. Everything is
// deterministic under (X, y, seed): per-tree RNG streams derive from
// (seed, tree_index), split ties break on lowest feature index then lowest
// threshold, and the LR optimizer is damped Newton with backtracking.
//
// Missing values: features are median-imputed (training-fold medians) and
// binary missing indicators are appended; both base learners consume the
// same augmented matrix, and the LR pipeline additionally standardizes
// columns (constant columns are dropped by zeroing their scale).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mia/rng.hpp"

namespace mia::classifier {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// Imputation + missing indicators (shared by both base learners)

struct Imputer {
  std::vector<double> medians;

  static Imputer fit(const Matrix& X) {
    Imputer im;
    im.medians.resize(X.cols, 0.0);
    std::vector<double> col;
    for (std::size_t c = 0; c < X.cols; ++c) {
      col.clear();
      for (std::size_t r = 0; r < X.rows; ++r)
        if (!is_missing(X.at(r, c))) col.push_back(X.at(r, c));
      if (col.empty()) {
        im.medians[c] = 0.0;
        continue;
      }
      std::sort(col.begin(), col.end());
      const std::size_t n = col.size();
      im.medians[c] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return im;
  }

  // [imputed features | missing indicators], doubling the width.
  Matrix transform(const Matrix& X) const {
    Matrix out(X.rows, X.cols * 2);
    for (std::size_t r = 0; r < X.rows; ++r) {
      for (std::size_t c = 0; c < X.cols; ++c) {
        const double v = X.at(r, c);
        out.at(r, c) = is_missing(v) ? medians[c] : v;
        out.at(r, X.cols + c) = is_missing(v) ? 1.0 : 0.0;
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double p_member = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const double* row) const {
    int i = 0;
    while (nodes[i].feature >= 0) {
      double v = row[nodes[i].feature];
      if (is_missing(v)) v = -std::numeric_limits<double>::infinity();
      i = v <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    }
    return nodes[i].p_member;
  }
};

struct RandomForest {
  std::vector<Tree> trees;
  std::size_t n_features = 0;
  std::uint64_t seed = 0;

  double predict_proba(const double* row) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(row);
    return s / trees.size();
  }
};

namespace detail {

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

inline double gini(double pos, double total) {
  if (total == 0.0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

inline void build_tree(Tree& tree, const Matrix& X, const std::vector<int>& y,
                       std::vector<std::size_t>& idx, std::size_t lo,
                       std::size_t hi, int node, std::size_t mtry,
                       rng::Stream& stream) {
  const std::size_t n = hi - lo;
  std::size_t pos = 0;
  for (std::size_t i = lo; i < hi; ++i) pos += y[idx[i]];

  auto make_leaf = [&] {
    tree.nodes[node].feature = -1;
    tree.nodes[node].p_member = static_cast<double>(pos) / n;
  };
  if (pos == 0 || pos == n || n < 2) {
    make_leaf();
    return;
  }

  // Candidate features: mtry distinct indices, examined in ascending order
  // so ties deterministically break toward the lowest feature index.
  std::vector<std::size_t> cand;
  {
    std::vector<std::size_t> all(X.cols);
    for (std::size_t c = 0; c < X.cols; ++c) all[c] = c;
    for (std::size_t k = 0; k < mtry && k < all.size(); ++k) {
      const std::size_t j = k + stream.below(all.size() - k);
      std::swap(all[k], all[j]);
      cand.push_back(all[k]);
    }
    std::sort(cand.begin(), cand.end());
  }

  const double parent_impurity = gini(static_cast<double>(pos), static_cast<double>(n));
  SplitChoice best;
  std::vector<std::pair<double, int>> vals;
  vals.reserve(n);
  for (std::size_t f : cand) {
    vals.clear();
    for (std::size_t i = lo; i < hi; ++i)
      vals.emplace_back(X.at(idx[i], f), y[idx[i]]);
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (vals.front().first == vals.back().first) continue;

    double left_n = 0.0, left_pos = 0.0;
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      left_n += 1.0;
      left_pos += vals[i].second;
      if (vals[i].first == vals[i + 1].first) continue;
      const double right_n = n - left_n;
      const double right_pos = pos - left_pos;
      const double child =
          (left_n * gini(left_pos, left_n) + right_n * gini(right_pos, right_n)) / n;
      const double gain = parent_impurity - child;
      const double thr = 0.5 * (vals[i].first + vals[i + 1].first);
      // Candidates are scanned in ascending (feature, threshold) order, so
      // keeping the first strict improvement breaks ties toward the lowest
      // feature index and then the lowest threshold.
      if (gain > best.gain + 1e-15) best = {gain, static_cast<int>(f), thr};
    }
  }

  if (best.feature < 0 || best.gain <= 1e-15) {
    make_leaf();
    return;
  }

  const auto mid = std::partition(idx.begin() + lo, idx.begin() + hi,
                                  [&](std::size_t i) {
                                    return X.at(i, best.feature) <= best.threshold;
                                  });
  const std::size_t split = static_cast<std::size_t>(mid - idx.begin());
  if (split == lo || split == hi) {  // numeric degeneracy guard
    make_leaf();
    return;
  }
  // Keep child ranges in a deterministic order.
  std::sort(idx.begin() + lo, idx.begin() + split);
  std::sort(idx.begin() + split, idx.begin() + hi);

  tree.nodes[node].feature = best.feature;
  tree.nodes[node].threshold = best.threshold;
  const int left = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes.emplace_back();
  tree.nodes[node].left = left;
  tree.nodes[node].right = left + 1;
  build_tree(tree, X, y, idx, lo, split, left, mtry, stream);
  build_tree(tree, X, y, idx, split, hi, left + 1, mtry, stream);
}

}  // namespace detail

inline RandomForest fit_random_forest(const Matrix& X, const std::vector<int>& y,
                                      int n_trees = 100, std::uint64_t seed = 0) {
  if (X.rows < 2) throw std::invalid_argument("fit_random_forest: need >= 2 rows");
  if (X.rows != y.size())
    throw std::invalid_argument("fit_random_forest: X/y size mismatch");
  std::size_t pos = 0;
  for (int v : y) pos += v;
  if (pos == 0 || pos == y.size())
    throw std::invalid_argument("fit_random_forest: single-class labels");

  RandomForest forest;
  forest.n_features = X.cols;
  forest.seed = seed;
  forest.trees.resize(n_trees);
  const std::size_t mtry = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(X.cols))));

  for (int t = 0; t < n_trees; ++t) {
    auto stream = rng::derive(seed, "tree", t);
    std::vector<std::size_t> boot(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) boot[i] = stream.below(X.rows);
    std::sort(boot.begin(), boot.end());
    Tree& tree = forest.trees[t];
    tree.nodes.emplace_back();
    detail::build_tree(tree, X, y, boot, 0, boot.size(), 0, mtry, stream);
  }
  return forest;
}

// ---------------------------------------------------------------------------
// Logistic regression (L2, unregularized intercept, damped Newton)

struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;  // 0 marks a dropped constant column

  static Scaler fit(const Matrix& X) {
    Scaler s;
    s.mean.assign(X.cols, 0.0);
    s.scale.assign(X.cols, 0.0);
    for (std::size_t c = 0; c < X.cols; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < X.rows; ++r) m += X.at(r, c);
      m /= X.rows;
      double var = 0.0;
      for (std::size_t r = 0; r < X.rows; ++r) {
        const double d = X.at(r, c) - m;
        var += d * d;
      }
      var /= X.rows;
      s.mean[c] = m;
      s.scale[c] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
    return s;
  }

  Matrix transform(const Matrix& X) const {
    Matrix out(X.rows, X.cols);
    for (std::size_t r = 0; r < X.rows; ++r)
      for (std::size_t c = 0; c < X.cols; ++c)
        out.at(r, c) = (X.at(r, c) - mean[c]) * scale[c];
    return out;
  }
};

struct LogReg {
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 1.0;
  int iterations = 0;

  double decision(const double* row) const {
    double z = bias;
    for (std::size_t c = 0; c < weights.size(); ++c) z += weights[c] * row[c];
    return z;
  }
  double predict_proba(const double* row) const {
    return 1.0 / (1.0 + std::exp(-decision(row)));
  }
};

namespace detail {

// Solve the (d x d) SPD-ish system H x = g in place by Gaussian elimination
// with partial pivoting; dimensions here are tiny.
inline std::vector<double> solve_linear(std::vector<double> H, std::vector<double> g,
                                        std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < d; ++i)
      if (std::fabs(H[i * d + k]) > std::fabs(H[piv * d + k])) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < d; ++j) std::swap(H[k * d + j], H[piv * d + j]);
      std::swap(g[k], g[piv]);
    }
    const double pivot = H[k * d + k];
    if (std::fabs(pivot) < 1e-300) continue;
    for (std::size_t i = k + 1; i < d; ++i) {
      const double f = H[i * d + k] / pivot;
      if (f == 0.0) continue;
      for (std::size_t j = k; j < d; ++j) H[i * d + j] -= f * H[k * d + j];
      g[i] -= f * g[k];
    }
  }
  std::vector<double> x(d, 0.0);
  for (std::size_t ik = d; ik-- > 0;) {
    double s = g[ik];
    for (std::size_t j = ik + 1; j < d; ++j) s -= H[ik * d + j] * x[j];
    const double pivot = H[ik * d + ik];
    x[ik] = std::fabs(pivot) < 1e-300 ? 0.0 : s / pivot;
  }
  return x;
}

}  // namespace detail

// Minimizes sum_i log(1 + exp(-y~ z_i)) + (l2/2)||w||^2 (intercept
// unpenalized) by Newton steps with Armijo backtracking, to gradient norm
// < 1e-8 or 1e4 iterations. The objective decreases monotonically.
inline LogReg fit_logreg(const Matrix& X, const std::vector<int>& y,
                         double l2 = 1.0) {
  if (X.rows != y.size())
    throw std::invalid_argument("fit_logreg: X/y size mismatch");
  std::size_t pos = 0;
  for (int v : y) pos += v;
  if (pos == 0 || pos == y.size())
    throw std::invalid_argument("fit_logreg: single-class labels");
  for (double v : X.data)
    if (!std::isfinite(v))
      throw std::invalid_argument("fit_logreg: non-finite input");

  const std::size_t d = X.cols;
  LogReg model;
  model.l2 = l2;
  model.weights.assign(d, 0.0);
  model.bias = 0.0;

  const std::size_t dim = d + 1;  // weights + intercept
  std::vector<double> z(X.rows), p(X.rows), grad(dim), step(dim), H(dim * dim);

  auto objective = [&](const std::vector<double>& w, double b) {
    double obj = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
      double zi = b;
      for (std::size_t c = 0; c < d; ++c) zi += w[c] * X.at(i, c);
      const double yz = (y[i] ? 1.0 : -1.0) * zi;
      obj += yz > 0 ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz));
    }
    for (double wc : w) obj += 0.5 * l2 * wc * wc;
    return obj;
  };

  double obj = objective(model.weights, model.bias);
  for (int iter = 0; iter < 10000; ++iter) {
    model.iterations = iter;
    for (std::size_t i = 0; i < X.rows; ++i) {
      z[i] = model.decision(&X.data[i * d]);
      p[i] = 1.0 / (1.0 + std::exp(-z[i]));
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double r = p[i] - (y[i] ? 1.0 : 0.0);
      for (std::size_t c = 0; c < d; ++c) grad[c] += r * X.at(i, c);
      grad[d] += r;
    }
    for (std::size_t c = 0; c < d; ++c) grad[c] += l2 * model.weights[c];

    double gnorm = 0.0;
    for (double g : grad) gnorm += g * g;
    gnorm = std::sqrt(gnorm);
    if (gnorm < 1e-8) break;

    std::fill(H.begin(), H.end(), 0.0);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double s = std::max(p[i] * (1.0 - p[i]), 1e-12);
      const double* row = &X.data[i * d];
      for (std::size_t a = 0; a < d; ++a) {
        if (row[a] == 0.0) continue;
        const double sa = s * row[a];
        for (std::size_t b2 = a; b2 < d; ++b2) H[a * dim + b2] += sa * row[b2];
        H[a * dim + d] += sa;
      }
      H[d * dim + d] += s;
    }
    for (std::size_t a = 0; a < d; ++a) {
      H[a * dim + a] += l2;
      for (std::size_t b2 = a + 1; b2 < dim; ++b2) H[b2 * dim + a] = H[a * dim + b2];
    }

    step = detail::solve_linear(H, grad, dim);

    double desc = 0.0;  // directional derivative along -step
    for (std::size_t c = 0; c < dim; ++c) desc += grad[c] * step[c];
    if (!(desc > 0.0)) {  // fall back to plain gradient direction
      step = grad;
      desc = gnorm * gnorm;
    }

    double t = 1.0;
    std::vector<double> w_try(d);
    double b_try = 0.0, obj_try = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t c = 0; c < d; ++c)
        w_try[c] = model.weights[c] - t * step[c];
      b_try = model.bias - t * step[d];
      obj_try = objective(w_try, b_try);
      if (obj_try <= obj - 1e-4 * t * desc) break;
      t *= 0.5;
    }
    if (obj_try >= obj) break;  // no further progress possible
    model.weights = w_try;
    model.bias = b_try;
    obj = obj_try;
  }
  return model;
}

struct LrPipeline {
  Scaler scaler;
  LogReg lr;

  double predict_proba(const double* row, std::vector<double>& scratch) const {
    scratch.resize(scaler.mean.size());
    for (std::size_t c = 0; c < scratch.size(); ++c)
      scratch[c] = (row[c] - scaler.mean[c]) * scaler.scale[c];
    return lr.predict_proba(scratch.data());
  }
};

inline LrPipeline fit_logreg_pipeline(const Matrix& X_imputed,
                                      const std::vector<int>& y, double l2 = 1.0) {
  LrPipeline pipe;
  pipe.scaler = Scaler::fit(X_imputed);
  pipe.lr = fit_logreg(pipe.scaler.transform(X_imputed), y, l2);
  return pipe;
}

// ---------------------------------------------------------------------------
// Stratified folds

struct FoldAssignment {
  std::vector<int> fold_of;  // per-sample fold index in {0..F-1}
  int folds = 0;
};

// Per-class shuffled round-robin dealing: every fold's class ratio is within
// one sample of the global ratio.
inline FoldAssignment stratified_folds(const std::vector<int>& y, int folds,
                                       rng::Stream stream) {
  if (folds < 2) throw std::invalid_argument("stratified_folds: folds < 2");
  FoldAssignment fa;
  fa.folds = folds;
  fa.fold_of.assign(y.size(), 0);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(i);
    stream.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      fa.fold_of[idx[i]] = static_cast<int>(i % folds);
  }
  return fa;
}

// ---------------------------------------------------------------------------
// Stacking

struct StackingModel {
  Imputer imputer;
  RandomForest forest;
  LrPipeline lr_pipeline;
  LogReg meta;
  std::vector<std::string> feature_names;
  int training_folds = 5;
  int n_trees = 100;
  std::uint64_t seed = 0;

  double predict_one(const double* augmented_row, std::vector<double>& scratch) const {
    const double pf = forest.predict_proba(augmented_row);
    const double pl = lr_pipeline.predict_proba(augmented_row, scratch);
    const double z[2] = {pf, pl};
    return meta.predict_proba(z);
  }

  std::vector<double> predict_proba(const Matrix& X_raw) const {
    if (X_raw.cols * 2 != forest.n_features)
      throw std::invalid_argument("predict_proba: feature dimension mismatch");
    const Matrix aug = imputer.transform(X_raw);
    std::vector<double> out(X_raw.rows);
    std::vector<double> scratch;
    for (std::size_t r = 0; r < X_raw.rows; ++r)
      out[r] = predict_one(&aug.data[r * aug.cols], scratch);
    return out;
  }
};

namespace detail {

inline Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < X.cols; ++c) out.at(i, c) = X.at(rows[i], c);
  return out;
}

}  // namespace detail

inline StackingModel fit_stacking(const Matrix& X_raw, const std::vector<int>& y,
                                  int folds = 5, std::uint64_t seed = 0,
                                  int n_trees = 100) {
  if (X_raw.rows != y.size())
    throw std::invalid_argument("fit_stacking: X/y size mismatch");
  const FoldAssignment fa =
      stratified_folds(y, folds, rng::derive(seed, "stack-folds"));

  Matrix meta_features(X_raw.rows, 2);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < y.size(); ++i)
      (fa.fold_of[i] == f ? test_rows : train_rows).push_back(i);
    std::vector<int> y_train;
    for (std::size_t i : train_rows) y_train.push_back(y[i]);
    std::size_t pos = 0;
    for (int v : y_train) pos += v;
    if (pos == 0 || pos == y_train.size() || test_rows.empty())
      throw std::invalid_argument("fit_stacking: fold without both classes");

    const Matrix X_train = detail::take_rows(X_raw, train_rows);
    const Imputer imp = Imputer::fit(X_train);
    const Matrix aug_train = imp.transform(X_train);
    const RandomForest rf =
        fit_random_forest(aug_train, y_train, n_trees, rng::mix(seed, 1000 + f));
    const LrPipeline lp = fit_logreg_pipeline(aug_train, y_train);

    const Matrix aug_test = imp.transform(detail::take_rows(X_raw, test_rows));
    std::vector<double> scratch;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      const double* row = &aug_test.data[i * aug_test.cols];
      meta_features.at(test_rows[i], 0) = rf.predict_proba(row);
      meta_features.at(test_rows[i], 1) = lp.predict_proba(row, scratch);
    }
  }

  StackingModel model;
  model.training_folds = folds;
  model.n_trees = n_trees;
  model.seed = seed;
  model.meta = fit_logreg(meta_features, y, 1.0);
  model.imputer = Imputer::fit(X_raw);
  const Matrix aug_full = model.imputer.transform(X_raw);
  model.forest = fit_random_forest(aug_full, y, n_trees, seed);
  model.lr_pipeline = fit_logreg_pipeline(aug_full, y);
  return model;
}

// ---------------------------------------------------------------------------
// Outer cross-validation: every sample is scored exactly once by a stacking
// model whose training fold excludes it.

struct CvResult {
  std::vector<double> oof_probs;
  FoldAssignment folds;
  std::vector<StackingModel> fold_models;
  std::vector<std::vector<std::size_t>> fold_train_rows;
};

inline CvResult cross_validate(const Matrix& X_raw, const std::vector<int>& y,
                               int folds = 5, std::uint64_t seed = 0,
                               int n_trees = 100) {
  if (y.size() < static_cast<std::size_t>(2 * folds))
    throw std::invalid_argument("cross_validate: n too small for folds");
  CvResult res;
  res.folds = stratified_folds(y, folds, rng::derive(seed, "cv-folds"));
  res.oof_probs.assign(y.size(), 0.0);

  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < y.size(); ++i)
      (res.folds.fold_of[i] == f ? test_rows : train_rows).push_back(i);
    std::vector<int> y_train;
    for (std::size_t i : train_rows) y_train.push_back(y[i]);

    StackingModel m = fit_stacking(detail::take_rows(X_raw, train_rows), y_train,
                                   folds, rng::mix(seed, 5000 + f), n_trees);
    const std::vector<double> probs =
        m.predict_proba(detail::take_rows(X_raw, test_rows));
    for (std::size_t i = 0; i < test_rows.size(); ++i)
      res.oof_probs[test_rows[i]] = probs[i];
    res.fold_models.push_back(std::move(m));
    res.fold_train_rows.push_back(std::move(train_rows));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Versioned JSON serialization

inline nlohmann::json to_json(const StackingModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.p_member});
    trees.push_back(std::move(nodes));
  }
  return nlohmann::json{
      {"format_version", 1},
      {"feature_names", m.feature_names},
      {"training_folds", m.training_folds},
      {"n_trees", m.n_trees},
      {"seed", m.seed},
      {"imputer", {{"medians", m.imputer.medians}}},
      {"forest", {{"n_features", m.forest.n_features}, {"trees", trees}}},
      {"lr_pipeline",
       {{"mean", m.lr_pipeline.scaler.mean},
        {"scale", m.lr_pipeline.scaler.scale},
        {"weights", m.lr_pipeline.lr.weights},
        {"bias", m.lr_pipeline.lr.bias},
        {"l2", m.lr_pipeline.lr.l2}}},
      {"meta",
       {{"weights", m.meta.weights}, {"bias", m.meta.bias}, {"l2", m.meta.l2}}}};
}

inline StackingModel stacking_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != 1)
    throw std::invalid_argument("unsupported model format_version");
  StackingModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.training_folds = j.at("training_folds").get<int>();
  m.n_trees = j.at("n_trees").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.imputer.medians = j.at("imputer").at("medians").get<std::vector<double>>();
  m.forest.n_features = j.at("forest").at("n_features").get<std::size_t>();
  for (const auto& tj : j.at("forest").at("trees")) {
    Tree t;
    for (const auto& nj : tj) {
      TreeNode n;
      n.feature = nj[0].get<int>();
      n.threshold = nj[1].get<double>();
      n.left = nj[2].get<int>();
      n.right = nj[3].get<int>();
      n.p_member = nj[4].get<double>();
      t.nodes.push_back(n);
    }
    m.forest.trees.push_back(std::move(t));
  }
  const auto& lp = j.at("lr_pipeline");
  m.lr_pipeline.scaler.mean = lp.at("mean").get<std::vector<double>>();
  m.lr_pipeline.scaler.scale = lp.at("scale").get<std::vector<double>>();
  m.lr_pipeline.lr.weights = lp.at("weights").get<std::vector<double>>();
  m.lr_pipeline.lr.bias = lp.at("bias").get<double>();
  m.lr_pipeline.lr.l2 = lp.at("l2").get<double>();
  const auto& mt = j.at("meta");
  m.meta.weights = mt.at("weights").get<std::vector<double>>();
  m.meta.bias = mt.at("bias").get<double>();
  m.meta.l2 = mt.at("l2").get<double>();
  return m;
}

}  // namespace mia::classifier
