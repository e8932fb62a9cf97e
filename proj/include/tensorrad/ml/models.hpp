/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Binary classifiers: majority, LDA, logistic regression, random forest and a soft-vote ensemble.

#include <memory>

#include "tensorrad/ml/dataset.hpp"

namespace tensorrad::ml {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Dataset& train) = 0;
  /// P(y = 1) per row.
  virtual std::vector<double> predict_proba(const Eigen::MatrixXd& X) const = 0;
  /// Continuous ranking score (defaults to the probability).
  virtual std::vector<double> decision_function(const Eigen::MatrixXd& X) const { return predict_proba(X); }
  virtual std::vector<int> predict(const Eigen::MatrixXd& X) const {
    std::vector<int> out;
    for (double p : predict_proba(X)) out.push_back(p > 0.5 ? 1 : 0);
    return out;
  }
  virtual std::unique_ptr<Classifier> clone() const = 0;
  virtual std::string name() const = 0;
};

using ClassifierPtr = std::unique_ptr<Classifier>;

/// Predicts the training majority class (ties go to class 0) with its training rate.
class MajorityClassifier final : public Classifier {
 public:
  void fit(const Dataset& train) override {
    const auto c = train.class_counts();
    label_ = c[1] > c[0] ? 1 : 0;
    rate_ = train.n() ? static_cast<double>(c[1]) / static_cast<double>(train.n()) : 0.5;
  }
  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const override {
    return std::vector<double>(static_cast<std::size_t>(X.rows()), rate_);
  }
  std::vector<int> predict(const Eigen::MatrixXd& X) const override {
    return std::vector<int>(static_cast<std::size_t>(X.rows()), label_);
  }
  ClassifierPtr clone() const override { return std::make_unique<MajorityClassifier>(*this); }
  std::string name() const override { return "majority"; }

 private:
  int label_ = 0;
  double rate_ = 0.5;
};

/// Pooled-covariance linear discriminant with ridge lambda = 1e-6 * trace / d.
/// Scores are w.x - w.(mu0 + mu1)/2 (equal priors); probability is the logistic of the score.
class Lda final : public Classifier {
 public:
  static constexpr double kRidgeFactor = 1e-6;

  void fit(const Dataset& train) override {
    const auto cnt = train.class_counts();
    if (cnt[0] < 2 || cnt[1] < 2) throw Error("lda: each class needs at least 2 cases");
    const Eigen::Index d = train.X.cols();
    Eigen::VectorXd mu[2] = {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
    for (std::size_t i = 0; i < train.n(); ++i) mu[train.y[i]] += train.X.row(static_cast<Eigen::Index>(i)).transpose();
    for (int c : {0, 1}) mu[c] /= static_cast<double>(cnt[static_cast<std::size_t>(c)]);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < train.n(); ++i) {
      const Eigen::VectorXd r = train.X.row(static_cast<Eigen::Index>(i)).transpose() - mu[train.y[i]];
      cov.noalias() += r * r.transpose();
    }
    cov /= static_cast<double>(train.n() - 2);
    double lambda = kRidgeFactor * cov.trace() / static_cast<double>(d);
    if (!(lambda > 0.0)) lambda = kRidgeFactor;
    cov.diagonal().array() += lambda;
    w_ = cov.ldlt().solve(mu[1] - mu[0]);
    b_ = -0.5 * w_.dot(mu[0] + mu[1]);
  }
  std::vector<double> decision_function(const Eigen::MatrixXd& X) const override {
    check(X);
    const Eigen::VectorXd s = (X * w_).array() + b_;
    return {s.data(), s.data() + s.size()};
  }
  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const override {
    auto s = decision_function(X);
    for (double& v : s) v = sigmoid(v);
    return s;
  }
  std::vector<int> predict(const Eigen::MatrixXd& X) const override {
    std::vector<int> out;
    for (double s : decision_function(X)) out.push_back(s > 0.0 ? 1 : 0);
    return out;
  }
  ClassifierPtr clone() const override { return std::make_unique<Lda>(*this); }
  std::string name() const override { return "lda"; }
  const Eigen::VectorXd& weights() const { return w_; }
  double bias() const { return b_; }

 private:
  void check(const Eigen::MatrixXd& X) const {
    if (X.cols() != w_.size()) throw Error("lda: column count differs from training");
  }
  Eigen::VectorXd w_;
  double b_ = 0.0;
};

/// L2-penalised logistic regression by damped Newton steps.
///
/// Objective: sum of log losses + (l2/2)|w|^2, intercept unpenalised. With a single
/// class in the training set the fit is intercept-only and the intercept is penalised
/// too, so the estimate stays finite.
class LogisticRegression final : public Classifier {
 public:
  static constexpr double kGradientTolerance = 1e-8;
  static constexpr int kMaxIterations = 200;

  explicit LogisticRegression(double l2 = 1.0) : l2_(l2) {
    if (!(l2 >= 0.0)) throw Error("logreg: l2 must be >= 0");
  }

  void fit(const Dataset& train) override {
    const auto cnt = train.class_counts();
    const Eigen::Index n = train.X.rows(), d = train.X.cols();
    if (n == 0) throw Error("logreg: empty training set");
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = train.y[static_cast<std::size_t>(i)];
    const bool single = cnt[0] == 0 || cnt[1] == 0;
    Eigen::MatrixXd A(n, single ? 1 : d + 1);
    A.col(0).setOnes();
    if (!single) A.rightCols(d) = train.X;
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(A.cols(), l2_);
    if (!single) penalty(0) = 0.0;
    if (single && l2_ == 0.0) throw Error("logreg: single-class data needs l2 > 0");

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(A.cols());
    auto objective = [&](const Eigen::VectorXd& b) {
      const Eigen::VectorXd z = A * b;
      double f = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        // log(1 + e^z) - y z, evaluated stably
        const double zi = z(i);
        f += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - y(i) * zi;
      }
      return f + 0.5 * (penalty.array() * b.array().square()).sum();
    };
    iterations_ = 0;
    double f = objective(beta);
    for (; iterations_ < kMaxIterations; ++iterations_) {
      const Eigen::VectorXd z = A * beta;
      Eigen::VectorXd p(n), wts(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        p(i) = sigmoid(z(i));
        wts(i) = p(i) * (1.0 - p(i));
      }
      const Eigen::VectorXd grad = A.transpose() * (p - y) + penalty.cwiseProduct(beta);
      grad_norm_ = grad.norm();
      if (grad_norm_ < kGradientTolerance) break;
      Eigen::MatrixXd H = A.transpose() * wts.asDiagonal() * A;
      H.diagonal() += penalty;
      H.diagonal().array() += 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
      const Eigen::VectorXd step = H.ldlt().solve(grad);
      double t = 1.0;
      Eigen::VectorXd next = beta - step;
      double fn = objective(next);
      while (fn > f && t > 1e-10) {
        t *= 0.5;
        next = beta - t * step;
        fn = objective(next);
      }
      if (!(fn < f)) break;  // no descent possible at machine precision
      beta = next;
      f = fn;
    }
    if (!(grad_norm_ < kGradientTolerance)) {
      // Accept a stalled fit at the floating-point floor; otherwise report non-convergence.
      const double scale = 1.0 + std::abs(f);
      if (grad_norm_ > 1e-6 * scale)
        throw Error("logreg: no convergence after " + std::to_string(iterations_) + " iterations (|grad| = " +
                    format_double(grad_norm_) + ")");
    }
    intercept_ = beta(0);
    w_ = single ? Eigen::VectorXd::Zero(d) : Eigen::VectorXd(beta.tail(d));
  }

  std::vector<double> decision_function(const Eigen::MatrixXd& X) const override {
    if (X.cols() != w_.size()) throw Error("logreg: column count differs from training");
    const Eigen::VectorXd s = (X * w_).array() + intercept_;
    return {s.data(), s.data() + s.size()};
  }
  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const override {
    auto s = decision_function(X);
    for (double& v : s) v = sigmoid(v);
    return s;
  }
  ClassifierPtr clone() const override { return std::make_unique<LogisticRegression>(*this); }
  std::string name() const override { return "logreg(l2=" + format_double(l2_) + ")"; }

  const Eigen::VectorXd& weights() const { return w_; }
  double intercept() const { return intercept_; }
  double gradient_norm() const { return grad_norm_; }
  int iterations() const { return iterations_; }

 private:
  double l2_;
  Eigen::VectorXd w_;
  double intercept_ = 0.0;
  double grad_norm_ = 0.0;
  int iterations_ = 0;
};

/// Bootstrap Gini trees with sqrt(d) candidate features per split, grown to purity.
class RandomForest final : public Classifier {
 public:
  explicit RandomForest(std::size_t trees = 100, std::uint64_t seed = 0, bool bootstrap = true)
      : n_trees_(trees), seed_(seed), bootstrap_(bootstrap) {
    if (trees == 0) throw Error("random forest: need at least one tree");
  }

  void fit(const Dataset& train) override {
    if (train.n() < 4) throw Error("random forest: need at least 4 cases");
    d_ = train.d();
    trees_.clear();
    for (std::size_t t = 0; t < n_trees_; ++t) {
      std::mt19937_64 rng(mix_seed(seed_, t));
      std::vector<std::size_t> rows(train.n());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = bootstrap_ ? uniform_index(rng, train.n()) : i;
      Tree tree;
      grow(tree, train, rows, rng);
      trees_.push_back(std::move(tree));
    }
  }

  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const override {
    if (static_cast<std::size_t>(X.cols()) != d_) throw Error("random forest: column count differs from training");
    std::vector<double> out(static_cast<std::size_t>(X.rows()), 0.0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double s = 0.0;
      for (const auto& t : trees_) {
        std::size_t node = 0;
        while (t[node].feature >= 0)
          node = X(i, t[node].feature) <= t[node].threshold ? t[node].left : t[node].right;
        s += t[node].p1;
      }
      out[static_cast<std::size_t>(i)] = s / static_cast<double>(trees_.size());
    }
    return out;
  }
  ClassifierPtr clone() const override { return std::make_unique<RandomForest>(*this); }
  std::string name() const override { return "random_forest(trees=" + std::to_string(n_trees_) + ")"; }

 private:
  struct Node {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    double p1 = 0.0;
  };
  using Tree = std::vector<Node>;

  std::size_t grow(Tree& tree, const Dataset& ds, std::vector<std::size_t> rows, std::mt19937_64& rng) {
    const std::size_t id = tree.size();
    tree.push_back({});
    double pos = 0;
    for (std::size_t r : rows) pos += ds.y[r];
    const double n = static_cast<double>(rows.size());
    tree[id].p1 = pos / n;
    if (pos == 0 || pos == n) return id;

    std::vector<std::size_t> feats(d_);
    std::iota(feats.begin(), feats.end(), std::size_t{0});
    shuffle(feats, rng);
    const std::size_t mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d_))));
    double best_gain = 0.0;
    Eigen::Index best_f = -1;
    double best_t = 0.0;
    const double parent = gini(pos, n);
    std::vector<std::pair<double, int>> vals(rows.size());
    // Scan all features (in shuffled order) until at least mtry were tried and a split was found.
    for (std::size_t fi = 0; fi < feats.size() && (fi < mtry || best_f < 0); ++fi) {
      const auto f = static_cast<Eigen::Index>(feats[fi]);
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {ds.X(static_cast<Eigen::Index>(rows[i]), f), ds.y[rows[i]]};
      std::sort(vals.begin(), vals.end());
      double lp = 0, ln = 0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        lp += vals[i].second;
        ln += 1;
        if (vals[i].first == vals[i + 1].first) continue;
        const double rn = n - ln, rp = pos - lp;
        const double gain = parent - (ln / n) * gini(lp, ln) - (rn / n) * gini(rp, rn);
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_f = f;
          best_t = 0.5 * (vals[i].first + vals[i + 1].first);
          if (best_t == vals[i + 1].first) best_t = vals[i].first;
        }
      }
    }
    if (best_f < 0) return id;  // identical feature vectors with mixed labels
    std::vector<std::size_t> lrows, rrows;
    for (std::size_t r : rows) (ds.X(static_cast<Eigen::Index>(r), best_f) <= best_t ? lrows : rrows).push_back(r);
    tree[id].feature = best_f;
    tree[id].threshold = best_t;
    const std::size_t l = grow(tree, ds, std::move(lrows), rng);
    const std::size_t r = grow(tree, ds, std::move(rrows), rng);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }
  static double gini(double pos, double n) {
    if (n == 0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  std::size_t n_trees_;
  std::uint64_t seed_;
  bool bootstrap_;
  std::size_t d_ = 0;
  std::vector<Tree> trees_;
};

/// Soft vote: mean member probability, label 1 above 0.5.
class Ensemble final : public Classifier {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<ClassifierPtr> members) : members_(std::move(members)) {}
  Ensemble(const Ensemble& o) {
    for (const auto& m : o.members_) members_.push_back(m->clone());
  }

  void add(ClassifierPtr m) { members_.push_back(std::move(m)); }
  std::size_t size() const { return members_.size(); }

  void fit(const Dataset& train) override {
    if (members_.empty()) throw Error("ensemble: no members");
    for (auto& m : members_) m->fit(train);
  }
  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const override {
    if (members_.empty()) throw Error("ensemble: no members");
    std::vector<double> mean(static_cast<std::size_t>(X.rows()), 0.0);
    for (const auto& m : members_) {
      const auto p = m->predict_proba(X);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw Error("ensemble: member " + m->name() + " returned probability outside [0,1]");
        mean[i] += p[i];
      }
    }
    for (double& v : mean) v /= static_cast<double>(members_.size());
    return mean;
  }
  ClassifierPtr clone() const override { return std::make_unique<Ensemble>(*this); }
  std::string name() const override { return "ensemble(" + std::to_string(members_.size()) + ")"; }

 private:
  std::vector<ClassifierPtr> members_;
};

}  // namespace tensorrad::ml
