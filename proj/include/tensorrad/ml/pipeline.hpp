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

// Preprocessing and selection stages, pipelines, and (nested) cross-validation with
// an optional leakage audit.

#include <bit>
#include <functional>
#include <limits>

#include "tensorrad/ml/metrics.hpp"
#include "tensorrad/ml/models.hpp"
#include "tensorrad/tensor.hpp"

namespace tensorrad::ml {

// ---------------------------------------------------------------------------
// Free-standing transforms

struct ZScaler {
  Eigen::VectorXd mean, scale;  // scale 0 marks a constant column

  static ZScaler fit(const Eigen::MatrixXd& X) {
    if (X.rows() < 2) throw Error("zscore: need at least 2 rows");
    ZScaler s;
    s.mean = X.colwise().mean().transpose();
    s.scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      s.scale(j) = std::sqrt((X.col(j).array() - s.mean(j)).square().mean());
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    if (X.cols() != mean.size()) throw Error("zscore: column count differs from fit");
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (scale(j) > 0.0)
        out.col(j) = (X.col(j).array() - mean(j)) / scale(j);
      else
        out.col(j).setZero();
    }
    return out;
  }
};

inline std::pair<ZScaler, Eigen::MatrixXd> zscore_fit_transform(const Eigen::MatrixXd& X) {
  auto s = ZScaler::fit(X);
  return {s, s.apply(X)};
}

/// Minority oversampling by interpolation towards one of the k nearest minority neighbours
/// until both classes have equal counts. Synthetic rows inherit group and row id of their source.
inline Dataset smote(const Dataset& train, std::size_t k, std::uint64_t seed) {
  const auto cnt = train.class_counts();
  if (cnt[0] == cnt[1]) return train;
  const int minority = cnt[1] < cnt[0] ? 1 : 0;
  const std::size_t m = cnt[static_cast<std::size_t>(minority)];
  if (m < 2) throw Error("smote: minority class needs at least 2 cases");
  if (k == 0) throw Error("smote: k must be >= 1");
  const std::size_t need = cnt[static_cast<std::size_t>(1 - minority)] - m;
  std::vector<std::size_t> minor;
  for (std::size_t i = 0; i < train.n(); ++i)
    if (train.y[i] == minority) minor.push_back(i);
  const std::size_t kk = std::min(k, m - 1);
  // k nearest minority neighbours of every minority row (ties: lower index)
  std::vector<std::vector<std::size_t>> nn(m);
  for (std::size_t a = 0; a < m; ++a) {
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t b = 0; b < m; ++b)
      if (a != b)
        dist.push_back({(train.X.row(static_cast<Eigen::Index>(minor[a])) - train.X.row(static_cast<Eigen::Index>(minor[b])))
                            .squaredNorm(),
                        b});
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(kk), dist.end());
    for (std::size_t i = 0; i < kk; ++i) nn[a].push_back(dist[i].second);
  }
  Dataset out = train;
  out.X.conservativeResize(static_cast<Eigen::Index>(train.n() + need), Eigen::NoChange);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < need; ++s) {
    const std::size_t a = uniform_index(rng, m);
    const std::size_t b = nn[a][uniform_index(rng, kk)];
    double u = 0.0;
    while (u == 0.0) u = uniform01(rng);
    const Eigen::RowVectorXd xa = train.X.row(static_cast<Eigen::Index>(minor[a]));
    const Eigen::RowVectorXd xb = train.X.row(static_cast<Eigen::Index>(minor[b]));
    out.X.row(static_cast<Eigen::Index>(train.n() + s)) = xa + u * (xb - xa);
    out.y.push_back(minority);
    out.groups.push_back(train.groups[minor[a]]);
    out.row_ids.push_back(train.row_ids[minor[a]]);
  }
  return out;
}

/// One-way ANOVA F per column; +inf when within-class variance is 0 but the means differ.
inline std::vector<double> anova_f(const Eigen::MatrixXd& X, std::span<const int> y) {
  std::array<double, 2> n{0, 0};
  for (int v : y) n[static_cast<std::size_t>(v)] += 1;
  if (n[0] == 0 || n[1] == 0) throw Error("anova: both classes must be present");
  const double N = n[0] + n[1];
  std::vector<double> F(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    std::array<double, 2> mean{0, 0};
    for (Eigen::Index i = 0; i < X.rows(); ++i) mean[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] += X(i, j);
    mean[0] /= n[0];
    mean[1] /= n[1];
    const double grand = (mean[0] * n[0] + mean[1] * n[1]) / N;
    const double between = n[0] * (mean[0] - grand) * (mean[0] - grand) + n[1] * (mean[1] - grand) * (mean[1] - grand);
    double within = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double r = X(i, j) - mean[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
      within += r * r;
    }
    const double msb = between / 1.0, msw = N > 2 ? within / (N - 2.0) : 0.0;
    if (msw == 0.0)
      F[static_cast<std::size_t>(j)] = msb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    else
      F[static_cast<std::size_t>(j)] = msb / msw;
  }
  return F;
}

/// Top-k columns by F (ties: lower index), returned in ascending column order.
inline std::vector<std::size_t> anova_f_select(const Dataset& ds, std::size_t top_k) {
  if (top_k > ds.d()) throw Error("anova select: top_k " + std::to_string(top_k) + " exceeds " + std::to_string(ds.d()) + " columns");
  const auto F = anova_f(ds.X, ds.y);
  std::vector<std::size_t> idx(F.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return F[a] > F[b]; });
  idx.resize(top_k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

constexpr std::size_t kMaxPolynomialColumns = 10000;

/// Exponent tuples (as sorted column index lists) of all monomials up to `degree`, graded lexicographic.
inline std::vector<std::vector<std::size_t>> polynomial_terms(std::size_t d, int degree) {
  if (degree < 1 || degree > 3) throw Error("polynomial: degree must be 1, 2 or 3");
  std::vector<std::vector<std::size_t>> terms{{}};
  std::vector<std::vector<std::size_t>> prev{{}};
  for (int deg = 1; deg <= degree; ++deg) {
    std::vector<std::vector<std::size_t>> cur;
    for (const auto& t : prev)
      for (std::size_t j = t.empty() ? 0 : t.back(); j < d; ++j) {
        auto n = t;
        n.push_back(j);
        cur.push_back(std::move(n));
        if (terms.size() + cur.size() > kMaxPolynomialColumns)
          throw Error("polynomial: expansion exceeds " + std::to_string(kMaxPolynomialColumns) + " columns");
      }
    terms.insert(terms.end(), cur.begin(), cur.end());
    prev = std::move(cur);
  }
  return terms;
}

inline Eigen::MatrixXd polynomial_expand(const Eigen::MatrixXd& X, int degree = 2) {
  const auto terms = polynomial_terms(static_cast<std::size_t>(X.cols()), degree);
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    Eigen::VectorXd c = Eigen::VectorXd::Ones(X.rows());
    for (std::size_t j : terms[t]) c = c.cwiseProduct(X.col(static_cast<Eigen::Index>(j)));
    out.col(static_cast<Eigen::Index>(t)) = c;
  }
  return out;
}

inline std::vector<std::string> polynomial_names(std::span<const std::string> cols, int degree) {
  std::vector<std::string> names;
  for (const auto& t : polynomial_terms(cols.size(), degree)) {
    if (t.empty()) {
      names.push_back("1");
      continue;
    }
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) s += (i ? "*" : "") + cols[t[i]];
    names.push_back(s);
  }
  return names;
}

// ---------------------------------------------------------------------------
// Stages

/// Passed to every stage fit. `full` is the whole dataset the fold plan indexes and
/// `train_rows` the rows a well-behaved stage may use; stages that reach into `full`
/// beyond those rows are what the leakage audit detects.
struct FitContext {
  const Dataset* full = nullptr;
  std::vector<std::size_t> train_rows;
};

class Stage {
 public:
  virtual ~Stage() = default;
  /// Fits on the training rows and returns them transformed (resamplers may add rows).
  virtual Dataset fit_transform(const Dataset& train, const FitContext& ctx) = 0;
  /// Applies the fitted stage to new rows; resamplers pass rows through.
  virtual Dataset transform(const Dataset& ds) const = 0;
  virtual std::unique_ptr<Stage> clone() const = 0;
  virtual std::string name() const = 0;
};

using StagePtr = std::unique_ptr<Stage>;

class ZScoreStage final : public Stage {
 public:
  Dataset fit_transform(const Dataset& train, const FitContext&) override {
    scaler_ = ZScaler::fit(train.X);
    return transform(train);
  }
  Dataset transform(const Dataset& ds) const override {
    Dataset out = ds;
    out.X = scaler_.apply(ds.X);
    return out;
  }
  StagePtr clone() const override { return std::make_unique<ZScoreStage>(*this); }
  std::string name() const override { return "zscore"; }

 private:
  ZScaler scaler_;
};

class SmoteStage final : public Stage {
 public:
  SmoteStage(std::size_t k = 5, std::uint64_t seed = 0) : k_(k), seed_(seed) {}
  Dataset fit_transform(const Dataset& train, const FitContext&) override { return smote(train, k_, seed_); }
  Dataset transform(const Dataset& ds) const override { return ds; }
  StagePtr clone() const override { return std::make_unique<SmoteStage>(*this); }
  std::string name() const override { return "smote"; }

 private:
  std::size_t k_;
  std::uint64_t seed_;
};

/// Keeps a fixed list of columns chosen at fit time.
class ColumnSubsetStage : public Stage {
 public:
  Dataset transform(const Dataset& ds) const override {
    if (ds.d() != input_width_) throw Error(name() + ": column count differs from fit");
    return ds.cols(keep_);
  }
  const std::vector<std::size_t>& kept() const { return keep_; }

 protected:
  std::vector<std::size_t> keep_;
  std::size_t input_width_ = 0;
};

class PruneStage final : public ColumnSubsetStage {
 public:
  explicit PruneStage(double threshold = 0.95) : threshold_(threshold) {}
  Dataset fit_transform(const Dataset& train, const FitContext&) override {
    NamedMatrix m{train.X, {}, {}};
    for (std::size_t j = 0; j < train.d(); ++j) m.columns.push_back(std::to_string(j));
    const auto r = prune_correlated(m, threshold_);
    keep_.clear();
    for (const auto& c : r.matrix.columns) keep_.push_back(std::stoul(c));
    input_width_ = train.d();
    return train.cols(keep_);
  }
  StagePtr clone() const override { return std::make_unique<PruneStage>(*this); }
  std::string name() const override { return "prune"; }

 private:
  double threshold_;
};

class PolynomialStage final : public Stage {
 public:
  explicit PolynomialStage(int degree = 2) : degree_(degree) {}
  Dataset fit_transform(const Dataset& train, const FitContext&) override { return transform(train); }
  Dataset transform(const Dataset& ds) const override {
    Dataset out = ds;
    out.X = polynomial_expand(ds.X, degree_);
    out.columns = polynomial_names(ds.columns, degree_);
    return out;
  }
  StagePtr clone() const override { return std::make_unique<PolynomialStage>(*this); }
  std::string name() const override { return "poly"; }

 private:
  int degree_;
};

/// Top-k ANOVA F columns; k is clamped to the available width.
class AnovaStage final : public ColumnSubsetStage {
 public:
  explicit AnovaStage(std::size_t top_k) : top_k_(top_k) {}
  Dataset fit_transform(const Dataset& train, const FitContext&) override {
    keep_ = anova_f_select(train, std::min(top_k_, train.d()));
    input_width_ = train.d();
    return train.cols(keep_);
  }
  StagePtr clone() const override { return std::make_unique<AnovaStage>(*this); }
  std::string name() const override { return "anova"; }

 private:
  std::size_t top_k_;
};

// ---------------------------------------------------------------------------
// Sequential forward selection

struct SfsOptions {
  std::size_t min_features = 1;
  std::size_t max_features = 7;
  std::size_t inner_k = 5;
  FoldKind kind = FoldKind::STRATIFIED_K;
  std::uint64_t seed = 0;
};

struct SfsResult {
  std::vector<std::size_t> selected;     // in order of addition, truncated to the best size
  std::vector<std::size_t> path;         // full greedy path up to max_features
  std::vector<double> score_by_size;     // objective after adding path[i]
};

/// Mean F1 of `model` over the plan's folds on the given columns.
inline double inner_cv_f1(const Dataset& ds, const Classifier& model, const FoldPlan& plan,
                          std::span<const std::size_t> columns) {
  const Dataset sub = ds.cols(columns);
  double total = 0.0;
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto tr = plan.train_rows(f), te = plan.test_rows(f);
    const Dataset train = sub.rows(tr), test = sub.rows(te);
    const auto cnt = train.class_counts();
    if (cnt[0] == 0 || cnt[1] == 0) throw Error("sfs: degenerate inner fold " + std::to_string(f) + " has one class");
    auto m = model.clone();
    m->fit(train);
    total += f1_score(confusion(test.y, m->predict(test.X)));
  }
  return total / static_cast<double>(plan.k);
}

/// Greedy add-one-best by inner-CV mean F1; ties go to the lower column index, and the
/// best size within [min, max] is the smallest size reaching the maximum score.
inline SfsResult sfs_forward(const Dataset& ds, const Classifier& model, const SfsOptions& opt) {
  if (opt.min_features < 1 || opt.min_features > opt.max_features) throw Error("sfs: invalid feature range");
  if (opt.max_features > ds.d()) throw Error("sfs: max_features exceeds column count");
  const FoldPlan plan = make_plan(opt.kind, ds, opt.inner_k, opt.seed);
  SfsResult r;
  std::vector<bool> used(ds.d(), false);
  for (std::size_t step = 0; step < opt.max_features; ++step) {
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < ds.d(); ++j) {
      if (used[j]) continue;
      auto cols = r.path;
      cols.push_back(j);
      const double s = inner_cv_f1(ds, model, plan, cols);
      if (s > best) {
        best = s;
        best_j = j;
      }
    }
    used[best_j] = true;
    r.path.push_back(best_j);
    r.score_by_size.push_back(best);
  }
  std::size_t best_size = opt.min_features;
  for (std::size_t s = opt.min_features; s <= opt.max_features; ++s)
    if (r.score_by_size[s - 1] > r.score_by_size[best_size - 1]) best_size = s;
  r.selected.assign(r.path.begin(), r.path.begin() + static_cast<long>(best_size));
  return r;
}

class SfsStage final : public ColumnSubsetStage {
 public:
  SfsStage(const Classifier& model, SfsOptions opt) : model_(model.clone()), opt_(opt) {}
  SfsStage(const SfsStage& o) : ColumnSubsetStage(o), model_(o.model_->clone()), opt_(o.opt_) {}
  Dataset fit_transform(const Dataset& train, const FitContext&) override {
    SfsOptions o = opt_;
    o.max_features = std::min(o.max_features, train.d());
    o.min_features = std::min(o.min_features, o.max_features);
    keep_ = sfs_forward(train, *model_, o).selected;
    input_width_ = train.d();
    return train.cols(keep_);
  }
  StagePtr clone() const override { return std::make_unique<SfsStage>(*this); }
  std::string name() const override { return "sfs"; }

 private:
  ClassifierPtr model_;
  SfsOptions opt_;
};

// ---------------------------------------------------------------------------
// Pipeline

class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(std::vector<StagePtr> stages, ClassifierPtr model) : stages_(std::move(stages)), model_(std::move(model)) {}
  Pipeline(const Pipeline& o) : label_(o.label_) {
    for (const auto& s : o.stages_) stages_.push_back(s->clone());
    if (o.model_) model_ = o.model_->clone();
  }
  Pipeline& operator=(const Pipeline& o) {
    if (this != &o) {
      Pipeline tmp(o);
      std::swap(stages_, tmp.stages_);
      std::swap(model_, tmp.model_);
      label_ = o.label_;
    }
    return *this;
  }
  Pipeline(Pipeline&&) = default;
  Pipeline& operator=(Pipeline&&) = default;

  Pipeline& add(StagePtr s) {
    stages_.push_back(std::move(s));
    return *this;
  }
  Pipeline& set_model(ClassifierPtr m) {
    model_ = std::move(m);
    return *this;
  }
  Pipeline& set_label(std::string l) {
    label_ = std::move(l);
    return *this;
  }
  const std::string& label() const { return label_; }
  std::vector<StagePtr>& stages() { return stages_; }
  Classifier& model() {
    if (!model_) throw Error("pipeline: no model");
    return *model_;
  }
  const Classifier& model() const {
    if (!model_) throw Error("pipeline: no model");
    return *model_;
  }

  void fit(const Dataset& train, const FitContext& ctx = {}) {
    Dataset cur = train;
    for (auto& s : stages_) cur = s->fit_transform(cur, ctx);
    model().fit(cur);
    final_columns_ = cur.columns;
  }
  Dataset transform(const Dataset& ds) const {
    Dataset cur = ds;
    for (const auto& s : stages_) cur = s->transform(cur);
    return cur;
  }
  std::vector<double> predict_proba(const Dataset& ds) const { return model().predict_proba(transform(ds).X); }
  std::vector<double> decision_function(const Dataset& ds) const { return model().decision_function(transform(ds).X); }
  std::vector<int> predict(const Dataset& ds) const { return model().predict(transform(ds).X); }
  const std::vector<std::string>& final_columns() const { return final_columns_; }

 private:
  std::vector<StagePtr> stages_;
  ClassifierPtr model_;
  std::string label_;
  std::vector<std::string> final_columns_;
};

// ---------------------------------------------------------------------------
// Cross-validation

enum class SelectionMetric { BALANCED_ACCURACY, ACCURACY };

struct FoldResult {
  Metrics metrics;
  std::size_t n_train = 0, n_test = 0;
  std::vector<std::string> features;  // columns reaching the model
  std::string chosen;                  // candidate label picked by the inner loop (nested only)
};

struct LeakageFlag {
  std::size_t fold;
  std::string stage;
  std::string detail;
};

struct CvReport {
  std::vector<FoldResult> folds;
  // Out-of-fold predictions, aligned with the dataset rows.
  std::vector<int> oof_pred;
  std::vector<double> oof_score;
  std::vector<int> y_true;
  Metrics pooled;
  std::vector<LeakageFlag> leakage;

  std::vector<double> fold_values(const std::function<double(const Metrics&)>& get) const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(get(f.metrics));
    return v;
  }
  std::vector<double> fold_balanced_accuracy() const {
    return fold_values([](const Metrics& m) { return m.balanced_accuracy; });
  }
  static double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
  static double stdev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  double mean_balanced_accuracy() const { return mean(fold_balanced_accuracy()); }
  double mean_n_train() const {
    double s = 0;
    for (const auto& f : folds) s += static_cast<double>(f.n_train);
    return s / static_cast<double>(folds.size());
  }
  double mean_n_test() const {
    double s = 0;
    for (const auto& f : folds) s += static_cast<double>(f.n_test);
    return s / static_cast<double>(folds.size());
  }
};

struct CvOptions {
  bool audit_leakage = false;
  bool abort_on_leak = true;
  std::uint64_t audit_seed = 12345;
  SelectionMetric selection = SelectionMetric::BALANCED_ACCURACY;
};

class LeakageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.X.rows() != b.X.rows() || a.X.cols() != b.X.cols() || a.y != b.y || a.row_ids != b.row_ids) return false;
  for (Eigen::Index i = 0; i < a.X.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a.X.data()[i]) != std::bit_cast<std::uint64_t>(b.X.data()[i])) return false;
  return true;
}

/// Copy of `ds` whose test rows carry unrelated values and flipped labels.
inline Dataset scramble_rows(const Dataset& ds, std::span<const std::size_t> rows, std::uint64_t seed) {
  Dataset out = ds;
  std::mt19937_64 rng(seed);
  for (std::size_t r : rows) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j)
      out.X(static_cast<Eigen::Index>(r), j) = 1e3 * (uniform01(rng) - 0.5) + 7.0 * ds.X(static_cast<Eigen::Index>(r), j);
    out.y[r] = 1 - ds.y[r];
  }
  return out;
}

/// Fits two copies of the pipeline, one with the real full dataset in context and one with
/// the test rows scrambled; any stage whose output diverges given identical input touched
/// test rows.
inline std::vector<LeakageFlag> audit_fold(const Pipeline& proto, const Dataset& ds, const FoldPlan& plan, std::size_t f,
                                           std::uint64_t seed) {
  const auto tr = plan.train_rows(f), te = plan.test_rows(f);
  const Dataset scrambled = scramble_rows(ds, te, seed);
  Pipeline a(proto), b(proto);
  Dataset ta = ds.rows(tr), tb = scrambled.rows(tr);
  Dataset pa = ds.rows(te), pb = pa;
  const FitContext ca{&ds, tr}, cb{&scrambled, tr};
  std::vector<LeakageFlag> flags;
  for (std::size_t s = 0; s < a.stages().size(); ++s) {
    const bool same_in = same_dataset(ta, tb) && same_dataset(pa, pb);
    ta = a.stages()[s]->fit_transform(ta, ca);
    tb = b.stages()[s]->fit_transform(tb, cb);
    pa = a.stages()[s]->transform(pa);
    pb = b.stages()[s]->transform(pb);
    if (same_in && !(same_dataset(ta, tb) && same_dataset(pa, pb))) {
      flags.push_back({f, a.stages()[s]->name(), "stage output depends on test rows"});
      return flags;
    }
  }
  if (!(same_dataset(ta, tb) && same_dataset(pa, pb))) return flags;
  a.model().fit(ta);
  b.model().fit(tb);
  const auto qa = a.model().decision_function(pa.X), qb = b.model().decision_function(pb.X);
  for (std::size_t i = 0; i < qa.size(); ++i)
    if (std::bit_cast<std::uint64_t>(qa[i]) != std::bit_cast<std::uint64_t>(qb[i])) {
      flags.push_back({f, a.model().name(), "model output depends on test rows"});
      break;
    }
  return flags;
}

inline double selection_value(const Metrics& m, SelectionMetric s) {
  return s == SelectionMetric::ACCURACY ? m.accuracy : m.balanced_accuracy;
}

}  // namespace detail

/// Plain (single-candidate) or nested cross-validation. With more than one candidate the
/// plan must be nested: each outer training set is split by an inner plan of the same
/// kind, every candidate is scored there, and the winner (ties: first) is refit on the
/// outer training set and reported on the outer test fold.
inline CvReport cross_validate(const Dataset& ds, std::span<const Pipeline> candidates, const FoldPlan& plan,
                               const CvOptions& opt = {}) {
  ds.validate();
  if (candidates.empty()) throw Error("cross_validate: no pipeline");
  if (plan.fold_of.size() != ds.n()) throw Error("cross_validate: fold plan does not match dataset");
  if (candidates.size() > 1 && plan.inner_k < 2) throw Error("cross_validate: several candidates need a nested plan");
  if (plan.kind == FoldKind::GROUP_K && plan_splits_a_group(plan, ds.groups))
    throw LeakageError("cross_validate: group plan splits a patient across folds");
  CvReport rep;
  rep.y_true = ds.y;
  rep.oof_pred.assign(ds.n(), 0);
  rep.oof_score.assign(ds.n(), 0.0);
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto tr = plan.train_rows(f), te = plan.test_rows(f);
    const Dataset train = ds.rows(tr), test = ds.rows(te);
    {
      const std::set<long> test_ids(test.row_ids.begin(), test.row_ids.end());
      for (long id : train.row_ids)
        if (test_ids.count(id)) throw LeakageError("cross_validate: fold " + std::to_string(f) + " trains on a test row");
      if (plan.kind == FoldKind::GROUP_K) {
        const std::set<std::string> test_groups(test.groups.begin(), test.groups.end());
        for (const auto& g : train.groups)
          if (test_groups.count(g)) throw LeakageError("cross_validate: patient '" + g + "' spans train and test");
      }
    }
    std::size_t chosen = 0;
    if (candidates.size() > 1) {
      FoldPlan inner = make_plan(plan.kind, train, plan.inner_k, mix_seed(plan.seed, f + 1));
      double best = -1.0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        FoldPlan single = inner;
        single.inner_k = 0;
        const auto r = cross_validate(train, std::span<const Pipeline>(&candidates[c], 1), single,
                                      CvOptions{false, opt.abort_on_leak, opt.audit_seed, opt.selection});
        double v = 0.0;
        for (const auto& fr : r.folds) v += detail::selection_value(fr.metrics, opt.selection);
        v /= static_cast<double>(r.folds.size());
        if (v > best) {
          best = v;
          chosen = c;
        }
      }
    }
    if (opt.audit_leakage) {
      auto flags = detail::audit_fold(candidates[chosen], ds, plan, f, mix_seed(opt.audit_seed, f));
      if (!flags.empty() && opt.abort_on_leak)
        throw LeakageError("leakage: stage '" + flags.front().stage + "' in fold " + std::to_string(f) + ": " +
                           flags.front().detail);
      rep.leakage.insert(rep.leakage.end(), flags.begin(), flags.end());
    }
    Pipeline p(candidates[chosen]);
    p.fit(train, FitContext{&ds, tr});
    const auto pred = p.predict(test);
    const auto score = p.decision_function(test);
    FoldResult fr;
    fr.metrics = compute_metrics(test.y, pred, score);
    fr.n_train = tr.size();
    fr.n_test = te.size();
    fr.features = p.final_columns();
    fr.chosen = candidates[chosen].label();
    rep.folds.push_back(std::move(fr));
    for (std::size_t i = 0; i < te.size(); ++i) {
      rep.oof_pred[te[i]] = pred[i];
      rep.oof_score[te[i]] = score[i];
    }
  }
  rep.pooled = compute_metrics(rep.y_true, rep.oof_pred, rep.oof_score);
  return rep;
}

inline CvReport cross_validate(const Dataset& ds, const Pipeline& pipeline, const FoldPlan& plan,
                               const CvOptions& opt = {}) {
  FoldPlan p = plan;
  p.inner_k = 0;
  return cross_validate(ds, std::span<const Pipeline>(&pipeline, 1), p, opt);
}

}  // namespace tensorrad::ml
