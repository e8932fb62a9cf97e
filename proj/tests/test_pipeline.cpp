#include <gtest/gtest.h>

#include <random>

#include "tensorrad/ml/pipeline.hpp"

using namespace tensorrad;
using namespace tensorrad::ml;

namespace {

Dataset cohort(std::size_t n, std::size_t d, double signal, std::uint64_t seed, std::size_t per_patient = 1) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> y(n);
  std::vector<std::string> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>((i / per_patient) % 2);
    g[i] = "p" + std::to_string(i / per_patient);
    for (std::size_t j = 0; j < d; ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal01(rng) + (j == 0 ? signal * y[i] : 0.0);
  }
  return Dataset::make(X, y, g);
}

// Standardizes with statistics from every row of the full dataset.
class GlobalZScore final : public Stage {
 public:
  Dataset fit_transform(const Dataset& train, const FitContext& ctx) override {
    scaler_ = ZScaler::fit(ctx.full ? ctx.full->X : train.X);
    return transform(train);
  }
  Dataset transform(const Dataset& ds) const override {
    Dataset out = ds;
    out.X = scaler_.apply(ds.X);
    return out;
  }
  StagePtr clone() const override { return std::make_unique<GlobalZScore>(*this); }
  std::string name() const override { return "global_zscore"; }

 private:
  ZScaler scaler_;
};

Pipeline standard(const Classifier& m) {
  Pipeline p;
  p.add(std::make_unique<ZScoreStage>()).add(std::make_unique<SmoteStage>(5, 1));
  p.add(std::make_unique<PruneStage>()).add(std::make_unique<AnovaStage>(3));
  p.set_model(m.clone());
  return p;
}

}  // namespace

TEST(Folds, StratifiedKeepsClassRatio) {
  const auto ds = cohort(50, 2, 1.0, 61);
  const auto plan = stratified_plan(ds.y, 5, 3);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto te = plan.test_rows(f);
    EXPECT_EQ(te.size(), 10u);
    std::size_t pos = 0;
    for (auto r : te) pos += ds.y[r];
    EXPECT_EQ(pos, 5u);
  }
  EXPECT_EQ(stratified_plan(ds.y, 5, 3).fold_of, plan.fold_of);
}

TEST(Folds, GroupPlanNeverSplitsAPatient) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto ds = cohort(60, 2, 1.0, s, 3);
    const auto plan = group_plan(ds.y, ds.groups, 5, s);
    EXPECT_FALSE(plan_splits_a_group(plan, ds.groups));
  }
  const auto ds = cohort(12, 2, 1.0, 1, 3);
  auto plan = stratified_plan(ds.y, 4, 1);
  plan.kind = FoldKind::GROUP_K;
  EXPECT_TRUE(plan_splits_a_group(plan, ds.groups));
  EXPECT_THROW(cross_validate(ds, Pipeline({}, std::make_unique<Lda>()), plan), LeakageError);
}

TEST(Cv, MajorityBaselineScoresHalf) {
  const auto ds = cohort(40, 3, 0.0, 62);
  const auto r = cross_validate(ds, Pipeline({}, std::make_unique<MajorityClassifier>()), stratified_plan(ds.y, 5, 1));
  EXPECT_EQ(r.mean_balanced_accuracy(), 0.5);
}

TEST(Cv, StandardPipelineHasNoLeakage) {
  const auto ds = cohort(80, 8, 2.0, 63, 2);
  CvOptions opt;
  opt.audit_leakage = true;
  for (const auto kind : {FoldKind::STRATIFIED_K, FoldKind::GROUP_K}) {
    const auto r = cross_validate(ds, standard(Lda()), make_plan(kind, ds, 5, 4), opt);
    EXPECT_TRUE(r.leakage.empty());
    EXPECT_GT(r.mean_balanced_accuracy(), 0.75);
  }
  Pipeline with_sfs = standard(Lda());
  SfsOptions so;
  so.max_features = 2;
  so.inner_k = 3;
  with_sfs.add(std::make_unique<SfsStage>(Lda(), so));
  EXPECT_TRUE(cross_validate(ds, with_sfs, stratified_plan(ds.y, 4, 2), opt).leakage.empty());
}

TEST(Cv, AuditFlagsGlobalStatistics) {
  const auto ds = cohort(40, 3, 1.0, 64);
  Pipeline leaky;
  leaky.add(std::make_unique<GlobalZScore>());
  leaky.set_model(std::make_unique<Lda>());
  CvOptions opt;
  opt.audit_leakage = true;
  EXPECT_THROW(cross_validate(ds, leaky, stratified_plan(ds.y, 4, 1), opt), LeakageError);
  opt.abort_on_leak = false;
  const auto r = cross_validate(ds, leaky, stratified_plan(ds.y, 4, 1), opt);
  ASSERT_FALSE(r.leakage.empty());
  EXPECT_EQ(r.leakage.front().stage, "global_zscore");
}

TEST(Cv, NestedSelectionAndOutOfFoldCoverage) {
  const auto ds = cohort(60, 4, 2.0, 65);
  std::vector<Pipeline> cands;
  cands.emplace_back(std::vector<StagePtr>{}, std::make_unique<MajorityClassifier>());
  cands.back().set_label("majority");
  cands.emplace_back(std::vector<StagePtr>{}, std::make_unique<Lda>());
  cands.back().set_label("lda");
  const auto plan = make_plan(FoldKind::STRATIFIED_K, ds, 5, 9, 3);
  const auto r = cross_validate(ds, cands, plan);
  for (const auto& f : r.folds) EXPECT_EQ(f.chosen, "lda");
  EXPECT_EQ(r.oof_pred.size(), ds.n());
  const auto again = cross_validate(ds, cands, plan);
  EXPECT_EQ(again.oof_score, r.oof_score);
  auto flat = plan;
  flat.inner_k = 0;
  EXPECT_THROW(cross_validate(ds, cands, flat), Error);
}
