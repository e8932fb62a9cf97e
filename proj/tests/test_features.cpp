#include <gtest/gtest.h>

#include <random>

#include "tensorrad/extract.hpp"

using namespace tensorrad;

namespace {

FeatureMap fo(std::vector<double> v) { return first_order(v, discretize_fbw(v, 1.0)); }

LevelGrid planar(std::size_t nx, std::size_t ny, std::vector<int> levels) {
  DiscretizedRoi d;
  d.levels = levels;
  d.ng = *std::max_element(levels.begin(), levels.end());
  return make_level_grid(RoiMask::full({nx, ny, 1}), d);
}

const std::vector<Offset> kHorizontal{{1, 0, 0}};

Case ramp_case() {
  const Dims d{12, 12, 1};
  std::vector<double> x(d.size());
  std::mt19937_64 rng(2);
  for (auto& v : x) v = std::uniform_real_distribution<double>(0, 5)(rng);
  std::vector<std::uint8_t> in(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = d.coords(i);
    in[i] = c[0] >= 2 && c[0] < 10 && c[1] >= 2 && c[1] < 10;
  }
  Case c;
  c.case_id = "c0";
  c.patient_id = "p0";
  c.volumes.emplace(Unit::SUV, Volume(d, {}, Unit::SUV, x));
  c.mask = RoiMask(d, in);
  return c;
}

}  // namespace

TEST(Features, CatalogIsFixed) {
  EXPECT_EQ(feature_catalog().size(), 58u);
  EXPECT_EQ(feature_index("fo_mean"), 0u);
  EXPECT_THROW(feature_index("nope"), Error);
}

TEST(Features, FirstOrderHandValues) {
  const auto f = fo({1, 2, 3});
  EXPECT_DOUBLE_EQ(f.at("fo_mean"), 2.0);
  EXPECT_DOUBLE_EQ(f.at("fo_variance"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.at("fo_energy"), 14.0);
  EXPECT_DOUBLE_EQ(f.at("fo_range"), 2.0);
  EXPECT_DOUBLE_EQ(fo({-1, 0, 1}).at("fo_skewness"), 0.0);
  const auto c = fo({4, 4, 4, 4});
  EXPECT_DOUBLE_EQ(c.at("fo_entropy"), 0.0);
  EXPECT_DOUBLE_EQ(c.at("fo_uniformity"), 1.0);
  EXPECT_DOUBLE_EQ(c.at("fo_kurtosis"), 0.0);
}

TEST(Features, GlcmHandFixtures) {
  const auto a = glcm(planar(2, 2, {1, 1, 2, 2}), kHorizontal);
  EXPECT_DOUBLE_EQ(a.at(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(a.at(2, 2), 0.5);
  const auto fa = glcm_features(a);
  EXPECT_DOUBLE_EQ(fa.at("glcm_contrast"), 0.0);
  EXPECT_DOUBLE_EQ(fa.at("glcm_joint_energy"), 0.5);
  EXPECT_DOUBLE_EQ(fa.at("glcm_joint_entropy"), 1.0);
  const auto b = glcm(planar(2, 2, {1, 2, 1, 2}), kHorizontal);
  EXPECT_DOUBLE_EQ(b.at(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(glcm_features(b).at("glcm_contrast"), 1.0);
}

TEST(Features, GlrlmHandFixtures) {
  auto f = glrlm_features(glrlm(planar(4, 1, {1, 1, 1, 2}), kHorizontal));
  EXPECT_DOUBLE_EQ(f.at("glrlm_sre"), 5.0 / 9.0);
  EXPECT_DOUBLE_EQ(f.at("glrlm_lre"), 5.0);
  EXPECT_DOUBLE_EQ(f.at("glrlm_rp"), 0.5);
  EXPECT_DOUBLE_EQ(glrlm_features(glrlm(planar(4, 1, {1, 1, 1, 1}), kHorizontal)).at("glrlm_rp"), 0.25);
  EXPECT_DOUBLE_EQ(glrlm_features(glrlm(planar(4, 1, {1, 2, 1, 2}), kHorizontal)).at("glrlm_sre"), 1.0);
}

TEST(Features, GlszmHandFixtures) {
  const auto f = glszm_features(glszm(planar(2, 2, {1, 1, 2, 3})));
  EXPECT_DOUBLE_EQ(f.at("glszm_sae"), 0.75);
  EXPECT_DOUBLE_EQ(f.at("glszm_zp"), 0.75);
  EXPECT_DOUBLE_EQ(glszm_features(glszm(planar(3, 3, std::vector<int>(9, 1)))).at("glszm_zp"), 1.0 / 9.0);
  // Checkerboard: diagonals connect, so each level forms a single 8-connected zone.
  const auto z = glszm(planar(3, 3, {1, 2, 1, 2, 1, 2, 1, 2, 1}));
  EXPECT_EQ(z.counts.at(0, 4), 1);
  EXPECT_EQ(z.counts.at(1, 3), 1);
}

TEST(Features, GldmHandFixtures) {
  const auto g = gldm(planar(3, 3, std::vector<int>(9, 1)));
  EXPECT_EQ(g.counts.at(0, 8), 1);
  EXPECT_EQ(g.counts.at(0, 5), 4);
  EXPECT_EQ(g.counts.at(0, 3), 4);
  const auto one = gldm(planar(1, 1, {2}));
  EXPECT_EQ(one.counts.at(1, 0), 1);
  EXPECT_DOUBLE_EQ(gldm_features(one).at("gldm_dependence_entropy"), 0.0);
}

TEST(Features, NgtdmHandFixture) {
  // 3x3 with a centre of level 2 among eight 1s.
  const auto m = ngtdm(planar(3, 3, {1, 1, 1, 1, 2, 1, 1, 1, 1}));
  // Centre: |2 - 1| = 1. Corners: 3 neighbours, mean 4/3. Edges: 5 neighbours, mean 6/5.
  EXPECT_DOUBLE_EQ(m.s[1], 1.0);
  EXPECT_NEAR(m.s[0], 4 * (1.0 / 3.0) + 4 * (1.0 / 5.0), 1e-15);
  EXPECT_EQ(m.n[0], 8);
  const auto f = ngtdm_features(m);
  const double p1 = 8.0 / 9, p2 = 1.0 / 9;
  EXPECT_NEAR(f.at("ngtdm_coarseness"), 1.0 / (p1 * m.s[0] + p2 * m.s[1]), 1e-12);
  const auto c = ngtdm_features(ngtdm(planar(3, 3, std::vector<int>(9, 1))));
  EXPECT_DOUBLE_EQ(c.at("ngtdm_contrast"), 0.0);
  EXPECT_DOUBLE_EQ(c.at("ngtdm_busyness"), 0.0);
  EXPECT_DOUBLE_EQ(c.at("ngtdm_coarseness"), kCoarsenessCap);
}

TEST(Features, NormalizedGlcmSumsToOne) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> lv(25);
    for (auto& l : lv) l = 1 + static_cast<int>(rng() % 4);
    const auto g = glcm(planar(5, 5, lv));
    double s = 0;
    for (double p : g.p) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Features, RotationInvariance) {
  std::mt19937_64 rng(32);
  const Dims d{5, 4, 3}, r{4, 5, 3};
  for (int t = 0; t < 30; ++t) {
    std::vector<double> x(d.size());
    std::vector<std::uint8_t> in(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      x[i] = static_cast<double>(rng() % 4);
      in[i] = rng() % 5 != 0;
    }
    in[0] = 1;
    // 90 degrees in the xy plane: (i, j, k) -> (d.y - 1 - j, i, k).
    std::vector<double> xr(d.size());
    std::vector<std::uint8_t> inr(d.size());
    for (std::size_t idx = 0; idx < d.size(); ++idx) {
      const auto c = d.coords(idx);
      const auto to = r.index(d.y - 1 - c[1], c[0], c[2]);
      xr[to] = x[idx];
      inr[to] = in[idx];
    }
    const RoiMask m(d, in), mr(r, inr);
    const auto va = roi_values(Volume(d, {}, Unit::ARBITRARY, x), m);
    const auto vb = roi_values(Volume(r, {}, Unit::ARBITRARY, xr), mr);
    const auto fa = compute_features(va, m, discretize_fbw(va, 1.0));
    const auto fb = compute_features(vb, mr, discretize_fbw(vb, 1.0));
    for (std::size_t k = 0; k < fa.values.size(); ++k) {
      ASSERT_EQ(fa.values[k].has_value(), fb.values[k].has_value());
      if (fa.values[k]) EXPECT_NEAR(*fa.values[k], *fb.values[k], 1e-9 * std::max(1.0, std::abs(*fa.values[k])))
                            << feature_catalog()[k].name;
    }
  }
}

TEST(Extract, VanillaMatchesManualChain) {
  const auto c = ramp_case();
  ExtractConfig cfg;
  cfg.base_discretization = {BinScheme::FBW, 0.5, 0};
  const auto fv = extract(c, vanilla_flavour(), cfg);
  const auto values = roi_values(c.volume(), c.mask);
  const auto manual = compute_features(values, c.mask, discretize_fbw(values, 0.5));
  EXPECT_EQ(fv.values, manual.values);
}

TEST(Extract, FixedWidthShiftInvariance) {
  auto c = ramp_case();
  const auto key = FlavourKey(FlavourAxis::BIN_WIDTH).set("width", 0.5);
  const auto a = extract(c, key, {});
  std::vector<double> s(c.volume().data().begin(), c.volume().data().end());
  for (auto& x : s) x += 1024.0;
  c.volumes.at(Unit::SUV) = c.volume().with_data(s);
  const auto b = extract(c, key, {});
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    if (feature_catalog()[k].discretization_dependent)
      EXPECT_NEAR(*a.values[k], *b.values[k], 1e-9 * std::max(1.0, std::abs(*a.values[k]))) << feature_catalog()[k].name;
  }
}

TEST(Extract, FinerBinsRaiseEntropy) {
  const auto c = ramp_case();
  const auto fine = extract(c, FlavourKey(FlavourAxis::BIN_WIDTH).set("width", 0.1), {});
  const auto coarse = extract(c, FlavourKey(FlavourAxis::BIN_WIDTH).set("width", 1.0), {});
  EXPECT_GE(*fine.get("fo_entropy"), *coarse.get("fo_entropy"));
}

TEST(Extract, DegenerateRoiIsMissing) {
  const auto c = ramp_case();
  const auto key = FlavourKey(FlavourAxis::PERTURB).set("level", -3);
  const auto fv = extract(c, key, {});
  EXPECT_TRUE(fv.all_missing());
  EXPECT_NE(fv.diagnostic.find("c0"), std::string::npos);
}

TEST(Extract, TableHasOneRowPerCase) {
  std::vector<Case> cases{ramp_case(), ramp_case()};
  cases[1].case_id = "c1";
  std::vector<std::string> warnings;
  const auto t = extract_table(cases, vanilla_flavour(), {}, &warnings);
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_NO_THROW(t.validate());
  EXPECT_TRUE(warnings.empty());
}
