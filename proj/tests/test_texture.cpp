#include <gtest/gtest.h>

#include "tensorrad/features.hpp"
#include "test_util.hpp"

using namespace tensorrad;

namespace {

constexpr double kRelTol = 1e-12;

bool close(double a, double b) { return std::abs(a - b) <= kRelTol * std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Texture, DirectionSetsMatchOracle) {
  for (bool planar : {true, false}) {
    const auto mine = direction_offsets(planar);
    const auto ref = oracle::directions(planar);
    EXPECT_EQ(mine.size(), planar ? 4u : 13u);
    ASSERT_EQ(mine.size(), ref.size());
    for (const auto& o : mine) EXPECT_NE(std::find(ref.begin(), ref.end(), o), ref.end());
  }
}

TEST(Texture, MatricesMatchBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = testutil::random_roi(rng);
    const auto& g = r.reference;
    const auto c = glcm(r.grid);
    for (std::size_t k = 0; k < c.directions.size(); ++k)
      ASSERT_EQ(testutil::as_counts(c.per_direction[k]), oracle::glcm(g, c.directions[k])) << trial;
    const auto rl = glrlm(r.grid);
    for (std::size_t k = 0; k < rl.directions.size(); ++k)
      ASSERT_EQ(testutil::as_counts(rl.per_direction[k]), oracle::glrlm(g, rl.directions[k], oracle::max_extent(g)));
    ASSERT_EQ(testutil::as_counts(glszm(r.grid).counts), oracle::glszm(g)) << trial;
    ASSERT_EQ(testutil::as_counts(gldm(r.grid).counts), oracle::gldm(g)) << trial;
    const auto n = ngtdm(r.grid);
    const auto on = oracle::ngtdm(g);
    ASSERT_EQ(n.n, on.n);
    ASSERT_EQ(n.s, on.s);
  }
}

TEST(Texture, FeaturesMatchTextbookDefinitions) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = testutil::random_roi(rng);
    const auto& g = r.reference;
    std::vector<std::pair<FeatureMap, oracle::Features>> fams = {
        {glcm_features(glcm(r.grid)), oracle::glcm_features(g)},
        {glrlm_features(glrlm(r.grid)), oracle::glrlm_features(g)},
        {glszm_features(glszm(r.grid)), oracle::glszm_features(g)},
        {gldm_features(gldm(r.grid)), oracle::gldm_features(g)},
        {ngtdm_features(ngtdm(r.grid)), oracle::ngtdm_features(g, kCoarsenessCap)}};
    for (const auto& [mine, ref] : fams) {
      ASSERT_EQ(mine.size(), ref.size()) << trial;
      for (const auto& [name, v] : ref) EXPECT_TRUE(close(mine.at(name), v)) << name << " " << mine.at(name) << " vs " << v;
    }
  }
}

TEST(Texture, SingleVoxelRoiHasNoCooccurrence) {
  const Dims d{3, 3, 1};
  RoiMask m = RoiMask::empty(d);
  m = RoiMask(d, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  DiscretizedRoi disc;
  disc.levels = {1};
  disc.ng = 1;
  const auto g = make_level_grid(m, disc);
  EXPECT_EQ(glcm(g).valid_directions, 0);
  EXPECT_TRUE(glcm_features(glcm(g)).empty());
  EXPECT_TRUE(ngtdm_features(ngtdm(g)).empty());
  EXPECT_EQ(glszm(g).counts.at(0, 0), 1);
}

TEST(Texture, CheckerboardGlcm) {
  // 2x2 checkerboard of levels 1/2: horizontal and vertical pairs always differ.
  const Dims d{2, 2, 1};
  DiscretizedRoi disc;
  disc.levels = {1, 2, 2, 1};
  disc.ng = 2;
  const auto g = make_level_grid(RoiMask::full(d), disc);
  const auto c = glcm(g);
  for (std::size_t k = 0; k < c.directions.size(); ++k) {
    const auto& o = c.directions[k];
    const bool diagonal = o[0] != 0 && o[1] != 0;
    const auto& m = c.per_direction[k];
    if (diagonal) {
      EXPECT_EQ(m.at(0, 1), 0);
    } else {
      EXPECT_EQ(m.at(0, 0), 0);
      EXPECT_EQ(m.at(0, 1), 2);
    }
  }
}

TEST(Texture, UniformRoiFeatures) {
  const Dims d{4, 4, 1};
  DiscretizedRoi disc;
  disc.levels.assign(16, 1);
  disc.ng = 1;
  const auto g = make_level_grid(RoiMask::full(d), disc);
  const auto f = glcm_features(glcm(g));
  EXPECT_DOUBLE_EQ(f.at("glcm_joint_energy"), 1.0);
  EXPECT_DOUBLE_EQ(f.at("glcm_contrast"), 0.0);
  EXPECT_DOUBLE_EQ(f.at("glcm_correlation"), 1.0);
  const auto z = glszm_features(glszm(g));
  EXPECT_DOUBLE_EQ(z.at("glszm_zp"), 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(ngtdm_features(ngtdm(g)).at("ngtdm_coarseness"), kCoarsenessCap);
}
