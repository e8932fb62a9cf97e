#include <gtest/gtest.h>

#include "tensorrad/perturb.hpp"

using namespace tensorrad;

namespace {

RoiMask disc_mask(Dims d, double cx, double cy, double r) {
  std::vector<std::uint8_t> in(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = d.coords(i);
    const double dx = c[0] - cx, dy = c[1] - cy;
    in[i] = dx * dx + dy * dy <= r * r;
  }
  return RoiMask(d, in);
}

double dice(const RoiMask& a, const RoiMask& b) {
  std::size_t both = 0;
  for (std::size_t i = 0; i < a.dims().size(); ++i) both += a.contains(i) && b.contains(i);
  return 2.0 * static_cast<double>(both) / static_cast<double>(a.count() + b.count());
}

}  // namespace

TEST(Perturb, VolumeAdaptCross) {
  const Dims d{5, 5, 1};
  const std::array<std::size_t, 3> centre{2, 2, 0};
  const auto pixel = RoiMask::from_coords(d, std::span(&centre, 1));
  const auto plus = volume_adapt(pixel, 1, 1);
  EXPECT_EQ(plus.mask.count(), 5u);
  EXPECT_TRUE(plus.mask.contains(1, 2, 0));
  EXPECT_FALSE(plus.mask.contains(1, 1, 0));
  EXPECT_EQ(volume_adapt(plus.mask, -1, 1).mask, pixel);
  const auto gone = volume_adapt(pixel, -1, 1);
  EXPECT_TRUE(gone.degenerate);
  EXPECT_EQ(gone.mask.count(), 0u);
  EXPECT_EQ(volume_adapt(plus.mask, 0, 1).mask, plus.mask);
}

TEST(Perturb, ClosingContainsConvexMask) {
  for (double r : {3.0, 5.5, 7.0}) {
    const auto m = disc_mask({24, 24, 1}, 11.5, 12, r);
    const auto closed = erode(dilate(m));
    for (std::size_t i = 0; i < m.dims().size(); ++i)
      if (m.contains(i)) EXPECT_TRUE(closed.contains(i));
    const auto opened = dilate(erode(m));
    for (std::size_t i = 0; i < m.dims().size(); ++i)
      if (opened.contains(i)) EXPECT_TRUE(m.contains(i));
  }
}

TEST(Perturb, ContourNoiseLimitsAndDeterminism) {
  const auto m = disc_mask({20, 20, 1}, 9.5, 9.5, 6.0);
  const auto tiny = contour_randomize(m, {}, {2.0, 1e-9, 3});
  EXPECT_EQ(tiny.mask, m);
  const auto a = contour_randomize(m, {}, {2.0, 1.0, 7});
  const auto b = contour_randomize(m, {}, {2.0, 1.0, 7});
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_THROW(contour_randomize(m, {}, {2.0, 0.0, 1}), Error);
}

TEST(Perturb, ContourDiceBand) {
  const auto m = disc_mask({20, 20, 1}, 9.5, 9.5, 7.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double d = dice(m, contour_randomize(m, {}, {2.0, 1.0, seed}).mask);
    EXPECT_GT(d, 0.7);
    EXPECT_LT(d, 1.0 + 1e-12);
  }
}

TEST(Perturb, SignedDistance) {
  const Dims d{7, 1, 1};
  const RoiMask m(d, {0, 0, 1, 1, 1, 0, 0});
  const auto sd = signed_distance(m, {2.0, 1, 1});
  EXPECT_DOUBLE_EQ(sd[3], 4.0);
  EXPECT_DOUBLE_EQ(sd[2], 2.0);
  EXPECT_DOUBLE_EQ(sd[1], -2.0);
  EXPECT_DOUBLE_EQ(sd[0], -4.0);
}

TEST(Perturb, NoiseFieldIsDeterministicAndStandardized) {
  const auto a = smooth_noise_field({32, 32, 1}, {}, 2.0, 5);
  const auto b = smooth_noise_field({32, 32, 1}, {}, 2.0, 5);
  EXPECT_EQ(a, b);
  double m = 0, v = 0;
  for (double x : a) m += x;
  m /= static_cast<double>(a.size());
  for (double x : a) v += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v / static_cast<double>(a.size()), 1.0, 1e-12);
}

TEST(Perturb, TranslationTouchesOnlyTheImage) {
  const Dims d{10, 10, 1};
  std::vector<double> x(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) x[i] = static_cast<double>(i);
  const Volume v(d, {}, Unit::HU, x);
  const auto m = disc_mask(d, 4.5, 4.5, 3.0);
  PerturbSpec s;
  s.translate = Translation{{1, 0, 0}};
  const auto p = apply_perturbation(v, m, s);
  EXPECT_EQ(p.mask, m);
  EXPECT_DOUBLE_EQ(p.volume.at(3, 3, 0), v.at(4, 3, 0));
  PerturbSpec vonly;
  vonly.volume_level = 1;
  const auto q = apply_perturbation(v, m, vonly);
  EXPECT_EQ(std::vector<double>(q.volume.data().begin(), q.volume.data().end()), x);
  EXPECT_GT(q.mask.count(), m.count());
}

TEST(Perturb, FlavourGridCounts) {
  EXPECT_EQ(perturbation_flavour_grid(2, {}, {}, {}).size(), 4u);
  const std::vector<Translation> shifts{{{0.5, 0, 0}}, {{0, 0.5, 0}}};
  const std::vector<int> levels{-1, 1};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto tvc = perturbation_flavour_grid(0, shifts, levels, seeds);
  EXPECT_EQ(tvc.size(), 8u);
  for (const auto& k : tvc) EXPECT_EQ(PerturbSpec::from_key(k).key(), k);
  const auto empty = perturbation_flavour_grid(0, {}, {}, {});
  ASSERT_EQ(empty.size(), 1u);
  EXPECT_EQ(empty[0], vanilla_flavour());
  EXPECT_THROW(PerturbSpec::from_key(FlavourKey(FlavourAxis::PERTURB).set("level", 5)), Error);
}
