#include <gtest/gtest.h>

#include <random>

#include "tensorrad/fuse.hpp"

using namespace tensorrad;

namespace {

Volume random_volume(std::mt19937_64& rng, Dims d, double lo = 0.0, double hi = 1.0) {
  std::vector<double> x(d.size());
  for (auto& v : x) v = std::uniform_real_distribution<double>(lo, hi)(rng);
  return Volume(d, {}, Unit::SUV, x);
}

double rms(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

const std::vector<FusionSpec> kAllMethods = {{FusionMethod::WEIGHTED, 0.5, 0},
                                             {FusionMethod::PCA, 0.5, 0},
                                             {FusionMethod::LP, 0.5, 2},
                                             {FusionMethod::RP, 0.5, 2},
                                             {FusionMethod::DWT, 0.5, 2}};

}  // namespace

TEST(Fuse, IdenticalInputsGiveNormalizedInput) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const Dims d = t % 2 ? Dims{12, 10, 8} : Dims{13, 11, 1};
    const auto a = random_volume(rng, d, -50, 200);
    const auto na = normalize_minmax(a);
    for (const auto& spec : kAllMethods) {
      const auto f = fuse(a, a, spec);
      EXPECT_EQ(f.dims(), a.dims());
      EXPECT_LT(rms(f.data(), na.data()), identity_tolerance(spec.method)) << to_string(spec.method);
    }
  }
}

TEST(Fuse, WeightedRules) {
  std::vector<double> ramp, rev;
  for (int i = 0; i < 8; ++i) {
    ramp.push_back(i / 7.0);
    rev.push_back(1.0 - i / 7.0);
  }
  const Volume a({8, 1, 1}, {}, Unit::SUV, ramp), b({8, 1, 1}, {}, Unit::HU, rev);
  const auto half = fuse_weighted(a, b, 0.5);
  for (double x : half.data()) EXPECT_NEAR(x, 0.5, 1e-15);
  const auto one = fuse_weighted(a, b, 1.0);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(one[i], ramp[i]);
  EXPECT_THROW(fuse_weighted(a, b, 1.5), Error);
  EXPECT_THROW(fuse_weighted(a, Volume::filled({4, 2, 1}, {}, Unit::HU, 0), 0.5), Error);
}

TEST(Fuse, PcaWeights) {
  std::mt19937_64 rng(22);
  const auto a = random_volume(rng, {6, 6, 1});
  auto w = pca_fusion_weights(a, a);
  EXPECT_NEAR(w.wa, 0.5, 1e-12);
  w = pca_fusion_weights(a, Volume::filled({6, 6, 1}, {}, Unit::HU, 3.0));
  EXPECT_DOUBLE_EQ(w.wa, 1.0);
  std::vector<double> neg(a.data().begin(), a.data().end());
  for (auto& x : neg) x = -x;
  w = pca_fusion_weights(a, a.with_data(neg));
  EXPECT_TRUE(w.fallback);
  EXPECT_DOUBLE_EQ(w.wa, 0.5);
  const auto c = Volume::filled({6, 6, 1}, {}, Unit::HU, 1.0);
  EXPECT_TRUE(pca_fusion_weights(c, c).fallback);
}

TEST(Fuse, LaplacianPyramidRoundTrip) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 100; ++t) {
    const Dims d{8 + t % 5, 9 + t % 3, t % 4 ? 7u : 1u};
    const auto v = random_volume(rng, d, -5, 5);
    const auto levels = std::min(2, max_fusion_levels(d));
    EXPECT_LT(rms(reconstruct(laplacian_pyramid(v, levels)), v.data()), 1e-6);
  }
}

TEST(Fuse, LaplacianKeepsHighFrequencyPatch) {
  const Dims d{16, 16, 1};
  std::vector<double> checker(d.size(), 0.5), smooth(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = d.coords(i);
    if (c[0] >= 4 && c[0] < 12 && c[1] >= 4 && c[1] < 12) checker[i] = (c[0] + c[1]) % 2 ? 1.0 : 0.0;
    smooth[i] = static_cast<double>(c[0]) / 15.0;
  }
  const Volume a(d, {}, Unit::SUV, checker), b(d, {}, Unit::HU, smooth);
  const auto f = fuse_lp(a, b, 2);
  // Adjacent voxels inside the patch still alternate strongly.
  double swing = 0;
  for (std::size_t i = 6; i < 10; ++i) swing += std::abs(f.at(i, 8, 0) - f.at(i + 1, 8, 0));
  EXPECT_GT(swing / 4, 0.5);
  // Band-level oracle: the finest fused band equals the larger-magnitude band voxelwise.
  const auto pa = laplacian_pyramid(normalize_minmax(a), 2), pb = laplacian_pyramid(normalize_minmax(b), 2);
  const auto m = merge_pyramids(pa, pb);
  for (std::size_t i = 0; i < m.bands[0].v.size(); ++i) {
    const double x = pa.bands[0].v[i], y = pb.bands[0].v[i];
    EXPECT_EQ(m.bands[0].v[i], std::abs(x) >= std::abs(y) ? x : y);
  }
}

TEST(Fuse, RatioPyramid) {
  std::mt19937_64 rng(24);
  const auto a = random_volume(rng, {8, 8, 8});
  const auto b = random_volume(rng, {8, 8, 8});
  const auto pa = ratio_pyramid(a.with_data(std::vector<double>(a.size(), 2.0)), 2);
  for (const auto& band : pa.bands)
    for (double x : band.v) EXPECT_NEAR(x, 1.0, 1e-12);
  // Constant inputs: ratio bands are all 1, so the base average survives.
  const auto c = fuse_rp(Volume::filled({8, 8, 1}, {}, Unit::SUV, 2.0), Volume::filled({8, 8, 1}, {}, Unit::HU, 4.0), 2);
  for (double x : c.data()) EXPECT_NEAR(x, 3.0, 1e-9);
  EXPECT_THROW(fuse_rp(a.with_data(std::vector<double>(a.size(), -1.0)), b, 2), Error);
  // Band-level oracle for the merge rule.
  const auto ra = ratio_pyramid(a, 2), rb = ratio_pyramid(b, 2);
  const auto m = merge_pyramids(ra, rb);
  for (std::size_t l = 0; l < m.bands.size(); ++l)
    for (std::size_t i = 0; i < m.bands[l].v.size(); ++i) {
      const double x = ra.bands[l].v[i], y = rb.bands[l].v[i];
      EXPECT_EQ(m.bands[l].v[i], std::abs(x - 1) >= std::abs(y - 1) ? x : y);
    }
}

TEST(Fuse, HaarParsevalAndRoundTrip) {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 100; ++t) {
    const Dims d = t % 2 ? Dims{8, 8, 4} : Dims{16, 8, 1};
    const auto v = random_volume(rng, d, -3, 3);
    const auto tr = haar_forward(v, 2);
    double ex = 0, ec = 0;
    for (double x : v.data()) ex += x * x;
    for (double c : tr.coeffs.v) ec += c * c;
    EXPECT_NEAR(ex, ec, 1e-10 * std::max(1.0, ex));
    const auto back = haar_inverse(tr);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back[i], v[i], 1e-10);
  }
}

TEST(Fuse, LevelLimits) {
  const auto v = Volume::filled({8, 8, 1}, {}, Unit::SUV, 1.0);
  EXPECT_EQ(max_fusion_levels(v.dims()), 3);
  EXPECT_THROW(fuse_lp(v, v, 4), Error);
  EXPECT_THROW(fuse_dwt(v, v, 0), Error);
}

TEST(Fuse, FlavourKeyRoundTrip) {
  for (const auto& s : kAllMethods) {
    const auto back = FusionSpec::from_key(s.key());
    EXPECT_EQ(back.method, s.method);
    EXPECT_EQ(back.key(), s.key());
  }
}
