#include <gtest/gtest.h>

#include <random>

#include "tensorrad/filters.hpp"

using namespace tensorrad;

namespace {

Volume random_volume(std::mt19937_64& rng, Dims d, Spacing sp = {}) {
  std::vector<double> x(d.size());
  for (auto& v : x) v = std::normal_distribution<double>(0, 1)(rng);
  return Volume(d, sp, Unit::ARBITRARY, x);
}

}  // namespace

TEST(Filters, LogOfConstantIsZero) {
  for (Dims d : {Dims{9, 8, 7}, Dims{12, 10, 1}}) {
    const auto out = apply_log(Volume::filled(d, {1, 1, 2}, Unit::HU, 42.0), 1.5);
    for (double v : out.data()) EXPECT_LT(std::abs(v), 1e-10);
  }
}

TEST(Filters, LogOfRampIsZeroInInterior) {
  const Dims d{21, 21, 1};
  std::vector<double> ramp(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) ramp[i] = 3.0 * static_cast<double>(d.coords(i)[0]) - 2.0 * d.coords(i)[1];
  const auto out = apply_log(Volume(d, {}, Unit::HU, ramp), 1.0);
  for (std::size_t j = 5; j < 16; ++j)
    for (std::size_t i = 5; i < 16; ++i) EXPECT_LT(std::abs(out.at(i, j, 0)), 1e-9);
}

TEST(Filters, LogOfDeltaIsTheKernel) {
  const Dims d{15, 15, 15};
  std::vector<double> x(d.size(), 0.0);
  x[d.index(7, 7, 7)] = 1.0;
  const auto out = apply_log(Volume(d, {}, Unit::ARBITRARY, x), 1.0);
  // Direct evaluation of the truncated, zero-mean sampled kernel.
  const long r = 4;
  auto g = [](double t) { return std::exp(-t * t / 2) / std::sqrt(2 * std::numbers::pi); };
  auto k = [&](long a, long b, long c) {
    const double ga = g(a), gb = g(b), gc = g(c);
    return (a * a - 1.0) * ga * gb * gc + (b * b - 1.0) * ga * gb * gc + (c * c - 1.0) * ga * gb * gc;
  };
  double sum = 0;
  for (long a = -r; a <= r; ++a)
    for (long b = -r; b <= r; ++b)
      for (long c = -r; c <= r; ++c) sum += k(a, b, c);
  const double mean = sum / std::pow(2 * r + 1, 3);
  double ksum = 0;
  for (long a = -r; a <= r; ++a)
    for (long b = -r; b <= r; ++b)
      for (long c = -r; c <= r; ++c) {
        const double expect = k(a, b, c) - mean;
        ksum += out.at(static_cast<std::size_t>(7 + a), static_cast<std::size_t>(7 + b), static_cast<std::size_t>(7 + c));
        EXPECT_NEAR(out.at(static_cast<std::size_t>(7 + a), static_cast<std::size_t>(7 + b), static_cast<std::size_t>(7 + c)),
                    expect, 1e-12);
      }
  EXPECT_LT(std::abs(ksum), 1e-12);
}

TEST(Filters, WaveletConstantBands) {
  const auto v = Volume::filled({4, 5, 3}, {}, Unit::HU, 3.5);
  for (const auto& band : wavelet_bands()) {
    const auto out = apply_wavelet_band(v, band);
    for (double x : out.data()) {
      if (band == "LLL")
        EXPECT_DOUBLE_EQ(x, 3.5);
      else
        EXPECT_EQ(x, 0.0);
    }
  }
  EXPECT_THROW(apply_wavelet_band(Volume::filled({4, 4, 1}, {}, Unit::HU, 1), "LLL"), Error);
  EXPECT_THROW(apply_wavelet_band(v, "XYZ"), Error);
}

TEST(Filters, WaveletHandDifference) {
  // x-ramp [0, 2] repeated over y and z.
  const Volume v({2, 2, 2}, {}, Unit::ARBITRARY, {0, 2, 0, 2, 0, 2, 0, 2});
  const auto out = apply_wavelet_band(v, "HLL");
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), -1.0);
}

TEST(Filters, ShiftCommutation) {
  std::mt19937_64 rng(4);
  const auto v = random_volume(rng, {8, 7, 6});
  std::vector<double> shifted(v.data().begin(), v.data().end());
  for (auto& x : shifted) x += 10.0;
  const Volume s = v.with_data(shifted);
  const auto a = apply_log(v, 1.0), b = apply_log(s, 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
  for (const auto& band : wavelet_bands()) {
    const auto p = apply_wavelet_band(v, band), q = apply_wavelet_band(s, band);
    const double offset = band == "LLL" ? 10.0 : 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(q[i] - p[i], offset, 1e-12);
  }
}

TEST(Filters, PointwiseTransforms) {
  const Volume v({3, 1, 1}, {}, Unit::SUV, {0, 1, 4});
  const auto s = apply_intensity_transform(v, FilterKind::SQRT);
  EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()), (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(apply_intensity_transform(Volume({1, 1, 1}, {}, Unit::SUV, {0}), FilterKind::LOGARITHM)[0], 0.0);
  EXPECT_EQ(apply_intensity_transform(v, FilterKind::SQUARE)[2], 16.0);
  const auto e = apply_intensity_transform(v, FilterKind::EXPONENTIAL);
  EXPECT_DOUBLE_EQ(e[2], std::exp(1.0));
}

TEST(Filters, GradientOfRamp) {
  const Dims d{10, 6, 1};
  std::vector<double> x(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) x[i] = 2.0 * 0.5 * static_cast<double>(d.coords(i)[0]);
  const auto g = apply_intensity_transform(Volume(d, {0.5, 1, 1}, Unit::HU, x), FilterKind::GRADIENT);
  for (std::size_t j = 1; j + 1 < d.y; ++j)
    for (std::size_t i = 1; i + 1 < d.x; ++i) EXPECT_NEAR(g.at(i, j, 0), 2.0, 1e-12);
}

TEST(Filters, OutputDimsMatch) {
  std::mt19937_64 rng(8);
  const auto v = random_volume(rng, {6, 5, 4}, {1, 1, 2});
  for (const auto& k : filter_flavour_grid(std::vector<double>{1.0}, wavelet_bands(),
                                           std::vector<FilterKind>{FilterKind::GRADIENT, FilterKind::SQRT})) {
    const auto out = apply_filter(v, FilterSpec::from_key(k));
    EXPECT_EQ(out.dims(), v.dims());
  }
}

TEST(Filters, FlavourGrid) {
  std::vector<double> sigmas;
  for (int i = 1; i <= 10; ++i) sigmas.push_back(0.5 * i);
  EXPECT_EQ(filter_flavour_grid(sigmas, {}, {}).size(), 10u);
  EXPECT_EQ(filter_flavour_grid({}, wavelet_bands(), {}).size(), 8u);
  EXPECT_TRUE(filter_flavour_grid({}, {}, {}).empty());
  EXPECT_THROW(filter_flavour_grid(std::vector<double>{1.0, 1.0}, {}, {}), Error);
}
