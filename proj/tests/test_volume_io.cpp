#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "tensorrad/io.hpp"
#include "test_util.hpp"

using namespace tensorrad;

TEST(Volume, RoiValuesFollowVoxelOrder) {
  const Volume v({2, 2, 1}, {}, Unit::SUV, {1, 2, 3, 4});
  EXPECT_EQ(roi_values(v, RoiMask::full({2, 2, 1})), (std::vector<double>{1, 2, 3, 4}));
  const std::array<std::size_t, 3> origin{0, 0, 0};
  EXPECT_EQ(roi_values(v, RoiMask::from_coords({2, 2, 1}, std::span(&origin, 1))), std::vector<double>{1});
  const std::array<std::size_t, 3> outside{2, 0, 0};
  EXPECT_THROW(RoiMask::from_coords({2, 2, 1}, std::span(&outside, 1)), Error);
}

TEST(Volume, Invariants) {
  EXPECT_THROW(Volume({2, 2, 1}, {}, Unit::HU, {1, 2, 3}), Error);
  EXPECT_THROW(Volume({1, 1, 1}, {0.0, 1, 1}, Unit::HU, {1}), Error);
  EXPECT_THROW(Volume({1, 1, 1}, {}, Unit::HU, {std::nan("")}), Error);
  Case c;
  c.case_id = "a";
  c.patient_id = "";
  c.mask = RoiMask::full({1, 1, 1});
  c.volumes.emplace(Unit::HU, Volume::filled({1, 1, 1}, {}, Unit::HU, 0));
  EXPECT_THROW(c.validate(), Error);
}

TEST(Volume, TranslateConstantIsIdentity) {
  const auto v = Volume::filled({4, 3, 2}, {}, Unit::HU, 7.5);
  for (auto interp : {Interp::NEAREST, Interp::TRILINEAR}) {
    const auto t = resample_translate(v, {0.3, -1.7, 0.5}, interp);
    for (double x : t.data()) EXPECT_DOUBLE_EQ(x, 7.5);
  }
}

TEST(Volume, TranslateIntegerAndHalfVoxel) {
  std::vector<double> ramp;
  for (int i = 0; i < 6; ++i) ramp.push_back(i);
  const Volume v({6, 1, 1}, {}, Unit::ARBITRARY, ramp);
  const auto n = resample_translate(v, {1, 0, 0}, Interp::NEAREST);
  const auto t = resample_translate(v, {0.5, 0, 0}, Interp::TRILINEAR);
  // Output voxel i samples the input at i + shift, clamped to the grid.
  for (std::size_t i = 0; i + 1 < 6; ++i) {
    EXPECT_DOUBLE_EQ(n[i], ramp[i + 1]);
    EXPECT_DOUBLE_EQ(t[i], ramp[i] + 0.5);
  }
  EXPECT_DOUBLE_EQ(n[5], 5.0);
}

TEST(Io, ReadsHandWrittenMetaImage) {
  const auto dir = testutil::scratch_dir("mhd_fixture");
  write_text_file(dir / "v.mhd",
                  "ObjectType = Image\nNDims = 3\nDimSize = 2 2 1\nElementSpacing = 1 1 2\n"
                  "ElementType = MET_FLOAT\nBinaryDataByteOrderMSB = False\nElementDataFile = v.raw\n");
  const float data[4] = {1, 2, 3, 4};
  std::ofstream(dir / "v.raw", std::ios::binary).write(reinterpret_cast<const char*>(data), sizeof data);
  const auto v = read_mhd(dir / "v.mhd");
  EXPECT_EQ(v.dims(), (Dims{2, 2, 1}));
  EXPECT_DOUBLE_EQ(v.spacing().z, 2.0);
  EXPECT_EQ(std::vector<double>(v.data().begin(), v.data().end()), (std::vector<double>{1, 2, 3, 4}));

  write_text_file(dir / "bad.mhd",
                  "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\nElementType = MET_FLOAT\nElementDataFile = v.raw\n");
  EXPECT_THROW(read_mhd(dir / "bad.mhd"), Error);
  write_text_file(dir / "nokey.mhd", "ObjectType = Image\nNDims = 3\nElementType = MET_FLOAT\nElementDataFile = v.raw\n");
  EXPECT_THROW(read_mhd(dir / "nokey.mhd"), Error);
  write_text_file(dir / "type.mhd",
                  "ObjectType = Image\nNDims = 3\nDimSize = 2 2 1\nElementType = MET_LONG\nElementDataFile = v.raw\n");
  EXPECT_THROW(read_mhd(dir / "type.mhd"), Error);
}

TEST(Io, RoundTripIsBitExactForEveryType) {
  const auto dir = testutil::scratch_dir("mhd_roundtrip");
  std::mt19937_64 rng(5);
  const Dims d{3, 4, 2};
  for (int trial = 0; trial < 20; ++trial)
    for (auto type : {ElementType::MET_SHORT, ElementType::MET_FLOAT, ElementType::MET_DOUBLE, ElementType::MET_UCHAR}) {
      std::vector<double> x(d.size());
      for (auto& v : x) {
        const double r = std::uniform_real_distribution<double>(-1000, 1000)(rng);
        switch (type) {
          case ElementType::MET_SHORT: v = std::round(r); break;
          case ElementType::MET_FLOAT: v = static_cast<float>(r); break;
          case ElementType::MET_DOUBLE: v = r; break;
          case ElementType::MET_UCHAR: v = std::round(std::abs(r) / 4); break;
        }
      }
      const Volume vol(d, {0.5, 0.75, 2}, Unit::HU, x);
      write_mhd(dir / "r.mhd", vol, type);
      const auto back = read_mhd(dir / "r.mhd", Unit::HU);
      ASSERT_EQ(std::memcmp(back.data().data(), vol.data().data(), x.size() * sizeof(double)), 0);
      EXPECT_EQ(back.spacing(), vol.spacing());
    }
  EXPECT_THROW(write_mhd(dir / "x.mhd", Volume({1, 1, 1}, {}, Unit::HU, {0.1}), ElementType::MET_FLOAT), Error);
}

TEST(Io, MaskRoundTrip) {
  const auto dir = testutil::scratch_dir("mask_roundtrip");
  const RoiMask m({3, 2, 1}, {1, 0, 1, 1, 0, 0});
  write_mhd(dir / "m.mhd", m, Spacing{});
  EXPECT_EQ(read_mhd_mask(dir / "m.mhd"), m);
}

namespace {
FeatureTable small_table() {
  FeatureTable t;
  t.columns = {"f1", "f2"};
  t.rows.push_back({"case1", FlavourKey(FlavourAxis::BIN_WIDTH).set("width", 0.1), {0.1 + 0.2, MaybeValue{}}});
  return t;
}
}  // namespace

TEST(Io, FeatureTableCsvShape) {
  const auto csv = feature_table_csv(small_table());
  EXPECT_EQ(csv, "case_id,flavour,f1,f2\ncase1,BIN_WIDTH{width=0.1},0.30000000000000004,\n");
  const auto j = feature_table_json(small_table());
  EXPECT_TRUE(j["rows"][0]["values"][1].is_null());
}

TEST(Io, FeatureTableRoundTrip) {
  const auto dir = testutil::scratch_dir("table_roundtrip");
  FeatureTable t = small_table();
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    FeatureRow r{"c" + std::to_string(i), vanilla_flavour(), {}};
    for (int k = 0; k < 2; ++k) r.values.push_back(std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng), i - 25));
    t.rows.push_back(r);
  }
  write_feature_table(t, dir / "t.csv", TableFormat::CSV);
  write_feature_table(t, dir / "t.json", TableFormat::JSON);
  EXPECT_EQ(read_feature_table(dir / "t.csv"), t);
  EXPECT_EQ(read_feature_table(dir / "t.json"), t);
}

TEST(Io, FeatureTableValidation) {
  FeatureTable t = small_table();
  t.rows.push_back(t.rows.front());
  EXPECT_THROW(t.validate(), Error);
  t = small_table();
  t.columns.push_back("f1");
  EXPECT_THROW(t.validate(), Error);
}

TEST(Flavour, CanonicalStringRoundTrips) {
  const auto k = FlavourKey(FlavourAxis::PERTURB).set("tx", 0.5).set("level", -2);
  EXPECT_EQ(k.str(), "PERTURB{tx=0.5;level=-2}");
  EXPECT_EQ(FlavourKey::parse(k.str()), k);
  EXPECT_EQ(FlavourKey::parse("VANILLA{}"), vanilla_flavour());
  EXPECT_THROW(FlavourKey::parse("NOPE{a=1}"), Error);
  EXPECT_THROW(FlavourKey::parse("BIN_WIDTH{width}"), Error);
}
