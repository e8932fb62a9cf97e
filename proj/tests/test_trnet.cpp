#include <gtest/gtest.h>

#include "tensorrad/trnet.hpp"

using namespace tensorrad;
using namespace tensorrad::trnet;

namespace {

Blocks random_blocks(std::size_t n, std::vector<std::size_t> widths, std::mt19937_64& rng) {
  Blocks x;
  for (auto w : widths) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(w));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal01(rng);
    x.push_back(std::move(m));
  }
  return x;
}

std::vector<int> random_labels(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng() & 1u);
  return y;
}

TrNetConfig two_legs() {
  TrNetConfig c;
  c.legs = {{"BIN_WIDTH{width=25}", {6}}, {"BIN_COUNT{count=32}", {4, 3}}};
  c.body = {5, 1};
  c.seed = 11;
  return c;
}

}  // namespace

TEST(TrNet, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(71);
  for (int t = 0; t < 10; ++t) {
    TrNetConfig c;
    const std::size_t legs = 1 + uniform_index(rng, 3);
    std::vector<std::size_t> widths;
    for (std::size_t l = 0; l < legs; ++l) {
      std::vector<std::size_t> sizes;
      for (std::size_t d = uniform_index(rng, 3); d > 0; --d) sizes.push_back(1 + uniform_index(rng, 5));
      c.legs.push_back({"leg" + std::to_string(l), sizes});
      widths.push_back(1 + uniform_index(rng, 4));
    }
    c.body = {1 + uniform_index(rng, 6), 1};
    c.seed = rng();
    const auto x = random_blocks(7, widths, rng);
    const auto y = random_labels(7, rng);
    EXPECT_LT(gradient_check(TrNet(c, widths), x, y), 1e-4) << "trial " << t;
  }
}

TEST(TrNet, OverfitsTwentySamples) {
  std::mt19937_64 rng(72);
  const auto x = random_blocks(20, {5, 5}, rng);
  std::vector<int> y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = static_cast<int>(i % 2);
  auto c = two_legs();
  c.epochs = 400;
  c.batch_size = 20;
  const auto net = train(c, x, y);
  EXPECT_LT(net.history().back(), 0.05);
  EXPECT_LT(net.history().back(), net.history().front());
}

TEST(TrNet, LegPermutationIsBitExact) {
  std::mt19937_64 rng(73);
  const auto x = random_blocks(24, {3, 4}, rng);
  const auto y = random_labels(24, rng);
  auto c = two_legs();
  c.epochs = 20;
  c.batch_size = 8;
  c.dropout = 0.2;
  auto swapped = c;
  std::swap(swapped.legs[0], swapped.legs[1]);
  const Blocks xs{x[1], x[0]};
  const auto a = train(c, x, y).forward(x), b = train(swapped, xs, y).forward(xs);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
}

TEST(TrNet, JsonRoundTripAndDeterminism) {
  std::mt19937_64 rng(74);
  const auto x = random_blocks(16, {3, 4}, rng);
  const auto y = random_labels(16, rng);
  auto c = two_legs();
  c.epochs = 10;
  const auto net = train(c, x, y);
  EXPECT_EQ(TrNet::from_json(net.to_json()).forward(x), net.forward(x));
  EXPECT_EQ(train(c, x, y).forward(x), net.forward(x));
  EXPECT_EQ(config_from_json(config_to_json(c)).legs.size(), 2u);
}

TEST(TrNet, RejectsBadConfigs) {
  auto c = two_legs();
  c.body = {4, 2};
  EXPECT_THROW(c.validate(), Error);
  c = two_legs();
  c.legs[1].name = c.legs[0].name;
  EXPECT_THROW(c.validate(), Error);
  c = two_legs();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  std::mt19937_64 rng(75);
  const auto x = random_blocks(4, {3, 4}, rng);
  EXPECT_THROW(train(two_legs(), x, std::vector<int>{0, 1, 2, 0}), Error);
}

TEST(TrNet, DivergenceIsReported) {
  std::mt19937_64 rng(76);
  const auto x = random_blocks(8, {3, 3}, rng);
  auto c = two_legs();
  c.epochs = 5;
  c.learning_rate = 1e308;
  EXPECT_THROW(train(c, x, random_labels(8, rng)), Error);
}
