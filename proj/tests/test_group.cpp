#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "subspec/group.hpp"

using namespace subspec;

namespace {

void expect_point(const GroupPoint& a, std::initializer_list<double> want, double tol = 1e-15) {
  ASSERT_EQ(a.size(), want.size());
  std::size_t i = 0;
  for (double w : want) EXPECT_NEAR(a[i++], w, tol);
}

GroupPoint random_point(const GroupConfig& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> c(static_cast<std::size_t>(g.topo_dim()));
  for (auto& v : c) v = nd(rng);
  return GroupPoint(std::move(c));
}

}  // namespace

TEST(Group, HeisenbergLaw) {
  const auto h1 = GroupConfig::heisenberg(1);
  expect_point(compose(h1, {1, 0, 0}, {0, 1, 0}), {1, 1, -2});
  expect_point(compose(h1, {0, 0, 0}, {0.3, -2, 5}), {0.3, -2, 5});
}

TEST(Group, AbelianLaw) {
  const auto a2 = GroupConfig::abelian(2);
  expect_point(compose(a2, {1, 2}, {3, 4}), {4, 6});
}

TEST(Group, Associativity) {
  std::mt19937_64 rng(3);
  for (const auto& g : {GroupConfig::heisenberg(1), GroupConfig::heisenberg(2), GroupConfig::abelian(3)}) {
    for (int k = 0; k < 200; ++k) {
      const auto a = random_point(g, rng), b = random_point(g, rng), c = random_point(g, rng);
      const auto l = compose(g, compose(g, a, b), c);
      const auto r = compose(g, a, compose(g, b, c));
      for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l[i], r[i], 1e-12 * (1 + std::abs(l[i])));
    }
  }
}

TEST(Group, Inverse) {
  const auto h1 = GroupConfig::heisenberg(1);
  expect_point(inverse(h1, {1, 2, 3}), {-1, -2, -3});
  expect_point(compose(h1, {1, 2, 3}, inverse(h1, {1, 2, 3})), {0, 0, 0});
  expect_point(inverse(GroupConfig::abelian(3), {1, -1, 0}), {-1, 1, 0});
  expect_point(inverse(h1, GroupPoint::identity(h1)), {0, 0, 0});
}

TEST(Group, Dilation) {
  const auto h1 = GroupConfig::heisenberg(1);
  expect_point(dilate(h1, 2.0, {1, 1, 1}), {2, 2, 4});
  expect_point(dilate(h1, 1.0, {0.5, -1, 3}), {0.5, -1, 3});
  expect_point(dilate(GroupConfig::abelian(2), 3.0, {1, -1}), {3, -3});
}

TEST(Group, DilationIsAutomorphism) {
  const auto h2 = GroupConfig::heisenberg(2);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_point(h2, rng), b = random_point(h2, rng);
    const auto l = dilate(h2, 1.7, compose(h2, a, b));
    const auto r = compose(h2, dilate(h2, 1.7, a), dilate(h2, 1.7, b));
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l[i], r[i], 1e-12 * (1 + std::abs(l[i])));
  }
}

TEST(Group, Gauge) {
  const auto h1 = GroupConfig::heisenberg(1);
  EXPECT_DOUBLE_EQ(gauge(h1, {0, 0, 1}), 1.0);
  EXPECT_NEAR(gauge(h1, {1, 1, 0}), 1.41421356237, 1e-10);
  EXPECT_NEAR(gauge(h1, dilate(h1, 2.0, {1, 0, 0})), 2.0, 1e-15);
}

TEST(Group, GaugeHomogeneous) {
  const auto h1 = GroupConfig::heisenberg(1);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_point(h1, rng);
    EXPECT_NEAR(gauge(h1, dilate(h1, 0.3, a)), 0.3 * gauge(h1, a), 1e-13 * gauge(h1, a));
  }
}

TEST(Group, Distance) {
  const auto h1 = GroupConfig::heisenberg(1);
  EXPECT_EQ(hdistance(h1, {0.2, 0.4, 1}, {0.2, 0.4, 1}), 0.0);
  EXPECT_DOUBLE_EQ(hdistance(h1, {1, 0, 0}, {0, 0, 0}), 1.0);
  EXPECT_NEAR(hdistance(h1, {1, 0, 0}, {0, 1, 0}), std::pow(8.0, 0.25), 1e-14);
  EXPECT_NEAR(hdistance(h1, {1, 0, 0}, {0, 1, 0}), 1.68179283051, 1e-10);
}

TEST(Group, DistanceSymmetricAndLeftInvariant) {
  const auto h1 = GroupConfig::heisenberg(1);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_point(h1, rng), b = random_point(h1, rng), z = random_point(h1, rng);
    const double d = hdistance(h1, a, b);
    EXPECT_NEAR(hdistance(h1, b, a), d, 1e-12 * d);
    EXPECT_NEAR(hdistance(h1, compose(h1, z, a), compose(h1, z, b)), d, 1e-11 * d);
  }
}

TEST(Group, RejectsWrongDimension) {
  const auto h1 = GroupConfig::heisenberg(1);
  EXPECT_THROW(compose(h1, {1, 0}, {0, 1, 0}), ConfigError);
  EXPECT_THROW(dilate(h1, 0.0, {1, 0, 0}), DomainError);
  EXPECT_THROW(GroupConfig::abelian(0), ConfigError);
  EXPECT_THROW(GroupConfig::heisenberg(0), ConfigError);
}

TEST(Group, HomogeneousDimension) {
  EXPECT_EQ(GroupConfig::heisenberg(1).Q(), 4);
  EXPECT_EQ(GroupConfig::heisenberg(3).Q(), 8);
  EXPECT_EQ(GroupConfig::abelian(3).Q(), 3);
}

TEST(Group, SphereConstants) {
  EXPECT_DOUBLE_EQ(sphere_constant(GroupConfig::heisenberg(1)), 2.0 * std::numbers::pi * std::numbers::pi);
  EXPECT_NEAR(sphere_constant(GroupConfig::abelian(1)), 2.0, 1e-15);
  EXPECT_NEAR(sphere_constant(GroupConfig::abelian(2)), 2.0 * std::numbers::pi, 1e-14);
  EXPECT_NEAR(sphere_constant(GroupConfig::abelian(3)), 4.0 * std::numbers::pi, 1e-13);
}

TEST(Group, MonteCarloBallVolumeHeisenberg1) {
  // closed form pi^2 / 2 for the unit gauge ball
  const auto h1 = GroupConfig::heisenberg(1);
  const double sigma = 4.0 * monte_carlo_ball_volume(h1, 10'000'000);
  EXPECT_NEAR(sigma / (2.0 * std::numbers::pi * std::numbers::pi), 1.0, 5e-3);
  EXPECT_EQ(monte_carlo_ball_volume(h1, 1000, 4), monte_carlo_ball_volume(h1, 1000, 4));
  EXPECT_THROW(monte_carlo_ball_volume(h1, 0), ParameterError);
}
