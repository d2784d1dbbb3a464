#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "subspec/kernel.hpp"

using namespace subspec;

namespace {

const double kTwoPiSq = 2.0 * std::numbers::pi * std::numbers::pi;

DomainSpec heis_ball(double r = 1.0) { return DomainSpec(GroupConfig::heisenberg(1), GaugeBall{r, {}}); }
DomainSpec line() { return DomainSpec(GroupConfig::abelian(1), Box{{-1.0}, {1.0}}); }

}  // namespace

TEST(FracParams, Validation) {
  EXPECT_THROW(FracParams(0.0, 2.0, 1), ParameterError);
  EXPECT_THROW(FracParams(1.0, 2.0, 1), ParameterError);
  EXPECT_THROW(FracParams(0.5, 1.0, 4), ParameterError);
  EXPECT_THROW(FracParams(0.9, 2.0, 1), ParameterError);  // Q <= ps
  const FracParams fp(0.5, 2.0, GroupConfig::heisenberg(1));
  EXPECT_DOUBLE_EQ(fp.p_star(), 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(fp.Q_plus_ps(), 5.0);
}

TEST(Kernel, UnitDistancePairWeight) {
  const auto spec = heis_ball(2.0);
  const GridDomain grid(spec, {0.2, 0.2, 0.2}, 0.2, {0.0, 0.0, 0.0, 1.0, 0.0, 0.0});
  const auto K = assemble(grid, FracParams(0.5, 2.0, 4));
  const double cell = grid.cell_measure();
  EXPECT_NEAR(K.weight(0, 1), cell * cell, 1e-18);
  EXPECT_EQ(K.weight(0, 1), K.weight(1, 0));
  EXPECT_EQ(K.weight(0, 0), 0.0);
}

TEST(Kernel, PermutationEquivariant) {
  const auto grid = build_grid(heis_ball(), 0.4);
  const FracParams fp(0.5, 2.0, 4);
  const auto K = assemble(grid, fp);
  std::vector<std::size_t> perm(grid.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  std::vector<double> nodes;
  for (std::size_t i : perm) nodes.insert(nodes.end(), grid.node(i).begin(), grid.node(i).end());
  const GridDomain permuted(grid.spec(), {0.4, 0.4, 0.4}, 0.4, nodes);
  const auto P = assemble(permuted, fp);
  for (std::size_t a = 0; a < grid.size(); ++a) {
    EXPECT_EQ(P.complement(a), K.complement(perm[a]));
    for (std::size_t b = 0; b < grid.size(); ++b) {
      // the twisted distance is not bit-symmetric, so compare to rounding
      const double w = K.weight(perm[a], perm[b]);
      EXPECT_NEAR(P.weight(a, b), w, 1e-14 * w);
    }
  }
}

TEST(Kernel, ExactSymmetry) {
  const auto K = assemble(build_grid(heis_ball(), 0.3), FracParams(0.5, 2.0, 4));
  for (std::size_t i = 0; i < K.size(); ++i) {
    for (std::size_t j = 0; j < K.size(); ++j) EXPECT_EQ(K.weight(i, j), K.weight(j, i));
  }
}

TEST(Kernel, ComplementMassAtHeisenbergOrigin) {
  const auto grid = build_grid(heis_ball(), 0.2);
  const std::vector<double> origin{0.0, 0.0, 0.0};
  const double m = complement_mass(grid, FracParams(0.5, 2.0, 4), {}, origin);
  EXPECT_NEAR(m / kTwoPiSq, 1.0, 0.01);
}

TEST(Kernel, ComplementMassLineClosedForm) {
  // int_{|y|>1} |x - y|^{-(1+ps)} dy = ((1+x)^{-ps} + (1-x)^{-ps}) / ps
  const auto grid = build_grid(line(), 1.0 / 32);
  const FracParams fp(0.25, 2.0, 1);
  const auto K = assemble(grid, fp);
  const double ps = fp.ps();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.node(i)[0];
    const double exact = (std::pow(1.0 + x, -ps) + std::pow(1.0 - x, -ps)) / ps;
    // the lattice sum under-resolves the singularity in the first exterior cell
    const double tol = 1.0 - std::abs(x) < 2.0 / 32 ? 0.1 : 0.01;
    EXPECT_NEAR(K.complement(i) / (2.0 * grid.cell_measure()) / exact, 1.0, tol) << "x = " << x;
  }
}

TEST(Kernel, TruncationFactorOnlyMovesTheCut) {
  const auto grid = build_grid(heis_ball(), 0.25);
  const FracParams fp(0.5, 2.0, 4);
  const std::vector<double> x{0.125, -0.125, 0.125};
  const double a = complement_mass(grid, fp, {1.0, {}}, x);
  const double b = complement_mass(grid, fp, {2.0, {}}, x);
  EXPECT_NEAR(a / b, 1.0, 0.01);
}

TEST(Kernel, PolicyValidation) {
  const auto grid = build_grid(line(), 0.25);
  const FracParams fp(0.25, 2.0, 1);
  EXPECT_THROW(assemble(grid, fp, {0.5, {}}), PolicyError);
  EXPECT_THROW(assemble(grid, fp, {1.0, 0.0}), PolicyError);
  EXPECT_THROW(assemble(grid, FracParams(0.25, 2.0, 4)), ParameterError);
}

TEST(Kernel, CacheRoundTrip) {
  const auto grid = build_grid(line(), 0.125);
  const FracParams fp(0.25, 2.0, 1);
  const auto K = assemble(grid, fp);
  std::filesystem::create_directories(SUBSPEC_SCRATCH_DIR);
  const std::string path = std::string(SUBSPEC_SCRATCH_DIR) + "/" + kernel_cache_key(grid, fp, {}) + ".bin";
  save_kernel(K, path);
  const auto L = load_kernel(path);
  ASSERT_TRUE(L.has_value());
  EXPECT_EQ(*L, K);
  EXPECT_FALSE(load_kernel(path + ".missing").has_value());
  EXPECT_NE(kernel_cache_key(grid, fp, {}), kernel_cache_key(grid, FracParams(0.3, 2.0, 1), {}));
  EXPECT_NE(kernel_cache_key(grid, fp, {}), kernel_cache_key(grid, fp, {2.0, {}}));
}

TEST(Tail, ZeroField) {
  const auto grid = build_grid(line(), 0.125);
  EXPECT_EQ(tail(Field(grid.size()), GroupPoint{0.0}, 0.5, FracParams(0.25, 2.0, 1), grid), 0.0);
}

TEST(Tail, VanishesWhenBallCoversDomain) {
  const auto grid = build_grid(line(), 0.125);
  EXPECT_EQ(tail(Field(grid.size(), 1.0), GroupPoint{0.0}, 1.5, FracParams(0.25, 2.0, 1), grid), 0.0);
}

TEST(Tail, ConstantFieldOnLargeBox) {
  // c on (-L, L), R = 1: Tail = 2 c (1 - L^{-ps}) / ps at p = 2
  const double L = 8.0, R = 1.0, c = 3.0;
  const auto grid = build_grid(DomainSpec(GroupConfig::abelian(1), Box{{-L}, {L}}), 1.0 / 256);
  const FracParams fp(0.25, 2.0, 1);
  const double exact = c * 2.0 * (1.0 - std::pow(L, -fp.ps())) / fp.ps();
  EXPECT_NEAR(tail(Field(grid.size(), c), GroupPoint{0.0}, R, fp, grid) / exact, 1.0, 0.01);
  EXPECT_THROW(tail(Field(grid.size(), c), GroupPoint{0.0}, 0.0, fp, grid), DomainError);
}
