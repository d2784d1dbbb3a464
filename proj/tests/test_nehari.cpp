#include <cmath>

#include <gtest/gtest.h>

#include "subspec/checks.hpp"

using namespace subspec;

namespace {

const FiberScalars kUnit{1.0, 1.0, 1.0};
const FiberShape kShape{2.0, 0.5, 1.3, 0.03};

// fiber maximum and roots frozen from a 50-digit evaluation of m(t) = t^{1.5} - t^{1.8}
constexpr double kTmax = 0.544581035232;
constexpr double kMmax = 0.066979595336;
constexpr double kT1 = 0.176050494274;
constexpr double kT2 = 0.884824275948;

struct Line {
  Line()
      : grid(build_grid(DomainSpec(GroupConfig::abelian(1), Box{{-1.0}, {1.0}}), 1.0 / 32)),
        fp(0.25, 2.0, 1),
        K(assemble(grid, fp)),
        base(fp, 0.1, 1.3, Field(grid.size(), 1.0), Field(grid.size(), 10.0), 1.0),
        dirs(sample_directions(grid, 64, 1)),
        lstar(lambda_star(dirs, base, K).empirical),
        ps(base.with_lambda(0.5 * lstar)) {}
  GridDomain grid;
  FracParams fp;
  KernelTable K;
  ProblemSpec base;
  std::vector<Field> dirs;
  double lstar;
  ProblemSpec ps;
};

const Line& line() {
  static const Line l;
  return l;
}

}  // namespace

TEST(Fiber, ScalarExample) {
  const FiberReport r = fiber_critical(kUnit, kShape);
  EXPECT_NEAR(r.t_max, kTmax, 1e-10);
  EXPECT_NEAR(r.t_max, std::pow(1.5 / 1.8, 1.0 / 0.3), 1e-14);
  EXPECT_NEAR(r.m_max, kMmax, 1e-10);
  ASSERT_TRUE(r.roots.has_value());
  EXPECT_NEAR(r.roots->first, kT1, 1e-10);
  EXPECT_NEAR(r.roots->second, kT2, 1e-10);
  EXPECT_NEAR(r.roots->first, 0.1757, 1e-3);
  EXPECT_NEAR(r.roots->second, 0.8849, 1e-3);
  EXPECT_NEAR(fiber_m(kUnit, kShape, r.roots->first), 0.03, 1e-10);
  EXPECT_NEAR(fiber_m(kUnit, kShape, r.roots->second), 0.03, 1e-10);
  EXPECT_EQ(r.ddphi_signs.first, 1);
  EXPECT_EQ(r.ddphi_signs.second, -1);
}

TEST(Fiber, ScalarValues) {
  // 1/2 - 0.03/0.5 - 1/2.3
  EXPECT_NEAR(fiber(kUnit, kShape, 1.0).phi, 0.005217391304, 1e-12);
  EXPECT_NEAR(fiber(kUnit, kShape, 1.0).dphi, 1.0 - 0.03 - 1.0, 1e-15);
  EXPECT_THROW(fiber(kUnit, kShape, 0.0), DomainError);
}

TEST(Fiber, NoRootsAboveMaximum) {
  FiberShape sh = kShape;
  sh.lambda = 0.1;
  EXPECT_FALSE(fiber_critical(kUnit, sh).roots.has_value());
}

TEST(Fiber, DerivativesMatchDifferences) {
  for (double t : {0.1, 0.5, 1.0, 2.0}) {
    const double e = 1e-6 * t;
    const auto v = fiber(kUnit, kShape, t);
    EXPECT_NEAR(v.dphi, (fiber(kUnit, kShape, t + e).phi - fiber(kUnit, kShape, t - e).phi) / (2 * e), 1e-7);
    EXPECT_NEAR(v.ddphi, (fiber(kUnit, kShape, t + e).dphi - fiber(kUnit, kShape, t - e).dphi) / (2 * e), 1e-6);
  }
}

TEST(Fiber, IdentityWithM) {
  // phi'(t) = t^{-delta} (m(t) - lambda F)
  for (double t : {0.2, 0.7, 1.3}) {
    const double lhs = fiber(kUnit, kShape, t).dphi;
    EXPECT_NEAR(lhs, std::pow(t, -kShape.delta) * (fiber_m(kUnit, kShape, t) - kShape.lambda), 1e-14);
  }
}

TEST(Fiber, MatchesEnergyAlongRay) {
  const auto& l = line();
  const Field u = random_field(l.K.size(), 3, true).abs();
  for (double t : {0.3, 1.0, 2.5}) {
    EXPECT_NEAR(fiber(u, l.ps, l.K, t).phi, energy_I(t * u, l.ps, l.K), 1e-12 * std::abs(energy_I(t * u, l.ps, l.K)) + 1e-14);
  }
  EXPECT_THROW(fiber(Field(l.K.size()), l.ps, l.K, 1.0), DegenerateInputError);
}

TEST(LambdaStar, SingleDirection) {
  const auto& l = line();
  const Field u = l.dirs[0];
  const FiberScalars s = fiber_scalars(u, l.base, l.K);
  const auto r = lambda_star({u}, l.base, l.K);
  EXPECT_NEAR(r.empirical, fiber_critical(s, l.base.shape()).m_max / s.F, 1e-14);
  // invariant under scaling of the direction
  EXPECT_NEAR(lambda_star({3.7 * u}, l.base, l.K).empirical / r.empirical, 1.0, 1e-12);
}

TEST(LambdaStar, NonIncreasingInSample) {
  const auto& l = line();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {1, 4, 16, 64}) {
    const std::vector<Field> sub(l.dirs.begin(), l.dirs.begin() + static_cast<std::ptrdiff_t>(n));
    const double v = lambda_star(sub, l.base, l.K).empirical;
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_THROW(lambda_star({}, l.base, l.K), ParameterError);
}

TEST(Nehari, TwoSolutions) {
  const auto& l = line();
  const auto r = solve_nehari(l.ps, l.K, bump_field(l.grid));
  EXPECT_LT(r.I_plus(), 0.0);
  EXPECT_GT(r.I_minus(), 0.0);
  EXPECT_GE(r.u_plus().min(), 0.0);
  EXPECT_GE(r.u_minus().min(), 0.0);
  EXPECT_GT(r.u_minus().max(), r.u_plus().max());
  for (const Field* u : {&r.u_plus(), &r.u_minus()}) {
    const double A = gagliardo_energy(*u, l.K, 2.0);
    EXPECT_LT(std::abs(nehari_constraint(*u, l.ps, l.K)) / A, 1e-8);
    EXPECT_LT(el_residual(*u, l.ps, l.K, nodal_test_set(*u), l.ps.eps_sing()), 1e-6);
  }
  const auto fr = fiber_critical(r.u_plus(), l.ps, l.K);
  ASSERT_TRUE(fr.roots.has_value());
  EXPECT_NEAR(fr.roots->first, 1.0, 1e-10);
}

TEST(Nehari, ResidualShrinksWithRegularization) {
  const auto& l = line();
  std::vector<double> res;
  for (double eps : {1e-4, 1e-6, 1e-8}) {
    const ProblemSpec ps(l.fp, 0.1, 1.3, l.ps.f(), l.ps.g(), l.ps.lambda(), eps);
    const auto b = solve_branch(Branch::Nplus, ps, l.K, bump_field(l.grid));
    res.push_back(el_residual(b.u, l.ps, l.K, nodal_test_set(b.u), 0.0));
  }
  EXPECT_LT(res[1], res[0]);
  EXPECT_LE(res[2], res[1] * 1.01);
  EXPECT_LT(res[2], 1e-6);
}

TEST(Nehari, LambdaAboveThresholdCollapses) {
  const auto& l = line();
  EXPECT_THROW(solve_nehari(l.base.with_lambda(2.0 * l.lstar), l.K, bump_field(l.grid)), BranchCollapseError);
}

TEST(Nehari, RejectsZeroStart) {
  const auto& l = line();
  EXPECT_THROW(solve_branch(Branch::Nplus, l.ps, l.K, Field(l.K.size())), DegenerateInputError);
  EXPECT_THROW(solve_branch(Branch::Nplus, l.ps, l.K, -1.0 * bump_field(l.grid)), DegenerateInputError);
}

TEST(Nehari, ParameterValidation) {
  const auto& l = line();
  const Field one(l.K.size(), 1.0);
  EXPECT_THROW(ProblemSpec(l.fp, 0.0, 1.3, one, one, 1.0), ParameterError);
  EXPECT_THROW(ProblemSpec(l.fp, 0.1, 0.9, one, one, 1.0), ParameterError);
  EXPECT_THROW(ProblemSpec(l.fp, 0.1, 3.5, one, one, 1.0), ParameterError);  // p* = 4
  EXPECT_THROW(ProblemSpec(l.fp, 0.1, 1.3, -1.0 * one, one, 1.0), ParameterError);
  EXPECT_THROW(ProblemSpec(l.fp, 0.1, 1.3, one, one, -1.0), ParameterError);
}

TEST(Sweep, SingleLambdaMatchesDirectSolve) {
  const auto& l = line();
  const auto rows = run_sweep(l.base, l.K, l.dirs, {l.ps.lambda()}, bump_field(l.grid));
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].I_plus.has_value());
  const auto r = solve_nehari(l.ps, l.K, bump_field(l.grid));
  EXPECT_DOUBLE_EQ(*rows[0].I_plus, r.I_plus());
  EXPECT_DOUBLE_EQ(*rows[0].I_minus, r.I_minus());
}

TEST(Sweep, OneTransitionAtSampledThreshold) {
  const auto& l = line();
  std::vector<double> lambdas;
  for (double f : {0.1, 0.5, 0.99, 1.01, 2.0}) lambdas.push_back(f * l.lstar);
  const auto rows = run_sweep(l.base, l.K, l.dirs, lambdas, bump_field(l.grid), {}, false);
  EXPECT_EQ(count_transitions(rows), 1);
  EXPECT_TRUE(rows[2].has_two_roots);
  EXPECT_FALSE(rows[3].has_two_roots);
  EXPECT_THROW(run_sweep(l.base, l.K, l.dirs, {}, bump_field(l.grid)), ConfigError);
}
