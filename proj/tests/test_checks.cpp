#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "subspec/config.hpp"

using namespace subspec;

namespace {

Instance line_instance(double h = 1.0 / 32, std::uint64_t seed = 1) {
  Instance inst("line", DomainSpec(GroupConfig::abelian(1), Box{{-1.0}, {1.0}}), h, FracParams(0.25, 2.0, 1), {}, seed);
  inst.embedding_opts.seed = seed + 7;
  ProblemSetup ps;
  ps.g = constant_weight(10.0);
  ps.g_desc = "const:10";
  inst.problem = ps;
  return inst;
}

Instance& solved_line() {
  static Instance inst = [] {
    Instance i = line_instance();
    solve_eigen(i);
    solve_problem(i);
    return i;
  }();
  return inst;
}

}  // namespace

TEST(Embedding, AlphaPIsInverseEigenvalue) {
  const Instance& inst = solved_line();
  EmbeddingOpts opts;
  opts.restarts = 8;
  const auto S = estimate_embedding_constant(inst.grid, inst.K, inst.fp, 2.0, opts);
  EXPECT_NEAR(S.value * inst.eigen->lambda1, 1.0, 1e-7);
  EXPECT_GT(std::abs(cosine_similarity(S.maximizer, inst.eigen->phi1)), 1 - 1e-6);
}

TEST(Embedding, RunningMaxNonDecreasing) {
  const Instance& inst = solved_line();
  EmbeddingOpts opts;
  opts.restarts = 6;
  const auto S = estimate_embedding_constant(inst.grid, inst.K, inst.fp, inst.fp.p_star(), opts);
  ASSERT_EQ(S.running_max.size(), 6u);
  for (std::size_t k = 1; k < S.running_max.size(); ++k) EXPECT_GE(S.running_max[k], S.running_max[k - 1]);
  EXPECT_DOUBLE_EQ(S.running_max.back(), S.value);
  EXPECT_THROW(estimate_embedding_constant(inst.grid, inst.K, inst.fp, 5.0, opts), ParameterError);
}

TEST(Embedding, TwoNodeBruteForce) {
  // sup of |u0| + |u1| (cell 1) over 2 w (u0-u1)^2 + b0 u0^2 + b1 u1^2 = 1
  const auto grid = build_grid(DomainSpec(GroupConfig::abelian(1), Box{{-1.0}, {1.0}}), 1.0);
  ASSERT_EQ(grid.size(), 2u);
  const double w = 0.3, b0 = 1.0, b1 = 2.0;
  const KernelTable K(2, 1.0, {0.0, w, w, 0.0}, {b0, b1});
  double best = 0.0;
  const int n = 2'000'000;
  for (int k = 0; k < n; ++k) {
    const double th = 2 * std::numbers::pi * k / n;
    const double u0 = std::cos(th), u1 = std::sin(th);
    const double E = 2 * w * (u0 - u1) * (u0 - u1) + b0 * u0 * u0 + b1 * u1 * u1;
    best = std::max(best, (std::abs(u0) + std::abs(u1)) / std::sqrt(E));
  }
  EmbeddingOpts opts;
  opts.restarts = 4;
  const auto S = estimate_embedding_constant(grid, K, FracParams(0.25, 2.0, 1), 1.0, opts);
  EXPECT_NEAR(S.value, best, 1e-6);
}

TEST(Checks, ComparisonBothDirections) {
  const Instance& inst = solved_line();
  const auto up = check_comparison(inst, 1.2);
  EXPECT_TRUE(up.passed) << up.measured.dump();
  const auto same = check_comparison(inst, 1.0);
  EXPECT_TRUE(same.passed) << same.measured.dump();
  EXPECT_LT(same.measured["max_abs_difference"].get<double>(), 1e-8);
  const auto down = check_comparison(inst, 0.8);
  EXPECT_TRUE(down.passed) << down.measured.dump();
}

TEST(Checks, SignChangeConstantStableUnderRefinement) {
  Instance coarse = line_instance(1.0 / 16);
  Instance fine = line_instance(1.0 / 32);
  const auto a = check_sign_change(coarse);
  const auto b = check_sign_change(fine);
  ASSERT_TRUE(a.passed);
  ASSERT_TRUE(b.passed);
  for (const char* key : {"C_plus", "C_minus"}) {
    const double ca = a.measured[key].get<double>(), cb = b.measured[key].get<double>();
    EXPECT_GT(ca, 0.0);
    EXPECT_NEAR(cb / ca, 1.0, 0.2) << key;
  }
}

TEST(Checks, StatusesIndependentOfSeed) {
  VerifyOptions opts;
  opts.checks = {"positivity_simplicity", "fiber_structure", "two_solutions", "operator_monotonicity",
                 "energy_gradient", "hidden_convexity", "lambda_sweep"};
  opts.monotonicity_trials = 100;
  opts.gradient_samples = 20;
  std::vector<std::vector<bool>> statuses;
  for (std::uint64_t seed : {1, 2}) {
    Instance inst = line_instance(1.0 / 32, seed);
    std::vector<bool> s;
    for (const auto& r : run_suite(inst, opts)) s.push_back(r.passed);
    statuses.push_back(s);
  }
  EXPECT_EQ(statuses[0], statuses[1]);
  for (bool b : statuses[0]) EXPECT_TRUE(b);
}

TEST(Checks, SequencingErrors) {
  Instance inst = line_instance(1.0 / 8);
  EXPECT_THROW(check_oracle_equivalence(inst), SequencingError);
  EXPECT_THROW(check_two_solutions(inst), SequencingError);
  inst.problem.reset();
  EXPECT_THROW(prepare_problem(inst), SequencingError);
}

TEST(Checks, UnknownCheckName) {
  Instance inst = line_instance(1.0 / 8);
  VerifyOptions opts;
  opts.checks = {"no_such_check"};
  EXPECT_THROW(applicable_checks(inst, opts), ConfigError);
}

Instance small_ball() {
  return Instance("ball", DomainSpec(GroupConfig::heisenberg(1), GaugeBall{1.0, GroupPoint{0.0, 0.0, 0.0}}), 0.4,
                  FracParams(0.5, 2.0, 4));
}

TEST(Checks, ScalingNeedsMatchedLattice) {
  Instance inst = small_ball();
  solve_eigen(inst);
  EXPECT_TRUE(check_scaling(inst, 2.0).passed);
  EXPECT_TRUE(check_scaling(inst, 0.5).passed);
  // 0.3 h is not representable on the rebuilt lattice
  EXPECT_THROW(check_scaling(inst, 0.3), ConfigError);
}

TEST(Checks, AbortedCheckBecomesFailedReport) {
  Instance inst = small_ball();
  VerifyOptions opts;
  opts.scaling_factors = {0.3};
  opts.checks = {"scaling_r0.3"};
  const auto reports = run_suite(inst, opts);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_FALSE(reports[0].passed);
  EXPECT_NE(reports[0].message.find("check aborted"), std::string::npos);
}

TEST(Weights, CsvMustConform) {
  const std::string dir = SUBSPEC_SCRATCH_DIR;
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/weight3.csv";
  {
    std::ofstream os(path);
    write_field_csv(Field(3, 2.0), os);
  }
  const auto grid = build_grid(DomainSpec(GroupConfig::abelian(1), Box{{-1.0}, {1.0}}), 0.5);
  EXPECT_THROW(csv_weight(path)(grid), ConfigError);
  EXPECT_EQ(constant_weight(2.0)(grid), Field(4, 2.0));
}
