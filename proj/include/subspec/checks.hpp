#pragma once

// Property checks on configured instances. Every check returns a CheckReport carrying the measured
// values and the tolerance it was judged against; none of them throws on a failed property.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "subspec/eigen.hpp"
#include "subspec/errors.hpp"
#include "subspec/field.hpp"
#include "subspec/grid.hpp"
#include "subspec/kernel.hpp"
#include "subspec/nehari.hpp"
#include "subspec/parallel.hpp"
#include "subspec/variational.hpp"

namespace subspec {

// ---------------------------------------------------------------------------------------------
// embedding constants

struct EmbeddingOpts {
  int restarts = 32;
  int max_iter = 3000;
  double tol = 1e-9;
  std::uint64_t seed = 7;
};

struct EmbeddingEstimate {
  double value = 0.0;                // best sup of int |u|^alpha over [u] = 1
  std::vector<double> per_restart;
  std::vector<double> running_max;   // non-decreasing by construction
  Field maximizer;
};

namespace detail {

// ascent of L(u) = log int |u|^alpha - (alpha/p) log [u]^p, kept on [u] = 1 and u >= 0
inline std::pair<double, Field> embedding_ascent(const KernelTable& K, double p, double alpha, Field u,
                                                  const EmbeddingOpts& opts) {
  const double cell = K.cell_measure();
  auto normalize = [&](Field& v) {
    const double E = gagliardo_energy(v, K, p);
    v *= std::pow(E, -1.0 / p);
  };
  auto log_mass = [&](const Field& v) {
    double s = 0.0;
    for (double x : v.values()) {
      if (x > 0.0) s += std::pow(x, alpha);
    }
    return std::log(cell * s);
  };
  // gradient of L at [u] = 1; also returns the norm of the first term for the relative test
  auto gradient = [&](const Field& v, double L, double& ref) {
    const double S = std::exp(L);
    Field g = energy_gradient(v, K, p);
    g *= -alpha / p;
    Field first(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > 0.0) first[i] = alpha * cell * std::pow(v[i], alpha - 1.0) / S;
    }
    ref = norm2(first);
    return g += first;
  };

  for (auto& x : u.values()) x = std::abs(x);
  normalize(u);
  double L = log_mass(u);
  double ref = 0.0;
  Field g = gradient(u, L, ref);
  double a_prev = 0.5;
  for (int it = 0; it < opts.max_iter; ++it) {
    const double gn = norm2(g);
    if (gn <= opts.tol * ref) break;
    double a = std::min(1.0, 2.0 * a_prev);
    bool moved = false;
    while (a > 1e-30) {
      Field v = u;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(v[i] + a * g[i] / cell);
      if (v.is_zero()) {
        a *= 0.5;
        continue;
      }
      normalize(v);
      const double Lv = log_mass(v);
      double ref_v = 0.0;
      Field gv;
      bool accept = Lv >= L + 1e-4 * a * gn * gn / cell;
      if (!accept && std::abs(Lv - L) <= 1e-14 * std::max(1.0, std::abs(L))) {
        gv = gradient(v, Lv, ref_v);
        accept = dot(gv, g) >= 0.0;
      }
      if (accept) {
        if (gv.size() == 0) gv = gradient(v, Lv, ref_v);
        u = std::move(v);
        L = Lv;
        g = std::move(gv);
        ref = ref_v;
        a_prev = a;
        moved = true;
        break;
      }
      a *= 0.5;
    }
    if (!moved) break;
  }
  return {std::exp(L), std::move(u)};
}

}  // namespace detail

/// Empirical S_alpha = sup { int |u|^alpha : [u] = 1 } by projected ascent with random restarts.
/// A lower bound on the discrete supremum. alpha may lie below 1 (needed for the singular term).
inline EmbeddingEstimate estimate_embedding_constant(const GridDomain& grid, const KernelTable& K, const FracParams& fp,
                                                     double alpha, const EmbeddingOpts& opts = {}) {
  if (!(alpha > 0.0) || alpha > fp.p_star() * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "embedding exponent must lie in (0, p_star = " << fp.p_star() << "], got " << alpha;
    throw ParameterError(os.str());
  }
  if (opts.restarts < 1) throw ParameterError("need at least one restart");
  if (grid.size() != K.size()) throw ConfigError("grid and kernel do not conform");
  const auto restarts = static_cast<std::size_t>(opts.restarts);
  std::vector<double> values(restarts);
  std::vector<Field> fields(restarts);
  std::vector<std::exception_ptr> errors(restarts);
  parallel::run_pool(restarts, [&](std::size_t k) {
    try {
      Field init = k == 0 ? bump_field(grid) : random_field(grid.size(), opts.seed + k);
      auto [v, u] = detail::embedding_ascent(K, fp.p(), alpha, std::move(init), opts);
      values[k] = v;
      fields[k] = std::move(u);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  EmbeddingEstimate out;
  out.per_restart = values;
  double best = -1.0;
  for (std::size_t k = 0; k < restarts; ++k) {
    if (values[k] > best) {
      best = values[k];
      out.maximizer = fields[k];
    }
    out.running_max.push_back(best);
  }
  out.value = best;
  return out;
}

// ---------------------------------------------------------------------------------------------
// instances

/// Produces a weight field on a given grid.
using WeightFn = std::function<Field(const GridDomain&)>;

inline WeightFn constant_weight(double c) {
  return [c](const GridDomain& grid) { return Field(grid.size(), c); };
}

/// Node-indexed CSV; only usable on the grid it was written for.
inline WeightFn csv_weight(const std::string& path) {
  return [path](const GridDomain& grid) {
    Field f = read_field_csv(path);
    if (f.size() != grid.size()) {
      throw ConfigError("weight file " + path + " has " + std::to_string(f.size()) + " values, grid has " +
                        std::to_string(grid.size()) + " nodes");
    }
    return f;
  };
}

struct ProblemSetup {
  double delta = 0.1;
  double q = 1.3;
  WeightFn f = constant_weight(1.0);
  WeightFn g = constant_weight(1.0);
  std::string f_desc = "const:1";
  std::string g_desc = "const:1";
  std::optional<double> lambda;  // empty selects lambda_fraction * empirical lambda_*
  double lambda_fraction = 0.5;
  std::size_t directions = 64;
  double eps_sing = 1e-8;
};

struct Instance {
  Instance(std::string name_, DomainSpec spec_, double h_, FracParams fp_, TruncationPolicy policy_ = {},
           std::uint64_t seed_ = 1)
      : name(std::move(name_)),
        spec(std::move(spec_)),
        h(h_),
        fp(fp_),
        policy(policy_),
        seed(seed_),
        grid(build_grid(spec, h)),
        K(assemble(grid, fp, policy)) {}

  std::string name;
  DomainSpec spec;
  double h;
  FracParams fp;
  TruncationPolicy policy;
  std::uint64_t seed;
  GridDomain grid;
  KernelTable K;
  SolverOpts eigen_opts;
  NehariOpts nehari_opts;
  EmbeddingOpts embedding_opts;
  std::optional<ProblemSetup> problem;

  std::optional<EigenResult> eigen;
  std::optional<ProblemSpec> pspec;
  std::optional<LambdaStar> lstar;
  std::optional<NehariResult> nehari;

  std::string descriptor() const {
    std::ostringstream os;
    os.precision(12);
    os << spec.describe() << " h=" << h << " s=" << fp.s() << " p=" << fp.p() << " nodes=" << grid.size()
       << " key=" << kernel_cache_key(grid, fp, policy);
    return os.str();
  }
};

inline Field sample_weight(const GridDomain& grid, const WeightFn& fn) { return fn(grid); }

inline void solve_eigen(Instance& inst) {
  inst.eigen = minimize_rayleigh(inst.K, inst.fp.p(), bump_field(inst.grid), inst.eigen_opts);
}

/// Builds the ProblemSpec on the instance grid; resolves lambda "auto" through the sampled lambda_*.
inline void prepare_problem(Instance& inst) {
  if (!inst.problem) throw SequencingError("instance " + inst.name + " has no problem section");
  const ProblemSetup& ps = *inst.problem;
  const Field f = sample_weight(inst.grid, ps.f);
  const Field g = sample_weight(inst.grid, ps.g);
  ProblemSpec spec(inst.fp, ps.delta, ps.q, f, g, 1.0, ps.eps_sing);
  const auto dirs = sample_directions(inst.grid, ps.directions, inst.seed);
  inst.lstar = lambda_star(dirs, spec, inst.K);
  const double lambda = ps.lambda ? *ps.lambda : ps.lambda_fraction * inst.lstar->empirical;
  inst.pspec = spec.with_lambda(lambda);
}

inline void solve_problem(Instance& inst) {
  if (!inst.pspec) prepare_problem(inst);
  inst.nehari = solve_nehari(*inst.pspec, inst.K, bump_field(inst.grid), inst.nehari_opts);
}

// ---------------------------------------------------------------------------------------------
// reports

struct CheckReport {
  std::string name;
  std::string instance;
  std::string reference;  // the property being checked, in words
  bool passed = false;
  nlohmann::json measured = nlohmann::json::object();
  nlohmann::json tolerance = nlohmann::json::object();
  std::string message;
};

inline nlohmann::json to_json(const CheckReport& r) {
  return {{"check", r.name},     {"instance", r.instance},   {"reference", r.reference},
          {"status", r.passed ? "pass" : "fail"}, {"measured", r.measured}, {"tolerance", r.tolerance},
          {"message", r.message}};
}

namespace detail {

inline CheckReport start_report(const std::string& name, const Instance& inst, const std::string& reference) {
  CheckReport r;
  r.name = name;
  r.instance = inst.name + ": " + inst.descriptor();
  r.reference = reference;
  return r;
}

inline const EigenResult& require_eigen(const Instance& inst) {
  if (!inst.eigen) throw SequencingError("eigen instance " + inst.name + " was not solved");
  return *inst.eigen;
}

inline const NehariResult& require_nehari(const Instance& inst) {
  if (!inst.nehari || !inst.pspec) throw SequencingError("singular problem on " + inst.name + " was not solved");
  return *inst.nehari;
}

inline double lp_distance_ratio(const Field& a, const Field& b, double cell, double p) {
  return std::pow(lp_norm_pow(a - b, cell, p) / lp_norm_pow(b, cell, p), 1.0 / p);
}

}  // namespace detail

inline CheckReport check_oracle_equivalence(const Instance& inst, double tol = 1e-8) {
  auto r = detail::start_report("oracle_equivalence", inst, "first eigenvalue: nonlinear minimizer vs dense p=2 eigensolve");
  const auto& e = detail::require_eigen(inst);
  if (inst.fp.p() != 2.0) throw ParameterError("the dense oracle exists only for p = 2");
  const double oracle = p2_oracle(inst.K);
  const double rel = std::abs(e.lambda1 - oracle) / oracle;
  r.measured = {{"lambda1", e.lambda1}, {"oracle", oracle}, {"relative_error", rel}, {"iterations", e.iterations}};
  r.tolerance = {{"relative", tol}};
  r.passed = rel < tol;
  return r;
}

/// Min of phi1 > 0, and restarts from random (one of them sign-mixed) agree up to cosine 1 - tol.
inline CheckReport check_positivity_simplicity(const Instance& inst, int restarts = 5, double tol = 1e-6) {
  auto r = detail::start_report("positivity_simplicity", inst,
                                "first eigenfunction strictly positive; first eigenvalue simple");
  const auto& e = detail::require_eigen(inst);
  std::vector<EigenResult> runs(static_cast<std::size_t>(restarts));
  std::vector<std::exception_ptr> errors(runs.size());
  parallel::run_pool(runs.size(), [&](std::size_t k) {
    try {
      // restart 0 starts sign-mixed (adversarial)
      const Field init = random_field(inst.K.size(), inst.seed + 100 + k, k == 0);
      runs[k] = minimize_rayleigh(inst.K, inst.fp.p(), init, inst.eigen_opts);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  double min_value = e.phi1.min();
  double min_cos = 1.0;
  double lambda_spread = 0.0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    min_value = std::min(min_value, runs[k].phi1.min());
    min_cos = std::min(min_cos, cosine_similarity(runs[k].phi1, e.phi1));
    lambda_spread = std::max(lambda_spread, std::abs(runs[k].lambda1 - e.lambda1) / e.lambda1);
    for (std::size_t j = 0; j < k; ++j) min_cos = std::min(min_cos, cosine_similarity(runs[k].phi1, runs[j].phi1));
  }
  r.measured = {{"min_phi1", min_value}, {"min_pairwise_cosine", min_cos}, {"restarts", restarts + 1},
                {"max_relative_lambda_spread", lambda_spread}};
  r.tolerance = {{"cosine", 1.0 - tol}, {"min_phi1", 0.0}};
  r.passed = min_value > 0.0 && min_cos > 1.0 - tol;
  return r;
}

/// lambda1 on the dilation-matched grid times r^{ps} reproduces lambda1.
inline CheckReport check_scaling(const Instance& inst, double factor, double tol = 1e-10) {
  auto r = detail::start_report("scaling_r" + [&] {
    std::ostringstream os;
    os << factor;
    return os.str();
  }(), inst, "dilation homogeneity of the seminorm: lambda1(D_r Omega) r^{ps} = lambda1(Omega)");
  const auto& e = detail::require_eigen(inst);
  const GridDomain dilated = dilate_grid(inst.grid, factor);
  // the matched grid must be exactly the lattice of the dilated domain
  std::vector<double> spacing(inst.grid.spacing().begin(), inst.grid.spacing().end());
  for (std::size_t c = 0; c < spacing.size(); ++c) {
    spacing[c] *= inst.grid.group().weight(static_cast<int>(c)) == 2 ? factor * factor : factor;
  }
  const GridDomain rebuilt = build_grid(inst.spec.dilated(factor), spacing, inst.grid.base_h());
  if (rebuilt.flat_nodes() != dilated.flat_nodes()) {
    throw ConfigError("dilated grid is not lattice-matched for factor " + std::to_string(factor));
  }
  const KernelTable K2 = assemble(dilated, inst.fp, inst.policy);
  const EigenResult e2 = minimize_rayleigh(K2, inst.fp.p(), bump_field(dilated), inst.eigen_opts);
  const double scaled = e2.lambda1 * std::pow(factor, inst.fp.ps());
  const double rel = std::abs(scaled - e.lambda1) / e.lambda1;
  r.measured = {{"lambda1", e.lambda1}, {"lambda1_dilated", e2.lambda1}, {"ratio", e2.lambda1 / e.lambda1},
                {"expected_ratio", std::pow(factor, -inst.fp.ps())}, {"relative_error", rel},
                {"measure_ratio", measure(dilated) / measure(inst.grid)}};
  r.tolerance = {{"relative", tol}};
  r.passed = rel < tol;
  return r;
}

/// Second p=2 eigenvector changes sign; reports nodal-set measures and nu |Omega_pm|^{ps/Q}.
inline CheckReport check_sign_change(const Instance& inst) {
  auto r = detail::start_report("sign_change", inst,
                                "second eigenfunction is sign-changing; nu >= C |Omega_+|^{-ps/Q}");
  if (inst.fp.p() != 2.0) throw ParameterError("sign-change check is supported only at p = 2");
  const P2Spectrum sp = p2_spectrum(inst.K);
  if (sp.values.size() < 2) throw DegenerateInputError("need at least two nodes for a second eigenvector");
  const Field v = sp.eigenvector(1);
  const double cell = inst.K.cell_measure();
  const double scale = v.max_abs();
  std::size_t pos = 0, neg = 0;
  for (double x : v.values()) {
    if (x > 1e-12 * scale) ++pos;
    else if (x < -1e-12 * scale) ++neg;
  }
  const double mp = cell * static_cast<double>(pos);
  const double mn = cell * static_cast<double>(neg);
  const double nu = sp.values(1);
  const double ex = inst.fp.ps() / inst.fp.Q();
  r.measured = {{"nu", nu}, {"lambda1", sp.values(0)}, {"measure_plus", mp}, {"measure_minus", mn},
                {"C_plus", mp > 0 ? nu * std::pow(mp, ex) : 0.0}, {"C_minus", mn > 0 ? nu * std::pow(mn, ex) : 0.0}};
  r.tolerance = {{"sign_threshold_relative", 1e-12}};
  r.passed = pos > 0 && neg > 0;
  return r;
}

/// Diagnostic lower bound C^{-p} |Omega|^{-ps/Q} with C from the critical embedding estimate.
inline CheckReport check_lower_bound(const Instance& inst) {
  auto r = detail::start_report("lambda1_lower_bound", inst, "lambda1 >= C^{-p} |Omega|^{-ps/Q}");
  const auto& e = detail::require_eigen(inst);
  const double pstar = inst.fp.p_star();
  const auto S = estimate_embedding_constant(inst.grid, inst.K, inst.fp, pstar, inst.embedding_opts);
  // ||u||_{p*} <= C [u] with C = S_{p*}^{1/p*}
  const double C = std::pow(S.value, 1.0 / pstar);
  const double bound = lambda1_lower_bound(inst.grid, inst.fp, C);
  r.measured = {{"lambda1", e.lambda1}, {"bound", bound}, {"S_pstar_empirical", S.value}, {"C_empirical", C},
                {"measure", measure(inst.grid)}};
  r.passed = bound <= e.lambda1 * (1.0 + 1e-12);
  return r;
}

/// Two roots t1 < t_max < t2 with phi''(t1) > 0 > phi''(t2) and m(t_i) = lambda F, for random directions.
inline CheckReport check_fiber_structure(const Instance& inst, std::size_t count = 100, double tol = 1e-10) {
  auto r = detail::start_report("fiber_structure", inst,
                                "fiber map has exactly two critical points below lambda_*, N+ then N-");
  if (!inst.pspec) throw SequencingError("problem on " + inst.name + " was not prepared");
  const ProblemSpec& ps = *inst.pspec;
  std::size_t ok = 0;
  double worst = 0.0;
  std::string first_failure;
  for (std::size_t k = 0; k < count; ++k) {
    const Field u = random_field(inst.K.size(), inst.seed + 5000 + k, true).abs();
    const FiberScalars s = fiber_scalars(u, ps, inst.K);
    try {
      const FiberReport fr = fiber_critical(s, ps.shape());
      if (!fr.roots) {
        if (first_failure.empty()) first_failure = "direction " + std::to_string(k) + " has no roots";
        continue;
      }
      const auto [t1, t2] = *fr.roots;
      const double e1 = std::abs(fiber_m(s, ps.shape(), t1) - fr.lam_F) / fr.lam_F;
      const double e2 = std::abs(fiber_m(s, ps.shape(), t2) - fr.lam_F) / fr.lam_F;
      worst = std::max({worst, e1, e2});
      if (t1 < fr.t_max && fr.t_max < t2 && fr.ddphi_signs.first > 0 && fr.ddphi_signs.second < 0 && e1 < tol &&
          e2 < tol) {
        ++ok;
      } else if (first_failure.empty()) {
        first_failure = "direction " + std::to_string(k) + " violates root ordering or curvature signs";
      }
    } catch (const Error& err) {
      if (first_failure.empty()) first_failure = err.what();
    }
  }
  r.measured = {{"directions", count}, {"passing", ok}, {"max_relative_m_mismatch", worst},
                {"lambda", ps.lambda()}, {"lambda_star_empirical", inst.lstar ? inst.lstar->empirical : 0.0}};
  r.tolerance = {{"relative_m", tol}};
  r.message = first_failure;
  r.passed = ok == count;
  return r;
}

/// Two distinct nonnegative solutions with I(u+) < 0 < I(u-), on the Nehari set, solving the equation.
inline CheckReport check_two_solutions(const Instance& inst, double nehari_tol = 1e-8, double el_tol = 1e-6,
                                       double support = 1e-6) {
  auto r = detail::start_report("two_solutions", inst,
                                "two distinct nonnegative solutions, one on N+ (I<0), one on N- (I>0)");
  const auto& n = detail::require_nehari(inst);
  const ProblemSpec& ps = *inst.pspec;
  const double cell = inst.K.cell_measure();
  const double sep = detail::lp_distance_ratio(n.u_plus(), n.u_minus(), cell, ps.p());
  auto nehari_rel = [&](const Field& u) {
    return std::abs(nehari_constraint(u, ps, inst.K)) / gagliardo_energy(u, inst.K, ps.p());
  };
  const double nr_plus = nehari_rel(n.u_plus());
  const double nr_minus = nehari_rel(n.u_minus());
  const double eps = ps.eps_sing();
  const double el_plus = el_residual(n.u_plus(), ps, inst.K, nodal_test_set(n.u_plus(), support), eps);
  const double el_minus = el_residual(n.u_minus(), ps, inst.K, nodal_test_set(n.u_minus(), support), eps);
  const double el0_plus = el_residual(n.u_plus(), ps, inst.K, nodal_test_set(n.u_plus(), support));
  const double el0_minus = el_residual(n.u_minus(), ps, inst.K, nodal_test_set(n.u_minus(), support));
  r.measured = {{"I_plus", n.I_plus()}, {"I_minus", n.I_minus()}, {"separation_lp", sep},
                {"min_u_plus", n.u_plus().min()}, {"min_u_minus", n.u_minus().min()},
                {"sup_u_plus", n.u_plus().max()}, {"sup_u_minus", n.u_minus().max()},
                {"nehari_residual_plus", nr_plus}, {"nehari_residual_minus", nr_minus},
                {"el_residual_regularized_plus", el_plus}, {"el_residual_regularized_minus", el_minus},
                {"el_residual_plus", el0_plus}, {"el_residual_minus", el0_minus},
                {"lambda", ps.lambda()}, {"lambda_over_lambda_star", inst.lstar ? ps.lambda() / inst.lstar->empirical : 0.0}};
  r.tolerance = {{"nehari_relative", nehari_tol}, {"el_residual", el_tol}, {"separation", 0.1}, {"support", support}};
  r.passed = n.I_plus() < 0.0 && n.I_minus() > 0.0 && sep > 0.1 && n.u_plus().min() >= 0.0 &&
             n.u_minus().min() >= 0.0 && nr_plus < nehari_tol && nr_minus < nehari_tol && el_plus < el_tol &&
             el_minus < el_tol;
  return r;
}

/// [u+] below and [u-] above the closed-form bounds with empirical embedding constants.
inline CheckReport check_norm_bounds(const Instance& inst) {
  auto r = detail::start_report("norm_bounds", inst,
                                "seminorm bounds: [u+] <= N+ bound, [u-] >= N- bound (empirical constants)");
  const auto& n = detail::require_nehari(inst);
  const ProblemSpec& ps = *inst.pspec;
  const auto S1 = estimate_embedding_constant(inst.grid, inst.K, inst.fp, 1.0 - ps.delta(), inst.embedding_opts);
  const auto Sq = estimate_embedding_constant(inst.grid, inst.K, inst.fp, ps.q() + 1.0, inst.embedding_opts);
  const double up = std::pow(gagliardo_energy(n.u_plus(), inst.K, ps.p()), 1.0 / ps.p());
  const double um = std::pow(gagliardo_energy(n.u_minus(), inst.K, ps.p()), 1.0 / ps.p());
  const double bp = nplus_norm_bound(ps, S1.value);
  const double bm = nminus_norm_bound(ps, Sq.value);
  const EmbeddingConstants S{Sq.value, S1.value};
  r.measured = {{"seminorm_u_plus", up}, {"bound_plus", bp}, {"seminorm_u_minus", um}, {"bound_minus", bm},
                {"S_one_minus_delta", S1.value}, {"S_q_plus_1", Sq.value},
                {"lambda_star_empirical", inst.lstar ? inst.lstar->empirical : 0.0},
                {"lambda_star_formula_literal", lambda_star_literal(ps.shape(), S, ps.f().max_abs(), ps.g().max_abs())},
                {"lambda_star_formula_rederived",
                 lambda_star_rederived(ps.shape(), S, ps.f().max_abs(), ps.g().max_abs())}};
  r.passed = up <= bp && um >= bm;
  return r;
}

/// Re-solve the N+ branch with factor * f; ordered nodewise in the direction of the factor.
inline CheckReport check_comparison(const Instance& inst, double factor = 1.2, double tol = 1e-8) {
  auto r = detail::start_report("comparison", inst,
                                "weak comparison: a larger singular weight gives a larger solution nodewise");
  const auto& n = detail::require_nehari(inst);
  const ProblemSpec& ps = *inst.pspec;
  Field f2 = ps.f();
  f2 *= factor;
  BranchResult v;
  try {
    v = solve_branch(Branch::Nplus, ps.with_f(f2), inst.K, bump_field(inst.grid), inst.nehari_opts);
  } catch (const Error& e) {
    throw SequencingError(std::string("comparison re-solve failed: ") + e.what());
  }
  const Field diff = v.u - n.u_plus();  // should be >= 0 for factor > 1
  const double sgn = factor >= 1.0 ? 1.0 : -1.0;
  double worst = std::numeric_limits<double>::infinity();
  for (double d : diff.values()) worst = std::min(worst, sgn * d);
  r.measured = {{"factor", factor}, {"min_signed_difference", worst}, {"max_abs_difference", diff.max_abs()}};
  r.tolerance = {{"nodewise", tol}};
  r.passed = worst >= -tol;
  return r;
}

/// sup u+ across refinements varies by less than 50%; lambda1 successive changes below 5%.
inline CheckReport check_linfty_stability(const Instance& inst, const std::vector<double>& h_list,
                                          double sup_tol = 0.5, double eigen_tol = 0.05) {
  auto r = detail::start_report("linfty_stability", inst,
                                "solutions stay bounded under refinement; lambda1 refinement is Cauchy");
  if (!inst.pspec || !inst.problem) throw SequencingError("problem on " + inst.name + " was not prepared");
  if (h_list.size() < 2) throw ConfigError("refinement check needs at least two spacings");
  std::vector<double> sups(h_list.size()), lambdas(h_list.size());
  std::vector<std::exception_ptr> errors(h_list.size());
  parallel::run_pool(h_list.size(), [&](std::size_t k) {
    try {
      Instance refined(inst.name, inst.spec, h_list[k], inst.fp, inst.policy, inst.seed);
      refined.eigen_opts = inst.eigen_opts;
      refined.nehari_opts = inst.nehari_opts;
      const Field f = sample_weight(refined.grid, inst.problem->f);
      const Field g = sample_weight(refined.grid, inst.problem->g);
      const ProblemSpec ps(inst.fp, inst.pspec->delta(), inst.pspec->q(), f, g, inst.pspec->lambda(),
                           inst.pspec->eps_sing());
      sups[k] = solve_branch(Branch::Nplus, ps, refined.K, bump_field(refined.grid), inst.nehari_opts).u.max();
      lambdas[k] = minimize_rayleigh(refined.K, inst.fp.p(), bump_field(refined.grid), inst.eigen_opts).lambda1;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (auto& e : errors) {
    if (e) {
      try {
        std::rethrow_exception(e);
      } catch (const Error& err) {
        throw SequencingError(std::string("refinement solve failed: ") + err.what());
      }
    }
  }
  const double smax = *std::max_element(sups.begin(), sups.end());
  const double smin = *std::min_element(sups.begin(), sups.end());
  double worst_step = 0.0;
  for (std::size_t k = 1; k < lambdas.size(); ++k) {
    worst_step = std::max(worst_step, std::abs(lambdas[k] - lambdas[k - 1]) / lambdas[k]);
  }
  r.measured = {{"h", h_list}, {"sup_u_plus", sups}, {"lambda1", lambdas}, {"sup_variation", (smax - smin) / smin},
                {"max_successive_lambda_change", worst_step}};
  r.tolerance = {{"sup_variation", sup_tol}, {"successive_lambda_change", eigen_tol}};
  r.passed = (smax - smin) / smin < sup_tol && worst_step < eigen_tol;
  return r;
}

/// Exactly one has_two_roots transition across the sweep, located at the sampled lambda_*.
inline CheckReport check_lambda_sweep(const Instance& inst, const std::vector<double>& fractions) {
  auto r = detail::start_report("lambda_sweep", inst,
                                "two-root regime ends once as lambda crosses the sampled lambda_*");
  if (!inst.pspec || !inst.lstar) throw SequencingError("problem on " + inst.name + " was not prepared");
  const auto dirs = sample_directions(inst.grid, inst.problem ? inst.problem->directions : 64, inst.seed);
  std::vector<double> lambdas;
  for (double fr : fractions) lambdas.push_back(fr * inst.lstar->empirical);
  const auto rows = run_sweep(*inst.pspec, inst.K, dirs, lambdas, bump_field(inst.grid), inst.nehari_opts, false);
  const int transitions = count_transitions(rows);
  bool consistent = true;
  std::vector<bool> flags;
  for (const auto& row : rows) {
    flags.push_back(row.has_two_roots);
    consistent = consistent && (row.has_two_roots == (row.lambda < inst.lstar->empirical));
  }
  r.measured = {{"fractions", fractions}, {"has_two_roots", flags}, {"transitions", transitions},
                {"lambda_star_empirical", inst.lstar->empirical}};
  r.passed = transitions == 1 && consistent;
  return r;
}

namespace detail {

inline Field random_signed(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Field f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = nd(rng);
  return f;
}

// Newton on std::erf; |y| < 1
inline double inverse_erf(double y) {
  double x = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double dx = (std::erf(x) - y) / (2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x));
    x -= dx;
    if (std::abs(dx) < 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

// normal quantiles at (k + 1/2)/n in random node order: pairwise gaps stay of order 1/n
inline Field stratified_normal(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> q(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double pr = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    q[k] = std::numbers::sqrt2 * inverse_erf(2.0 * pr - 1.0);
  }
  std::shuffle(q.begin(), q.end(), rng);
  return Field(std::move(q));
}

// some difference u_i - u_j (or u_i itself) passes within 10 eps |v_i - v_j| of zero
inline bool segment_near_kink(const Field& u, const Field& v, double eps) {
  const std::size_t n = u.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(u[i]) <= 10.0 * eps * std::abs(v[i])) return true;
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(u[i] - u[j]) <= 10.0 * eps * std::abs(v[i] - v[j])) return true;
    }
  }
  return false;
}

}  // namespace detail

/// <Au - Av, u - v> > 0 for random pairs at each p; equality with [u-v]^2 at p = 2 and v = 0.
inline CheckReport check_monotonicity(const Instance& inst, const std::vector<double>& ps_list = {1.5, 2.0, 3.0},
                                      int trials = 1000) {
  auto r = detail::start_report("operator_monotonicity", inst,
                                "strict monotonicity of the operator; Simon-type lower bound");
  std::mt19937_64 rng(inst.seed + 9000);
  bool ok = true;
  nlohmann::json per_p = nlohmann::json::array();
  for (double p : ps_list) {
    const FracParams fp(inst.fp.s(), p, inst.fp.Q());
    const KernelTable K = p == inst.fp.p() ? inst.K : assemble(inst.grid, fp, inst.policy);
    double min_lhs = std::numeric_limits<double>::infinity();
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int k = 0; k < trials; ++k) {
      const Field u = detail::random_signed(rng, K.size());
      const Field v = detail::random_signed(rng, K.size());
      const MonotonicityGap gap = monotonicity_gap(u, v, K, p);
      min_lhs = std::min(min_lhs, gap.lhs);
      min_ratio = std::min(min_ratio, gap.ratio());
    }
    nlohmann::json entry = {{"p", p}, {"min_lhs", min_lhs}, {"empirical_C", min_ratio}};
    ok = ok && min_lhs > 0.0;
    if (p == 2.0) {
      const Field u = detail::random_signed(rng, K.size());
      const double ratio = monotonicity_gap(u, Field(K.size()), K, p).ratio();
      entry["ratio_v0"] = ratio;
      ok = ok && std::abs(ratio - 1.0) < 1e-12;
    }
    per_p.push_back(entry);
  }
  r.measured = {{"per_p", per_p}, {"trials", trials}};
  r.tolerance = {{"p2_ratio", 1e-12}};
  r.passed = ok;
  return r;
}

/// Central differences of the energy and of the regularized singular functional against the gradients.
inline CheckReport check_gradient(const Instance& inst, const std::vector<double>& ps_list = {1.5, 2.0, 3.0},
                                  int samples = 100, double eps = 1e-5, double tol = 1e-6) {
  auto r = detail::start_report("energy_gradient", inst, "exact gradient of the discrete energy (central differences)");
  std::mt19937_64 rng(inst.seed + 7000);
  const double orthogonal_floor = 0.1 / std::sqrt(static_cast<double>(inst.K.size()));
  double worst = 0.0;
  nlohmann::json per_p = nlohmann::json::array();
  for (double p : ps_list) {
    const FracParams fp(inst.fp.s(), p, inst.fp.Q());
    const KernelTable K = p == inst.fp.p() ? inst.K : assemble(inst.grid, fp, inst.policy);
    double w = 0.0;
    int redrawn = 0, near_orthogonal = 0;
    for (int k = 0; k < samples; ++k) {
      Field u = detail::stratified_normal(rng, K.size());
      Field v = detail::random_signed(rng, K.size());
      // |t|^p is not C^3 at 0: a segment through a kink only agrees to O(eps^{p-1})
      while (p != 2.0 && detail::segment_near_kink(u, v, eps)) {
        ++redrawn;
        u = detail::stratified_normal(rng, K.size());
        v = detail::random_signed(rng, K.size());
      }
      const Field grad = energy_gradient(u, K, p);
      // a nearly orthogonal v makes |exact| sink to the difference quotient's rounding floor
      while (std::abs(cosine_similarity(grad, v)) < orthogonal_floor) {
        ++near_orthogonal;
        v = detail::random_signed(rng, K.size());
      }
      const double exact = dot(grad, v);
      const double fd = (gagliardo_energy(u + eps * v, K, p) - gagliardo_energy(u - eps * v, K, p)) / (2.0 * eps);
      w = std::max(w, std::abs(exact - fd) / std::abs(exact));
    }
    per_p.push_back({{"p", p}, {"max_relative_error", w}, {"redrawn_near_kink", redrawn},
                     {"redrawn_near_orthogonal", near_orthogonal}});
    worst = std::max(worst, w);
  }
  if (inst.pspec) {
    const ProblemSpec& ps = *inst.pspec;
    double w = 0.0;
    int near_orthogonal = 0;
    for (int k = 0; k < samples; ++k) {
      // positive fields away from zero, where the regularized functional is smooth
      Field u = detail::random_signed(rng, inst.K.size()).abs();
      for (auto& x : u.values()) x += 0.05;
      Field v = detail::random_signed(rng, inst.K.size());
      const double reg = ps.eps_sing();
      const Field grad = gradient_I_regularized(u, ps, inst.K, reg);
      while (std::abs(cosine_similarity(grad, v)) < orthogonal_floor) {
        ++near_orthogonal;
        v = detail::random_signed(rng, inst.K.size());
      }
      const double exact = dot(grad, v);
      const double fd = (energy_I_regularized(u + eps * v, ps, inst.K, reg) -
                         energy_I_regularized(u - eps * v, ps, inst.K, reg)) / (2.0 * eps);
      w = std::max(w, std::abs(exact - fd) / std::abs(exact));
    }
    per_p.push_back({{"functional", "regularized singular energy"}, {"max_relative_error", w},
                     {"redrawn_near_orthogonal", near_orthogonal}});
    worst = std::max(worst, w);
  }
  r.measured = {{"per_case", per_p}, {"samples", samples}, {"epsilon", eps}};
  r.tolerance = {{"relative", tol}};
  r.passed = worst < tol;
  return r;
}

/// Closed-form complement kernel mass where one exists: centre of a gauge ball, or any node of a
/// one-dimensional box.
inline std::optional<double> exact_complement_mass(const DomainSpec& spec, const FracParams& fp,
                                                   std::span<const double> x) {
  const double ps = fp.ps();
  if (const auto* b = std::get_if<GaugeBall>(&spec.shape())) {
    if (detail::distance_raw(spec.group(), x, b->center.coords()) != 0.0) return std::nullopt;
    return sphere_constant(spec.group()) * std::pow(b->radius, -ps) / ps;
  }
  const auto& box = std::get<Box>(spec.shape());
  if (spec.group().topo_dim() != 1) return std::nullopt;
  return (std::pow(x[0] - box.lo[0], -ps) + std::pow(box.hi[0] - x[0], -ps)) / ps;
}

inline CheckReport check_complement_quadrature(const Instance& inst, double tol = 0.01) {
  auto r = detail::start_report("complement_quadrature", inst,
                                "complement kernel mass against its closed form (polar decomposition)");
  std::vector<double> point;
  if (const auto* b = std::get_if<GaugeBall>(&inst.spec.shape())) {
    point = b->center.vec();
  } else {
    const auto& box = std::get<Box>(inst.spec.shape());
    for (std::size_t c = 0; c < box.lo.size(); ++c) point.push_back(0.5 * (box.lo[c] + box.hi[c]));
  }
  const auto exact = exact_complement_mass(inst.spec, inst.fp, point);
  if (!exact) throw ConfigError("no closed-form complement mass for " + inst.spec.describe());
  const double quad = complement_mass(inst.grid, inst.fp, inst.policy, point);
  const double rel = std::abs(quad - *exact) / *exact;
  r.measured = {{"point", point}, {"quadrature", quad}, {"closed_form", *exact}, {"relative_error", rel},
                {"sigma_S", sphere_constant(inst.grid.group())}};
  r.tolerance = {{"relative", tol}};
  r.passed = rel < tol;
  return r;
}

/// Energy convexity along z(t) = ((1-t) v^p + t u^p)^{1/p}, and [|u|] <= [u].
inline CheckReport check_hidden_convexity(const Instance& inst, int trials = 100, double tol = 1e-12) {
  auto r = detail::start_report("hidden_convexity", inst,
                                "convexity along p-power interpolation; energy of |u| never exceeds that of u");
  const double p = inst.fp.p();
  const double cell = inst.K.cell_measure();
  std::mt19937_64 rng(inst.seed + 11000);
  auto unit = [&](Field f) {
    f = f.abs();
    f *= std::pow(lp_norm_pow(f, cell, p), -1.0 / p);
    return f;
  };
  int convexity_violations = 0, abs_violations = 0;
  double worst_convexity = -std::numeric_limits<double>::infinity();
  double worst_abs = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < trials; ++k) {
    const Field u = unit(detail::random_signed(rng, inst.K.size()));
    const Field v = unit(detail::random_signed(rng, inst.K.size()));
    const double Eu = gagliardo_energy(u, inst.K, p);
    const double Ev = gagliardo_energy(v, inst.K, p);
    for (double t : {0.25, 0.5, 0.75}) {
      Field z(u.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = std::pow((1.0 - t) * std::pow(v[i], p) + t * std::pow(u[i], p), 1.0 / p);
      }
      const double rhs = (1.0 - t) * Ev + t * Eu;
      const double excess = (gagliardo_energy(z, inst.K, p) - rhs) / rhs;
      worst_convexity = std::max(worst_convexity, excess);
      if (excess > tol) ++convexity_violations;
    }
    const Field w = detail::random_signed(rng, inst.K.size());
    const double Ew = gagliardo_energy(w, inst.K, p);
    const double excess = (gagliardo_energy(w.abs(), inst.K, p) - Ew) / Ew;
    worst_abs = std::max(worst_abs, excess);
    if (excess > tol) ++abs_violations;
  }
  r.measured = {{"trials", trials}, {"convexity_violations", convexity_violations},
                {"abs_violations", abs_violations}, {"max_relative_convexity_excess", worst_convexity},
                {"max_relative_abs_excess", worst_abs}};
  r.tolerance = {{"relative", tol}};
  r.passed = convexity_violations == 0 && abs_violations == 0;
  return r;
}

// ---------------------------------------------------------------------------------------------
// suite

struct VerifyOptions {
  std::vector<std::string> checks;  // empty runs every applicable check
  int restarts = 5;
  std::vector<double> scaling_factors{2.0, 0.5};
  std::vector<double> refinement_h;   // empty skips the refinement check
  double comparison_factor = 1.2;
  std::size_t fiber_directions = 100;
  std::vector<double> sweep_fractions{0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.01, 1.1, 1.5, 2.0};
  int monotonicity_trials = 1000;
  int gradient_samples = 100;
  int convexity_trials = 100;
  bool norm_bounds = true;
};

inline std::vector<std::string> applicable_checks(const Instance& inst, const VerifyOptions& opts) {
  std::vector<std::string> names = {"complement_quadrature", "energy_gradient", "hidden_convexity",
                                    "operator_monotonicity", "positivity_simplicity", "lambda1_lower_bound"};
  for (double f : opts.scaling_factors) {
    std::ostringstream os;
    os << "scaling_r" << f;
    names.push_back(os.str());
  }
  if (inst.fp.p() == 2.0) {
    names.push_back("oracle_equivalence");
    names.push_back("sign_change");
  }
  if (inst.problem) {
    names.insert(names.end(), {"fiber_structure", "two_solutions", "comparison", "lambda_sweep"});
    if (opts.norm_bounds) names.push_back("norm_bounds");
    if (!opts.refinement_h.empty()) names.push_back("linfty_stability");
  }
  if (!opts.checks.empty()) {
    std::vector<std::string> selected;
    for (const auto& n : opts.checks) {
      if (std::find(names.begin(), names.end(), n) == names.end()) {
        throw ConfigError("check '" + n + "' is unknown or not applicable to instance " + inst.name);
      }
      selected.push_back(n);
    }
    names = selected;
  }
  return names;
}

/// Solves what the checks need, runs them on a work pool and returns reports sorted by check name.
/// Check-level failures (exceptions) become failed reports carrying the message.
inline std::vector<CheckReport> run_suite(Instance& inst, const VerifyOptions& opts) {
  const auto names = applicable_checks(inst, opts);
  if (!inst.eigen) solve_eigen(inst);
  if (inst.problem) {
    if (!inst.pspec) prepare_problem(inst);
    if (!inst.nehari) solve_problem(inst);
  }
  const Instance& ci = inst;
  std::vector<CheckReport> reports(names.size());
  parallel::run_pool(names.size(), [&](std::size_t k) {
    const std::string& n = names[k];
    try {
      if (n == "complement_quadrature") reports[k] = check_complement_quadrature(ci);
      else if (n == "energy_gradient") reports[k] = check_gradient(ci, {1.5, 2.0, 3.0}, opts.gradient_samples);
      else if (n == "hidden_convexity") reports[k] = check_hidden_convexity(ci, opts.convexity_trials);
      else if (n == "operator_monotonicity") reports[k] = check_monotonicity(ci, {1.5, 2.0, 3.0}, opts.monotonicity_trials);
      else if (n == "positivity_simplicity") reports[k] = check_positivity_simplicity(ci, opts.restarts);
      else if (n == "lambda1_lower_bound") reports[k] = check_lower_bound(ci);
      else if (n.rfind("scaling_r", 0) == 0) reports[k] = check_scaling(ci, std::stod(n.substr(9)));
      else if (n == "oracle_equivalence") reports[k] = check_oracle_equivalence(ci);
      else if (n == "sign_change") reports[k] = check_sign_change(ci);
      else if (n == "fiber_structure") reports[k] = check_fiber_structure(ci, opts.fiber_directions);
      else if (n == "two_solutions") reports[k] = check_two_solutions(ci);
      else if (n == "comparison") reports[k] = check_comparison(ci, opts.comparison_factor);
      else if (n == "lambda_sweep") reports[k] = check_lambda_sweep(ci, opts.sweep_fractions);
      else if (n == "norm_bounds") reports[k] = check_norm_bounds(ci);
      else if (n == "linfty_stability") reports[k] = check_linfty_stability(ci, opts.refinement_h);
      else throw ConfigError("unknown check " + n);
    } catch (const std::exception& e) {
      CheckReport r;
      r.name = n;
      r.instance = ci.name + ": " + ci.descriptor();
      r.passed = false;
      r.message = std::string("check aborted: ") + e.what();
      reports[k] = std::move(r);
    }
  });
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return reports;
}

}  // namespace subspec
