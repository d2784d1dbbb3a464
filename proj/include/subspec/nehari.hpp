#pragma once

// Nehari fibering for  (-Delta_p)^s u = lambda f u^{-delta} + g u^q  in Omega, u = 0 outside.
// Along a ray t -> t u the energy depends on u only through
//   A = [u]^p,  F = int f |u|^{1-delta},  G = int g |u|^{q+1},
// and phi'(t) = t^{-delta} (m(t) - lambda F) with m(t) = t^{p-1+delta} A - t^{q+delta} G.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "subspec/eigen.hpp"
#include "subspec/errors.hpp"
#include "subspec/field.hpp"
#include "subspec/kernel.hpp"
#include "subspec/variational.hpp"

namespace subspec {

/// Exponents and lambda; everything the fiber map needs besides the scalars.
struct FiberShape {
  double p = 2.0;
  double delta = 0.5;
  double q = 1.5;
  double lambda = 0.0;
};

class ProblemSpec {
 public:
  ProblemSpec(FracParams fp, double delta, double q, Field f, Field g, double lambda, double eps_sing = 1e-8)
      : fp_(fp), delta_(delta), q_(q), f_(std::move(f)), g_(std::move(g)), lambda_(lambda), eps_sing_(eps_sing) {
    if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0,1)");
    if (!(fp.p() < q + 1.0)) throw ParameterError("need p < q+1");
    if (!(q + 1.0 < fp.p_star())) {
      std::ostringstream os;
      os << "need q+1 < p_star = " << fp.p_star() << ", got q+1 = " << q + 1.0;
      throw ParameterError(os.str());
    }
    if (f_.size() != g_.size() || f_.size() == 0) throw ConfigError("weights f and g must be nonempty and conform");
    for (std::size_t i = 0; i < f_.size(); ++i) {
      if (!(f_[i] > 0.0) || !std::isfinite(f_[i])) throw ParameterError("weight f must be positive and finite");
      if (!(g_[i] > 0.0) || !std::isfinite(g_[i])) throw ParameterError("weight g must be positive and finite");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be positive");
    if (!(eps_sing > 0.0)) throw ParameterError("eps_sing must be positive");
  }

  const FracParams& fp() const noexcept { return fp_; }
  double p() const noexcept { return fp_.p(); }
  double delta() const noexcept { return delta_; }
  double q() const noexcept { return q_; }
  const Field& f() const noexcept { return f_; }
  const Field& g() const noexcept { return g_; }
  double lambda() const noexcept { return lambda_; }
  double eps_sing() const noexcept { return eps_sing_; }
  FiberShape shape() const { return {fp_.p(), delta_, q_, lambda_}; }

  ProblemSpec with_lambda(double lambda) const {
    return ProblemSpec(fp_, delta_, q_, f_, g_, lambda, eps_sing_);
  }
  ProblemSpec with_f(Field f) const { return ProblemSpec(fp_, delta_, q_, std::move(f), g_, lambda_, eps_sing_); }

  void require_conforming(const KernelTable& K) const {
    if (f_.size() != K.size()) throw ConfigError("problem weights do not conform to the kernel");
    if (fp_.p() <= 1.0) throw ParameterError("p must be > 1");
  }

 private:
  FracParams fp_;
  double delta_, q_;
  Field f_, g_;
  double lambda_;
  double eps_sing_;
};

struct FiberScalars {
  double A = 0.0;
  double F = 0.0;
  double G = 0.0;
};

inline FiberScalars fiber_scalars(const Field& u, const ProblemSpec& ps, const KernelTable& K) {
  ps.require_conforming(K);
  K.require_conforming(u);
  const double cell = K.cell_measure();
  FiberScalars s;
  s.A = gagliardo_energy(u, K, ps.p());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    if (a == 0.0) continue;
    s.F += ps.f()[i] * std::pow(a, 1.0 - ps.delta());
    s.G += ps.g()[i] * std::pow(a, ps.q() + 1.0);
  }
  s.F *= cell;
  s.G *= cell;
  return s;
}

struct FiberValues {
  double phi = 0.0;
  double dphi = 0.0;
  double ddphi = 0.0;
};

inline FiberValues fiber(const FiberScalars& s, const FiberShape& sh, double t) {
  if (!(t > 0.0)) throw DomainError("fiber map needs t > 0");
  const double p = sh.p, d = sh.delta, q = sh.q, lam = sh.lambda;
  FiberValues v;
  v.phi = std::pow(t, p) * s.A / p - lam * std::pow(t, 1.0 - d) * s.F / (1.0 - d) - std::pow(t, q + 1.0) * s.G / (q + 1.0);
  v.dphi = std::pow(t, p - 1.0) * s.A - lam * std::pow(t, -d) * s.F - std::pow(t, q) * s.G;
  v.ddphi = (p - 1.0) * std::pow(t, p - 2.0) * s.A + d * lam * std::pow(t, -d - 1.0) * s.F -
            q * std::pow(t, q - 1.0) * s.G;
  return v;
}

inline FiberValues fiber(const Field& u, const ProblemSpec& ps, const KernelTable& K, double t) {
  if (!(t > 0.0)) throw DomainError("fiber map needs t > 0");
  if (u.is_zero()) throw DegenerateInputError("fiber map of the zero field");
  return fiber(fiber_scalars(u, ps, K), ps.shape(), t);
}

/// m(t) = t^{p-1+delta} A - t^{q+delta} G
inline double fiber_m(const FiberScalars& s, const FiberShape& sh, double t) {
  return std::pow(t, sh.p - 1.0 + sh.delta) * s.A - std::pow(t, sh.q + sh.delta) * s.G;
}

inline double fiber_t_max(const FiberScalars& s, const FiberShape& sh) {
  if (!(s.G > 0.0) || !(s.A > 0.0)) throw DegenerateInputError("t_max needs A > 0 and G > 0");
  return std::pow((sh.p - 1.0 + sh.delta) * s.A / ((sh.q + sh.delta) * s.G), 1.0 / (sh.q + 1.0 - sh.p));
}

struct FiberReport {
  double t_max = 0.0;
  double m_max = 0.0;
  double lam_F = 0.0;
  std::optional<std::pair<double, double>> roots;
  std::pair<int, int> ddphi_signs{0, 0};
  std::pair<double, double> ddphi{0.0, 0.0};
  bool has_roots() const { return roots.has_value(); }
};

namespace detail {

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

/// Root of m(t) = target in [lo, hi] where m - target changes sign; plain bisection to
/// floating-point resolution.
inline double bisect_m(const FiberScalars& s, const FiberShape& sh, double target, double lo, double hi) {
  const bool rising = fiber_m(s, sh, lo) < target;
  for (int k = 0; k < 400; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const bool below = fiber_m(s, sh, mid) < target;
    if (below == rising) lo = mid;
    else hi = mid;
  }
  // pick the endpoint closer to the crossing
  return std::abs(fiber_m(s, sh, lo) - target) <= std::abs(fiber_m(s, sh, hi) - target) ? lo : hi;
}

}  // namespace detail

/// t_max, m(t_max) by direct substitution, and the two roots of m(t) = lambda F when they exist.
inline FiberReport fiber_critical(const FiberScalars& s, const FiberShape& sh) {
  FiberReport r;
  r.t_max = fiber_t_max(s, sh);
  r.m_max = fiber_m(s, sh, r.t_max);
  r.lam_F = sh.lambda * s.F;
  if (!(r.lam_F < r.m_max)) return r;

  const double target = r.lam_F;
  std::vector<double> bracket_trace;
  double lo = r.t_max;
  for (int k = 0; fiber_m(s, sh, lo) >= target; ++k) {
    lo *= 0.5;
    bracket_trace.push_back(lo);
    if (k > 2000 || lo == 0.0) throw NumericError("no lower bracket for the first fiber root", bracket_trace);
  }
  double hi = r.t_max;
  for (int k = 0; fiber_m(s, sh, hi) >= target; ++k) {
    hi *= 2.0;
    bracket_trace.push_back(hi);
    if (k > 2000 || !std::isfinite(hi)) throw NumericError("no upper bracket for the second fiber root", bracket_trace);
  }
  const double t1 = detail::bisect_m(s, sh, target, lo, r.t_max);
  const double t2 = detail::bisect_m(s, sh, target, r.t_max, hi);
  r.roots = std::make_pair(t1, t2);

  const double dd1 = fiber(s, sh, t1).ddphi;
  const double dd2 = fiber(s, sh, t2).ddphi;
  r.ddphi = {dd1, dd2};
  r.ddphi_signs = {detail::sign_of(dd1), detail::sign_of(dd2)};
  auto scale = [&](double t) {
    return (sh.p - 1.0) * std::pow(t, sh.p - 2.0) * s.A + sh.delta * sh.lambda * std::pow(t, -sh.delta - 1.0) * s.F +
           sh.q * std::pow(t, sh.q - 1.0) * s.G;
  };
  if (std::abs(dd1) <= 1e-10 * scale(t1) || std::abs(dd2) <= 1e-10 * scale(t2) || r.ddphi_signs.first <= 0 ||
      r.ddphi_signs.second >= 0) {
    std::ostringstream os;
    os << "fiber root on the degenerate set (phi''(t1)=" << dd1 << ", phi''(t2)=" << dd2
       << "); lambda too large or discretization too coarse";
    throw BranchCollapseError(os.str());
  }
  return r;
}

inline FiberReport fiber_critical(const Field& u, const ProblemSpec& ps, const KernelTable& K) {
  if (u.is_zero()) throw DegenerateInputError("fiber analysis of the zero field");
  return fiber_critical(fiber_scalars(u, ps, K), ps.shape());
}

// ---------------------------------------------------------------------------------------------
// energies

/// I(u) = [u]^p / p - lambda/(1-delta) int f |u|^{1-delta} - 1/(q+1) int g |u|^{q+1}
inline double energy_I(const Field& u, const ProblemSpec& ps, const KernelTable& K) {
  const FiberScalars s = fiber_scalars(u, ps, K);
  const double p = ps.p();
  return s.A / p - ps.lambda() * s.F / (1.0 - ps.delta()) - s.G / (ps.q() + 1.0);
}

/// I with the singular term replaced by ((|u|+eps)^{1-delta} - eps^{1-delta})/(1-delta).
inline double energy_I_regularized(const Field& u, const ProblemSpec& ps, const KernelTable& K, double eps) {
  ps.require_conforming(K);
  K.require_conforming(u);
  const double d = ps.delta();
  const double base = std::pow(eps, 1.0 - d);
  double F = 0.0, G = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    F += ps.f()[i] * (std::pow(a + eps, 1.0 - d) - base);
    G += ps.g()[i] * std::pow(a, ps.q() + 1.0);
  }
  const double cell = K.cell_measure();
  return gagliardo_energy(u, K, ps.p()) / ps.p() - ps.lambda() * cell * F / (1.0 - d) - cell * G / (ps.q() + 1.0);
}

/// l2 gradient of the source part of energy_I_regularized (one-sided at u_i = 0, from above).
inline Field source_gradient(const Field& u, const ProblemSpec& ps, const KernelTable& K, double eps) {
  ps.require_conforming(K);
  K.require_conforming(u);
  const double cell = K.cell_measure();
  Field g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    const double sgn = u[i] < 0.0 ? -1.0 : 1.0;
    g[i] = -sgn * cell * (ps.lambda() * ps.f()[i] * std::pow(a + eps, -ps.delta()) + ps.g()[i] * std::pow(a, ps.q()));
  }
  return g;
}

/// l2 gradient of energy_I_regularized.
inline Field gradient_I_regularized(const Field& u, const ProblemSpec& ps, const KernelTable& K, double eps) {
  Field g = energy_gradient(u, K, ps.p());
  g *= 1.0 / ps.p();
  return g += source_gradient(u, ps, K, eps);
}

/// Nehari constraint <I'(u), u> = [u]^p - lambda F - G.
inline double nehari_constraint(const Field& u, const ProblemSpec& ps, const KernelTable& K) {
  const FiberScalars s = fiber_scalars(u, ps, K);
  return s.A - ps.lambda() * s.F - s.G;
}

// ---------------------------------------------------------------------------------------------
// lambda_*

struct EmbeddingConstants {
  double S_q_plus_1 = 0.0;       // sup of int |u|^{q+1} over [u] = 1
  double S_one_minus_delta = 0.0;  // sup of int |u|^{1-delta} over [u] = 1
};

struct LambdaStar {
  double empirical = 0.0;
  std::size_t argmin = 0;
  // closed-form lower estimates with empirical embedding constants; absent without constants
  std::optional<double> formula_literal;
  std::optional<double> formula_rederived;
};

/// The closed form as printed, exponents and prefactor taken literally.
inline double lambda_star_literal(const FiberShape& sh, const EmbeddingConstants& S, double f_inf, double g_inf) {
  const double p = sh.p, d = sh.delta, q = sh.q;
  const double a = p - 1.0 + d;
  const double b = q + 1.0 - p;
  return ((q + 2.0 - p) / a) * std::pow(a / (q + d), (d + q) / (d + 1.0 - p)) *
         std::pow(S.S_q_plus_1, -a / b) / S.S_one_minus_delta / (f_inf * std::pow(g_inf, a / b));
}

/// Lower bound on m(t_max)/F over [u] = 1 obtained from t_max by direct substitution:
/// (b/a)(a/(q+delta))^{(q+delta)/b} S_{q+1}^{-a/b} S_{1-delta}^{-1} / (|f|_inf |g|_inf^{a/b}).
inline double lambda_star_rederived(const FiberShape& sh, const EmbeddingConstants& S, double f_inf, double g_inf) {
  const double p = sh.p, d = sh.delta, q = sh.q;
  const double a = p - 1.0 + d;
  const double b = q + 1.0 - p;
  return (b / a) * std::pow(a / (q + d), (q + d) / b) * std::pow(S.S_q_plus_1, -a / b) / S.S_one_minus_delta /
         (f_inf * std::pow(g_inf, a / b));
}

inline LambdaStar lambda_star(const std::vector<Field>& dirs, const ProblemSpec& ps, const KernelTable& K,
                              const std::optional<EmbeddingConstants>& S = std::nullopt) {
  if (dirs.empty()) throw ParameterError("lambda_star needs at least one direction");
  LambdaStar out;
  out.empirical = std::numeric_limits<double>::infinity();
  std::vector<double> ratios(dirs.size());
  parallel::for_each_index(dirs.size(), [&](std::size_t k) {
    const FiberScalars s = fiber_scalars(dirs[k], ps, K);
    if (!(s.F > 0.0) || !(s.G > 0.0)) {
      ratios[k] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const FiberShape sh = ps.shape();
    ratios[k] = fiber_m(s, sh, fiber_t_max(s, sh)) / s.F;
  }, 2);
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    if (std::isnan(ratios[k])) throw DegenerateInputError("direction " + std::to_string(k) + " has F = 0 or G = 0");
    if (ratios[k] < out.empirical) {
      out.empirical = ratios[k];
      out.argmin = k;
    }
  }
  if (S) {
    const double f_inf = ps.f().max_abs();
    const double g_inf = ps.g().max_abs();
    out.formula_literal = lambda_star_literal(ps.shape(), *S, f_inf, g_inf);
    out.formula_rederived = lambda_star_rederived(ps.shape(), *S, f_inf, g_inf);
  }
  return out;
}

/// Bump plus (count - 1) seeded |N(0,1)| fields.
inline std::vector<Field> sample_directions(const GridDomain& grid, std::size_t count, std::uint64_t seed) {
  std::vector<Field> dirs;
  if (count == 0) return dirs;
  dirs.push_back(bump_field(grid));
  for (std::size_t k = 1; k < count; ++k) dirs.push_back(random_field(grid.size(), seed + k, true).abs());
  return dirs;
}

/// u / [u], so that the fiber scalar A equals 1.
inline Field unit_direction(Field u, const KernelTable& K, double p) {
  const double E = gagliardo_energy(u, K, p);
  if (!(E > 0.0) || !std::isfinite(E)) throw DegenerateInputError("direction has zero or non-finite energy");
  u *= std::pow(E, -1.0 / p);
  return u;
}

/// Upper bound on [u] over the N+ part: (lambda (q+delta) c1 |f|_inf / (q+1-p))^{1/(p-1+delta)}.
inline double nplus_norm_bound(const ProblemSpec& ps, double S_one_minus_delta) {
  const double p = ps.p(), d = ps.delta(), q = ps.q();
  return std::pow(ps.lambda() * (q + d) * S_one_minus_delta * ps.f().max_abs() / (q + 1.0 - p), 1.0 / (p - 1.0 + d));
}

/// Lower bound on [v] over the N- part: ((p-1+delta) / ((q+delta) c2 |g|_inf))^{1/(q+1-p)}.
inline double nminus_norm_bound(const ProblemSpec& ps, double S_q_plus_1) {
  const double p = ps.p(), d = ps.delta(), q = ps.q();
  return std::pow((p - 1.0 + d) / ((q + d) * S_q_plus_1 * ps.g().max_abs()), 1.0 / (q + 1.0 - p));
}

// ---------------------------------------------------------------------------------------------
// branch solves

enum class Branch { Nplus, Nminus };

inline const char* branch_name(Branch b) { return b == Branch::Nplus ? "N+" : "N-"; }

struct NehariOpts {
  double tol = 1e-10;           // projected reduced gradient relative to t |grad [tw]^p / p|, final eps
  double stage_tol = 1e-7;      // same, for intermediate eps stages
  int max_iter = 50'000;        // per eps stage
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double noise_floor = 1e-14;
  double eps_start = 1e-2;
  double eps_factor = 1e-2;
};

struct BranchResult {
  Branch branch = Branch::Nplus;
  Field u;
  double I = 0.0;
  double t = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> eps_schedule;
  std::vector<double> trace;  // reduced functional per accepted step
};

namespace detail {

class BranchDescent {
 public:
  BranchDescent(Branch br, const ProblemSpec& ps, const KernelTable& K, const NehariOpts& opts)
      : br_(br), ps_(ps), K_(K), opts_(opts) {}

  struct Eval {
    bool ok = false;
    double J = 0.0;
    double t = 0.0;
    double magnitude = 0.0;  // sum of |terms| of J, the scale of its rounding error
  };

  /// Branch root of the eps-regularized fiber derivative
  ///   phi_eps'(t) = t^{p-1} A - lambda sum cell f w (t w + eps)^{-delta} - t^q G,
  /// bracketed by the exact fiber's t_max (phi_eps' >= phi' there) and its roots.
  Eval evaluate(const Field& w) const {
    const FiberScalars s = fiber_scalars(w, ps_, K_);
    const FiberShape sh = ps_.shape();
    const FiberReport r = fiber_critical(s, sh);
    if (!r.roots) return {};
    const double cell = K_.cell_measure();
    const double p = sh.p, d = sh.delta, q = sh.q, lam = sh.lambda;
    auto dphi = [&](double t) {
      double sing = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] != 0.0) sing += ps_.f()[i] * w[i] * std::pow(t * w[i] + eps_, -d);
      }
      return std::pow(t, p - 1.0) * s.A - lam * cell * sing - std::pow(t, q) * s.G;
    };
    double t = 0.0;
    if (br_ == Branch::Nplus) {
      double lo = r.roots->first;
      for (int k = 0; dphi(lo) >= 0.0; ++k) {
        lo *= 0.5;
        if (k > 2000) throw NumericError("no bracket for the regularized N+ root", trace_);
      }
      t = bisect_sign(dphi, lo, r.t_max, false);
    } else {
      double hi = r.roots->second;
      for (int k = 0; dphi(hi) >= 0.0; ++k) {
        hi *= 2.0;
        if (k > 2000) throw NumericError("no bracket for the regularized N- root", trace_);
      }
      t = bisect_sign(dphi, r.t_max, hi, true);
    }
    double sing = 0.0;
    const double base = std::pow(eps_, 1.0 - d);
    for (std::size_t i = 0; i < w.size(); ++i) sing += ps_.f()[i] * (std::pow(t * w[i] + eps_, 1.0 - d) - base);
    const double e1 = std::pow(t, p) * s.A / p;
    const double e2 = lam * cell * sing / (1.0 - d);
    const double e3 = std::pow(t, q + 1.0) * s.G / (q + 1.0);
    return {true, e1 - e2 - e3, t, e1 + std::abs(e2) + e3};
  }

  // root of fn on [lo, hi]; fn(lo) < 0 < fn(hi) unless `falling` (then fn(lo) > 0 > fn(hi))
  template <class Fn>
  static double bisect_sign(const Fn& fn, double lo, double hi, bool falling) {
    for (int k = 0; k < 400; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const bool positive = fn(mid) > 0.0;
      if (positive != falling) hi = mid;
      else lo = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// Branch root of the exact fiber.
  double exact_root(const Field& w) const {
    const FiberReport r = fiber_critical(fiber_scalars(w, ps_, K_), ps_.shape());
    if (!r.roots) throw BranchCollapseError(std::string("fiber roots vanished at the ") + branch_name(br_) + " solution");
    return br_ == Branch::Nplus ? r.roots->first : r.roots->second;
  }

  // t grad I_eps(t w), with the component along w removed. `scale` receives the l2 norm of the
  // operator part t grad([u]^p / p), the reference for the relative tolerance.
  Field reduced_gradient(const Field& w, double t, double eps, double& scale) const {
    const Field u = t * w;
    Field g = energy_gradient(u, K_, ps_.p());
    g *= t / ps_.p();
    scale = norm2(g);
    Field src = source_gradient(u, ps_, K_, eps);
    src *= t;
    g += src;
    const double c = dot(g, w) / dot(w, w);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= c * w[i];
    return g;
  }

  // gradient with the components that push active zero entries further down removed
  static double free_norm(const Field& g, const Field& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (w[i] <= 0.0 && g[i] > 0.0) continue;
      s += g[i] * g[i];
    }
    return std::sqrt(s);
  }

  Field normalized(Field w) const {
    const double A = gagliardo_energy(w, K_, ps_.p());
    if (!(A > 0.0) || !std::isfinite(A)) throw DegenerateInputError("cannot normalize direction");
    w *= std::pow(A, -1.0 / ps_.p());
    return w;
  }

  void start(Field w) {
    w_ = normalized(std::move(w));
    const Eval e = evaluate(w_);
    if (!e.ok) {
      throw BranchCollapseError(std::string("no fiber roots for the initial direction on ") + branch_name(br_) +
                                " (lambda F >= m_max; lambda too large)");
    }
    J_ = e.J;
    t_ = e.t;
    magnitude_ = e.magnitude;
    trace_.push_back(J_);
  }

  void set_eps(double eps) {
    eps_ = eps;
    const Eval e = evaluate(w_);
    if (!e.ok) throw BranchCollapseError(std::string("fiber roots vanished on ") + branch_name(br_));
    J_ = e.J;
    t_ = e.t;
    magnitude_ = e.magnitude;
    g_ = reduced_gradient(w_, t_, eps_, scale_);
    gnorm_ = free_norm(g_, w_);
  }

  bool step() {
    const double cell = K_.cell_measure();
    double a = std::min(1.0, 2.0 * a_prev_);  // backtracking starts from min(1, 2 a_prev)
    int rootless = 0;
    while (a > 1e-30) {
      Field v = w_;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0, v[i] - a * g_[i] / cell);
      if (v.is_zero()) {
        a *= opts_.shrink;
        continue;
      }
      v = normalized(std::move(v));
      const Eval e = evaluate(v);
      if (!e.ok) {
        ++rootless;
        a *= opts_.shrink;
        continue;
      }
      if (!std::isfinite(e.J)) throw NumericError("non-finite reduced energy", trace_);
      const Field dw = w_ - v;
      bool accept = e.J <= J_ - opts_.armijo_c * dot(g_, dw);
      Field gv;
      double scale_v = 0.0;
      if (!accept && std::abs(e.J - J_) <= opts_.noise_floor * std::max(magnitude_, e.magnitude)) {
        gv = reduced_gradient(v, e.t, eps_, scale_v);
        accept = dot(gv, dw) >= 0.0;
      }
      if (accept) {
        if (gv.size() == 0) gv = reduced_gradient(v, e.t, eps_, scale_v);
        scale_ = scale_v;
        w_ = std::move(v);
        J_ = e.J;
        t_ = e.t;
        magnitude_ = e.magnitude;
        g_ = std::move(gv);
        gnorm_ = free_norm(g_, w_);
        trace_.push_back(J_);
        a_prev_ = a;
        return true;
      }
      a *= opts_.shrink;
    }
    if (rootless > 0) last_failure_rootless_ = true;
    return false;
  }

  const Field& w() const { return w_; }
  double J() const { return J_; }
  double t() const { return t_; }
  /// Projected reduced gradient norm relative to the operator term.
  double residual() const { return gnorm_ / scale_; }
  bool failed_rootless() const { return last_failure_rootless_; }
  std::vector<double>& trace() { return trace_; }

 private:
  Branch br_;
  const ProblemSpec& ps_;
  const KernelTable& K_;
  NehariOpts opts_;
  Field w_, g_;
  double J_ = 0.0, t_ = 0.0, eps_ = 0.0, gnorm_ = 0.0, magnitude_ = 0.0, scale_ = 1.0;
  double a_prev_ = 0.5;
  bool last_failure_rootless_ = false;
  std::vector<double> trace_;
};

}  // namespace detail

inline std::vector<double> eps_schedule(const NehariOpts& opts, double eps_final) {
  std::vector<double> out;
  for (double e = opts.eps_start; e > eps_final * (1.0 + 1e-9); e *= opts.eps_factor) out.push_back(e);
  out.push_back(eps_final);
  return out;
}

/// Minimizes J(w) = I(t_b(w) w) over directions w >= 0 with [w] = 1 and returns t_b(w*) w*.
inline BranchResult solve_branch(Branch br, const ProblemSpec& ps, const KernelTable& K, const Field& init,
                                 const NehariOpts& opts = {}) {
  ps.require_conforming(K);
  K.require_conforming(init);
  Field w0 = init;
  for (auto& v : w0.values()) v = std::max(0.0, v);
  if (w0.is_zero()) throw DegenerateInputError("initial direction must be nonnegative and nonzero");

  detail::BranchDescent d(br, ps, K, opts);
  d.start(std::move(w0));
  BranchResult res;
  res.branch = br;
  res.eps_schedule = eps_schedule(opts, ps.eps_sing());
  for (std::size_t stage = 0; stage < res.eps_schedule.size(); ++stage) {
    const bool last = stage + 1 == res.eps_schedule.size();
    const double tol = last ? opts.tol : std::max(opts.tol, opts.stage_tol);
    d.set_eps(res.eps_schedule[stage]);
    int it = 0;
    while (d.residual() >= tol) {
      if (it >= opts.max_iter) {
        std::ostringstream os;
        os << branch_name(br) << " solve did not converge in " << opts.max_iter << " iterations at eps "
           << res.eps_schedule[stage] << " (residual " << d.residual() << ")";
        throw ConvergenceError(os.str(), d.trace());
      }
      if (!d.step()) {
        if (!last) break;  // move on to the next eps; stage tolerances are advisory
        if (d.failed_rootless()) {
          throw BranchCollapseError(std::string("fiber roots vanished along the ") + branch_name(br) + " descent");
        }
        std::ostringstream os;
        os << branch_name(br) << " line search failed (residual " << d.residual() << ")";
        throw ConvergenceError(os.str(), d.trace());
      }
      ++it;
      ++res.iterations;
    }
  }
  // report the point on the exact Nehari set along the converged direction
  res.t = d.exact_root(d.w());
  res.u = res.t * d.w();
  res.I = energy_I(res.u, ps, K);
  res.residual = d.residual();
  res.trace = std::move(d.trace());
  return res;
}

struct NehariResult {
  BranchResult plus;
  BranchResult minus;
  double I_plus() const { return plus.I; }
  double I_minus() const { return minus.I; }
  const Field& u_plus() const { return plus.u; }
  const Field& u_minus() const { return minus.u; }
};

inline NehariResult solve_nehari(const ProblemSpec& ps, const KernelTable& K, const Field& init,
                                 const NehariOpts& opts = {}) {
  NehariResult out;
  std::exception_ptr errors[2];
  parallel::run_pool(2, [&](std::size_t k) {
    try {
      if (k == 0) out.plus = solve_branch(Branch::Nplus, ps, K, init, opts);
      else out.minus = solve_branch(Branch::Nminus, ps, K, init, opts);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Euler-Lagrange residual

/// Nodal indicator fields for the nodes where u > threshold.
inline std::vector<Field> nodal_test_set(const Field& u, double threshold = 1e-6) {
  std::vector<Field> out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] > threshold) {
      Field e(u.size());
      e[i] = 1.0;
      out.push_back(std::move(e));
    }
  }
  return out;
}

/// max over psi of |<(-Delta)^s_p u, psi> - lambda int f (u+eps)^{-delta} psi - int g u^q psi| / |psi|_{L2}.
/// eps = 0 gives the unregularized equation.
inline double el_residual(const Field& u, const ProblemSpec& ps, const KernelTable& K, const std::vector<Field>& test_set,
                          double eps = 0.0) {
  ps.require_conforming(K);
  K.require_conforming(u);
  const double cell = K.cell_measure();
  const double p = ps.p();
  // weak_action(u, psi) = <grad E, psi> / p
  const Field grad = energy_gradient(u, K, p);
  double worst = 0.0;
  for (const Field& psi : test_set) {
    K.require_conforming(psi);
    double l2 = 0.0, r = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (psi[i] == 0.0) continue;
      if (!(u[i] > 0.0)) throw DegenerateInputError("test function supported where u vanishes");
      l2 += cell * psi[i] * psi[i];
      r += grad[i] * psi[i] / p - cell * psi[i] * (ps.lambda() * ps.f()[i] * std::pow(u[i] + eps, -ps.delta()) +
                                                   ps.g()[i] * std::pow(u[i], ps.q()));
    }
    if (l2 == 0.0) continue;
    worst = std::max(worst, std::abs(r) / std::sqrt(l2));
  }
  return worst;
}

// ---------------------------------------------------------------------------------------------
// lambda sweep

struct SweepRow {
  double lambda = 0.0;
  bool has_two_roots = false;  // every sampled direction has t1 < t_max < t2
  std::optional<double> I_plus, I_minus, sup_plus, sup_minus;
  std::string error;           // failure of an individual solve; the sweep continues
};

inline bool all_directions_have_roots(const std::vector<FiberScalars>& scalars, const FiberShape& sh) {
  for (const auto& s : scalars) {
    if (!(sh.lambda * s.F < fiber_m(s, sh, fiber_t_max(s, sh)))) return false;
  }
  return true;
}

inline std::vector<SweepRow> run_sweep(const ProblemSpec& base, const KernelTable& K, const std::vector<Field>& dirs,
                                       const std::vector<double>& lambdas, const Field& init, const NehariOpts& opts = {},
                                       bool solve = true) {
  if (lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
  std::vector<FiberScalars> scalars;
  for (const auto& d : dirs) scalars.push_back(fiber_scalars(d, base, K));
  std::vector<SweepRow> rows(lambdas.size());
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    SweepRow& row = rows[k];
    row.lambda = lambdas[k];
    const ProblemSpec ps = base.with_lambda(lambdas[k]);
    row.has_two_roots = all_directions_have_roots(scalars, ps.shape());
    if (!row.has_two_roots || !solve) continue;
    try {
      const NehariResult r = solve_nehari(ps, K, init, opts);
      row.I_plus = r.I_plus();
      row.I_minus = r.I_minus();
      row.sup_plus = r.u_plus().max();
      row.sup_minus = r.u_minus().max();
    } catch (const Error& e) {
      row.error = e.what();
    }
  }
  return rows;
}

/// Number of positions where has_two_roots flips between consecutive rows.
inline int count_transitions(const std::vector<SweepRow>& rows) {
  int n = 0;
  for (std::size_t k = 1; k < rows.size(); ++k) n += rows[k].has_two_roots != rows[k - 1].has_two_roots;
  return n;
}

}  // namespace subspec
