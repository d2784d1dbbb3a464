#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "subspec/errors.hpp"
#include "subspec/field.hpp"
#include "subspec/grid.hpp"
#include "subspec/kernel.hpp"
#include "subspec/variational.hpp"

namespace subspec {

struct SolverOpts {
  double tol = 1e-9;             // on the l2 norm of grad E - lambda grad N
  int max_iter = 50'000;
  int polish_steps = 100;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double noise_floor = 1e-14;    // relative change treated as rounding noise
};

struct EigenResult {
  double lambda1 = 0.0;          // after polishing |u|
  double lambda1_raw = 0.0;      // at convergence, before the sign fix
  Field phi1;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> trace;
};

inline double rayleigh(const Field& u, const KernelTable& K, double p) {
  const double N = lp_norm_pow(u, K, p);
  if (N == 0.0) throw DegenerateInputError("Rayleigh quotient of the zero field");
  return gagliardo_energy(u, K, p) / N;
}

/// Positive bump: product over coordinates of hat functions on the grid's bounding box.
inline Field bump_field(const GridDomain& grid) {
  const auto& lo = grid.box_lo();
  const auto& hi = grid.box_hi();
  return Field::from_function(grid, [&](std::span<const double> x) {
    double v = 1.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double mid = 0.5 * (lo[c] + hi[c]);
      const double half = 0.5 * (hi[c] - lo[c]);
      v *= std::max(1e-3, 1.0 - std::abs(x[c] - mid) / half);
    }
    return v;
  });
}

/// Seeded random field; positive entries in (0,1] unless signed is set (standard normal).
inline Field random_field(std::size_t n, std::uint64_t seed, bool signed_values = false) {
  std::mt19937_64 rng(seed);
  Field f(n);
  if (signed_values) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) f[i] = nd(rng);
  } else {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) f[i] = 1.0 - ud(rng);
  }
  return f;
}

namespace detail {

class RayleighDescent {
 public:
  RayleighDescent(const KernelTable& K, double p, const SolverOpts& opts) : K_(K), p_(p), opts_(opts) {}

  void start(Field u) {
    u_ = normalized(std::move(u));
    R_ = gagliardo_energy(u_, K_, p_);
    g_ = residual_gradient(u_, R_);
    gnorm_ = norm2(g_);
  }

  /// One Armijo step along -g / cell. Returns false when the line search cannot move.
  bool step() {
    const double cell = K_.cell_measure();
    const double slope = gnorm_ * gnorm_ / cell;
    // backtracking starts from min(1, 2 a_prev)
    double a = std::min(1.0, 2.0 * a_prev_);
    while (a > 1e-30) {
      Field v = u_;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= a * g_[i] / cell;
      if (v.is_zero()) {
        a *= opts_.shrink;
        continue;
      }
      v = normalized(std::move(v));
      const double Rv = gagliardo_energy(v, K_, p_);
      if (!std::isfinite(Rv)) throw NumericError("non-finite Rayleigh value in line search", trace_);
      bool accept = Rv <= R_ - opts_.armijo_c * a * slope;
      Field gv;
      if (!accept && std::abs(Rv - R_) <= opts_.noise_floor * std::abs(R_)) {
        // below rounding resolution: accept while the trial point is still downhill
        gv = residual_gradient(v, Rv);
        accept = dot(gv, g_) >= 0.0;
      }
      if (accept) {
        if (gv.size() == 0) gv = residual_gradient(v, Rv);
        u_ = std::move(v);
        R_ = Rv;
        g_ = std::move(gv);
        gnorm_ = norm2(g_);
        trace_.push_back(R_);
        a_prev_ = a;
        return true;
      }
      a *= opts_.shrink;
    }
    return false;
  }

  const Field& u() const { return u_; }
  double R() const { return R_; }
  double residual() const { return gnorm_; }
  std::vector<double>& trace() { return trace_; }

 private:
  Field normalized(Field u) const {
    const double N = lp_norm_pow(u, K_, p_);
    if (N == 0.0 || !std::isfinite(N)) throw DegenerateInputError("cannot normalize a zero or non-finite field");
    u *= std::pow(N, -1.0 / p_);
    return u;
  }

  // grad E - R grad N with N = sum cell |u|^p (u on the unit sphere)
  Field residual_gradient(const Field& u, double R) const {
    Field g = energy_gradient(u, K_, p_);
    const double c = R * p_ * K_.cell_measure();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= c * jp(u[i], p_);
    return g;
  }

  const KernelTable& K_;
  double p_;
  SolverOpts opts_;
  Field u_, g_;
  double R_ = 0.0;
  double gnorm_ = 0.0;
  double a_prev_ = 0.5;
  std::vector<double> trace_;
};

}  // namespace detail

/// Steepest descent on the unit L^p sphere with radial renormalization. Returns |u| polished.
inline EigenResult minimize_rayleigh(const KernelTable& K, double p, const Field& init, const SolverOpts& opts = {}) {
  K.require_conforming(init);
  if (!(opts.tol > 0.0)) throw ConfigError("solver tol must be positive");
  if (init.is_zero()) throw DegenerateInputError("initial field is zero");

  detail::RayleighDescent d(K, p, opts);
  d.start(init);
  d.trace().push_back(d.R());
  int it = 0;
  while (d.residual() >= opts.tol) {
    if (it >= opts.max_iter) {
      std::ostringstream os;
      os << "Rayleigh descent did not converge in " << opts.max_iter << " iterations (residual " << d.residual()
         << ")";
      throw ConvergenceError(os.str(), d.trace());
    }
    if (!d.step()) {
      std::ostringstream os;
      os << "line search failed at iteration " << it << " (residual " << d.residual() << ")";
      throw ConvergenceError(os.str(), d.trace());
    }
    ++it;
  }

  EigenResult res;
  res.lambda1_raw = d.R();
  res.iterations = it;
  std::vector<double> trace = std::move(d.trace());

  detail::RayleighDescent polish(K, p, opts);
  polish.start(d.u().abs());
  for (int k = 0; k < opts.polish_steps && polish.residual() >= opts.tol; ++k) {
    if (!polish.step()) break;
  }
  trace.insert(trace.end(), polish.trace().begin(), polish.trace().end());
  res.lambda1 = polish.R();
  res.phi1 = polish.u();
  res.residual = polish.residual();
  res.trace = std::move(trace);
  return res;
}

inline EigenResult minimize_rayleigh(const KernelTable& K, double p, std::uint64_t seed, const SolverOpts& opts = {}) {
  return minimize_rayleigh(K, p, random_field(K.size(), seed), opts);
}

// ---------------------------------------------------------------------------------------------
// p = 2 oracle

/// Matrix of the quadratic form: u^T A u = gagliardo_energy(u, K, 2).
inline Eigen::MatrixXd quadratic_form_matrix(const KernelTable& K) {
  const auto n = static_cast<Eigen::Index>(K.size());
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto w = K.row(static_cast<std::size_t>(i));
    double diag = K.complement(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      // ordered pairs: (i,j) and (j,i) both contribute w (u_i - u_j)^2
      A(i, j) = -2.0 * w[static_cast<std::size_t>(j)];
      diag += 2.0 * w[static_cast<std::size_t>(j)];
    }
    A(i, i) = diag;
  }
  const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * A.cwiseAbs().maxCoeff()) {
    throw NumericError("quadratic form matrix is not symmetric (assembly bug)", {asym});
  }
  return A;
}

struct P2Spectrum {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
  Field eigenvector(Eigen::Index k) const {
    std::vector<double> v(static_cast<std::size_t>(vectors.rows()));
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) v[static_cast<std::size_t>(i)] = vectors(i, k);
    return Field(std::move(v));
  }
};

/// Generalized eigenproblem A x = mu (cell I) x by dense symmetric eigensolve.
inline P2Spectrum p2_spectrum(const KernelTable& K) {
  const Eigen::MatrixXd A = quadratic_form_matrix(K) / K.cell_measure();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw NumericError("dense eigensolve failed", {});
  return {es.eigenvalues(), es.eigenvectors()};
}

inline double p2_oracle(const KernelTable& K) { return p2_spectrum(K).values(0); }

/// C^{-p} |Omega|^{-ps/Q} with C an (empirical) constant of the critical embedding.
inline double lambda1_lower_bound(const GridDomain& grid, const FracParams& fp, double sobolev_const) {
  if (!(sobolev_const > 0.0)) throw ParameterError("sobolev constant must be positive");
  return std::pow(sobolev_const, -fp.p()) * std::pow(measure(grid), -fp.ps() / fp.Q());
}

}  // namespace subspec
