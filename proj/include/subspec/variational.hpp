#pragma once

// Energies, norms and the weak form over a KernelTable. The normalizing constant of the
// operator is fixed to 1 and the pair sum runs over ordered pairs (i, j), i != j.

#include <cmath>
#include <span>

#include "subspec/errors.hpp"
#include "subspec/field.hpp"
#include "subspec/kernel.hpp"
#include "subspec/parallel.hpp"

namespace subspec {

inline constexpr const char* kConvention = "C_{Q,s,p}=1, ordered-pair double sum, Korányi gauge";

/// |t|^{p-2} t
inline double jp(double t, double p) {
  if (p == 2.0) return t;
  if (t == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(t), p - 1.0), t);
}

inline double abs_pow(double t, double p) {
  if (p == 2.0) return t * t;
  return std::pow(std::abs(t), p);
}

/// [u]^p: sum_{i != j} w_ij |u_i - u_j|^p + sum_i b_i |u_i|^p.
inline double gagliardo_energy(const Field& u, const KernelTable& K, double p) {
  K.require_conforming(u);
  const std::size_t n = K.size();
  return parallel::sum_rows(n, [&](std::size_t i) {
    const auto w = K.row(i);
    const double ui = u[i];
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) s += w[j] * abs_pow(ui - u[j], p);
    }
    return s + K.complement(i) * abs_pow(ui, p);
  });
}

/// sum_i cell |u_i|^r, the r-th power of the L^r norm.
inline double lp_norm_pow(const Field& u, double cell, double r) {
  if (!(r >= 1.0)) throw ParameterError("lp_norm_pow needs r >= 1, got " + std::to_string(r));
  double s = 0.0;
  for (double v : u.values()) s += abs_pow(v, r);
  return cell * s;
}

inline double lp_norm_pow(const Field& u, const KernelTable& K, double r) {
  K.require_conforming(u);
  return lp_norm_pow(u, K.cell_measure(), r);
}

/// sum_{i != j} w_ij J_p(u_i - u_j)(v_i - v_j) + sum_i b_i J_p(u_i) v_i
inline double weak_action(const Field& u, const Field& v, const KernelTable& K, double p) {
  K.require_conforming(u);
  K.require_conforming(v);
  const std::size_t n = K.size();
  return parallel::sum_rows(n, [&](std::size_t i) {
    const auto w = K.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) s += w[j] * jp(u[i] - u[j], p) * (v[i] - v[j]);
    }
    return s + K.complement(i) * jp(u[i], p) * v[i];
  });
}

/// d/du_i of gagliardo_energy: 2p sum_j w_ij J_p(u_i - u_j) + p b_i J_p(u_i).
inline Field energy_gradient(const Field& u, const KernelTable& K, double p) {
  K.require_conforming(u);
  if (!(p > 1.0)) throw ParameterError("energy_gradient needs p > 1");
  const std::size_t n = K.size();
  Field g(n);
  parallel::for_each_index(n, [&](std::size_t i) {
    const auto w = K.row(i);
    const double ui = u[i];
    double s = 0.0;
    if (p == 2.0) {
      for (std::size_t j = 0; j < n; ++j) s += w[j] * (ui - u[j]);
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) s += w[j] * jp(ui - u[j], p);
      }
    }
    g[i] = 2.0 * p * s + p * K.complement(i) * jp(ui, p);
  }, 64);
  return g;
}

struct MonotonicityGap {
  double lhs = 0.0;
  double rhs_seminorm_term = 0.0;
  double ratio() const { return lhs / rhs_seminorm_term; }
};

/// lhs = <A u - A v, u - v>; rhs = [u-v]^p (p >= 2) or [u-v]^2 / ([u]^p + [v]^p)^{(2-p)/p} (p < 2).
inline MonotonicityGap monotonicity_gap(const Field& u, const Field& v, const KernelTable& K, double p) {
  K.require_conforming(u);
  K.require_conforming(v);
  if (u == v) throw DegenerateInputError("monotonicity_gap needs u != v");
  const Field d = u - v;
  MonotonicityGap out;
  out.lhs = weak_action(u, d, K, p) - weak_action(v, d, K, p);
  const double ed = gagliardo_energy(d, K, p);
  if (p >= 2.0) {
    out.rhs_seminorm_term = ed;
  } else {
    const double eu = gagliardo_energy(u, K, p);
    const double ev = gagliardo_energy(v, K, p);
    out.rhs_seminorm_term = std::pow(ed, 2.0 / p) / std::pow(eu + ev, (2.0 - p) / p);
  }
  return out;
}

}  // namespace subspec
