#pragma once

// Discrete Gagliardo energy weights. The seminorm of the zero-extended space integrates over
// G x G minus (complement x complement); on the grid this splits into
//   pair weights      w_ij = d(x_i, x_j)^{-(Q+ps)} * cell^2          (i != j, both in the domain)
//   complement weight b_i  = 2 * cell * int_{G \ domain} d(x_i, y)^{-(Q+ps)} dy
// The complement integral is a lattice sum over exterior points inside B(x_i, R_t) plus the
// exact shell remainder sigma_S R_t^{-ps} / (ps), valid because the domain lies inside B(x_i, R_t).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "subspec/errors.hpp"
#include "subspec/field.hpp"
#include "subspec/grid.hpp"
#include "subspec/group.hpp"
#include "subspec/parallel.hpp"

namespace subspec {

class FracParams {
 public:
  FracParams(double s, double p, int Q) : s_(s), p_(p), Q_(Q) {
    if (!(s > 0.0 && s < 1.0)) throw ParameterError("fractional order s must lie in (0,1)");
    if (!(p > 1.0) || !std::isfinite(p)) throw ParameterError("p must be > 1");
    if (!(Q > p * s)) {
      std::ostringstream os;
      os << "need Q > p*s, got Q=" << Q << ", p*s=" << p * s;
      throw ParameterError(os.str());
    }
  }
  FracParams(double s, double p, const GroupConfig& g) : FracParams(s, p, g.Q()) {}

  double s() const noexcept { return s_; }
  double p() const noexcept { return p_; }
  int Q() const noexcept { return Q_; }
  double ps() const noexcept { return p_ * s_; }
  double Q_plus_ps() const noexcept { return Q_ + p_ * s_; }
  /// Critical Sobolev exponent Qp / (Q - sp).
  double p_star() const noexcept { return Q_ * p_ / (Q_ - p_ * s_); }

 private:
  double s_, p_;
  int Q_;
};

struct TruncationPolicy {
  /// R_t = R_t_factor * (domain diameter bound); must be >= 1.
  double R_t_factor = 1.0;
  /// Exterior lattice spacing in base-grid units; empty means same as the grid.
  std::optional<double> exterior_h;
};

class KernelTable {
 public:
  KernelTable() = default;
  KernelTable(std::size_t n, double cell, std::vector<double> w, std::vector<double> b)
      : n_(n), cell_(cell), w_(std::move(w)), b_(std::move(b)) {
    if (w_.size() != n_ * n_ || b_.size() != n_) throw ConfigError("kernel table shape mismatch");
  }

  std::size_t size() const noexcept { return n_; }
  double cell_measure() const noexcept { return cell_; }
  double weight(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(w_).subspan(i * n_, n_);
  }
  double complement(std::size_t i) const { return b_[i]; }
  std::span<const double> complement_weights() const noexcept { return b_; }
  const std::vector<double>& pair_weights() const noexcept { return w_; }

  void require_conforming(const Field& u) const {
    if (u.size() != n_) {
      throw ConfigError("field has " + std::to_string(u.size()) + " values, kernel has " +
                        std::to_string(n_) + " nodes");
    }
  }

  friend bool operator==(const KernelTable&, const KernelTable&) = default;

 private:
  std::size_t n_ = 0;
  double cell_ = 0.0;
  std::vector<double> w_;
  std::vector<double> b_;
};

inline double truncation_radius(const GridDomain& grid, const TruncationPolicy& policy) {
  if (!(policy.R_t_factor >= 1.0) || !std::isfinite(policy.R_t_factor)) {
    std::ostringstream os;
    os << "truncation radius factor " << policy.R_t_factor
       << " puts R_t below the domain diameter (need factor >= 1)";
    throw PolicyError(os.str());
  }
  return policy.R_t_factor * grid.spec().diameter_bound();
}

inline std::vector<double> exterior_spacing(const GridDomain& grid, const TruncationPolicy& policy) {
  std::vector<double> sp(grid.spacing().begin(), grid.spacing().end());
  if (policy.exterior_h) {
    if (!(*policy.exterior_h > 0.0)) throw PolicyError("exterior_h must be positive");
    const double ratio = *policy.exterior_h / grid.base_h();
    for (auto& v : sp) v *= ratio;
  }
  return sp;
}

/// int_{G \ domain} d(point, y)^{-(Q+ps)} dy by exterior lattice quadrature up to R_t and the
/// analytic remainder beyond it.
inline double complement_mass(const GridDomain& grid, const FracParams& fp, const TruncationPolicy& policy,
                              std::span<const double> point) {
  const auto& g = grid.group();
  detail::require_conforming(g, point);
  const double R = truncation_radius(grid, policy);
  const std::vector<double> spacing = exterior_spacing(grid, policy);
  double cell = 1.0;
  for (double v : spacing) cell *= v;
  const double expo = -fp.Q_plus_ps();

  std::vector<double> lo, hi;
  DomainSpec::ball_bounding_box(g, point, R, lo, hi);
  double sum = 0.0;
  for_each_lattice_point(spacing, lo, hi, [&](std::span<const double> y) {
    const double d = detail::distance_raw(g, point, y);
    if (d >= R || d == 0.0) return;
    if (grid.spec().contains(y)) return;
    sum += std::pow(d, expo);
  });
  return cell * sum + sphere_constant(g) * std::pow(R, -fp.ps()) / fp.ps();
}

inline KernelTable assemble(const GridDomain& grid, const FracParams& fp, const TruncationPolicy& policy = {}) {
  if (fp.Q() != grid.group().Q()) throw ParameterError("FracParams Q does not match the grid's group");
  (void)truncation_radius(grid, policy);  // validates the policy before any work
  const std::size_t n = grid.size();
  const double cell = grid.cell_measure();
  const double cell2 = cell * cell;
  const double expo = -fp.Q_plus_ps();
  const auto& g = grid.group();

  std::vector<double> w(n * n, 0.0);
  parallel::for_each_index(n, [&](std::size_t i) {
    const auto xi = grid.node(i);
    double* row = w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row[j] = std::pow(detail::distance_raw(g, xi, grid.node(j)), expo) * cell2;
    }
  }, 16);
  // exact symmetry regardless of rounding in the twisted distance
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) w[j * n + i] = w[i * n + j];
  }

  std::vector<double> b(n, 0.0);
  parallel::for_each_index(n, [&](std::size_t i) {
    b[i] = 2.0 * cell * complement_mass(grid, fp, policy, grid.node(i));
  }, 2);
  return KernelTable(n, cell, std::move(w), std::move(b));
}

/// Tail(v, x0, R) = [R^{sp} int_{G \ B_R(x0)} |v|^{p-1} d(x0, x)^{-(Q+ps)} dx]^{1/(p-1)},
/// by cell quadrature over the grid nodes outside B_R(x0) (v vanishes off the grid).
inline double tail(const Field& v, const GroupPoint& center, double R, const FracParams& fp,
                   const GridDomain& grid) {
  if (!(R > 0.0)) throw DomainError("tail radius must be positive");
  if (v.size() != grid.size()) throw ConfigError("field does not conform to grid");
  const auto& g = grid.group();
  detail::require_conforming(g, center.coords());
  const double p = fp.p();
  double integral = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double d = detail::distance_raw(g, center.coords(), grid.node(i));
    if (d < R || v[i] == 0.0) continue;
    integral += std::pow(std::abs(v[i]), p - 1.0) * std::pow(d, -fp.Q_plus_ps());
  }
  integral *= grid.cell_measure();
  if (integral == 0.0) return 0.0;
  return std::pow(std::pow(R, fp.ps()) * integral, 1.0 / (p - 1.0));
}

// ---------------------------------------------------------------------------------------------
// binary cache

namespace detail {
inline constexpr char kKernelMagic[8] = {'S', 'S', 'K', 'E', 'R', 'N', 'L', '1'};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace detail

/// Hex key identifying (domain spec, h, s, p, policy).
inline std::string kernel_cache_key(const GridDomain& grid, const FracParams& fp, const TruncationPolicy& policy) {
  std::ostringstream os;
  os.precision(17);
  os << grid.spec().describe() << "|h=";
  for (double v : grid.spacing()) os << v << ';';
  os << "|s=" << fp.s() << "|p=" << fp.p() << "|Rt=" << policy.R_t_factor
     << "|eh=" << (policy.exterior_h ? *policy.exterior_h : -1.0);
  std::ostringstream hex;
  hex << std::hex << detail::fnv1a(os.str());
  return hex.str();
}

inline void save_kernel(const KernelTable& K, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write kernel cache " + path);
  out.write(detail::kKernelMagic, sizeof(detail::kKernelMagic));
  const std::uint64_t n = K.size();
  const double cell = K.cell_measure();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&cell), sizeof(cell));
  out.write(reinterpret_cast<const char*>(K.pair_weights().data()),
            static_cast<std::streamsize>(n * n * sizeof(double)));
  out.write(reinterpret_cast<const char*>(K.complement_weights().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
}

inline std::optional<KernelTable> load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t n = 0;
  double cell = 0.0;
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, detail::kKernelMagic, sizeof(magic)) != 0) {
    return std::nullopt;
  }
  if (!in.read(reinterpret_cast<char*>(&n), sizeof(n)) || !in.read(reinterpret_cast<char*>(&cell), sizeof(cell))) {
    return std::nullopt;
  }
  std::vector<double> w(n * n), b(n);
  if (!in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double))) ||
      !in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)))) {
    return std::nullopt;
  }
  return KernelTable(n, cell, std::move(w), std::move(b));
}

}  // namespace subspec
