#pragma once

// Group algebra and homogeneous geometry for the two supported stratified groups:
// abelian R^N (Q = N) and the Heisenberg group H^n (Q = 2n + 2).

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subspec/errors.hpp"

namespace subspec {

enum class GroupKind { abelian, heisenberg };

class GroupConfig {
 public:
  static GroupConfig abelian(int dim) {
    if (dim < 1) throw ConfigError("abelian group needs dim >= 1, got " + std::to_string(dim));
    return GroupConfig(GroupKind::abelian, dim);
  }
  static GroupConfig heisenberg(int n) {
    if (n < 1) throw ConfigError("Heisenberg group needs n >= 1, got " + std::to_string(n));
    return GroupConfig(GroupKind::heisenberg, n);
  }

  GroupKind kind() const noexcept { return kind_; }
  /// N for abelian R^N, n for H^n.
  int rank() const noexcept { return rank_; }
  /// Homogeneous dimension.
  int Q() const noexcept { return kind_ == GroupKind::abelian ? rank_ : 2 * rank_ + 2; }
  int topo_dim() const noexcept { return kind_ == GroupKind::abelian ? rank_ : 2 * rank_ + 1; }

  /// Dilation weight of coordinate c: D_r scales coordinate c by r^weight(c).
  int weight(int c) const noexcept {
    return (kind_ == GroupKind::heisenberg && c == 2 * rank_) ? 2 : 1;
  }

  std::string describe() const {
    return kind_ == GroupKind::abelian ? "abelian(" + std::to_string(rank_) + ")"
                                       : "heisenberg(" + std::to_string(rank_) + ")";
  }

  friend bool operator==(const GroupConfig&, const GroupConfig&) = default;
  friend auto operator<=>(const GroupConfig&, const GroupConfig&) = default;

 private:
  GroupConfig(GroupKind k, int r) : kind_(k), rank_(r) {}
  GroupKind kind_;
  int rank_;
};

/// Flat coordinates of a group element. Heisenberg layout: (x_1..x_n, y_1..y_n, t).
class GroupPoint {
 public:
  GroupPoint() = default;
  GroupPoint(std::initializer_list<double> c) : coords_(c) {}
  explicit GroupPoint(std::vector<double> c) : coords_(std::move(c)) {}
  explicit GroupPoint(std::span<const double> c) : coords_(c.begin(), c.end()) {}

  static GroupPoint identity(const GroupConfig& cfg) {
    return GroupPoint(std::vector<double>(static_cast<std::size_t>(cfg.topo_dim()), 0.0));
  }

  std::size_t size() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  double& operator[](std::size_t i) { return coords_[i]; }
  std::span<const double> coords() const noexcept { return coords_; }
  const std::vector<double>& vec() const noexcept { return coords_; }

  friend bool operator==(const GroupPoint&, const GroupPoint&) = default;

 private:
  std::vector<double> coords_;
};

namespace detail {

inline void require_conforming(const GroupConfig& cfg, std::span<const double> a) {
  if (a.size() != static_cast<std::size_t>(cfg.topo_dim())) {
    throw ConfigError("point has " + std::to_string(a.size()) + " coordinates, " + cfg.describe() +
                      " expects " + std::to_string(cfg.topo_dim()));
  }
}

/// Symplectic pairing <x', y> - <x, y'> of the Heisenberg group law.
inline double heisenberg_twist(int n, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    s += b[i] * a[n + i] - a[i] * b[n + i];
  }
  return s;
}

/// Gauge of a raw coordinate vector (no conformity checks).
inline double gauge_raw(const GroupConfig& cfg, std::span<const double> z) {
  if (cfg.kind() == GroupKind::abelian) {
    double s = 0.0;
    for (double v : z) s += v * v;
    return std::sqrt(s);
  }
  const int n = cfg.rank();
  double horiz = 0.0;
  for (int i = 0; i < 2 * n; ++i) horiz += z[i] * z[i];
  const double t = z[2 * n];
  return std::sqrt(std::sqrt(horiz * horiz + t * t));
}

/// hdistance(a, b) = gauge(b^{-1} o a) without allocating. Used in the hot loops.
inline double distance_raw(const GroupConfig& cfg, std::span<const double> a,
                           std::span<const double> b) {
  if (cfg.kind() == GroupKind::abelian) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
      const double d = a[c] - b[c];
      s += d * d;
    }
    return std::sqrt(s);
  }
  const int n = cfg.rank();
  double horiz = 0.0;
  double twist = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = a[i] - b[i];
    const double dy = a[n + i] - b[n + i];
    horiz += dx * dx + dy * dy;
    // b^{-1} o a: t-component a_t - b_t + 2(<a_x, -b_y> - <-b_x, a_y>)
    twist += b[i] * a[n + i] - a[i] * b[n + i];
  }
  const double t = a[2 * n] - b[2 * n] + 2.0 * twist;
  return std::sqrt(std::sqrt(horiz * horiz + t * t));
}

}  // namespace detail

inline GroupPoint compose(const GroupConfig& cfg, const GroupPoint& a, const GroupPoint& b) {
  detail::require_conforming(cfg, a.coords());
  detail::require_conforming(cfg, b.coords());
  std::vector<double> out(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) out[c] = a[c] + b[c];
  if (cfg.kind() == GroupKind::heisenberg) {
    const int n = cfg.rank();
    out[2 * n] += 2.0 * detail::heisenberg_twist(n, a.coords(), b.coords());
  }
  return GroupPoint(std::move(out));
}

inline GroupPoint inverse(const GroupConfig& cfg, const GroupPoint& a) {
  detail::require_conforming(cfg, a.coords());
  std::vector<double> out(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) out[c] = -a[c];
  return GroupPoint(std::move(out));
}

inline GroupPoint dilate(const GroupConfig& cfg, double r, const GroupPoint& a) {
  detail::require_conforming(cfg, a.coords());
  if (!(r > 0.0)) throw DomainError("dilation factor must be positive, got " + std::to_string(r));
  std::vector<double> out(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) {
    out[c] = (cfg.weight(static_cast<int>(c)) == 2 ? r * r : r) * a[c];
  }
  return GroupPoint(std::move(out));
}

/// Korányi gauge on H^n, Euclidean norm on R^N.
inline double gauge(const GroupConfig& cfg, const GroupPoint& a) {
  detail::require_conforming(cfg, a.coords());
  return detail::gauge_raw(cfg, a.coords());
}

/// Left-invariant homogeneous distance d(a, b) = |b^{-1} o a|.
inline double hdistance(const GroupConfig& cfg, const GroupPoint& a, const GroupPoint& b) {
  detail::require_conforming(cfg, a.coords());
  detail::require_conforming(cfg, b.coords());
  return detail::distance_raw(cfg, a.coords(), b.coords());
}

/// Monte Carlo volume of the unit gauge ball. Deterministic for a given seed.
inline double monte_carlo_ball_volume(const GroupConfig& cfg, std::uint64_t samples,
                                      std::uint64_t seed = 20240611) {
  if (samples == 0) throw ParameterError("Monte Carlo volume needs at least one sample");
  // the unit ball sits in [-1, 1]^topo_dim for both gauges
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto dim = static_cast<std::size_t>(cfg.topo_dim());
  std::vector<double> z(dim);
  std::uint64_t hits = 0;
  for (std::uint64_t k = 0; k < samples; ++k) {
    for (auto& v : z) v = unit(rng);
    if (detail::gauge_raw(cfg, z) < 1.0) ++hits;
  }
  return std::ldexp(1.0, static_cast<int>(dim)) * static_cast<double>(hits) /
         static_cast<double>(samples);
}

/// Surface constant sigma_S = Q |B(0,1)| of the polar decomposition
/// dx = sigma_S rho^{Q-1} d rho on the gauge sphere.
inline double sphere_constant(const GroupConfig& cfg) {
  if (cfg.kind() == GroupKind::abelian) {
    const double n = cfg.rank();
    const double ball = std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
    return n * ball;
  }
  if (cfg.rank() == 1) return 2.0 * std::numbers::pi * std::numbers::pi;

  static std::mutex mu;
  static std::map<int, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(cfg.rank());
  if (it != cache.end()) return it->second;
  const double value = cfg.Q() * monte_carlo_ball_volume(cfg, 10'000'000);
  cache.emplace(cfg.rank(), value);
  return value;
}

}  // namespace subspec
