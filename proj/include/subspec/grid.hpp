#pragma once

// Cell-centred uniform lattice discretization of a bounded domain. Haar measure on both
// supported groups is Lebesgue measure, so each node carries the cell volume exactly.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "subspec/errors.hpp"
#include "subspec/group.hpp"

namespace subspec {

struct GaugeBall {
  double radius = 1.0;
  GroupPoint center;  // empty means the identity
};

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
};

class DomainSpec {
 public:
  DomainSpec(GroupConfig group, GaugeBall ball) : group_(group), shape_(std::move(ball)) {
    auto& b = std::get<GaugeBall>(shape_);
    if (b.center.size() == 0) b.center = GroupPoint::identity(group_);
    detail::require_conforming(group_, b.center.coords());
    if (!(b.radius > 0.0) || !std::isfinite(b.radius)) {
      throw ConfigError("gauge ball radius must be positive and finite");
    }
  }
  DomainSpec(GroupConfig group, Box box) : group_(group), shape_(std::move(box)) {
    const auto& b = std::get<Box>(shape_);
    detail::require_conforming(group_, b.lo);
    detail::require_conforming(group_, b.hi);
    for (std::size_t c = 0; c < b.lo.size(); ++c) {
      if (!(b.lo[c] < b.hi[c])) throw ConfigError("box needs lo < hi in every coordinate");
    }
  }

  const GroupConfig& group() const noexcept { return group_; }
  const std::variant<GaugeBall, Box>& shape() const noexcept { return shape_; }
  bool is_ball() const noexcept { return std::holds_alternative<GaugeBall>(shape_); }

  /// Open-set membership.
  bool contains(std::span<const double> x) const {
    if (const auto* b = std::get_if<GaugeBall>(&shape_)) {
      return detail::distance_raw(group_, x, b->center.coords()) < b->radius;
    }
    const auto& box = std::get<Box>(shape_);
    for (std::size_t c = 0; c < x.size(); ++c) {
      if (!(box.lo[c] < x[c] && x[c] < box.hi[c])) return false;
    }
    return true;
  }

  /// Coordinate bounding box of the closed domain.
  void bounding_box(std::vector<double>& lo, std::vector<double>& hi) const {
    if (const auto* b = std::get_if<GaugeBall>(&shape_)) {
      ball_bounding_box(group_, b->center.coords(), b->radius, lo, hi);
      return;
    }
    const auto& box = std::get<Box>(shape_);
    lo = box.lo;
    hi = box.hi;
  }

  /// Upper bound on sup d(x, y) over x, y in the domain. Both gauges are metrics, so a
  /// ball of radius r has diameter at most 2r.
  double diameter_bound() const {
    if (const auto* b = std::get_if<GaugeBall>(&shape_)) return 2.0 * b->radius;
    const auto& box = std::get<Box>(shape_);
    if (group_.kind() == GroupKind::abelian) {
      double s = 0.0;
      for (std::size_t c = 0; c < box.lo.size(); ++c) {
        const double d = box.hi[c] - box.lo[c];
        s += d * d;
      }
      return std::sqrt(s);
    }
    // z = b^{-1} a: |z_t| <= dt + 2 sum_i (max|y_i| dx_i + max|x_i| dy_i)
    const int n = group_.rank();
    double horiz = 0.0;
    double t = box.hi[2 * n] - box.lo[2 * n];
    for (int i = 0; i < n; ++i) {
      const double dx = box.hi[i] - box.lo[i];
      const double dy = box.hi[n + i] - box.lo[n + i];
      const double mx = std::max(std::abs(box.lo[i]), std::abs(box.hi[i]));
      const double my = std::max(std::abs(box.lo[n + i]), std::abs(box.hi[n + i]));
      horiz += dx * dx + dy * dy;
      t += 2.0 * (my * dx + mx * dy);
    }
    return std::sqrt(std::sqrt(horiz * horiz + t * t));
  }

  /// Image of the domain under D_r (an automorphism, so shapes map to shapes).
  DomainSpec dilated(double r) const {
    if (const auto* b = std::get_if<GaugeBall>(&shape_)) {
      return DomainSpec(group_, GaugeBall{r * b->radius, dilate(group_, r, b->center)});
    }
    const auto& box = std::get<Box>(shape_);
    Box out = box;
    for (std::size_t c = 0; c < box.lo.size(); ++c) {
      const double f = group_.weight(static_cast<int>(c)) == 2 ? r * r : r;
      out.lo[c] *= f;
      out.hi[c] *= f;
    }
    return DomainSpec(group_, std::move(out));
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << group_.describe() << ' ';
    if (const auto* b = std::get_if<GaugeBall>(&shape_)) {
      os << "gauge_ball(r=" << b->radius << ", center=[";
      for (std::size_t c = 0; c < b->center.size(); ++c) os << (c ? "," : "") << b->center[c];
      os << "])";
    } else {
      const auto& box = std::get<Box>(shape_);
      os << "box(lo=[";
      for (std::size_t c = 0; c < box.lo.size(); ++c) os << (c ? "," : "") << box.lo[c];
      os << "], hi=[";
      for (std::size_t c = 0; c < box.hi.size(); ++c) os << (c ? "," : "") << box.hi[c];
      os << "])";
    }
    return os.str();
  }

  /// Coordinate box containing the gauge ball B(center, radius).
  static void ball_bounding_box(const GroupConfig& g, std::span<const double> center, double radius,
                                std::vector<double>& lo, std::vector<double>& hi) {
    const auto dim = static_cast<std::size_t>(g.topo_dim());
    lo.assign(dim, 0.0);
    hi.assign(dim, 0.0);
    if (g.kind() == GroupKind::abelian) {
      for (std::size_t c = 0; c < dim; ++c) {
        lo[c] = center[c] - radius;
        hi[c] = center[c] + radius;
      }
      return;
    }
    // y = c o z with |z| < r: |z_x|, |z_y| < r, |z_t| < r^2, and the shear term
    // 2(<z_x, c_y> - <c_x, z_y>) is bounded by 2 r (|c_x| + |c_y|).
    const int n = g.rank();
    double cx = 0.0;
    double cy = 0.0;
    for (int i = 0; i < n; ++i) {
      lo[i] = center[i] - radius;
      hi[i] = center[i] + radius;
      lo[n + i] = center[n + i] - radius;
      hi[n + i] = center[n + i] + radius;
      cx += center[i] * center[i];
      cy += center[n + i] * center[n + i];
    }
    const double spread = radius * radius + 2.0 * radius * (std::sqrt(cx) + std::sqrt(cy));
    lo[2 * n] = center[2 * n] - spread;
    hi[2 * n] = center[2 * n] + spread;
  }

 private:
  GroupConfig group_;
  std::variant<GaugeBall, Box> shape_;
};

/// Visits every cell-centred lattice point spacing[c] * (k_c + 1/2) inside the coordinate
/// box [lo, hi], in lexicographic order of k (first coordinate outermost).
template <class Fn>
void for_each_lattice_point(std::span<const double> spacing, std::span<const double> lo,
                            std::span<const double> hi, Fn&& fn) {
  const std::size_t dim = spacing.size();
  std::vector<std::int64_t> kmin(dim), kmax(dim), k(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    kmin[c] = static_cast<std::int64_t>(std::floor(lo[c] / spacing[c] - 0.5));
    kmax[c] = static_cast<std::int64_t>(std::ceil(hi[c] / spacing[c] - 0.5));
    if (kmax[c] < kmin[c]) return;
  }
  k = kmin;
  std::vector<double> x(dim);
  while (true) {
    for (std::size_t c = 0; c < dim; ++c) x[c] = spacing[c] * (static_cast<double>(k[c]) + 0.5);
    fn(std::span<const double>(x));
    std::size_t c = dim;
    while (c > 0) {
      --c;
      if (++k[c] <= kmax[c]) break;
      k[c] = kmin[c];
      if (c == 0) return;
    }
  }
}

class GridDomain {
 public:
  GridDomain(DomainSpec spec, std::vector<double> spacing, double base_h, std::vector<double> nodes)
      : spec_(std::move(spec)), spacing_(std::move(spacing)), base_h_(base_h), nodes_(std::move(nodes)) {
    cell_measure_ = 1.0;
    for (double s : spacing_) cell_measure_ *= s;
    spec_.bounding_box(box_lo_, box_hi_);
  }

  const GroupConfig& group() const noexcept { return spec_.group(); }
  const DomainSpec& spec() const noexcept { return spec_; }
  /// Per-coordinate spacing; uniform (= h) for a base grid, anisotropic after dilation matching.
  std::span<const double> spacing() const noexcept { return spacing_; }
  /// Spacing the grid was built with before any dilation matching.
  double base_h() const noexcept { return base_h_; }
  double cell_measure() const noexcept { return cell_measure_; }
  std::size_t size() const noexcept { return nodes_.size() / dim(); }
  std::size_t dim() const noexcept { return spacing_.size(); }
  std::span<const double> node(std::size_t i) const {
    return std::span<const double>(nodes_).subspan(i * dim(), dim());
  }
  GroupPoint node_point(std::size_t i) const { return GroupPoint(node(i)); }
  const std::vector<double>& flat_nodes() const noexcept { return nodes_; }
  std::span<const double> box_lo() const noexcept { return box_lo_; }
  std::span<const double> box_hi() const noexcept { return box_hi_; }

 private:
  DomainSpec spec_;
  std::vector<double> spacing_;
  double base_h_;
  std::vector<double> nodes_;
  double cell_measure_ = 1.0;
  std::vector<double> box_lo_, box_hi_;
};

inline GridDomain build_grid(const DomainSpec& spec, std::span<const double> spacing, double base_h) {
  const auto dim = static_cast<std::size_t>(spec.group().topo_dim());
  if (spacing.size() != dim) throw ConfigError("spacing has wrong dimension");
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("grid spacing must be positive");
  }
  std::vector<double> lo, hi;
  spec.bounding_box(lo, hi);
  std::vector<double> nodes;
  for_each_lattice_point(spacing, lo, hi, [&](std::span<const double> x) {
    if (spec.contains(x)) nodes.insert(nodes.end(), x.begin(), x.end());
  });
  if (nodes.empty()) {
    std::ostringstream os;
    os << "no lattice node inside " << spec.describe() << " at h=" << base_h;
    throw DomainError(os.str());
  }
  return GridDomain(spec, std::vector<double>(spacing.begin(), spacing.end()), base_h, std::move(nodes));
}

inline GridDomain build_grid(const DomainSpec& spec, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("grid spacing h must be positive");
  std::vector<double> spacing(static_cast<std::size_t>(spec.group().topo_dim()), h);
  return build_grid(spec, spacing, h);
}

inline double measure(const GridDomain& grid) {
  return static_cast<double>(grid.size()) * grid.cell_measure();
}

/// Dilation-matched grid: every node is mapped by D_r, the spacing of coordinate c is
/// scaled by r^weight(c) and the domain by D_r. Node order is preserved.
inline GridDomain dilate_grid(const GridDomain& grid, double r) {
  if (!(r > 0.0)) throw DomainError("dilation factor must be positive");
  const auto& g = grid.group();
  std::vector<double> spacing(grid.spacing().begin(), grid.spacing().end());
  for (std::size_t c = 0; c < spacing.size(); ++c) {
    spacing[c] *= g.weight(static_cast<int>(c)) == 2 ? r * r : r;
  }
  std::vector<double> nodes = grid.flat_nodes();
  const std::size_t dim = grid.dim();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto c = static_cast<int>(i % dim);
    nodes[i] *= g.weight(c) == 2 ? r * r : r;
  }
  return GridDomain(grid.spec().dilated(r), std::move(spacing), grid.base_h(), std::move(nodes));
}

/// CSV: node index followed by the coordinates.
inline void write_grid_csv(const GridDomain& grid, std::ostream& os) {
  os.precision(17);
  os << "node";
  for (std::size_t c = 0; c < grid.dim(); ++c) os << ",x" << c;
  os << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << i;
    for (double v : grid.node(i)) os << ',' << v;
    os << '\n';
  }
}

}  // namespace subspec
