#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "subspec/errors.hpp"
#include "subspec/grid.hpp"

namespace subspec {

/// Nodal values of a function on the grid. Values outside the domain are zero implicitly,
/// so a Field always represents a member of the zero-extended space.
class Field {
 public:
  Field() = default;
  explicit Field(std::size_t n, double value = 0.0) : values_(n, value) {}
  explicit Field(std::vector<double> v) : values_(std::move(v)) {}

  /// Samples fn at every node.
  static Field from_function(const GridDomain& grid,
                             const std::function<double(std::span<const double>)>& fn) {
    Field f(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) f.values_[i] = fn(grid.node(i));
    return f;
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }

  bool is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

  Field abs() const {
    Field out(*this);
    for (auto& v : out.values_) v = std::abs(v);
    return out;
  }

  Field& operator*=(double c) {
    for (auto& v : values_) v *= c;
    return *this;
  }
  Field& operator+=(const Field& o) {
    require_same_size(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    require_same_size(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  friend Field operator*(double c, Field f) { return f *= c; }
  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend bool operator==(const Field&, const Field&) = default;

  void require_same_size(const Field& o) const {
    if (o.size() != size()) {
      throw ConfigError("field sizes differ: " + std::to_string(size()) + " vs " + std::to_string(o.size()));
    }
  }

 private:
  std::vector<double> values_;
};

/// l2 inner product of nodal values.
inline double dot(const Field& a, const Field& b) {
  a.require_same_size(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Field& a) { return std::sqrt(dot(a, a)); }

/// l2 cosine similarity; 0 when either field vanishes.
inline double cosine_similarity(const Field& a, const Field& b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// CSV "node,value"
inline void write_field_csv(const Field& f, std::ostream& os) {
  os.precision(17);
  os << "node,value\n";
  for (std::size_t i = 0; i < f.size(); ++i) os << i << ',' << f[i] << '\n';
}

inline Field read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty field CSV");
  std::vector<double> values;
  std::size_t expected = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("field CSV line without comma: " + line);
    std::size_t idx = 0;
    double v = 0.0;
    try {
      idx = std::stoul(line.substr(0, comma));
      v = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ConfigError("unparsable field CSV line: " + line);
    }
    if (idx != expected) throw ConfigError("field CSV node indices must be 0..n-1 in order");
    values.push_back(v);
    ++expected;
  }
  return Field(std::move(values));
}

inline Field read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field CSV " + path);
  return read_field_csv(in);
}

namespace detail {
inline constexpr char kFieldMagic[8] = {'S', 'S', 'F', 'I', 'E', 'L', 'D', '1'};
}

/// Flat binary: 8-byte magic, uint64 count, then count native doubles.
inline void write_field_binary(const Field& f, std::ostream& os) {
  os.write(detail::kFieldMagic, sizeof(detail::kFieldMagic));
  const std::uint64_t n = f.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(f.values().data()), static_cast<std::streamsize>(n * sizeof(double)));
}

inline Field read_field_binary(std::istream& is) {
  char magic[8];
  std::uint64_t n = 0;
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, detail::kFieldMagic, sizeof(magic)) != 0) {
    throw ConfigError("not a field binary file");
  }
  if (!is.read(reinterpret_cast<char*>(&n), sizeof(n))) throw ConfigError("truncated field binary");
  std::vector<double> values(n);
  if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw ConfigError("truncated field binary");
  }
  return Field(std::move(values));
}

}  // namespace subspec
