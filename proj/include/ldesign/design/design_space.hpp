#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ldesign/error.hpp"

namespace ldesign::design {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 6.28318530717958647692;

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
  }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
};
inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// One 6D LiDAR measurement: origin, azimuth/elevation, one-way range.
/// tau is kept in meters of one-way range; conversion to seconds happens
/// only in the bandwidth model.
struct DesignPoint {
  double x = 0, y = 0, z = 0;
  double phi = 0;  // azimuth, [0, 2pi)
  double psi = 0;  // elevation, [-pi/2, pi/2]
  double tau = 0;  // one-way range, >= 0

  double& operator[](int i) {
    return *std::array<double*, 6>{&x, &y, &z, &phi, &psi, &tau}[i];
  }
  double operator[](int i) const {
    return std::array<double, 6>{x, y, z, phi, psi, tau}[i];
  }

  /// Wrap phi into [0, 2pi), clamp psi and tau to their domains.
  DesignPoint normalized() const {
    DesignPoint d = *this;
    d.phi = std::fmod(d.phi, kTwoPi);
    if (d.phi < 0) d.phi += kTwoPi;
    d.psi = std::clamp(d.psi, -kPi / 2, kPi / 2);
    d.tau = std::max(d.tau, 0.0);
    return d;
  }
};

inline const char* kDimNames[6] = {"x", "y", "z", "phi", "psi", "tau"};

/// Per-dimension domain. A fixed dimension carries lo == hi == value.
struct DesignBounds {
  std::array<double, 6> lo{};
  std::array<double, 6> hi{};
  std::array<bool, 6> fixed{};
  std::array<bool, 6> circular{};  // phi typically; psi never by default

  int free_count() const {
    int n = 0;
    for (bool f : fixed) n += !f;
    return n;
  }
  std::vector<int> free_dims() const {
    std::vector<int> d;
    for (int i = 0; i < 6; ++i)
      if (!fixed[i]) d.push_back(i);
    return d;
  }
  double range(int i) const { return hi[i] - lo[i]; }

  void validate() const {
    for (int i = 0; i < 6; ++i) {
      if (fixed[i]) {
        if (lo[i] != hi[i])
          throw Error(ErrorKind::Config, std::string("fixed dim ") + kDimNames[i] +
                                             " must have lo == hi");
      } else if (!(lo[i] < hi[i])) {
        throw Error(ErrorKind::Config, std::string("bounds for ") + kDimNames[i] +
                                           " need lo < hi");
      }
    }
  }

  bool contains(const DesignPoint& d, double tol = 1e-9) const {
    for (int i = 0; i < 6; ++i)
      if (d[i] < lo[i] - tol || d[i] > hi[i] + tol) return false;
    return true;
  }
};

/// Admissible region C: union of axis-aligned boxes in design space, plus
/// optional clamp specs applied to fitted mixture parameters.
struct ConstraintBox {
  std::array<double, 6> lo{};
  std::array<double, 6> hi{};

  bool contains(const DesignPoint& d) const {
    for (int i = 0; i < 6; ++i)
      if (d[i] < lo[i] || d[i] > hi[i]) return false;  // boundary is inside
    return true;
  }
};

struct ClampSpec {
  // Per-dimension bounds on the marginal std dev of mixture components,
  // derived from FoV / time-gate limits (sigma_max = limit / (2 * 1.96)).
  std::array<std::optional<double>, 6> sigma_min{};
  std::array<std::optional<double>, 6> sigma_max{};
  bool zero_extent_origin = false;  // fixed-position systems
};

struct ConstraintRegion {
  std::vector<ConstraintBox> boxes;  // empty => full bounds admissible
  ClampSpec clamps;

  static ConstraintRegion full(const DesignBounds& b) {
    ConstraintRegion c;
    ConstraintBox box;
    box.lo = b.lo;
    box.hi = b.hi;
    c.boxes.push_back(box);
    return c;
  }
};

/// Unit direction for (azimuth, elevation).
inline Vec3 direction_vector(double phi, double psi) {
  double cp = std::cos(psi);
  return {cp * std::cos(phi), cp * std::sin(phi), std::sin(psi)};
}

/// s = x + tau * v(phi, psi): the scene point observed by design d.
inline Vec3 map_to_scene(const DesignPoint& d) {
  Vec3 v = direction_vector(d.phi, d.psi);
  return Vec3{d.x, d.y, d.z} + d.tau * v;
}

/// True iff d lies inside any box of C (boundary counts as inside).
inline bool in_region(const DesignPoint& d, const ConstraintRegion& c) {
  for (const auto& b : c.boxes)
    if (b.contains(d)) return true;
  return c.boxes.empty();
}

/// True iff both designs observe the same scene point (within tol meters),
/// the reciprocity pairing condition for emitter/detector rays.
inline bool pair_reciprocal(const DesignPoint& de, const DesignPoint& dd,
                            double tol = 1e-6) {
  return (map_to_scene(de) - map_to_scene(dd)).norm() <= tol;
}

/// Affine bijection between [0,1]^F (free dims) and design space, injecting
/// fixed dimensions as constants. log-det refers to the z -> d direction.
class UnitCubeTransform {
 public:
  explicit UnitCubeTransform(const DesignBounds& bounds) : b_(bounds) {
    b_.validate();
    free_ = b_.free_dims();
    log_det_ = 0.0;
    for (int i : free_) log_det_ += std::log(b_.range(i));
  }

  int free_count() const { return static_cast<int>(free_.size()); }
  const std::vector<int>& free_dims() const { return free_; }
  const DesignBounds& bounds() const { return b_; }
  /// log |det| of the z -> d map: sum of log(hi - lo) over free dims.
  double log_det() const { return log_det_; }

  DesignPoint to_design(std::span<const double> z) const {
    check_size(z.size());
    DesignPoint d;
    for (int i = 0; i < 6; ++i) d[i] = b_.lo[i];
    for (std::size_t k = 0; k < free_.size(); ++k) {
      double zk = z[k];
      if (zk < -1e-12 || zk > 1.0 + 1e-12)
        throw Error(ErrorKind::Domain, "unit cube coordinate outside [0,1]");
      int i = free_[k];
      d[i] = b_.lo[i] + std::clamp(zk, 0.0, 1.0) * b_.range(i);
    }
    return d;
  }

  std::vector<double> to_cube(const DesignPoint& d) const {
    std::vector<double> z(free_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) {
      int i = free_[k];
      if (d[i] < b_.lo[i] - 1e-9 || d[i] > b_.hi[i] + 1e-9)
        throw Error(ErrorKind::Domain,
                    std::string("design point outside bounds in ") + kDimNames[i]);
      z[k] = std::clamp((d[i] - b_.lo[i]) / b_.range(i), 0.0, 1.0);
    }
    return z;
  }

 private:
  void check_size(std::size_t n) const {
    if (n != free_.size())
      throw Error(ErrorKind::Shape, "unit cube vector has wrong length");
  }
  DesignBounds b_;
  std::vector<int> free_;
  double log_det_;
};

}  // namespace ldesign::design
