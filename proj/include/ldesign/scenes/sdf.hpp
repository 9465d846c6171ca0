#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ldesign/design/design_space.hpp"

namespace ldesign::scenes {

using design::Vec3;

struct SdfResult {
  double dist = 0.0;
  Vec3 grad;  // unit-ish outward direction
};

/// Node of an analytic CSG tree. Distances are exact for primitives and
/// unions/subtractions; smooth-union is the usual polynomial blend and only
/// approximately preserves the distance lower bound (sphere tracing uses a
/// 0.8 safety factor to compensate).
class Sdf {
 public:
  virtual ~Sdf() = default;
  virtual SdfResult eval(const Vec3& p) const = 0;
  double dist(const Vec3& p) const { return eval(p).dist; }
};

using SdfPtr = std::shared_ptr<const Sdf>;

SdfPtr make_sphere(Vec3 center, double radius);
SdfPtr make_box(Vec3 center, Vec3 half_extent);
SdfPtr make_ellipsoid(Vec3 center, Vec3 radii);
SdfPtr make_capsule(Vec3 a, Vec3 b, double radius);
SdfPtr make_rounded_cone(Vec3 a, double ra, Vec3 b, double rb);
SdfPtr make_half_space(Vec3 normal, double offset);  // dist = n.p - offset
SdfPtr op_union(std::vector<SdfPtr> children);
SdfPtr op_smooth_union(SdfPtr a, SdfPtr b, double blend_radius);
SdfPtr op_subtract(SdfPtr base, SdfPtr cut);

/// Baked scalar field on a regular grid with trilinear interpolation.
/// Queries outside the bbox clamp to the boundary and add the Euclidean
/// distance to the box, which keeps sphere tracing safe far from the volume.
class GridField {
 public:
  GridField(int nx, int ny, int nz, Vec3 bbox_lo, Vec3 bbox_hi,
            std::vector<double> values);

  SdfResult eval(const Vec3& p) const;

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  Vec3 bbox_lo() const { return lo_; }
  Vec3 bbox_hi() const { return hi_; }
  const std::vector<double>& values() const { return vals_; }
  double at(int i, int j, int k) const { return vals_[idx(i, j, k)]; }
  Vec3 node_pos(int i, int j, int k) const;

 private:
  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny_ + j) * nx_ + i;  // x fastest
  }
  int nx_, ny_, nz_;
  Vec3 lo_, hi_, cell_;
  std::vector<double> vals_;
};

/// A queryable signed-distance field for one scene instance: either an
/// analytic CSG tree or a baked grid.
class SceneSdf {
 public:
  SceneSdf() = default;
  SceneSdf(SdfPtr tree, std::string id = {}, std::string task_tag = {})
      : tree_(std::move(tree)), id_(std::move(id)), tag_(std::move(task_tag)) {}
  SceneSdf(std::shared_ptr<const GridField> grid, std::string id = {},
           std::string task_tag = {})
      : grid_(std::move(grid)), id_(std::move(id)), tag_(std::move(task_tag)) {}

  bool valid() const { return tree_ != nullptr || grid_ != nullptr; }
  bool is_grid() const { return grid_ != nullptr; }
  const GridField* grid() const { return grid_.get(); }
  const std::string& id() const { return id_; }
  const std::string& task_tag() const { return tag_; }

  SdfResult eval(const Vec3& p) const {
    return grid_ ? grid_->eval(p) : tree_->eval(p);
  }
  double dist(const Vec3& p) const { return eval(p).dist; }

 private:
  SdfPtr tree_;
  std::shared_ptr<const GridField> grid_;
  std::string id_, tag_;
};

/// Signed distance and spatial gradient at a point.
inline SdfResult sdf_eval(const SceneSdf& scene, const Vec3& p) {
  return scene.eval(p);
}

/// Sample an analytic scene onto a grid. Grid node values equal the analytic
/// SDF at node centers exactly.
SceneSdf bake_grid(const SceneSdf& scene, int nx, int ny, int nz, Vec3 bbox_lo,
                   Vec3 bbox_hi);

/// .sdfgrid binary round trip: magic "SDFG", u32 version=1, u32 nx/ny/nz,
/// 6 x f64 bbox, then nx*ny*nz little-endian f64, x fastest.
void write_sdfgrid(const std::string& path, const GridField& grid);
std::shared_ptr<const GridField> read_sdfgrid(const std::string& path);

}  // namespace ldesign::scenes
