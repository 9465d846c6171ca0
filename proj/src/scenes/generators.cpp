#include "ldesign/scenes/generators.hpp"

#include <cmath>

#include "ldesign/error.hpp"

namespace ldesign::scenes {

using numerics::Rng;

FaceShape sample_face_shape(std::uint64_t seed, const FaceParams& params) {
  Rng rng = Rng(seed).substream("scene-gen");
  double s = params.height / 0.40;  // all dimensions scale with height
  FaceShape f;
  f.cranium_rz = s * rng.uniform(0.125, 0.145);
  f.cranium_rx = s * rng.uniform(0.095, 0.115);
  f.cranium_ry = s * rng.uniform(0.090, 0.110);
  f.jaw_rz = s * rng.uniform(0.095, 0.115);
  f.jaw_rx = s * rng.uniform(0.070, 0.085);
  f.jaw_ry = s * rng.uniform(0.065, 0.080);
  f.jaw_shift_x = s * rng.uniform(-0.030, -0.010);
  f.nose_len = s * rng.uniform(0.025, 0.045);
  f.nose_r1 = s * rng.uniform(0.016, 0.022);
  f.nose_r2 = s * rng.uniform(0.008, 0.012);
  f.nose_z = s * rng.uniform(-0.020, 0.015);
  f.eye_sep = s * rng.uniform(0.030, 0.042);
  f.eye_r = s * rng.uniform(0.012, 0.016);
  f.eye_z = f.nose_z + s * rng.uniform(0.045, 0.060);
  return f;
}

SceneSdf gen_face_scene(std::uint64_t seed, const FaceParams& params) {
  const FaceShape f = sample_face_shape(seed, params);
  const double top = params.height / 2.0;
  const double bottom = -top;
  const double k = params.blend_radius;

  // Cranium top touches z = top, jaw bottom touches z = bottom exactly.
  Vec3 cc{0.0, 0.0, top - f.cranium_rz};
  Vec3 jc{f.jaw_shift_x, 0.0, bottom + f.jaw_rz};
  SdfPtr cranium = make_ellipsoid(cc, {f.cranium_rx, f.cranium_ry, f.cranium_rz});
  SdfPtr jaw = make_ellipsoid(jc, {f.jaw_rx, f.jaw_ry, f.jaw_rz});
  SdfPtr head = op_smooth_union(cranium, jaw, k);

  // Face x extent of the cranium at height z (face points toward -x).
  auto face_x = [&](double z, double y) {
    double tz = (z - cc.z) / f.cranium_rz;
    double ty = y / f.cranium_ry;
    double q = std::max(1.0 - tz * tz - ty * ty, 0.0);
    return -f.cranium_rx * std::sqrt(q);
  };

  double nx = face_x(f.nose_z, 0.0);
  Vec3 nose_base{nx + 0.012, 0.0, f.nose_z};
  Vec3 nose_tip{nx - f.nose_len, 0.0, f.nose_z - 0.008};
  SdfPtr nose = make_rounded_cone(nose_base, f.nose_r1, nose_tip, f.nose_r2);
  head = op_smooth_union(head, nose, 0.015);

  double mz = f.nose_z - 0.055;
  double mx = face_x(mz, 0.0);
  double jaw_mx = jc.x - f.jaw_rx;
  SdfPtr mouth = make_box({std::min(mx, jaw_mx) + 0.004, 0.0, mz},
                          {0.008, 0.020, 0.006});
  head = op_smooth_union(head, mouth, 0.010);

  for (double side : {-1.0, 1.0}) {
    double ex = face_x(f.eye_z, side * f.eye_sep);
    SdfPtr socket = make_sphere({ex, side * f.eye_sep, f.eye_z}, f.eye_r);
    head = op_subtract(head, socket);
  }

  return SceneSdf(head, "face_" + std::to_string(seed), "face");
}

WarehouseScene gen_warehouse_scene(std::uint64_t seed,
                                   const WarehouseParams& p) {
  if (p.aisle_length <= 0)
    throw Error(ErrorKind::Config, "aisle length must be positive");
  Rng rng = Rng(seed).substream("scene-gen");
  WarehouseScene out;
  out.layout.aisle_length = p.aisle_length;
  std::vector<SdfPtr> parts;

  int n_seg = p.min_segments +
              static_cast<int>(rng.uniform_int(p.max_segments - p.min_segments + 1));
  double y_back = p.shelf_y_front - p.shelf_depth;
  double y_mid = 0.5 * (p.shelf_y_front + y_back);
  double seg_w = p.aisle_length / n_seg;
  int box_id = 0;
  for (int s = 0; s < n_seg; ++s) {
    ShelfSegment seg;
    seg.x_lo = s * seg_w;
    seg.x_hi = (s + 1) * seg_w;
    seg.depth = p.shelf_depth;
    int n_lev = p.min_levels +
                static_cast<int>(rng.uniform_int(p.max_levels - p.min_levels + 1));
    for (int l = 0; l < n_lev; ++l) {
      double frac = (l + rng.uniform(0.25, 0.75)) / n_lev;
      double z_top = p.level_z_lo + frac * (p.level_z_hi - p.level_z_lo);
      seg.level_z.push_back(z_top);
      parts.push_back(make_box(
          {0.5 * (seg.x_lo + seg.x_hi), y_mid, z_top - 0.5 * p.shelf_thickness},
          {0.5 * seg_w, 0.5 * p.shelf_depth, 0.5 * p.shelf_thickness}));
      int n_box = p.min_boxes_per_level +
                  static_cast<int>(rng.uniform_int(
                      p.max_boxes_per_level - p.min_boxes_per_level + 1));
      for (int b = 0; b < n_box; ++b) {
        GroundTruthBox gb;
        gb.id = box_id++;
        gb.half_extent = {rng.uniform(p.box_half_xy_lo, p.box_half_xy_hi),
                          rng.uniform(p.box_half_xy_lo, p.box_half_xy_hi),
                          rng.uniform(p.box_half_z_lo, p.box_half_z_hi)};
        double bx = rng.uniform(seg.x_lo + gb.half_extent.x,
                                seg.x_hi - gb.half_extent.x);
        double by = std::clamp(y_mid + rng.uniform(-0.1, 0.1),
                               y_back + gb.half_extent.y,
                               p.shelf_y_front - gb.half_extent.y);
        gb.center = {bx, by, z_top + gb.half_extent.z};  // rests on shelf top
        out.layout.boxes.push_back(gb);
        parts.push_back(make_box(gb.center, gb.half_extent));
      }
    }
    out.layout.segments.push_back(seg);
  }
  out.sdf = SceneSdf(op_union(std::move(parts)),
                     "warehouse_" + std::to_string(seed), "warehouse");
  return out;
}

Vec3 catmull_rom(const std::vector<Vec3>& wp, double t) {
  int n = static_cast<int>(wp.size());
  if (n < 2) throw Error(ErrorKind::Config, "catmull_rom needs >= 2 waypoints");
  double s = std::clamp(t, 0.0, 1.0) * (n - 1);
  int i = std::min(static_cast<int>(s), n - 2);
  double u = s - i;
  auto at = [&](int k) { return wp[std::clamp(k, 0, n - 1)]; };
  Vec3 p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  double u2 = u * u, u3 = u2 * u;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * u +
                (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3);
}

TimedSceneSequence gen_trajectory_scene(std::uint64_t seed,
                                        const TrajectoryParams& p) {
  Rng rng = Rng(seed).substream("scene-gen");
  Vec3 pick{-0.25 + rng.uniform(-0.05, 0.05), -0.15 + rng.uniform(-0.10, 0.10),
            0.06 + rng.uniform(-0.02, 0.02)};
  Vec3 place{0.25 + rng.uniform(-0.05, 0.05), 0.15 + rng.uniform(-0.10, 0.10),
             0.06 + rng.uniform(-0.02, 0.02)};
  Vec3 mid = 0.5 * (pick + place);
  std::vector<Vec3> wp = {
      pick + Vec3{0, 0, 0.25 + rng.uniform(0.0, 0.05)},  // approach above pick
      pick,                                              // descent to grasp
      pick + Vec3{0, 0, 0.30 + rng.uniform(0.0, 0.05)},  // lift
      mid + Vec3{0, 0, 0.35 + rng.uniform(0.0, 0.08)},   // mid-transfer
      place + Vec3{0, 0, 0.15},                          // pre-release descent
      place + Vec3{0, 0, 0.35 + rng.uniform(0.0, 0.05)}, // final retreat
  };
  for (const Vec3& w : wp) {
    if (w.x < p.workspace_lo.x || w.x > p.workspace_hi.x ||
        w.y < p.workspace_lo.y || w.y > p.workspace_hi.y ||
        w.z < p.workspace_lo.z || w.z > p.workspace_hi.z)
      throw Error(ErrorKind::Config, "waypoint outside workspace box");
  }

  TimedSceneSequence seq;
  seq.frame_rate = p.frame_rate;
  for (int f = 0; f < p.frames; ++f) {
    double t = p.frames > 1 ? static_cast<double>(f) / (p.frames - 1) : 0.0;
    Vec3 eff = catmull_rom(wp, t);
    seq.trajectory.push_back(eff);

    std::vector<SdfPtr> parts;
    parts.push_back(make_sphere(eff, p.effector_radius));
    if (p.include_arm) {
      Vec3 base_top = p.arm_base + Vec3{0, 0, 0.05};
      Vec3 elbow = 0.5 * (base_top + eff) - Vec3{0, 0, 0.18};
      elbow.z = std::max(elbow.z, 0.05);
      parts.push_back(make_capsule(p.arm_base, elbow, p.arm_radius));
      parts.push_back(make_capsule(elbow, eff, 0.85 * p.arm_radius));
    }
    if (p.include_ground) parts.push_back(make_half_space({0, 0, 1}, 0.0));
    seq.frames.emplace_back(op_union(std::move(parts)),
                            "traj_" + std::to_string(seed) + "_f" + std::to_string(f),
                            "tracking");
  }
  return seq;
}

}  // namespace ldesign::scenes
