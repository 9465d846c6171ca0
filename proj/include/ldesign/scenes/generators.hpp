#pragma once

#include <vector>

#include "ldesign/numerics/rng.hpp"
#include "ldesign/scenes/sdf.hpp"

namespace ldesign::scenes {

/// Parametric head generator: smooth-union of an ellipsoid cranium, jaw
/// ellipsoid, rounded-cone nose and a mouth box, with subtracted eye
/// sockets. Total height is exactly `height` (0.40 m by default), centered
/// at z = 0, facing azimuth pi (-x).
struct FaceParams {
  double height = 0.40;
  double blend_radius = 0.02;
};

struct FaceShape {
  double cranium_rx, cranium_ry, cranium_rz;
  double jaw_rx, jaw_ry, jaw_rz, jaw_shift_x;
  double nose_len, nose_r1, nose_r2, nose_z;
  double eye_sep, eye_r, eye_z;
};

FaceShape sample_face_shape(std::uint64_t seed, const FaceParams& params);
SceneSdf gen_face_scene(std::uint64_t seed, const FaceParams& params = {});

/// Warehouse: a linear aisle of shelf segments with boxes resting on shelf
/// surfaces. The robot travels along x at y = 0; shelving sits at negative y.
struct WarehouseParams {
  double aisle_length = 8.0;      // X
  double shelf_y_front = -1.2;    // front face of shelving
  double shelf_depth = 0.6;
  double shelf_thickness = 0.04;
  int min_segments = 3, max_segments = 5;
  int min_levels = 2, max_levels = 4;
  double level_z_lo = 0.3, level_z_hi = 1.9;
  int min_boxes_per_level = 0, max_boxes_per_level = 2;
  double box_half_xy_lo = 0.08, box_half_xy_hi = 0.18;
  double box_half_z_lo = 0.08, box_half_z_hi = 0.22;
};

struct GroundTruthBox {
  int id;
  Vec3 center, half_extent;
};

struct ShelfSegment {
  double x_lo, x_hi;
  std::vector<double> level_z;  // top surface heights
  double depth;
};

struct WarehouseLayout {
  double aisle_length;
  std::vector<ShelfSegment> segments;
  std::vector<GroundTruthBox> boxes;
};

struct WarehouseScene {
  SceneSdf sdf;
  WarehouseLayout layout;
};

WarehouseScene gen_warehouse_scene(std::uint64_t seed,
                                   const WarehouseParams& params = {});

/// Pick-and-place end-effector motion: a Catmull-Rom spline through six
/// randomized waypoints (approach, grasp, lift, mid-transfer, pre-release,
/// retreat). Each frame's SDF is the union of the end-effector sphere, a
/// two-capsule arm proxy reaching up from a fixed base (the occluder) and,
/// optionally, the ground plane.
struct TrajectoryParams {
  int frames = 24;
  double frame_rate = 10.0;
  double effector_radius = 0.03;
  double arm_radius = 0.045;
  Vec3 arm_base{0.48, 0.0, 0.0};
  Vec3 workspace_lo{-0.45, -0.45, 0.0};
  Vec3 workspace_hi{0.45, 0.45, 0.9};
  bool include_ground = true;
  bool include_arm = true;
};

struct TimedSceneSequence {
  std::vector<SceneSdf> frames;  // frame index == time index
  double frame_rate;
  std::vector<Vec3> trajectory;  // ground-truth end-effector centers
};

TimedSceneSequence gen_trajectory_scene(std::uint64_t seed,
                                        const TrajectoryParams& params = {});

/// Catmull-Rom interpolation through waypoints, clamped ends; t in [0,1]
/// spans the whole path. The curve passes through every waypoint.
Vec3 catmull_rom(const std::vector<Vec3>& waypoints, double t);

enum class TaskKind { Face, Tracking, Warehouse };

struct TaskDataset {
  TaskKind kind;
  std::vector<SceneSdf> train_scenes, test_scenes;              // face/warehouse
  std::vector<WarehouseLayout> train_layouts, test_layouts;     // warehouse
  std::vector<TimedSceneSequence> train_seqs, test_seqs;        // tracking
  std::uint64_t train_seed = 0, test_seed = 0;
};

}  // namespace ldesign::scenes
