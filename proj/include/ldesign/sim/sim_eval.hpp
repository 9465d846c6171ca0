#pragma once

#include <span>
#include <string>
#include <vector>

#include "ldesign/design/design_space.hpp"
#include "ldesign/numerics/rng.hpp"
#include "ldesign/scenes/generators.hpp"
#include "ldesign/scenes/sdf.hpp"
#include "ldesign/sensors/sensor_synth.hpp"

namespace ldesign::sim {

using design::DesignBounds;
using design::Vec3;
using scenes::SceneSdf;
using scenes::TimedSceneSequence;
using scenes::WarehouseLayout;
using sensors::Ray;
using sensors::RaySet;

// ---------------------------------------------------------------------------
// Ray casting

struct Detection {
  int ray = 0;
  int frame = -1;  // -1 for static scenes
  bool hit = false;
  Vec3 point{};
  double tau_hit = 0;
  bool in_gate = false;
};

struct DetectionSet {
  std::vector<Detection> detections;
  int n_frames = 0;  // 0 for static scenes
};

/// Sphere tracing: step = max(0.8 * SDF, 1e-4) from tau = 0, stopping on the
/// surface (|SDF| <= eps_hit), past gate_max + margin, or at max_steps. The
/// detection is within-gate only if tau_hit lands inside [gate_min, gate_max].
Detection cast_ray(const SceneSdf& scene, const Vec3& origin, const Vec3& dir,
                   double gate_min, double gate_max, double eps_hit = 1e-4,
                   int max_steps = 512);

/// Static scene: each ray cast once. Timed sequence: each ray cast per frame,
/// detections tagged with the frame index.
DetectionSet simulate_system(const RaySet& rays, const SceneSdf& scene);
DetectionSet simulate_system(const RaySet& rays, const TimedSceneSequence& seq);

// ---------------------------------------------------------------------------
// Reconstruction + metrics

/// Projects hits onto the plane orthogonal to `view_axis`, triangulates the
/// 2D points (Bowyer-Watson, deterministic insertion by point index, exact
/// duplicates removed), drops triangles whose longest projected edge exceeds
/// `max_edge` (hole preservation), lifts the rest back to 3D and densifies
/// them by uniform barycentric sampling at `density` points/m^2.
std::vector<Vec3> delaunay_reconstruct(std::span<const Vec3> hits,
                                       Vec3 view_axis, double max_edge = 0.05,
                                       double density = 1e4,
                                       std::uint64_t seed = 0);

/// Raw Delaunay triangles (index triples into the deduplicated point list),
/// exposed for property checks; `points_out` receives the deduplicated points.
std::vector<std::array<int, 3>> delaunay_triangles(std::span<const Vec3> hits,
                                                   Vec3 view_axis,
                                                   std::vector<Vec3>* points_out
                                                   = nullptr);

/// Symmetric mean nearest-neighbor distance in millimeters, grid-accelerated:
/// (mean_a min_b |a-b| + mean_b min_a |a-b|) / 2 * 1000.
double chamfer_mm(std::span<const Vec3> recon, std::span<const Vec3> truth);

/// n surface points of the scene: random points in the bbox relaxed onto
/// SDF = 0 by projected Newton steps (p <- p - SDF * grad), rejecting points
/// that fail to converge to |SDF| <= 1e-6 in 50 steps.
std::vector<Vec3> sample_surface(const SceneSdf& scene, int n, Vec3 bbox_lo,
                                 Vec3 bbox_hi, std::uint64_t seed);

/// Per frame with >= 1 within-gate hit: the centroid of the hit points;
/// frames without hits are skipped. Catmull-Rom through the centroids,
/// sampled at `densify` times the frame density. Fewer than 2 frames with
/// hits -> tracking-failure.
std::vector<Vec3> reconstruct_trajectory(const DetectionSet& dets,
                                         int densify = 10);

/// Discrete Frechet distance via the standard dynamic program.
double frechet(std::span<const Vec3> a, std::span<const Vec3> b);

/// Percent of ground-truth boxes with no within-gate hit point within
/// `margin` of the box surface.
double miss_rate_pct(const DetectionSet& dets, const WarehouseLayout& layout,
                     double margin = 0.01);

// ---------------------------------------------------------------------------
// Bandwidth

struct BandwidthModel {
  double frame_rate = 10.0;  // Hz
  double bits_per_bin = 40.0;
  double r_bin = 1.0 / 66.0;  // meters per range bin, per experiment

  void validate() const {
    if (!(frame_rate > 0) || !(bits_per_bin > 0) || !(r_bin > 0))
      throw Error(ErrorKind::Config, "bandwidth: all model fields must be > 0");
  }
};

/// B = f * sum_rays bits_per_bin * ceil(gate / r_bin), in Mbps (1e6 bit/s).
double bandwidth_mbps(const RaySet& rays, const BandwidthModel& model);

// ---------------------------------------------------------------------------
// Baselines

/// Origin/angle domain for baseline ray generation: rays vary over the free
/// dims of `bounds` except tau; every ray gets the full gate [0, gate_max].
/// Circular intervals may be given unwrapped (e.g. [7pi/4, 2pi + pi/4]);
/// sampled azimuths are wrapped back into [0, 2pi).
struct TaskDomain {
  DesignBounds bounds;
  double gate_max = 1.0;
};

/// Evenly spaced grid over the domain's free dims (cell centers). With two
/// grid dims the budget is rounded to the nearest square (a note is printed
/// to stderr when that changes the count).
RaySet baseline_uniform(const TaskDomain& domain, int budget);

/// i.i.d. uniform rays over the domain, full-range gates.
RaySet baseline_random(const TaskDomain& domain, int budget,
                       std::uint64_t seed);

struct OccupancyGrid {
  Vec3 lo, hi;
  double voxel = 0.1;
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> prob;      // occupancy fraction per voxel, x fastest
  double threshold = 0.0;  // 80th percentile of occupied voxels
  // At-or-above keeps the occupied set nonempty when all occupied voxels
  // share one probability (e.g. a single training scene).
  bool high(int i, int j, int k) const {
    return prob[(static_cast<std::size_t>(k) * ny + j) * nx + i] >= threshold;
  }
};

/// Occupancy probability per voxel = fraction of scenes in which the voxel
/// center has SDF < sigma (inside or within sigma of a surface).
OccupancyGrid build_occupancy_grid(std::span<const SceneSdf> scenes, Vec3 lo,
                                   Vec3 hi, double voxel, double sigma = 0.025);

/// Rays sampled uniformly from the domain, accepted iff the gated segment
/// passes through a voxel with probability above the grid's threshold.
/// No qualifying voxel or vanishing acceptance -> degenerate-baseline.
RaySet baseline_occupancy(const OccupancyGrid& grid, const TaskDomain& domain,
                          int budget, std::uint64_t seed);

/// True iff the ray's gated segment intersects a high-probability voxel
/// (used by tests to replay the acceptance postcondition).
bool ray_hits_high_voxel(const OccupancyGrid& grid, const Ray& ray);

// ---------------------------------------------------------------------------
// Reporting

struct MetricReport {
  std::string task;
  std::string method;  // learned | uniform | random | occupancy | ...
  int budget = 0;
  int G = 0;
  std::string metric;  // chamfer_mm | frechet | miss_rate_pct | ...
  std::vector<double> values;
  double mean = 0;
  double two_sem = 0;  // 2 * stddev / sqrt(n), sample stddev (n - 1)
};

MetricReport metric_report(std::string task, std::string metric,
                           std::vector<double> values);

void write_detections_csv(const std::string& path, const DetectionSet& dets);
void write_hits_ply(const std::string& path, std::span<const Vec3> points);
void write_metrics_csv(const std::string& path,
                       std::span<const MetricReport> reports, bool append);

}  // namespace ldesign::sim
