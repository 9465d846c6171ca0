#include "ldesign/sim/sim_eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace ldesign::sim {

using design::kTwoPi;
using numerics::Rng;

// ---------------------------------------------------------------------------
// Ray casting

Detection cast_ray(const SceneSdf& scene, const Vec3& origin, const Vec3& dir,
                   double gate_min, double gate_max, double eps_hit,
                   int max_steps) {
  if (std::fabs(dir.norm() - 1.0) > 1e-6)
    throw Error(ErrorKind::Domain, "cast_ray: direction must be unit length");
  if (gate_max < gate_min)
    throw Error(ErrorKind::Config, "cast_ray: gate_max < gate_min");
  const double t_stop = gate_max + 0.1;  // margin past the gate
  Detection det;
  double t = 0.0;
  for (int step = 0; step < max_steps; ++step) {
    Vec3 p = origin + t * dir;
    double d = scene.dist(p);
    if (std::fabs(d) <= eps_hit) {
      det.hit = true;
      det.point = p;
      det.tau_hit = t;
      det.in_gate = t >= gate_min && t <= gate_max;
      return det;
    }
    t += std::max(0.8 * d, 1e-4);
    if (t > t_stop) break;
  }
  return det;
}

DetectionSet simulate_system(const RaySet& rays, const SceneSdf& scene) {
  DetectionSet out;
  out.detections.reserve(rays.rays.size());
  for (size_t i = 0; i < rays.rays.size(); ++i) {
    const Ray& r = rays.rays[i];
    Detection d = cast_ray(scene, r.origin,
                           design::direction_vector(r.phi, r.psi), r.tau_min,
                           r.tau_max);
    d.ray = static_cast<int>(i);
    out.detections.push_back(d);
  }
  return out;
}

DetectionSet simulate_system(const RaySet& rays, const TimedSceneSequence& seq) {
  DetectionSet out;
  out.n_frames = static_cast<int>(seq.frames.size());
  out.detections.reserve(rays.rays.size() * seq.frames.size());
  for (int f = 0; f < out.n_frames; ++f)
    for (size_t i = 0; i < rays.rays.size(); ++i) {
      const Ray& r = rays.rays[i];
      Detection d = cast_ray(seq.frames[f], r.origin,
                             design::direction_vector(r.phi, r.psi), r.tau_min,
                             r.tau_max);
      d.ray = static_cast<int>(i);
      d.frame = f;
      out.detections.push_back(d);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Delaunay (Bowyer-Watson in the projection plane)

namespace {

struct P2 {
  double u, v;
  int idx;  // index into the deduplicated 3D point list
};

struct Tri {
  int a, b, c;
  double cu, cv, r2;  // circumcircle
};

bool circumcircle(const P2& a, const P2& b, const P2& c, double& cu, double& cv,
                  double& r2) {
  double d = 2 * (a.u * (b.v - c.v) + b.u * (c.v - a.v) + c.u * (a.v - b.v));
  if (std::fabs(d) < 1e-14) return false;  // collinear
  double a2 = a.u * a.u + a.v * a.v;
  double b2 = b.u * b.u + b.v * b.v;
  double c2 = c.u * c.u + c.v * c.v;
  cu = (a2 * (b.v - c.v) + b2 * (c.v - a.v) + c2 * (a.v - b.v)) / d;
  cv = (a2 * (c.u - b.u) + b2 * (a.u - c.u) + c2 * (b.u - a.u)) / d;
  r2 = (a.u - cu) * (a.u - cu) + (a.v - cv) * (a.v - cv);
  return true;
}

/// Orthonormal basis of the plane orthogonal to `axis`.
void plane_basis(Vec3 axis, Vec3& e1, Vec3& e2) {
  Vec3 n = axis.normalized();
  if (n.norm() == 0)
    throw Error(ErrorKind::Config, "delaunay: zero view axis");
  Vec3 up = std::fabs(n.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  e1 = n.cross(up).normalized();
  e2 = n.cross(e1);
}

std::vector<Tri> bowyer_watson(std::vector<P2>& pts) {
  // Super-triangle around the bounding box.
  double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
  for (const P2& p : pts) {
    ulo = std::min(ulo, p.u);
    uhi = std::max(uhi, p.u);
    vlo = std::min(vlo, p.v);
    vhi = std::max(vhi, p.v);
  }
  double span = std::max({uhi - ulo, vhi - vlo, 1.0});
  double cu = (ulo + uhi) / 2, cv = (vlo + vhi) / 2;
  int n = static_cast<int>(pts.size());
  pts.push_back({cu - 30 * span, cv - 10 * span, -1});
  pts.push_back({cu + 30 * span, cv - 10 * span, -1});
  pts.push_back({cu, cv + 30 * span, -1});

  std::vector<Tri> tris;
  Tri super{n, n + 1, n + 2, 0, 0, 0};
  circumcircle(pts[n], pts[n + 1], pts[n + 2], super.cu, super.cv, super.r2);
  tris.push_back(super);

  for (int i = 0; i < n; ++i) {
    const P2& p = pts[i];
    std::vector<Tri> keep;
    std::vector<std::pair<int, int>> edges;
    for (const Tri& t : tris) {
      double du = p.u - t.cu, dv = p.v - t.cv;
      // On-circle counts as inside so cocircular configurations (grids)
      // retriangulate deterministically in insertion order.
      if (du * du + dv * dv <= t.r2 * (1 + 1e-12) + 1e-18) {
        edges.emplace_back(t.a, t.b);
        edges.emplace_back(t.b, t.c);
        edges.emplace_back(t.c, t.a);
      } else {
        keep.push_back(t);
      }
    }
    // Boundary edges appear exactly once (orientation-insensitive match).
    std::vector<std::pair<int, int>> boundary;
    for (size_t e = 0; e < edges.size(); ++e) {
      bool shared = false;
      for (size_t f = 0; f < edges.size(); ++f) {
        if (e == f) continue;
        if ((edges[e].first == edges[f].second &&
             edges[e].second == edges[f].first) ||
            (edges[e].first == edges[f].first &&
             edges[e].second == edges[f].second)) {
          shared = true;
          break;
        }
      }
      if (!shared) boundary.push_back(edges[e]);
    }
    tris = std::move(keep);
    for (const auto& [ea, eb] : boundary) {
      Tri t{ea, eb, i, 0, 0, 0};
      if (circumcircle(pts[ea], pts[eb], pts[i], t.cu, t.cv, t.r2))
        tris.push_back(t);
    }
  }
  // Drop triangles touching the super-triangle.
  std::vector<Tri> out;
  for (const Tri& t : tris)
    if (t.a < n && t.b < n && t.c < n) out.push_back(t);
  return out;
}

}  // namespace

std::vector<std::array<int, 3>> delaunay_triangles(
    std::span<const Vec3> hits, Vec3 view_axis, std::vector<Vec3>* points_out) {
  Vec3 e1, e2;
  plane_basis(view_axis, e1, e2);

  // Deduplicate projected points (exact 2D coordinates).
  std::vector<Vec3> pts3;
  std::vector<P2> pts;
  for (const Vec3& h : hits) {
    double u = h.dot(e1), v = h.dot(e2);
    bool dup = false;
    for (const P2& q : pts)
      if (std::fabs(q.u - u) < 1e-12 && std::fabs(q.v - v) < 1e-12) {
        dup = true;
        break;
      }
    if (dup) continue;
    pts.push_back({u, v, static_cast<int>(pts3.size())});
    pts3.push_back(h);
  }
  if (pts.size() < 3)
    throw Error(ErrorKind::DegenerateReconstruction,
                "delaunay: fewer than 3 distinct projected points");

  std::vector<Tri> tris = bowyer_watson(pts);
  if (tris.empty())
    throw Error(ErrorKind::DegenerateReconstruction,
                "delaunay: all points collinear");
  if (points_out) *points_out = pts3;
  std::vector<std::array<int, 3>> out;
  out.reserve(tris.size());
  for (const Tri& t : tris)
    out.push_back({pts[t.a].idx, pts[t.b].idx, pts[t.c].idx});
  return out;
}

std::vector<Vec3> delaunay_reconstruct(std::span<const Vec3> hits,
                                       Vec3 view_axis, double max_edge,
                                       double density, std::uint64_t seed) {
  std::vector<Vec3> pts3;
  std::vector<std::array<int, 3>> tris =
      delaunay_triangles(hits, view_axis, &pts3);
  Vec3 e1, e2;
  plane_basis(view_axis, e1, e2);

  Rng rng = Rng(seed).substream("densify");
  std::vector<Vec3> out;
  for (const auto& t : tris) {
    const Vec3 &a = pts3[t[0]], &b = pts3[t[1]], &c = pts3[t[2]];
    auto proj_len = [&](const Vec3& p, const Vec3& q) {
      Vec3 d = q - p;
      double du = d.dot(e1), dv = d.dot(e2);
      return std::sqrt(du * du + dv * dv);
    };
    double longest =
        std::max({proj_len(a, b), proj_len(b, c), proj_len(c, a)});
    if (longest > max_edge) continue;  // hole preservation
    double area = 0.5 * (b - a).cross(c - a).norm();
    int n = static_cast<int>(std::ceil(area * density));
    for (int k = 0; k < n; ++k) {
      double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
      out.push_back(a * (1 - r1) + b * (r1 * (1 - r2)) + c * (r1 * r2));
    }
  }
  if (out.empty())
    throw Error(ErrorKind::DegenerateReconstruction,
                "delaunay: no triangles under the edge limit");
  return out;
}

// ---------------------------------------------------------------------------
// Chamfer via a small kd-tree

namespace {

class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> pts) : pts_(pts.begin(), pts.end()) {
    idx_.resize(pts_.size());
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!pts_.empty()) root_ = build(0, static_cast<int>(pts_.size()));
  }

  double nearest_sq(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, q, best);
    return best;
  }

 private:
  struct Node {
    int axis = -1;
    double split = 0;
    int point = -1;
    int left = -1, right = -1;
  };

  static double coord(const Vec3& p, int axis) {
    return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
  }

  int build(int lo, int hi) {
    if (lo >= hi) return -1;
    Vec3 mn = pts_[idx_[lo]], mx = mn;
    for (int i = lo; i < hi; ++i) {
      const Vec3& p = pts_[idx_[i]];
      mn = {std::min(mn.x, p.x), std::min(mn.y, p.y), std::min(mn.z, p.z)};
      mx = {std::max(mx.x, p.x), std::max(mx.y, p.y), std::max(mx.z, p.z)};
    }
    Vec3 ext = mx - mn;
    int axis = ext.x >= ext.y ? (ext.x >= ext.z ? 0 : 2) : (ext.y >= ext.z ? 1 : 2);
    int mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](int a, int b) {
                       return coord(pts_[a], axis) < coord(pts_[b], axis);
                     });
    Node node;
    node.axis = axis;
    node.point = idx_[mid];
    node.split = coord(pts_[node.point], axis);
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int l = build(lo, mid);
    int r = build(mid + 1, hi);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Vec3& q, double& best) const {
    if (ni < 0) return;
    const Node& n = nodes_[ni];
    Vec3 d = q - pts_[n.point];
    best = std::min(best, d.dot(d));
    double delta = coord(q, n.axis) - n.split;
    int near = delta <= 0 ? n.left : n.right;
    int far = delta <= 0 ? n.right : n.left;
    search(near, q, best);
    if (delta * delta < best) search(far, q, best);
  }

  std::vector<Vec3> pts_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

double one_sided_mean(std::span<const Vec3> from, const KdTree& tree) {
  double acc = 0;
  for (const Vec3& p : from) acc += std::sqrt(tree.nearest_sq(p));
  return acc / from.size();
}

}  // namespace

double chamfer_mm(std::span<const Vec3> recon, std::span<const Vec3> truth) {
  if (recon.empty() || truth.empty())
    throw Error(ErrorKind::Degenerate, "chamfer: empty point set");
  KdTree tt(truth), rt(recon);
  return 1000.0 * 0.5 * (one_sided_mean(recon, tt) + one_sided_mean(truth, rt));
}

std::vector<Vec3> sample_surface(const SceneSdf& scene, int n, Vec3 bbox_lo,
                                 Vec3 bbox_hi, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::Config, "sample_surface: n must be >= 1");
  Rng rng = Rng(seed).substream("surface-sampling");
  std::vector<Vec3> out;
  out.reserve(n);
  long attempts = 0;
  const long max_attempts = 1000L * n;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > max_attempts)
      throw Error(ErrorKind::Degenerate,
                  "sample_surface: projection fails to converge (no surface "
                  "in bbox?)");
    Vec3 p{rng.uniform(bbox_lo.x, bbox_hi.x), rng.uniform(bbox_lo.y, bbox_hi.y),
           rng.uniform(bbox_lo.z, bbox_hi.z)};
    bool ok = false;
    for (int it = 0; it < 50; ++it) {
      scenes::SdfResult r = scene.eval(p);
      if (std::fabs(r.dist) <= 1e-6) {
        ok = true;
        break;
      }
      double g2 = std::max(r.grad.dot(r.grad), 1e-12);
      p = p - r.grad * (r.dist / g2);
    }
    if (ok) out.push_back(p);
  }
  return out;
}

std::vector<Vec3> reconstruct_trajectory(const DetectionSet& dets,
                                         int densify) {
  if (dets.n_frames < 1)
    throw Error(ErrorKind::Config,
                "reconstruct_trajectory: needs a timed detection set");
  std::vector<Vec3> centroid(dets.n_frames, Vec3{});
  std::vector<int> count(dets.n_frames, 0);
  for (const Detection& d : dets.detections) {
    if (!d.hit || !d.in_gate || d.frame < 0) continue;
    centroid[d.frame] = centroid[d.frame] + d.point;
    ++count[d.frame];
  }
  std::vector<Vec3> waypoints;
  for (int f = 0; f < dets.n_frames; ++f)
    if (count[f] > 0) waypoints.push_back(centroid[f] * (1.0 / count[f]));
  if (waypoints.size() < 2)
    throw Error(ErrorKind::TrackingFailure,
                "reconstruct_trajectory: fewer than 2 frames with hits");
  int m = static_cast<int>(waypoints.size());
  int samples = densify * (m - 1) + 1;
  std::vector<Vec3> out;
  out.reserve(samples);
  for (int i = 0; i < samples; ++i)
    out.push_back(scenes::catmull_rom(waypoints, i / double(samples - 1)));
  return out;
}

double frechet(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty())
    throw Error(ErrorKind::Degenerate, "frechet: empty polyline");
  const size_t n = a.size(), m = b.size();
  std::vector<double> prev(m), cur(m);
  for (size_t j = 0; j < m; ++j) {
    double d = (a[0] - b[j]).norm();
    prev[j] = j == 0 ? d : std::max(prev[j - 1], d);
  }
  for (size_t i = 1; i < n; ++i) {
    cur[0] = std::max(prev[0], (a[i] - b[0]).norm());
    for (size_t j = 1; j < m; ++j) {
      double reach = std::min({prev[j], prev[j - 1], cur[j - 1]});
      cur[j] = std::max(reach, (a[i] - b[j]).norm());
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double miss_rate_pct(const DetectionSet& dets, const WarehouseLayout& layout,
                     double margin) {
  if (layout.boxes.empty())
    throw Error(ErrorKind::Degenerate, "miss_rate: layout has no boxes");
  auto box_surface_dist = [](const Vec3& p, const scenes::GroundTruthBox& b) {
    Vec3 q{std::fabs(p.x - b.center.x) - b.half_extent.x,
           std::fabs(p.y - b.center.y) - b.half_extent.y,
           std::fabs(p.z - b.center.z) - b.half_extent.z};
    Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    double outside = qp.norm();
    double inside = std::min(std::max({q.x, q.y, q.z}), 0.0);
    return std::fabs(outside + inside);
  };
  int missed = 0;
  for (const scenes::GroundTruthBox& b : layout.boxes) {
    bool found = false;
    for (const Detection& d : dets.detections) {
      if (!d.hit || !d.in_gate) continue;
      if (box_surface_dist(d.point, b) <= margin) {
        found = true;
        break;
      }
    }
    missed += !found;
  }
  return 100.0 * missed / layout.boxes.size();
}

// ---------------------------------------------------------------------------
// Bandwidth

double bandwidth_mbps(const RaySet& rays, const BandwidthModel& model) {
  model.validate();
  double bits = 0;
  for (const Ray& r : rays.rays) {
    double gate = r.tau_max - r.tau_min;
    if (gate < 0)
      throw Error(ErrorKind::Domain, "bandwidth: negative gate width");
    double bins = std::ceil(gate / model.r_bin - 1e-9);
    bits += model.bits_per_bin * std::max(bins, 1.0);
  }
  return model.frame_rate * bits / 1e6;
}

// ---------------------------------------------------------------------------
// Baselines

namespace {

std::vector<int> grid_dims(const DesignBounds& b) {
  std::vector<int> dims;
  for (int i = 0; i < 5; ++i)  // tau never gridded; gates are full-range
    if (!b.fixed[i]) dims.push_back(i);
  return dims;
}

Ray make_domain_ray(const DesignBounds& b, const std::array<double, 6>& val,
                    double gate_max) {
  Ray r;
  r.origin = {val[0], val[1], val[2]};
  r.phi = std::fmod(val[3], kTwoPi);
  if (r.phi < 0) r.phi += kTwoPi;
  r.psi = val[4];
  r.tau_min = 0.0;
  r.tau_max = gate_max;
  r.sensor = 0;
  (void)b;
  return r;
}

std::array<double, 6> fixed_values(const DesignBounds& b) {
  std::array<double, 6> v{};
  for (int i = 0; i < 6; ++i) v[i] = b.lo[i];
  return v;
}

}  // namespace

RaySet baseline_uniform(const TaskDomain& domain, int budget) {
  domain.bounds.validate();
  if (budget < 1)
    throw Error(ErrorKind::Config, "baseline_uniform: budget must be >= 1");
  std::vector<int> dims = grid_dims(domain.bounds);
  if (dims.empty() || dims.size() > 2)
    throw Error(ErrorKind::Config,
                "baseline_uniform: supports 1 or 2 grid dimensions, got " +
                    std::to_string(dims.size()));
  RaySet out;
  std::array<double, 6> val = fixed_values(domain.bounds);
  if (dims.size() == 1) {
    int d = dims[0];
    for (int i = 0; i < budget; ++i) {
      val[d] = domain.bounds.lo[d] +
               (i + 0.5) / budget * domain.bounds.range(d);
      out.rays.push_back(make_domain_ray(domain.bounds, val, domain.gate_max));
    }
  } else {
    // Factor the budget into the closest divisor pair; fall back to the
    // nearest square for primes.
    int best_a = 0;
    for (int a = 1; a * a <= budget; ++a)
      if (budget % a == 0) best_a = a;
    int na = best_a, nb = budget / best_a;
    if (na == 1 && budget > 3) {
      int side = static_cast<int>(std::llround(std::sqrt(double(budget))));
      std::fprintf(stderr,
                   "baseline_uniform: budget %d is not a grid; using %dx%d "
                   "(%d rays)\n",
                   budget, side, side, side * side);
      na = nb = side;
    }
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j) {
        val[dims[0]] = domain.bounds.lo[dims[0]] +
                       (i + 0.5) / na * domain.bounds.range(dims[0]);
        val[dims[1]] = domain.bounds.lo[dims[1]] +
                       (j + 0.5) / nb * domain.bounds.range(dims[1]);
        out.rays.push_back(
            make_domain_ray(domain.bounds, val, domain.gate_max));
      }
  }
  out.budget = static_cast<int>(out.rays.size());
  return out;
}

RaySet baseline_random(const TaskDomain& domain, int budget,
                       std::uint64_t seed) {
  domain.bounds.validate();
  if (budget < 1)
    throw Error(ErrorKind::Config, "baseline_random: budget must be >= 1");
  Rng rng = Rng(seed).substream("baseline");
  RaySet out;
  out.budget = budget;
  std::vector<int> dims = grid_dims(domain.bounds);
  std::array<double, 6> val = fixed_values(domain.bounds);
  for (int k = 0; k < budget; ++k) {
    for (int d : dims)
      val[d] = rng.uniform(domain.bounds.lo[d], domain.bounds.hi[d]);
    out.rays.push_back(make_domain_ray(domain.bounds, val, domain.gate_max));
  }
  return out;
}

OccupancyGrid build_occupancy_grid(std::span<const SceneSdf> scenes, Vec3 lo,
                                   Vec3 hi, double voxel, double sigma) {
  if (scenes.empty())
    throw Error(ErrorKind::Config, "occupancy grid: no scenes");
  if (!(voxel > 0))
    throw Error(ErrorKind::Config, "occupancy grid: voxel size must be > 0");
  OccupancyGrid g;
  g.lo = lo;
  g.hi = hi;
  g.voxel = voxel;
  g.nx = std::max(1, static_cast<int>(std::ceil((hi.x - lo.x) / voxel)));
  g.ny = std::max(1, static_cast<int>(std::ceil((hi.y - lo.y) / voxel)));
  g.nz = std::max(1, static_cast<int>(std::ceil((hi.z - lo.z) / voxel)));
  g.prob.assign(static_cast<std::size_t>(g.nx) * g.ny * g.nz, 0.0);
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        Vec3 c{lo.x + (i + 0.5) * voxel, lo.y + (j + 0.5) * voxel,
               lo.z + (k + 0.5) * voxel};
        int occ = 0;
        for (const SceneSdf& s : scenes) occ += s.dist(c) < sigma;
        g.prob[(static_cast<std::size_t>(k) * g.ny + j) * g.nx + i] =
            static_cast<double>(occ) / scenes.size();
      }
  // Threshold: 80th percentile of the occupied voxels; acceptance uses
  // prob >= threshold so a single-scene {0,1} grid keeps its occupied set.
  std::vector<double> pos;
  for (double p : g.prob)
    if (p > 0) pos.push_back(p);
  if (pos.empty()) {
    g.threshold = std::numeric_limits<double>::infinity();
  } else {
    std::sort(pos.begin(), pos.end());
    g.threshold = pos[static_cast<std::size_t>(0.8 * (pos.size() - 1))];
  }
  return g;
}

bool ray_hits_high_voxel(const OccupancyGrid& grid, const Ray& ray) {
  Vec3 dir = design::direction_vector(ray.phi, ray.psi);
  double step = grid.voxel / 3.0;
  for (double t = ray.tau_min; t <= ray.tau_max + 1e-12; t += step) {
    Vec3 p = ray.origin + t * dir;
    int i = static_cast<int>(std::floor((p.x - grid.lo.x) / grid.voxel));
    int j = static_cast<int>(std::floor((p.y - grid.lo.y) / grid.voxel));
    int k = static_cast<int>(std::floor((p.z - grid.lo.z) / grid.voxel));
    if (i < 0 || j < 0 || k < 0 || i >= grid.nx || j >= grid.ny ||
        k >= grid.nz)
      continue;
    if (grid.high(i, j, k)) return true;
  }
  return false;
}

RaySet baseline_occupancy(const OccupancyGrid& grid, const TaskDomain& domain,
                          int budget, std::uint64_t seed) {
  if (budget < 1)
    throw Error(ErrorKind::Config, "baseline_occupancy: budget must be >= 1");
  bool any_high = false;
  for (double p : grid.prob)
    if (p >= grid.threshold && p > 0) {
      any_high = true;
      break;
    }
  if (!any_high)
    throw Error(ErrorKind::DegenerateBaseline,
                "baseline_occupancy: no voxel above the occupancy threshold");
  Rng rng = Rng(seed).substream("baseline");
  std::vector<int> dims = grid_dims(domain.bounds);
  std::array<double, 6> val = fixed_values(domain.bounds);
  RaySet out;
  out.budget = budget;
  long attempts = 0;
  const long max_attempts = 10000L * budget;
  while (static_cast<int>(out.rays.size()) < budget) {
    if (++attempts > max_attempts)
      throw Error(ErrorKind::DegenerateBaseline,
                  "baseline_occupancy: acceptance rate too low (" +
                      std::to_string(out.rays.size()) + "/" +
                      std::to_string(attempts) + ")");
    for (int d : dims)
      val[d] = rng.uniform(domain.bounds.lo[d], domain.bounds.hi[d]);
    Ray r = make_domain_ray(domain.bounds, val, domain.gate_max);
    if (ray_hits_high_voxel(grid, r)) out.rays.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reporting

MetricReport metric_report(std::string task, std::string metric,
                           std::vector<double> values) {
  if (values.size() < 2)
    throw Error(ErrorKind::Degenerate,
                "metric_report: needs at least 2 values");
  MetricReport r;
  r.task = std::move(task);
  r.metric = std::move(metric);
  r.values = std::move(values);
  double n = static_cast<double>(r.values.size());
  r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / n;
  double ss = 0;
  for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
  double sd = std::sqrt(ss / (n - 1));
  r.two_sem = 2.0 * sd / std::sqrt(n);
  return r;
}

void write_detections_csv(const std::string& path, const DetectionSet& dets) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f)
    throw Error(ErrorKind::Config, "cannot write detections CSV: " + path);
  std::fprintf(f, "ray,frame,hit,x,y,z,tau_hit,in_gate\n");
  for (const Detection& d : dets.detections)
    std::fprintf(f, "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n", d.ray, d.frame,
                 d.hit ? 1 : 0, d.point.x, d.point.y, d.point.z, d.tau_hit,
                 d.in_gate ? 1 : 0);
  std::fclose(f);
}

void write_hits_ply(const std::string& path, std::span<const Vec3> points) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::Config, "cannot write PLY: " + path);
  std::fprintf(f,
               "ply\nformat ascii 1.0\nelement vertex %zu\nproperty float x\n"
               "property float y\nproperty float z\nend_header\n",
               points.size());
  for (const Vec3& p : points)
    std::fprintf(f, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
  std::fclose(f);
}

void write_metrics_csv(const std::string& path,
                       std::span<const MetricReport> reports, bool append) {
  std::FILE* f = std::fopen(path.c_str(), append ? "ab" : "wb");
  if (!f) throw Error(ErrorKind::Config, "cannot write metrics CSV: " + path);
  if (!append)
    std::fprintf(f, "task,method,budget,G,metric,mean,two_sem\n");
  for (const MetricReport& r : reports)
    std::fprintf(f, "%s,%s,%d,%d,%s,%.10g,%.10g\n", r.task.c_str(),
                 r.method.c_str(), r.budget, r.G, r.metric.c_str(), r.mean,
                 r.two_sem);
  std::fclose(f);
}

}  // namespace ldesign::sim
