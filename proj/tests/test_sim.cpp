#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "ldesign/sim/sim_eval.hpp"

using namespace ldesign;
using namespace ldesign::sim;
using design::kPi;
using design::kTwoPi;
using design::Vec3;
using numerics::Rng;
using scenes::SceneSdf;
using sensors::Ray;
using sensors::RaySet;

namespace {

SceneSdf unit_sphere() { return SceneSdf(scenes::make_sphere({0, 0, 0}, 1.0), "s"); }

Detection oracle_cast(const SceneSdf& scene, const Vec3& origin,
                      const Vec3& dir, double gate_min, double gate_max,
                      double eps = 1e-4) {
  Detection det;
  for (double t = 0; t <= gate_max + 0.1; t += 1e-4) {
    Vec3 p = origin + t * dir;
    if (scene.dist(p) <= eps) {
      det.hit = true;
      det.point = p;
      det.tau_hit = t;
      det.in_gate = t >= gate_min && t <= gate_max;
      return det;
    }
  }
  return det;
}

RaySet one_ray(Vec3 o, double phi, double psi, double lo, double hi) {
  RaySet rs;
  rs.budget = 1;
  rs.rays.push_back({o, phi, psi, lo, hi, 0});
  return rs;
}

}  // namespace

// ---------------------------------------------------------------------------
// Ray casting

TEST_CASE("cast_ray: analytic sphere intersection and time gating") {
  SceneSdf s = unit_sphere();
  Detection d = cast_ray(s, {2, 0, 0}, {-1, 0, 0}, 0.0, 2.0);
  REQUIRE(d.hit);
  CHECK(d.tau_hit == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(d.in_gate);
  CHECK(std::fabs(s.dist(d.point)) <= 1e-4);

  Detection gated = cast_ray(s, {2, 0, 0}, {-1, 0, 0}, 0.0, 0.5);
  CHECK_FALSE((gated.hit && gated.in_gate));

  // A hit past the gate minimum is recorded but flagged out-of-gate.
  Detection late = cast_ray(s, {2, 0, 0}, {-1, 0, 0}, 1.5, 2.0);
  REQUIRE(late.hit);
  CHECK_FALSE(late.in_gate);

  CHECK_THROWS_AS(cast_ray(s, {2, 0, 0}, {-2, 0, 0}, 0, 2), Error);
  CHECK_THROWS_AS(cast_ray(s, {2, 0, 0}, {-1, 0, 0}, 2, 1), Error);
}

TEST_CASE("cast_ray: agrees with the fine-marching oracle on random rays") {
  SceneSdf s(scenes::op_union({scenes::make_sphere({0, 0, 0}, 0.4),
                               scenes::make_box({0.3, 0.3, 0}, {0.15, 0.1, 0.2})}),
             "blob");
  Rng rng(1);
  int agree = 0, total = 10000, hits = 0;
  for (int i = 0; i < total; ++i) {
    double a = rng.uniform(0, kTwoPi), b = rng.uniform(-0.6, 0.6);
    Vec3 o = 1.2 * design::direction_vector(a, b);
    // Aim near the origin with some scatter.
    Vec3 target{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                rng.uniform(-0.3, 0.3)};
    Vec3 dir = (target - o).normalized();
    Detection fast = cast_ray(s, o, dir, 0.0, 1.6);
    Detection slow = oracle_cast(s, o, dir, 0.0, 1.6);
    if (fast.hit == slow.hit) {
      bool ok = true;
      if (fast.hit) {
        ++hits;
        ok = std::fabs(fast.tau_hit - slow.tau_hit) <= 1e-3;
      }
      agree += ok;
    }
  }
  CHECK(hits > 2000);
  CHECK(agree >= total * 999 / 1000);
}

TEST_CASE("simulate_system: empty scenes and superset monotonicity") {
  SceneSdf far(scenes::make_sphere({100, 0, 0}, 0.5), "far");
  RaySet rs = one_ray({0, 0, 0}, 0, 0, 0, 2);
  DetectionSet d = simulate_system(rs, far);
  int in_gate_hits = 0;
  for (const Detection& det : d.detections) in_gate_hits += det.hit && det.in_gate;
  CHECK(in_gate_hits == 0);

  SceneSdf s = unit_sphere();
  Rng rng(2);
  RaySet small, big;
  for (int i = 0; i < 40; ++i) {
    Ray r{{2, rng.uniform(-1, 1), rng.uniform(-1, 1)}, kPi, rng.uniform(-0.3, 0.3),
          0, 3, 0};
    if (i < 20) small.rays.push_back(r);
    big.rays.push_back(r);
  }
  auto hits = [&](const RaySet& rays) {
    DetectionSet ds = simulate_system(rays, s);
    int n = 0;
    for (const Detection& det : ds.detections) n += det.hit && det.in_gate;
    return n;
  };
  CHECK(hits(big) >= hits(small));
}

TEST_CASE("simulate_system: timed sequences tag detections with frames") {
  scenes::TimedSceneSequence seq;
  seq.frame_rate = 10;
  for (int f = 0; f < 3; ++f)
    seq.frames.push_back(
        SceneSdf(scenes::make_sphere({0.1 * f, 0, 0.5}, 0.1), "f"));
  RaySet rs = one_ray({0, 0, 2}, 0, -kPi / 2, 0, 3);
  DetectionSet d = simulate_system(rs, seq);
  REQUIRE(d.detections.size() == 3);
  REQUIRE(d.n_frames == 3);
  for (int f = 0; f < 3; ++f) CHECK(d.detections[f].frame == f);
  CHECK(d.detections[0].hit);  // straight down onto the frame-0 sphere
}

// ---------------------------------------------------------------------------
// Delaunay

TEST_CASE("delaunay: a small square gives two coplanar triangles") {
  std::vector<Vec3> pts = {{0, 0, 0}, {0, 0.03, 0}, {0, 0.03, 0.03}, {0, 0, 0.03}};
  auto tris = delaunay_triangles(pts, {1, 0, 0});
  CHECK(tris.size() == 2);
  auto dense = delaunay_reconstruct(pts, {1, 0, 0});
  REQUIRE(dense.size() > 5);
  for (const Vec3& p : dense) {
    CHECK(p.x == doctest::Approx(0.0).scale(1.0));
    CHECK(p.y >= -1e-12);
    CHECK(p.y <= 0.03 + 1e-12);
  }

  // Duplicates are removed before triangulation.
  std::vector<Vec3> dup = pts;
  dup.push_back(pts[0]);
  dup.push_back(pts[2]);
  CHECK(delaunay_triangles(dup, {1, 0, 0}).size() == 2);
}

TEST_CASE("delaunay: empty-circumcircle property on random point sets") {
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    int n = 20 + static_cast<int>(rng.uniform_int(180));
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i)
      pts.push_back({0.0, rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    std::vector<Vec3> dedup;
    auto tris = delaunay_triangles(pts, {1, 0, 0}, &dedup);
    REQUIRE(!tris.empty());
    for (const auto& t : tris) {
      // Circumcircle in the (y, z) plane.
      double ax = dedup[t[0]].y, ay = dedup[t[0]].z;
      double bx = dedup[t[1]].y, by = dedup[t[1]].z;
      double cx = dedup[t[2]].y, cy = dedup[t[2]].z;
      double d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
      REQUIRE(std::fabs(d) > 1e-14);
      double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by,
             c2 = cx * cx + cy * cy;
      double cu = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d;
      double cv = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d;
      double r2 = (ax - cu) * (ax - cu) + (ay - cv) * (ay - cv);
      for (const Vec3& p : dedup) {
        double du = p.y - cu, dv = p.z - cv;
        REQUIRE(du * du + dv * dv >= r2 * (1 - 1e-9) - 1e-15);
      }
    }
  }
}

TEST_CASE("delaunay: long edges are pruned and degenerate input rejected") {
  // Two clusters farther apart than the 5 cm edge limit: the bridge
  // triangles disappear, points remain only inside the clusters.
  std::vector<Vec3> pts;
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    pts.push_back({0, rng.uniform(0.0, 0.03), rng.uniform(0.0, 0.03)});
    pts.push_back({0, 0.2 + rng.uniform(0.0, 0.03), rng.uniform(0.0, 0.03)});
  }
  auto dense = delaunay_reconstruct(pts, {1, 0, 0});
  for (const Vec3& p : dense) {
    bool in_left = p.y <= 0.031;
    bool in_right = p.y >= 0.199;
    REQUIRE((in_left || in_right));
  }

  std::vector<Vec3> two = {{0, 0, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(delaunay_triangles(two, {1, 0, 0}), Error);
  try {
    delaunay_triangles(two, {1, 0, 0});
  } catch (const Error& e) {
    CHECK(std::string(e.kind_name()) == "degenerate-reconstruction");
  }
}

// ---------------------------------------------------------------------------
// Chamfer

TEST_CASE("chamfer: exact values and brute-force agreement") {
  std::vector<Vec3> a, b;
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 20; ++j) {
      a.push_back({i * 0.05, j * 0.05, 0.0});
      b.push_back({i * 0.05, j * 0.05, 0.001});
    }
  CHECK(chamfer_mm(a, a) == doctest::Approx(0.0).scale(1.0));
  CHECK(chamfer_mm(a, b) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(chamfer_mm(a, b) == doctest::Approx(chamfer_mm(b, a)).epsilon(1e-12));

  Rng rng(5);
  std::vector<Vec3> ra, rb;
  for (int i = 0; i < 500; ++i) {
    ra.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    rb.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  auto brute = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double acc = 0;
    for (const Vec3& p : x) {
      double best = 1e300;
      for (const Vec3& q : y) best = std::min(best, (p - q).norm());
      acc += best;
    }
    return acc / x.size();
  };
  double expect = 1000.0 * 0.5 * (brute(ra, rb) + brute(rb, ra));
  CHECK(chamfer_mm(ra, rb) == doctest::Approx(expect).epsilon(1e-9));

  CHECK_THROWS_AS(chamfer_mm(std::vector<Vec3>{}, a), Error);
}

TEST_CASE("sample_surface: points land on the SDF zero set deterministically") {
  SceneSdf s = unit_sphere();
  auto pts = sample_surface(s, 500, {-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}, 9);
  REQUIRE(pts.size() == 500);
  for (const Vec3& p : pts) {
    REQUIRE(std::fabs(s.dist(p)) <= 1e-6);
    REQUIRE(p.norm() == doctest::Approx(1.0).epsilon(1e-5));
  }
  auto pts2 = sample_surface(s, 500, {-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}, 9);
  for (size_t i = 0; i < pts.size(); ++i) REQUIRE(pts[i].x == pts2[i].x);
}

// ---------------------------------------------------------------------------
// Trajectories

TEST_CASE("trajectory: centroids recover exact waypoints") {
  std::vector<Vec3> truth = {{0, 0, 0.5}, {0.1, 0.05, 0.55}, {0.2, 0.1, 0.6},
                             {0.3, 0.1, 0.5}, {0.4, 0.05, 0.45}};
  DetectionSet dets;
  dets.n_frames = 5;
  for (int f = 0; f < 5; ++f) {
    // Symmetric cluster around the truth point: centroid is exact.
    for (int k = -1; k <= 1; k += 2) {
      Detection d;
      d.ray = k;
      d.frame = f;
      d.hit = true;
      d.in_gate = true;
      d.point = truth[f] + Vec3{0.01 * k, -0.02 * k, 0.005 * k};
      dets.detections.push_back(d);
    }
  }
  auto poly = reconstruct_trajectory(dets, 10);
  REQUIRE(static_cast<int>(poly.size()) == 10 * 4 + 1);
  for (int j = 0; j < 5; ++j) {
    CHECK((poly[10 * j] - truth[j]).norm() <= 1e-6);
  }
  for (const Vec3& p : poly) {
    REQUIRE(std::isfinite(p.x));
    REQUIRE(std::isfinite(p.y));
    REQUIRE(std::isfinite(p.z));
  }

  // Frames without hits are skipped; the spline bridges the gap.
  DetectionSet gaps = dets;
  gaps.detections.erase(gaps.detections.begin() + 4,
                        gaps.detections.begin() + 6);  // drop frame 2
  auto bridged = reconstruct_trajectory(gaps, 10);
  CHECK(static_cast<int>(bridged.size()) == 10 * 3 + 1);

  DetectionSet sparse;
  sparse.n_frames = 5;
  sparse.detections.push_back(dets.detections[0]);
  CHECK_THROWS_AS(reconstruct_trajectory(sparse), Error);
  try {
    reconstruct_trajectory(sparse);
  } catch (const Error& e) {
    CHECK(std::string(e.kind_name()) == "tracking-failure");
  }
}

TEST_CASE("frechet: exact cases and brute-force recursion oracle") {
  std::vector<Vec3> a = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK(frechet(a, a) == doctest::Approx(0.0).scale(1.0));
  std::vector<Vec3> b = {{0, 0.25, 0}, {1, 0.25, 0}, {2, 0.25, 0}};
  CHECK(frechet(a, b) == doctest::Approx(0.25));
  CHECK(frechet(a, b) == doctest::Approx(frechet(b, a)));

  // Exhaustive recursion for short polylines.
  struct Brute {
    std::span<const Vec3> p, q;
    double c(int i, int j) const {
      double d = (p[i] - q[j]).norm();
      if (i == 0 && j == 0) return d;
      if (i == 0) return std::max(c(0, j - 1), d);
      if (j == 0) return std::max(c(i - 1, 0), d);
      return std::max(std::min({c(i - 1, j), c(i - 1, j - 1), c(i, j - 1)}), d);
    }
  };
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> p, q;
    int n = 2 + static_cast<int>(rng.uniform_int(7));
    int m = 2 + static_cast<int>(rng.uniform_int(7));
    for (int i = 0; i < n; ++i)
      p.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int i = 0; i < m; ++i)
      q.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    Brute br{p, q};
    REQUIRE(frechet(p, q) ==
            doctest::Approx(br.c(n - 1, m - 1)).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
// Miss rate

TEST_CASE("miss_rate: hand-constructed detections against a layout") {
  scenes::WarehouseLayout layout;
  layout.aisle_length = 8;
  layout.boxes.push_back({0, {1, -1, 0.5}, {0.1, 0.1, 0.1}});
  layout.boxes.push_back({1, {3, -1, 0.7}, {0.15, 0.1, 0.1}});

  DetectionSet none;
  CHECK(miss_rate_pct(none, layout) == doctest::Approx(100.0));

  DetectionSet all;
  for (const auto& b : layout.boxes) {
    Detection d;
    d.hit = true;
    d.in_gate = true;
    d.point = b.center + Vec3{0, -b.half_extent.y, 0};  // on the front face
    all.detections.push_back(d);
  }
  CHECK(miss_rate_pct(all, layout) == doctest::Approx(0.0).scale(1.0));

  // A hit 5 cm off the surface does not count with a 1 cm margin.
  DetectionSet off;
  Detection d;
  d.hit = true;
  d.in_gate = true;
  d.point = layout.boxes[0].center + Vec3{0, -layout.boxes[0].half_extent.y - 0.05, 0};
  off.detections.push_back(d);
  CHECK(miss_rate_pct(off, layout) == doctest::Approx(100.0));

  scenes::WarehouseLayout empty;
  CHECK_THROWS_AS(miss_rate_pct(all, empty), Error);
}

// ---------------------------------------------------------------------------
// Bandwidth

TEST_CASE("bandwidth: reproduces the reference baseline numbers") {
  auto full_gate_rays = [](int n, double gate) {
    RaySet rs;
    rs.budget = n;
    for (int i = 0; i < n; ++i) rs.rays.push_back({{0, 0, 0}, 0, 0, 0, gate, 0});
    return rs;
  };
  BandwidthModel face{10, 40, 1.0 / 66.0};
  CHECK(bandwidth_mbps(full_gate_rays(576, 1.0), face) ==
        doctest::Approx(15.21).epsilon(0.0008));
  BandwidthModel tracking{10, 40, 2.0 / 67.0};
  CHECK(bandwidth_mbps(full_gate_rays(300, 2.0), tracking) ==
        doctest::Approx(8.04).epsilon(1e-9));
  BandwidthModel warehouse{10, 40, 5.0 / 800.0};
  CHECK(bandwidth_mbps(full_gate_rays(1, 5.0), warehouse) ==
        doctest::Approx(0.32).epsilon(1e-9));

  // Linear in ray count for identical gates.
  CHECK(bandwidth_mbps(full_gate_rays(1152, 1.0), face) ==
        doctest::Approx(2 * bandwidth_mbps(full_gate_rays(576, 1.0), face))
            .epsilon(1e-12));
  // A short gate still pays for one bin.
  CHECK(bandwidth_mbps(full_gate_rays(1, 1e-6), face) ==
        doctest::Approx(10 * 40 / 1e6).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Baselines

namespace {

TaskDomain face_domain() {
  TaskDomain t;
  t.bounds.lo = {-0.6, 0, 0, 7 * kPi / 4, -kPi / 4, 0};
  t.bounds.hi = {-0.6, 0, 0, 9 * kPi / 4, kPi / 4, 1.0};
  t.bounds.fixed = {true, true, true, false, false, false};
  t.bounds.circular = {false, false, false, true, false, false};
  t.gate_max = 1.0;
  return t;
}

}  // namespace

TEST_CASE("baseline_uniform: 576 rays form a 24x24 grid in the FoV") {
  RaySet rs = baseline_uniform(face_domain(), 576);
  REQUIRE(rs.rays.size() == 576);
  // 24 distinct psi values, evenly spaced.
  std::vector<double> psis;
  for (const Ray& r : rs.rays) psis.push_back(r.psi);
  std::sort(psis.begin(), psis.end());
  psis.erase(std::unique(psis.begin(), psis.end(),
                         [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
             psis.end());
  REQUIRE(psis.size() == 24);
  double gap = psis[1] - psis[0];
  for (size_t i = 1; i + 1 < psis.size(); ++i)
    REQUIRE(psis[i + 1] - psis[i] == doctest::Approx(gap).epsilon(1e-12));
  CHECK(gap == doctest::Approx((kPi / 2) / 24).epsilon(1e-12));
  for (const Ray& r : rs.rays) {
    CHECK(r.tau_min == 0.0);
    CHECK(r.tau_max == 1.0);
    // Azimuth wrapped into [0, 2pi), inside either FoV arm.
    REQUIRE(r.phi >= 0.0);
    REQUIRE(r.phi < kTwoPi);
    REQUIRE((r.phi >= 7 * kPi / 4 - 1e-12 || r.phi <= kPi / 4 + 1e-12));
  }

  // 1D grid and the nearest-square fallback for prime budgets.
  TaskDomain line = face_domain();
  line.bounds.fixed[3] = true;
  line.bounds.hi[3] = line.bounds.lo[3];
  RaySet oned = baseline_uniform(line, 10);
  REQUIRE(oned.rays.size() == 10);
  RaySet prime = baseline_uniform(face_domain(), 7);
  CHECK(prime.rays.size() == 9);  // rounded to 3x3
}

TEST_CASE("baseline_random: domain containment and CLT sanity") {
  TaskDomain t = face_domain();
  RaySet a = baseline_random(t, 10000, 1);
  RaySet b = baseline_random(t, 10000, 2);
  REQUIRE(a.rays.size() == 10000);
  bool differ = false;
  double mean_psi = 0;
  for (size_t i = 0; i < a.rays.size(); ++i) {
    REQUIRE(a.rays[i].psi >= -kPi / 4 - 1e-12);
    REQUIRE(a.rays[i].psi <= kPi / 4 + 1e-12);
    REQUIRE((a.rays[i].phi >= 7 * kPi / 4 - 1e-9 || a.rays[i].phi <= kPi / 4 + 1e-9));
    differ |= a.rays[i].psi != b.rays[i].psi;
    mean_psi += a.rays[i].psi;
  }
  CHECK(differ);
  mean_psi /= a.rays.size();
  double sigma = (kPi / 2) / std::sqrt(12.0) / std::sqrt(10000.0);
  CHECK(std::fabs(mean_psi - 0.0) < 3 * sigma);
}

TEST_CASE("occupancy: sphere scene marks exactly the near-surface voxels") {
  std::vector<SceneSdf> sc = {unit_sphere()};
  double sigma = 0.025;
  OccupancyGrid g = build_occupancy_grid(sc, {-1.5, -1.5, -1.5},
                                         {1.5, 1.5, 1.5}, 0.1, sigma);
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        Vec3 c{g.lo.x + (i + 0.5) * g.voxel, g.lo.y + (j + 0.5) * g.voxel,
               g.lo.z + (k + 0.5) * g.voxel};
        bool analytic = c.norm() - 1.0 < sigma;  // inside or near the sphere
        REQUIRE(g.high(i, j, k) == analytic);
      }

  // Accepted rays all intersect >= 1 high-probability voxel.
  TaskDomain t;
  t.bounds.lo = {-1.4, -1.4, 1.4, 3 * kPi / 2, -kPi / 2, 0};
  t.bounds.hi = {1.4, 1.4, 1.4, 3 * kPi / 2, -kPi / 3, 3.0};
  t.bounds.fixed = {false, false, true, true, false, false};
  t.gate_max = 3.0;
  RaySet rs = baseline_occupancy(g, t, 200, 4);
  REQUIRE(rs.rays.size() == 200);
  for (const Ray& r : rs.rays) REQUIRE(ray_hits_high_voxel(g, r));

  // No geometry anywhere: degenerate baseline.
  std::vector<SceneSdf> nothing = {
      SceneSdf(scenes::make_sphere({50, 0, 0}, 0.1), "far")};
  OccupancyGrid empty = build_occupancy_grid(nothing, {-1, -1, -1}, {1, 1, 1},
                                             0.2, sigma);
  try {
    baseline_occupancy(empty, t, 10, 1);
    FAIL("expected degenerate-baseline");
  } catch (const Error& e) {
    CHECK(std::string(e.kind_name()) == "degenerate-baseline");
  }
}

// ---------------------------------------------------------------------------
// Reporting

TEST_CASE("metric_report: formulas and validation") {
  MetricReport c = metric_report("t", "m", {3, 3, 3, 3});
  CHECK(c.mean == doctest::Approx(3.0));
  CHECK(c.two_sem == doctest::Approx(0.0).scale(1.0));

  MetricReport h = metric_report("t", "m", {0, 2});
  CHECK(h.mean == doctest::Approx(1.0));
  CHECK(h.two_sem == doctest::Approx(2.0));

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(30));
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-5, 5);
    MetricReport r = metric_report("t", "m", v);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    double sem = std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
    REQUIRE(r.mean == doctest::Approx(mean).epsilon(1e-12));
    REQUIRE(r.two_sem == doctest::Approx(2 * sem).epsilon(1e-12).scale(1.0));
  }

  CHECK_THROWS_AS(metric_report("t", "m", {1.0}), Error);
}

TEST_CASE("io: detections CSV, metrics CSV and PLY have expected shapes") {
  DetectionSet d;
  d.n_frames = 1;
  Detection det;
  det.ray = 1;
  det.frame = 0;
  det.hit = true;
  det.in_gate = true;
  det.point = {0.5, -0.25, 1.0};
  det.tau_hit = 0.75;
  d.detections.push_back(det);
  write_detections_csv("dets_test.csv", d);
  std::FILE* f = std::fopen("dets_test.csv", "rb");
  REQUIRE(f != nullptr);
  char line[512];
  int lines = 0;
  while (std::fgets(line, sizeof line, f)) ++lines;
  std::fclose(f);
  std::remove("dets_test.csv");
  CHECK(lines == 2);

  std::vector<MetricReport> reports = {metric_report("face", "chamfer_mm", {1, 2})};
  reports[0].method = "uniform";
  reports[0].budget = 576;
  write_metrics_csv("metrics_test.csv", reports, false);
  write_metrics_csv("metrics_test.csv", reports, true);
  f = std::fopen("metrics_test.csv", "rb");
  REQUIRE(f != nullptr);
  lines = 0;
  std::string first;
  while (std::fgets(line, sizeof line, f)) {
    if (lines == 0) first = line;
    ++lines;
  }
  std::fclose(f);
  std::remove("metrics_test.csv");
  CHECK(lines == 3);  // header + one row + one appended row
  CHECK(first == "task,method,budget,G,metric,mean,two_sem\n");

  std::vector<Vec3> pts = {{0, 0, 0}, {1, 2, 3}};
  write_hits_ply("hits_test.ply", pts);
  f = std::fopen("hits_test.ply", "rb");
  REQUIRE(f != nullptr);
  lines = 0;
  while (std::fgets(line, sizeof line, f)) ++lines;
  std::fclose(f);
  std::remove("hits_test.ply");
  CHECK(lines == 9);  // 7 header lines + 2 vertices
}
