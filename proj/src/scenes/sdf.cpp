#include "ldesign/scenes/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ldesign/error.hpp"

namespace ldesign::scenes {

namespace {

struct Sphere final : Sdf {
  Vec3 c;
  double r;
  Sphere(Vec3 c, double r) : c(c), r(r) {}
  SdfResult eval(const Vec3& p) const override {
    Vec3 d = p - c;
    double n = d.norm();
    Vec3 g = n > 1e-15 ? d * (1.0 / n) : Vec3{1, 0, 0};
    return {n - r, g};
  }
};

struct Box final : Sdf {
  Vec3 c, h;
  Box(Vec3 c, Vec3 h) : c(c), h(h) {}
  SdfResult eval(const Vec3& p) const override {
    Vec3 d = p - c;
    Vec3 a{std::fabs(d.x) - h.x, std::fabs(d.y) - h.y, std::fabs(d.z) - h.z};
    Vec3 q{std::max(a.x, 0.0), std::max(a.y, 0.0), std::max(a.z, 0.0)};
    double outside = q.norm();
    double inside = std::min(std::max(a.x, std::max(a.y, a.z)), 0.0);
    Vec3 g;
    if (outside > 1e-15) {
      g = {q.x * sgn(d.x), q.y * sgn(d.y), q.z * sgn(d.z)};
      g = g * (1.0 / outside);
    } else {
      // inside: push along the axis of least interior depth
      if (a.x >= a.y && a.x >= a.z)
        g = {sgn(d.x), 0, 0};
      else if (a.y >= a.z)
        g = {0, sgn(d.y), 0};
      else
        g = {0, 0, sgn(d.z)};
    }
    return {outside + inside, g};
  }
  static double sgn(double v) { return v >= 0.0 ? 1.0 : -1.0; }
};

// Approximate (smooth, zero-on-surface) ellipsoid distance; gradient by
// central differences of the same approximation.
struct Ellipsoid final : Sdf {
  Vec3 c, r;
  Ellipsoid(Vec3 c, Vec3 r) : c(c), r(r) {}
  double d(const Vec3& p) const {
    Vec3 q = p - c;
    Vec3 s0{q.x / r.x, q.y / r.y, q.z / r.z};
    Vec3 s1{q.x / (r.x * r.x), q.y / (r.y * r.y), q.z / (r.z * r.z)};
    double k0 = s0.norm();
    double k1 = s1.norm();
    if (k1 < 1e-15) return -std::min(r.x, std::min(r.y, r.z));
    return k0 * (k0 - 1.0) / k1;
  }
  SdfResult eval(const Vec3& p) const override {
    const double h = 1e-6;
    Vec3 g{(d({p.x + h, p.y, p.z}) - d({p.x - h, p.y, p.z})) / (2 * h),
           (d({p.x, p.y + h, p.z}) - d({p.x, p.y - h, p.z})) / (2 * h),
           (d({p.x, p.y, p.z + h}) - d({p.x, p.y, p.z - h})) / (2 * h)};
    return {d(p), g.normalized()};
  }
};

struct Capsule final : Sdf {
  Vec3 a, ab;
  double r, ab2;
  Capsule(Vec3 a, Vec3 b, double r) : a(a), ab(b - a), r(r), ab2(ab.dot(ab)) {}
  SdfResult eval(const Vec3& p) const override {
    Vec3 pa = p - a;
    double t = ab2 > 1e-15 ? std::clamp(pa.dot(ab) / ab2, 0.0, 1.0) : 0.0;
    Vec3 d = pa - ab * t;
    double n = d.norm();
    Vec3 g = n > 1e-15 ? d * (1.0 / n) : Vec3{1, 0, 0};
    return {n - r, g};
  }
};

// Two spheres of radii ra/rb joined by their convex hull.
struct RoundedCone final : Sdf {
  Vec3 a, b;
  double ra, rb;
  RoundedCone(Vec3 a, double ra, Vec3 b, double rb) : a(a), b(b), ra(ra), rb(rb) {}
  double d(const Vec3& p) const {
    Vec3 ba = b - a;
    double l2 = ba.dot(ba);
    double rr = ra - rb;
    double a2 = l2 - rr * rr;
    double il2 = 1.0 / l2;
    Vec3 pa = p - a;
    double y = pa.dot(ba);
    double z = y - l2;
    Vec3 w = pa * l2 - ba * y;
    double x2 = w.dot(w);
    double y2 = y * y * l2;
    double z2 = z * z * l2;
    double k = sgn(rr) * rr * rr * x2;
    if (sgn(z) * a2 * z2 > k) return std::sqrt(x2 + z2) * il2 - rb;
    if (sgn(y) * a2 * y2 < k) return std::sqrt(x2 + y2) * il2 - ra;
    return (std::sqrt(x2 * a2 * il2) + y * rr) * il2 - ra;
  }
  static double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
  SdfResult eval(const Vec3& p) const override {
    const double h = 1e-6;
    Vec3 g{(d({p.x + h, p.y, p.z}) - d({p.x - h, p.y, p.z})) / (2 * h),
           (d({p.x, p.y + h, p.z}) - d({p.x, p.y - h, p.z})) / (2 * h),
           (d({p.x, p.y, p.z + h}) - d({p.x, p.y, p.z - h})) / (2 * h)};
    return {d(p), g.normalized()};
  }
};

struct HalfSpace final : Sdf {
  Vec3 n;
  double off;
  HalfSpace(Vec3 n, double off) : n(n.normalized()), off(off) {}
  SdfResult eval(const Vec3& p) const override { return {p.dot(n) - off, n}; }
};

struct Union final : Sdf {
  std::vector<SdfPtr> kids;
  explicit Union(std::vector<SdfPtr> k) : kids(std::move(k)) {}
  SdfResult eval(const Vec3& p) const override {
    SdfResult best = kids.front()->eval(p);
    for (std::size_t i = 1; i < kids.size(); ++i) {
      SdfResult r = kids[i]->eval(p);
      if (r.dist < best.dist) best = r;  // ties keep the first child
    }
    return best;
  }
};

struct SmoothUnion final : Sdf {
  SdfPtr a, b;
  double k;
  SmoothUnion(SdfPtr a, SdfPtr b, double k) : a(std::move(a)), b(std::move(b)), k(k) {}
  SdfResult eval(const Vec3& p) const override {
    SdfResult ra = a->eval(p), rb = b->eval(p);
    double h = std::clamp(0.5 + 0.5 * (rb.dist - ra.dist) / k, 0.0, 1.0);
    double d = rb.dist * (1.0 - h) + ra.dist * h - k * h * (1.0 - h);
    // Exact: the dh/dp terms cancel against (a - b) - k (1 - 2h) = 0.
    return {d, ra.grad * h + rb.grad * (1.0 - h)};
  }
};

struct Subtract final : Sdf {
  SdfPtr base, cut;
  Subtract(SdfPtr base, SdfPtr cut) : base(std::move(base)), cut(std::move(cut)) {}
  SdfResult eval(const Vec3& p) const override {
    SdfResult rb = base->eval(p), rc = cut->eval(p);
    if (rb.dist >= -rc.dist) return rb;  // max(base, -cut), ties take base
    return {-rc.dist, rc.grad * -1.0};
  }
};

}  // namespace

SdfPtr make_sphere(Vec3 c, double r) { return std::make_shared<Sphere>(c, r); }
SdfPtr make_box(Vec3 c, Vec3 h) { return std::make_shared<Box>(c, h); }
SdfPtr make_ellipsoid(Vec3 c, Vec3 r) { return std::make_shared<Ellipsoid>(c, r); }
SdfPtr make_capsule(Vec3 a, Vec3 b, double r) {
  return std::make_shared<Capsule>(a, b, r);
}
SdfPtr make_rounded_cone(Vec3 a, double ra, Vec3 b, double rb) {
  return std::make_shared<RoundedCone>(a, ra, b, rb);
}
SdfPtr make_half_space(Vec3 n, double off) {
  return std::make_shared<HalfSpace>(n, off);
}
SdfPtr op_union(std::vector<SdfPtr> kids) {
  if (kids.empty()) throw Error(ErrorKind::Config, "union needs >= 1 child");
  if (kids.size() == 1) return kids.front();
  return std::make_shared<Union>(std::move(kids));
}
SdfPtr op_smooth_union(SdfPtr a, SdfPtr b, double k) {
  return std::make_shared<SmoothUnion>(std::move(a), std::move(b), k);
}
SdfPtr op_subtract(SdfPtr base, SdfPtr cut) {
  return std::make_shared<Subtract>(std::move(base), std::move(cut));
}

GridField::GridField(int nx, int ny, int nz, Vec3 lo, Vec3 hi,
                     std::vector<double> values)
    : nx_(nx), ny_(ny), nz_(nz), lo_(lo), hi_(hi), vals_(std::move(values)) {
  if (nx < 2 || ny < 2 || nz < 2)
    throw Error(ErrorKind::Config, "grid needs >= 2 nodes per axis");
  if (!(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z))
    throw Error(ErrorKind::Config, "degenerate grid bbox");
  if (vals_.size() != static_cast<std::size_t>(nx) * ny * nz)
    throw Error(ErrorKind::Shape, "grid value count mismatch");
  for (double v : vals_)
    if (!std::isfinite(v))
      throw Error(ErrorKind::NumericalOverflow, "non-finite grid value");
  cell_ = {(hi.x - lo.x) / (nx - 1), (hi.y - lo.y) / (ny - 1),
           (hi.z - lo.z) / (nz - 1)};
}

Vec3 GridField::node_pos(int i, int j, int k) const {
  return {lo_.x + i * cell_.x, lo_.y + j * cell_.y, lo_.z + k * cell_.z};
}

SdfResult GridField::eval(const Vec3& p) const {
  Vec3 q{std::clamp(p.x, lo_.x, hi_.x), std::clamp(p.y, lo_.y, hi_.y),
         std::clamp(p.z, lo_.z, hi_.z)};
  Vec3 out = p - q;
  double out_dist = out.norm();

  double fx = (q.x - lo_.x) / cell_.x;
  double fy = (q.y - lo_.y) / cell_.y;
  double fz = (q.z - lo_.z) / cell_.z;
  int i = std::min(static_cast<int>(fx), nx_ - 2);
  int j = std::min(static_cast<int>(fy), ny_ - 2);
  int k = std::min(static_cast<int>(fz), nz_ - 2);
  double u = fx - i, v = fy - j, w = fz - k;

  double c000 = at(i, j, k), c100 = at(i + 1, j, k);
  double c010 = at(i, j + 1, k), c110 = at(i + 1, j + 1, k);
  double c001 = at(i, j, k + 1), c101 = at(i + 1, j, k + 1);
  double c011 = at(i, j + 1, k + 1), c111 = at(i + 1, j + 1, k + 1);

  double c00 = c000 + (c100 - c000) * u;
  double c10 = c010 + (c110 - c010) * u;
  double c01 = c001 + (c101 - c001) * u;
  double c11 = c011 + (c111 - c011) * u;
  double c0 = c00 + (c10 - c00) * v;
  double c1 = c01 + (c11 - c01) * v;
  double val = c0 + (c1 - c0) * w;

  // analytic derivative of the trilinear interpolant
  double dx = ((c100 - c000) * (1 - v) + (c110 - c010) * v) * (1 - w) +
              ((c101 - c001) * (1 - v) + (c111 - c011) * v) * w;
  double dy = ((c010 - c000) * (1 - u) + (c110 - c100) * u) * (1 - w) +
              ((c011 - c001) * (1 - u) + (c111 - c101) * u) * w;
  double dz = (c001 - c000) * (1 - u) * (1 - v) + (c101 - c100) * u * (1 - v) +
              (c011 - c010) * (1 - u) * v + (c111 - c110) * u * v;
  Vec3 g{dx / cell_.x, dy / cell_.y, dz / cell_.z};

  if (out_dist > 0.0) {
    return {val + out_dist, out * (1.0 / out_dist)};
  }
  return {val, g};
}

SceneSdf bake_grid(const SceneSdf& scene, int nx, int ny, int nz, Vec3 lo,
                   Vec3 hi) {
  if (nx < 8 || ny < 8 || nz < 8)
    throw Error(ErrorKind::Config, "bake_grid: dims must be >= 8 per axis");
  if (!(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z))
    throw Error(ErrorKind::Config, "bake_grid: degenerate bbox");
  std::vector<double> vals(static_cast<std::size_t>(nx) * ny * nz);
  Vec3 cell{(hi.x - lo.x) / (nx - 1), (hi.y - lo.y) / (ny - 1),
            (hi.z - lo.z) / (nz - 1)};
  std::size_t n = 0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        vals[n++] = scene.dist({lo.x + i * cell.x, lo.y + j * cell.y,
                                lo.z + k * cell.z});
  auto grid = std::make_shared<GridField>(nx, ny, nz, lo, hi, std::move(vals));
  return SceneSdf(grid, scene.id() + "_grid", scene.task_tag());
}

void write_sdfgrid(const std::string& path, const GridField& grid) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Config, "cannot open " + path + " for writing");
  f.write("SDFG", 4);
  auto w32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto w64 = [&](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  w32(1);
  w32(grid.nx());
  w32(grid.ny());
  w32(grid.nz());
  Vec3 lo = grid.bbox_lo(), hi = grid.bbox_hi();
  w64(lo.x); w64(lo.y); w64(lo.z);
  w64(hi.x); w64(hi.y); w64(hi.z);
  f.write(reinterpret_cast<const char*>(grid.values().data()),
          static_cast<std::streamsize>(grid.values().size() * 8));
  if (!f) throw Error(ErrorKind::Config, "write failed: " + path);
}

std::shared_ptr<const GridField> read_sdfgrid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Config, "cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "SDFG", 4) != 0)
    throw Error(ErrorKind::Config, "bad .sdfgrid magic in " + path);
  auto r32 = [&] {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto r64 = [&] {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  std::uint32_t version = r32();
  if (version != 1) throw Error(ErrorKind::Config, "unsupported .sdfgrid version");
  int nx = static_cast<int>(r32()), ny = static_cast<int>(r32()),
      nz = static_cast<int>(r32());
  Vec3 lo{r64(), r64(), r64()}, hi{r64(), r64(), r64()};
  std::vector<double> vals(static_cast<std::size_t>(nx) * ny * nz);
  f.read(reinterpret_cast<char*>(vals.data()),
         static_cast<std::streamsize>(vals.size() * 8));
  if (!f) throw Error(ErrorKind::Config, "truncated .sdfgrid: " + path);
  return std::make_shared<GridField>(nx, ny, nz, lo, hi, std::move(vals));
}

}  // namespace ldesign::scenes
