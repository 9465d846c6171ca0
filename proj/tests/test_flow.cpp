#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <vector>

#include "ldesign/flow/model.hpp"
#include "ldesign/flow/spline.hpp"
#include "ldesign/flow/train.hpp"
#include "ldesign/scenes/sdf.hpp"

using namespace ldesign;
using namespace ldesign::flow;
using design::DesignBounds;
using design::DesignPoint;
using design::kPi;
using design::kTwoPi;
using numerics::Rng;

namespace {

DesignBounds bounds_3d() {
  // x free, y/z fixed, phi circular, psi fixed, tau free.
  DesignBounds b;
  b.lo = {-0.5, 0.1, 0.2, 0.0, 0.0, 0.0};
  b.hi = {0.5, 0.1, 0.2, kTwoPi, 0.0, 1.2};
  b.fixed = {false, true, true, false, true, false};
  b.circular = {false, false, false, true, false, false};
  return b;
}

DesignBounds bounds_6d() {
  DesignBounds b;
  b.lo = {-0.5, -0.5, 0.0, 0.0, -kPi / 3, 0.0};
  b.hi = {0.5, 0.5, 1.0, kTwoPi, kPi / 3, 2.0};
  b.fixed = {false, false, false, false, false, false};
  b.circular = {false, false, false, true, false, false};
  return b;
}

FlowConfig small_cfg() {
  FlowConfig c;
  c.layers = 2;
  c.hidden = 16;
  c.bins = 8;
  c.dropout = 0.0;
  return c;
}

void perturb(FlowModel& m, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  for (double& p : m.params()) p += scale * rng.normal();
}

std::vector<double> random_raw(Rng& rng, int bins) {
  std::vector<double> raw(spline_raw_count(bins));
  for (double& r : raw) r = rng.uniform(-2.0, 2.0);
  return raw;
}

}  // namespace

// ---------------------------------------------------------------------------
// Spline primitive

TEST_CASE("spline: zero parameters decode to the identity") {
  std::vector<double> raw(spline_raw_count(16), 0.0);
  RqSpline s = decode_spline(raw, 16);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    double u = rng.uniform();
    SplineResult r = spline_forward(s, u);
    CHECK(r.value == doctest::Approx(u).epsilon(1e-14).scale(1.0));
    CHECK(r.dlogdet == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  }
  CHECK(spline_forward(s, 0.0).value == doctest::Approx(0.0).scale(1.0));
  CHECK(spline_forward(s, 1.0).value == doctest::Approx(1.0));
}

TEST_CASE("spline: monotone, endpoint-preserving, round trips to 1e-10") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    RqSpline s = decode_spline(random_raw(rng, 16), 16);
    CHECK(spline_forward(s, 0.0).value == doctest::Approx(0.0).scale(1.0));
    CHECK(spline_forward(s, 1.0).value == doctest::Approx(1.0));
    double prev = -1.0;
    for (int i = 0; i < 100; ++i) {
      double u = rng.uniform();
      SplineResult f = spline_forward(s, u);
      SplineResult b = spline_inverse(s, f.value);
      REQUIRE(std::fabs(b.value - u) <= 1e-10);
      REQUIRE(std::fabs(b.dlogdet + f.dlogdet) <= 1e-9);
      (void)prev;
    }
    // Monotone on a sweep.
    prev = -1.0;
    for (int i = 0; i <= 200; ++i) {
      double y = spline_forward(s, i / 200.0).value;
      REQUIRE(y >= prev);
      prev = y;
    }
  }
}

TEST_CASE("spline: dlogdet matches central finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    RqSpline s = decode_spline(random_raw(rng, 16), 16);
    for (int i = 0; i < 20; ++i) {
      double u = rng.uniform(0.01, 0.99);
      const double h = 1e-7;
      // Stay inside one bin for a clean central difference.
      SplineResult f = spline_forward(s, u);
      double slope =
          (spline_forward(s, u + h).value - spline_forward(s, u - h).value) /
          (2 * h);
      if (slope <= 0) continue;
      REQUIRE(f.dlogdet == doctest::Approx(std::log(slope)).epsilon(1e-5));
    }
  }
}

TEST_CASE("spline: domain and parameter validation") {
  std::vector<double> raw(spline_raw_count(8), 0.0);
  RqSpline s = decode_spline(raw, 8);
  CHECK_THROWS_AS(spline_forward(s, 1.5), Error);
  CHECK_THROWS_AS(spline_forward(s, -0.2), Error);
  CHECK_NOTHROW(spline_forward(s, 1.0 + 1e-12));  // clamped
  std::vector<double> wrong(10, 0.0);
  CHECK_THROWS_AS(decode_spline(wrong, 8), Error);
  raw[3] = std::nan("");
  CHECK_THROWS_AS(decode_spline(raw, 8), Error);
}

TEST_CASE("spline: tape forward matches native values and FD gradients") {
  Rng rng(4);
  const int bins = 8;
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> raw = random_raw(rng, bins);
    double u = rng.uniform(0.02, 0.98);
    RqSpline s = decode_spline(raw, bins);
    SplineResult native = spline_forward(s, u);

    std::vector<double> params = raw;
    params.push_back(u);
    auto run = [&](numerics::Tape& t, const std::vector<numerics::Var>& v) {
      std::vector<int> ids(spline_raw_count(bins));
      for (size_t i = 0; i < ids.size(); ++i) ids[i] = v[i].id;
      SplineNodes n = spline_forward_tape(t, ids, bins, v.back().id);
      // Scalarize: value + 2 * dlogdet keeps both outputs in one gradient.
      return numerics::Var{&t, n.value} + 2.0 * numerics::Var{&t, n.dlogdet};
    };
    auto res = numerics::grad(run, params);
    CHECK(res.value ==
          doctest::Approx(native.value + 2 * native.dlogdet).epsilon(1e-10));

    const double h = 1e-6;
    Rng pick(trial);
    for (int probe = 0; probe < 6; ++probe) {
      size_t i = pick.uniform_int(params.size());
      auto pp = params, pm = params;
      pp[i] += h;
      pm[i] -= h;
      RqSpline sp = decode_spline(std::span(pp).first(raw.size()), bins);
      RqSpline sm = decode_spline(std::span(pm).first(raw.size()), bins);
      SplineResult rp = spline_forward(sp, pp.back());
      SplineResult rm = spline_forward(sm, pm.back());
      double fd =
          ((rp.value + 2 * rp.dlogdet) - (rm.value + 2 * rm.dlogdet)) / (2 * h);
      double scale = std::max({1.0, std::fabs(fd)});
      REQUIRE(std::fabs(res.gradient[i] - fd) / scale < 1e-4);
    }
  }
}

// ---------------------------------------------------------------------------
// Flow model

TEST_CASE("flow: freshly initialized model is the exact denormalization") {
  FlowModel m(bounds_3d(), small_cfg(), 7);
  design::UnitCubeTransform cube(bounds_3d());
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> z = {rng.uniform(), rng.uniform(), rng.uniform()};
    FlowModel::Forward f = m.forward(z);
    DesignPoint expect = cube.to_design(z);
    for (int dim = 0; dim < 6; ++dim)
      CHECK(f.d[dim] == doctest::Approx(expect[dim]).epsilon(1e-12).scale(1.0));
    CHECK(f.logdet == doctest::Approx(cube.log_det()).epsilon(1e-10));
  }
  // Fixed dims pass through as constants.
  FlowModel::Forward f = m.forward(std::vector<double>{0.3, 0.6, 0.9});
  CHECK(f.d.y == 0.1);
  CHECK(f.d.z == 0.2);
  CHECK(f.d.psi == 0.0);
}

TEST_CASE("flow: inverse(forward) round trip and logdet negation at 1e-8") {
  FlowModel m(bounds_3d(), small_cfg(), 7);
  perturb(m, 99);
  Rng rng(6);
  int worst_count = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> z = {rng.uniform(), rng.uniform(), rng.uniform()};
    FlowModel::Forward f = m.forward(z);
    CHECK(m.bounds().contains(f.d));
    FlowModel::Inverse inv = m.inverse(f.d);
    for (int k = 0; k < 3; ++k) {
      double diff = std::fabs(inv.z[k] - z[k]);
      diff = std::min(diff, 1.0 - diff);  // circular dims may wrap
      if (diff > 1e-8) ++worst_count;
    }
    REQUIRE(std::fabs(inv.logdet + f.logdet) <= 1e-8);
  }
  CHECK(worst_count == 0);
}

TEST_CASE("flow: log density self-consistency and uniform init density") {
  DesignBounds b = bounds_3d();
  FlowModel ident(b, small_cfg(), 7);
  design::UnitCubeTransform cube(b);
  DesignPoint d{0.2, 0.1, 0.2, 1.0, 0.0, 0.5};
  CHECK(ident.log_density(d) == doctest::Approx(-cube.log_det()).epsilon(1e-10));

  FlowModel m(b, small_cfg(), 7);
  perturb(m, 123);
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> z = {rng.uniform(), rng.uniform(), rng.uniform()};
    FlowModel::Forward f = m.forward(z);
    REQUIRE(m.log_density(f.d) == doctest::Approx(-f.logdet).epsilon(1e-8));
  }

  DesignPoint outside = d;
  outside.tau = 5.0;
  CHECK_THROWS_AS(m.log_density(outside), Error);
}

TEST_CASE("flow: density integrates to one (Monte Carlo)") {
  DesignBounds b = bounds_3d();
  FlowModel m(b, small_cfg(), 7);
  perturb(m, 321, 0.2);
  design::UnitCubeTransform cube(b);
  Rng rng(9);
  double acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    std::vector<double> z = {rng.uniform(), rng.uniform(), rng.uniform()};
    DesignPoint d = cube.to_design(z);
    acc += std::exp(m.log_density(d) + cube.log_det());
  }
  CHECK(acc / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("flow: logdet matches the numerical Jacobian determinant") {
  FlowModel m(bounds_6d(), small_cfg(), 11);
  perturb(m, 17, 0.25);
  Rng rng(10);
  const double h = 1e-6;
  int tested = 0;
  for (int trial = 0; trial < 100 && tested < 60; ++trial) {
    std::vector<double> z(6);
    for (double& zi : z) zi = rng.uniform(0.05, 0.95);
    FlowModel::Forward f0 = m.forward(z);
    Eigen::MatrixXd J(6, 6);
    bool clean = true;
    for (int c = 0; c < 6; ++c) {
      auto zp = z, zm = z;
      zp[c] += h;
      zm[c] -= h;
      FlowModel::Forward fp = m.forward(zp);
      FlowModel::Forward fm = m.forward(zm);
      for (int r = 0; r < 6; ++r) {
        double der = (fp.d[r] - fm.d[r]) / (2 * h);
        // A circular wrap inside the FD stencil produces a huge spurious
        // derivative; skip those stencils.
        if (std::fabs(der) > 1e5) clean = false;
        J(r, c) = der;
      }
    }
    if (!clean) continue;
    double det = std::fabs(J.determinant());
    if (det <= 0) continue;
    REQUIRE(f0.logdet == doctest::Approx(std::log(det)).epsilon(1e-4));
    ++tested;
  }
  CHECK(tested >= 50);
}

TEST_CASE("flow: tape forward reproduces the native forward exactly") {
  FlowModel m(bounds_6d(), small_cfg(), 13);
  perturb(m, 31, 0.3);
  Rng rng(12);
  numerics::Tape tape;
  for (double p : m.params()) tape.leaf(p);
  auto mark = tape.mark();
  for (int i = 0; i < 50; ++i) {
    std::vector<double> z(6);
    for (double& zi : z) zi = rng.uniform();
    FlowModel::Forward native = m.forward(z);
    FlowModel::TapeForward tf = m.forward_tape(tape, z, 0);
    for (int dim = 0; dim < 6; ++dim)
      REQUIRE(tape.value(tf.d_ids[dim]) ==
              doctest::Approx(native.d[dim]).epsilon(1e-12).scale(1.0));
    REQUIRE(tape.value(tf.logdet_id) ==
            doctest::Approx(native.logdet).epsilon(1e-12));
    tape.rewind(mark);
  }
}

TEST_CASE("flow: circular dimension keeps the density continuous at the seam") {
  FlowModel m(bounds_3d(), small_cfg(), 19);
  perturb(m, 77, 0.4);
  DesignPoint a{0.1, 0.1, 0.2, 1e-9, 0.0, 0.6};
  DesignPoint b = a;
  b.phi = kTwoPi - 1e-9;
  CHECK(m.log_density(a) == doctest::Approx(m.log_density(b)).epsilon(1e-6));
}

TEST_CASE("flow: checkpoint round trip preserves behavior") {
  FlowModel m(bounds_3d(), small_cfg(), 23);
  perturb(m, 5, 0.3);
  const std::string path = "test_flow.ckpt";
  m.save(path);
  FlowModel l = FlowModel::load(path);
  std::remove(path.c_str());
  REQUIRE(l.param_count() == m.param_count());
  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> z = {rng.uniform(), rng.uniform(), rng.uniform()};
    FlowModel::Forward a = m.forward(z);
    FlowModel::Forward b = l.forward(z);
    for (int dim = 0; dim < 6; ++dim) REQUIRE(a.d[dim] == b.d[dim]);
    REQUIRE(a.logdet == b.logdet);
  }
  // Corrupt file rejected.
  {
    std::FILE* f = std::fopen("bad.ckpt", "wb");
    std::fwrite("XXXX", 1, 4, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(FlowModel::load("bad.ckpt"), Error);
  std::remove("bad.ckpt");
}

// ---------------------------------------------------------------------------
// Training

TEST_CASE("flow: full loss gradient matches finite differences") {
  DesignBounds b = bounds_3d();
  FlowConfig cfg = small_cfg();
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.bins = 4;
  FlowModel m(b, cfg, 29);
  perturb(m, 41, 0.2);

  std::vector<scenes::SceneSdf> sc = {
      scenes::SceneSdf(scenes::make_sphere({0, 0.1, 0.2}, 0.15), "s")};
  density::DensityConfig dc;
  dc.n_strat = 8;
  const double eta = 0.5;

  Rng zrng(15);
  std::vector<std::vector<double>> zs;
  for (int i = 0; i < 4; ++i)
    zs.push_back({zrng.uniform(), zrng.uniform(), zrng.uniform()});

  auto loss_at = [&](const FlowModel& model) {
    double total = 0;
    for (const auto& z : zs) {
      numerics::Tape t;
      for (double p : model.params()) t.leaf(p);
      FlowModel::TapeForward tf = model.forward_tape(t, z, 0);
      int lp = density::log_target_density_tape(t, sc, tf.d_ids, dc);
      total += -(1 + eta) * t.value(tf.logdet_id) - t.value(lp);
    }
    return total / zs.size();
  };

  // Analytic gradient via one accumulated backward pass.
  numerics::Tape t;
  for (double p : m.params()) t.leaf(p);
  auto mark = t.mark();
  t.zero_adjoints();
  for (const auto& z : zs) {
    FlowModel::TapeForward tf = m.forward_tape(t, z, 0);
    int lp = density::log_target_density_tape(t, sc, tf.d_ids, dc);
    int loss = t.sub(t.mul_c(tf.logdet_id, -(1 + eta)), lp);
    t.backward(loss, 1.0 / zs.size());
    t.rewind(mark);
  }

  Rng pick(16);
  const double h = 1e-6;
  int checked = 0;
  for (int probe = 0; probe < 16; ++probe) {
    int i = static_cast<int>(pick.uniform_int(m.param_count()));
    FlowModel mp = m, mm = m;
    mp.params()[i] += h;
    mm.params()[i] -= h;
    double fd = (loss_at(mp) - loss_at(mm)) / (2 * h);
    double g = t.adjoint(i);
    double scale = std::max({1.0, std::fabs(fd), std::fabs(g)});
    REQUIRE(std::fabs(g - fd) / scale < 1e-3);
    ++checked;
  }
  CHECK(checked == 16);
}

TEST_CASE("flow: training concentrates samples on high-density designs") {
  // Toy setting: x free, phi circular, tau free; scenes are small spheres.
  DesignBounds b = bounds_3d();
  std::vector<scenes::SceneSdf> sc;
  for (int i = 0; i < 4; ++i) {
    double cx = -0.1 + 0.07 * i;
    sc.push_back(scenes::SceneSdf(
        scenes::make_sphere({cx, 0.1 + 0.05 * (i % 2), 0.2}, 0.12),
        "toy" + std::to_string(i)));
  }
  FlowConfig cfg = small_cfg();
  FlowModel m(b, cfg, 51);

  TrainConfig tc;
  tc.steps = 250;
  tc.batch = 64;
  tc.seed = 3;
  tc.ramp.zero_until = 50;
  tc.ramp.ramp_length = 100;
  density::DensityConfig dc;
  dc.n_strat = 8;

  auto trace = train_flow(m, sc, dc, tc);
  REQUIRE(static_cast<long>(trace.size()) == tc.steps);

  // Median loss falls over training.
  std::vector<double> head, tail;
  for (int i = 0; i < 50; ++i) head.push_back(trace[i].loss);
  for (int i = 0; i < 50; ++i) tail.push_back(trace[tc.steps - 50 + i].loss);
  std::sort(head.begin(), head.end());
  std::sort(tail.begin(), tail.end());
  CHECK(tail[25] < head[25]);

  // >= 80% of flow samples beat the uniform median target density.
  density::DensityConfig eval = dc;
  Rng rng(18);
  std::vector<double> uniform_vals;
  design::UnitCubeTransform cube(b);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> z = {rng.uniform(), rng.uniform(), rng.uniform()};
    uniform_vals.push_back(density::target_density(sc, cube.to_design(z), eval));
  }
  std::sort(uniform_vals.begin(), uniform_vals.end());
  double median = uniform_vals[uniform_vals.size() / 2];

  Rng srng(19);
  auto samples = sample_flow(m, 500, srng);
  int above = 0;
  for (const DesignPoint& d : samples)
    if (density::target_density(sc, d, eval) > median) ++above;
  CHECK(above >= 400);
}

TEST_CASE("flow: constant target keeps the model uniform") {
  // Free dims x and y, fixed z/psi/tau; a horizontal half-space far below
  // makes SDF (and hence p*) constant over the admissible designs.
  DesignBounds b;
  b.lo = {-0.5, -0.5, 0.5, 0.0, 0.0, 0.0};
  b.hi = {0.5, 0.5, 0.5, 0.0, 0.0, 0.0};
  b.fixed = {false, false, true, true, true, true};
  std::vector<scenes::SceneSdf> sc = {
      scenes::SceneSdf(scenes::make_half_space({0, 0, 1}, 0.45), "plane")};

  FlowConfig cfg = small_cfg();
  FlowModel m(b, cfg, 61);
  TrainConfig tc;
  tc.steps = 150;
  tc.batch = 64;
  tc.seed = 4;
  density::DensityConfig dc;
  dc.n_strat = 4;
  train_flow(m, sc, dc, tc);

  // KL(model || uniform) = E_model[log p(d)] + log Volume <= 0.05 nats.
  Rng rng(20);
  std::vector<double> logps;
  auto samples = sample_flow(m, 2000, rng, nullptr, &logps);
  double kl = 0;
  for (double lp : logps) kl += lp;
  kl = kl / logps.size() + std::log(1.0);  // volume = 1 x 1
  CHECK(kl >= -0.01);
  CHECK(kl <= 0.05);
}

TEST_CASE("flow: training aborts on non-finite parameters") {
  DesignBounds b = bounds_3d();
  FlowModel m(b, small_cfg(), 71);
  m.params()[3] = std::numeric_limits<double>::quiet_NaN();
  std::vector<scenes::SceneSdf> sc = {
      scenes::SceneSdf(scenes::make_sphere({0, 0.1, 0.2}, 0.15), "s")};
  TrainConfig tc;
  tc.steps = 1;
  tc.batch = 2;
  density::DensityConfig dc;
  dc.n_strat = 4;
  try {
    train_flow(m, sc, dc, tc);
    FAIL("expected numerical-overflow");
  } catch (const Error& e) {
    CHECK(std::string(e.kind_name()) == "numerical-overflow");
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Sampling

TEST_CASE("flow: samples respect constraint regions") {
  DesignBounds b = bounds_3d();
  FlowModel m(b, small_cfg(), 81);
  Rng rng(21);

  // Full bounds: everything admissible.
  design::ConstraintRegion full = design::ConstraintRegion::full(b);
  auto s1 = sample_flow(m, 200, rng, &full);
  for (const DesignPoint& d : s1) CHECK(design::in_region(d, full));

  // Half of tau admissible: identity model accepts ~50%.
  design::ConstraintRegion half = full;
  half.boxes[0].hi[5] = 0.6;  // tau in [0, 0.6] of [0, 1.2]
  auto s2 = sample_flow(m, 2000, rng, &half);
  for (const DesignPoint& d : s2) REQUIRE(d.tau <= 0.6 + 1e-12);
  // And the unconstrained model indeed puts ~half its mass there.
  auto s3 = sample_flow(m, 2000, rng);
  int in = 0;
  for (const DesignPoint& d : s3) in += d.tau <= 0.6;
  CHECK(in > 2000 * 0.5 - 3 * 22);  // 3 sigma binomial
  CHECK(in < 2000 * 0.5 + 3 * 22);
}

TEST_CASE("flow: infeasible constraints are reported") {
  DesignBounds b = bounds_3d();
  FlowModel m(b, small_cfg(), 91);
  design::ConstraintRegion tiny = design::ConstraintRegion::full(b);
  tiny.boxes[0].lo[5] = 0.5;
  tiny.boxes[0].hi[5] = 0.5 + 1.2e-5;  // ~1e-5 acceptance on tau
  Rng rng(22);
  try {
    sample_flow(m, 10, rng, &tiny);
    FAIL("expected constraint-infeasible");
  } catch (const Error& e) {
    CHECK(std::string(e.kind_name()) == "constraint-infeasible");
  }
}
