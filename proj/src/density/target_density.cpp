#include "ldesign/density/target_density.hpp"

#include <cmath>

namespace ldesign::density {

using design::Vec3;
using numerics::Tape;
using numerics::Var;

namespace {

double stratum_offset(std::span<const double> jitter, int j) {
  return jitter.empty() ? 0.5 : jitter[j];
}

}  // namespace

double surface_proximity(const SceneSdf& scene, const DesignPoint& d,
                         double sigma) {
  double s = scene.dist(design::map_to_scene(d));
  return std::exp(-s * s / (2.0 * sigma * sigma));
}

double transmittance(const SceneSdf& scene, const DesignPoint& d, double beta,
                     int n_strat, std::span<const double> jitter) {
  if (d.tau < 0) throw Error(ErrorKind::Domain, "transmittance: tau must be >= 0");
  if (d.tau == 0.0) return 1.0;
  Vec3 o{d.x, d.y, d.z};
  Vec3 v = design::direction_vector(d.phi, d.psi);
  double acc = 0.0;
  for (int j = 0; j < n_strat; ++j) {
    double lam = (j + stratum_offset(jitter, j)) / n_strat * d.tau;
    double s = scene.dist(o + lam * v);
    acc += 1.0 / (1.0 + std::exp(beta * s));  // sigmoid occupancy, scale 1/beta
  }
  return std::exp(-beta * d.tau / n_strat * acc);
}

double target_density(std::span<const SceneSdf> scenes, const DesignPoint& d,
                      const DensityConfig& cfg, std::span<const double> jitter) {
  cfg.validate();
  if (scenes.empty())
    throw Error(ErrorKind::Config, "target_density: needs at least one scene");
  double sum = 0.0;
  for (const SceneSdf& scene : scenes) {
    double s = surface_proximity(scene, d, cfg.sigma);
    double t = transmittance(scene, d, cfg.beta, cfg.n_strat, jitter);
    sum += s * (cfg.w_vis == 0.0 ? 1.0 : std::pow(t, cfg.w_vis));
  }
  return sum;
}

int log_target_density_tape(Tape& tape, std::span<const SceneSdf> scenes,
                            std::span<const int, 6> d_ids,
                            const DensityConfig& cfg,
                            std::span<const double> jitter) {
  cfg.validate();
  if (scenes.empty())
    throw Error(ErrorKind::Config, "target_density: needs at least one scene");
  if (!jitter.empty() && static_cast<int>(jitter.size()) != cfg.n_strat)
    throw Error(ErrorKind::Shape, "target_density: jitter length != n_strat");

  Var x{&tape, d_ids[0]}, y{&tape, d_ids[1]}, z{&tape, d_ids[2]};
  Var phi{&tape, d_ids[3]}, psi{&tape, d_ids[4]}, tau{&tape, d_ids[5]};

  // View direction v(phi, psi), built once and reused by all scenes.
  Var cp = cos(psi);
  Var vx = cp * cos(phi), vy = cp * sin(phi), vz = sin(psi);

  // A scene SDF query as an external node: value + analytic spatial partials
  // chained through the tape coordinates of the query point.
  auto sdf_node = [&](const SceneSdf& scene, Var px, Var py, Var pz) {
    scenes::SdfResult r =
        scene.eval({px.value(), py.value(), pz.value()});
    std::array<int, 3> in = {px.id, py.id, pz.id};
    std::array<double, 3> partials = {r.grad.x, r.grad.y, r.grad.z};
    return Var{&tape, tape.external(r.dist, in, partials)};
  };

  const double inv2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  Var sum{&tape, tape.constant(0.0)};
  for (const SceneSdf& scene : scenes) {
    // Surface proximity at the observed point s = o + tau v.
    Var sx = x + tau * vx, sy = y + tau * vy, sz = z + tau * vz;
    Var sd = sdf_node(scene, sx, sy, sz);
    Var log_s = -(sd * sd) * inv2s2;

    // log T by stratified midpoint quadrature along the ray.
    Var log_term = log_s;
    if (cfg.w_vis > 0.0 && tau.value() > 0.0) {
      Var acc{&tape, tape.constant(0.0)};
      for (int j = 0; j < cfg.n_strat; ++j) {
        double c = (j + stratum_offset(jitter, j)) / cfg.n_strat;
        Var lam = tau * c;
        Var qd = sdf_node(scene, x + lam * vx, y + lam * vy, z + lam * vz);
        acc = acc + sigmoid(qd * -cfg.beta);
      }
      Var log_t = -(tau * acc) * (cfg.beta / cfg.n_strat);
      log_term = log_s + cfg.w_vis * log_t;
    }
    sum = sum + exp(log_term);
  }

  Var floor{&tape, tape.constant(cfg.eps_log)};
  int clamped = tape.max_(sum.id, floor.id);  // gradient favors the live sum
  return tape.log_(clamped);
}

LogDensityResult log_target_density(std::span<const SceneSdf> scenes,
                                    const DesignPoint& d,
                                    const DensityConfig& cfg,
                                    std::span<const double> jitter) {
  Tape tape;
  std::array<int, 6> ids;
  for (int i = 0; i < 6; ++i) ids[i] = tape.leaf(d[i]);
  int out = log_target_density_tape(tape, scenes, ids, cfg, jitter);
  tape.backward(out);
  LogDensityResult r{tape.value(out), {}};
  for (int i = 0; i < 6; ++i) r.gradient[i] = tape.adjoint(ids[i]);
  return r;
}

}  // namespace ldesign::density
