#pragma once

#include <array>
#include <span>

#include "ldesign/design/design_space.hpp"
#include "ldesign/numerics/tape.hpp"
#include "ldesign/scenes/sdf.hpp"

namespace ldesign::density {

using design::DesignPoint;
using scenes::SceneSdf;

/// Parameters of the task-driven target density: surface proximity width,
/// occupancy attenuation, transmittance quadrature resolution, and the
/// visibility exponent used during the training ramp.
struct DensityConfig {
  double sigma = 0.025;    // meters
  double beta = 100.0;     // attenuation scale
  int n_strat = 32;        // stratified quadrature samples per ray
  double w_vis = 1.0;      // visibility exponent in [0, 1]
  double eps_log = 1e-30;  // floor inside the log

  void validate() const {
    if (!(sigma > 0)) throw Error(ErrorKind::Config, "density: sigma must be > 0");
    if (!(beta > 0)) throw Error(ErrorKind::Config, "density: beta must be > 0");
    if (n_strat < 1) throw Error(ErrorKind::Config, "density: n_strat must be >= 1");
    if (w_vis < 0 || w_vis > 1)
      throw Error(ErrorKind::Config, "density: w_vis must be in [0, 1]");
  }
};

/// Piecewise-linear schedule for the visibility weight: zero for the first
/// `zero_until` steps, then ramped linearly to `target` over `ramp_length`.
struct RampSchedule {
  long zero_until = 1000;
  long ramp_length = 2000;
  double target = 1.0;

  double weight(long step) const {
    if (step <= zero_until) return 0.0;
    if (ramp_length <= 0 || step >= zero_until + ramp_length) return target;
    return target * static_cast<double>(step - zero_until) / ramp_length;
  }
};

/// exp(-SDF(M(d))^2 / (2 sigma^2)): closeness of the observed scene point to
/// the nearest surface. In (0, 1], equal to 1 exactly on the surface.
double surface_proximity(const SceneSdf& scene, const DesignPoint& d,
                         double sigma);

/// exp(-int_0^tau beta * sigmoid(-beta * SDF(x + lambda v)) dlambda) by
/// stratified midpoint quadrature with n_strat strata: soft occupancy with
/// length scale 1/beta, attenuation scale beta. A ray terminating exactly on
/// a surface crosses half the boundary layer, so T = 0.5 there; rays that
/// stay >= 5/beta clear of all surfaces have T ~= 1. `jitter` optionally
/// supplies one offset in [0, 1) per stratum (empty => midpoints 0.5).
double transmittance(const SceneSdf& scene, const DesignPoint& d, double beta,
                     int n_strat, std::span<const double> jitter = {});

/// sum_i S_i(d) * T_i(d)^{w_vis} over the scene set. Unnormalized, >= 0.
double target_density(std::span<const SceneSdf> scenes, const DesignPoint& d,
                      const DensityConfig& cfg,
                      std::span<const double> jitter = {});

struct LogDensityResult {
  double value;
  std::array<double, 6> gradient;  // d/d(x, y, z, phi, psi, tau)
};

/// log(max(target_density, eps_log)) with its gradient w.r.t. the design
/// point. The gradient is zero when the floor is active.
LogDensityResult log_target_density(std::span<const SceneSdf> scenes,
                                    const DesignPoint& d,
                                    const DensityConfig& cfg,
                                    std::span<const double> jitter = {});

/// Tape building block: the six entries of `d_ids` are tape nodes for
/// (x, y, z, phi, psi, tau); returns the node holding the floored log
/// density. SDF queries enter the tape as external nodes carrying their
/// analytic spatial gradients.
int log_target_density_tape(numerics::Tape& tape,
                            std::span<const SceneSdf> scenes,
                            std::span<const int, 6> d_ids,
                            const DensityConfig& cfg,
                            std::span<const double> jitter = {});

}  // namespace ldesign::density
