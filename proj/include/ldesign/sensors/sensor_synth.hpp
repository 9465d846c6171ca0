#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "ldesign/density/target_density.hpp"
#include "ldesign/design/design_space.hpp"
#include "ldesign/flow/model.hpp"
#include "ldesign/numerics/rng.hpp"
#include "ldesign/scenes/sdf.hpp"

namespace ldesign::sensors {

using design::ConstraintRegion;
using design::DesignBounds;
using design::DesignPoint;
using design::Vec3;
using scenes::SceneSdf;

/// One Gaussian component over the free dimensions. Fixed dimensions stay
/// pinned at their bound value with zero variance. The covariance is
/// block-diagonal across the (origin | angle | time) dimension groups and
/// full within each group; circular dimensions are handled by wrapped
/// differences (small-variance wrapped-Gaussian approximation).
struct MixtureComponent {
  double weight = 0;
  std::array<double, 6> mean{};  // full design point; fixed dims = bound value
  Eigen::MatrixXd cov;           // FxF over free dims, cross-block entries zero
  std::array<bool, 6> mean_clamped{};
  std::array<bool, 6> sigma_clamped{};
};

struct SensorMixture {
  DesignBounds bounds;
  std::vector<int> free;  // free dims, ascending
  std::vector<MixtureComponent> comps;

  /// log q(d): log-sum-exp over components of the block-diagonal Gaussian
  /// density over the free dims (wrapped difference on circular dims).
  double log_density(const DesignPoint& d) const;

  /// Weights sum to 1, covariances symmetric with eigenvalues >= 1e-8.
  void validate() const;
};

struct EmOptions {
  int max_iters = 200;
  double tol = 1e-6;        // relative log-likelihood change
  double var_floor = 1e-8;  // per-block covariance eigenvalue floor
};

struct EmResult {
  SensorMixture mixture;
  std::vector<double> loglik;        // average log-likelihood per iteration
  std::vector<bool> clamp_fired;     // per iteration, parallel to loglik
  std::vector<std::string> events;   // component reinitializations etc.
};

/// Weighted EM fit of a G-component block-diagonal Gaussian mixture to flow
/// samples, with k-means++ initialization (substream "em-init" of seed) and
/// constraint clamping applied after every M-step (projected EM). Components
/// whose responsibility mass drops below 1e-8 of the batch are reinitialized
/// at the lowest-likelihood sample; each reinit is reported in `events`.
EmResult em_fit(std::span<const DesignPoint> samples, int G,
                const DesignBounds& bounds, const ConstraintRegion& C,
                std::uint64_t seed, const EmOptions& opts = {});

/// Projects component means into C (nearest box, component-wise), clips block
/// covariance diagonals to the [sigma_min^2, sigma_max^2] implied by the
/// clamp spec, and rescales off-diagonals through the original correlation
/// matrix (shrunk toward the identity until PSD). Idempotent.
SensorMixture clamp_constraints(const SensorMixture& mix,
                                const ConstraintRegion& C);

/// Hardware-facing description of one component: 95% boxes in origin, angle
/// and time. For circular azimuth the interval may extend past [0, 2pi); ray
/// sampling wraps it back.
struct SensorSpec {
  int id = 0;
  double weight = 0;
  Vec3 origin_center{};
  Vec3 origin_half{};  // zero-extent for fixed origin dims
  double phi_lo = 0, phi_hi = 0;
  double psi_lo = 0, psi_hi = 0;
  double tau_min = 0, tau_max = 0;
};

/// Per component: 95% intervals mu +- 1.96 sigma per dimension, intersected
/// with the bounds (circular azimuth excepted; its width is capped at 2pi).
std::vector<SensorSpec> extract_sensors(const SensorMixture& mix);

struct Ray {
  Vec3 origin{};
  double phi = 0, psi = 0;
  double tau_min = 0, tau_max = 0;
  int sensor = 0;
};

struct RaySet {
  std::vector<Ray> rays;
  int budget = 0;
};

/// Largest-remainder apportionment of the budget over sensor weights, then
/// uniform sampling within each sensor's 95% origin box x FoV rectangle.
/// Uses substream "ray-sampling" of the seed.
RaySet allocate_and_sample_rays(std::span<const SensorSpec> sensors, int budget,
                                std::uint64_t seed);

/// Expt C: per robot position x0, rejection-samples the flow restricted to
/// C intersected with x in [x0 - delta, x0 + delta], pins x := x0 and the
/// azimuth to its fixed bound value, and fits G components over the
/// remaining free dims. Each component is one ray with a learned elevation
/// and time gate. Infeasible slices rethrow constraint-infeasible with the
/// slice index.
struct AdaptiveSlice {
  double position = 0;
  SensorMixture mixture;
};
std::vector<AdaptiveSlice> fit_adaptive_slices(
    const flow::FlowModel& model, std::span<const double> positions, int G,
    double delta, const ConstraintRegion& C, std::uint64_t seed,
    int samples_per_slice = 5000, const EmOptions& opts = {});

/// Mean over rays and scenes of the transmittance at the gate-center range.
double mean_visibility(const RaySet& rays, std::span<const SceneSdf> scenes,
                       double beta = 100.0, int n_strat = 32);

/// CSV writers (deterministic formatting, used by the pipeline CLI).
void write_sensors_csv(const std::string& path,
                       std::span<const SensorSpec> sensors);
void write_rays_csv(const std::string& path, const RaySet& rays);
RaySet read_rays_csv(const std::string& path);

}  // namespace ldesign::sensors
