#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldesign/density/target_density.hpp"
#include "ldesign/flow/model.hpp"

namespace ldesign::flow {

using density::DensityConfig;
using density::RampSchedule;
using design::ConstraintRegion;
using scenes::SceneSdf;

struct TrainConfig {
  long steps = 5000;
  int batch = 1024;
  double lr = 1e-3;
  double eta_entropy = 0.5;
  RampSchedule ramp;
  int scene_batch = 8;  // scenes per step; full set at evaluation
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 1 || batch < 1 || scene_batch < 1)
      throw Error(ErrorKind::Config, "train: steps/batch/scene_batch must be >= 1");
    if (!(lr > 0)) throw Error(ErrorKind::Config, "train: lr must be > 0");
    if (eta_entropy < 0)
      throw Error(ErrorKind::Config, "train: eta_entropy must be >= 0");
  }
};

struct TraceRow {
  long step;
  double loss;
  double mean_logp;    // mean log p*(f(z)) over the batch
  double mean_logdet;  // mean forward log-determinant
  double w_vis;
};

/// Reverse-KL training with entropy regularization: per step minimizes
/// mean[(1 + eta) * (log pi(z) - logdet f(z)) - log p*(f(z))] over a fresh
/// uniform batch, with the visibility weight following the ramp schedule.
std::vector<TraceRow> train_flow(FlowModel& model,
                                 std::span<const SceneSdf> scenes,
                                 const DensityConfig& density_cfg,
                                 const TrainConfig& train_cfg);

/// i.i.d. samples from the flow; with a constraint region, rejection-samples
/// the truncation of the flow density to the region. Reports
/// constraint-infeasible if acceptance stays below 1e-4 over a 1e5 probe.
std::vector<DesignPoint> sample_flow(const FlowModel& model, int n,
                                     numerics::Rng& rng,
                                     const ConstraintRegion* region = nullptr,
                                     std::vector<double>* log_densities = nullptr);

/// Writes the loss trace as CSV (step, loss, mean_logp, mean_logdet, w_vis).
void write_trace_csv(const std::string& path, std::span<const TraceRow> trace);

}  // namespace ldesign::flow
