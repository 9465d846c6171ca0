#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldesign/cli/toml.hpp"
#include "ldesign/density/target_density.hpp"
#include "ldesign/design/design_space.hpp"
#include "ldesign/flow/model.hpp"
#include "ldesign/flow/train.hpp"
#include "ldesign/scenes/generators.hpp"

namespace ldesign::cli {

/// Everything one experiment needs, parsed from a TOML config plus CLI
/// flags. Unknown keys are rejected; all seeds are explicit in the file and
/// mixed with the --seed flag so (config, seed) pins every artifact.
struct ExperimentConfig {
  scenes::TaskKind task = scenes::TaskKind::Face;
  std::string task_name;  // "face" | "tracking" | "warehouse"

  // dataset
  int train_scenes = 20, test_scenes = 20;
  std::uint64_t train_seed = 0, test_seed = 0;
  int frames = 24;  // tracking frames per sequence

  design::DesignBounds bounds;
  design::ConstraintRegion constraints;

  density::DensityConfig density;
  flow::FlowConfig flow_cfg;
  std::uint64_t flow_seed = 0;
  flow::TrainConfig train;  // includes the ramp schedule and the train seed

  // synthesis
  std::vector<int> g_list;
  int synth_samples = 20000;
  std::uint64_t synth_seed = 0;
  int em_max_iters = 200;

  // warehouse adaptive slices
  int n_positions = 16;
  double slice_delta = 0.25;
  int slice_samples = 3000;

  // evaluation
  std::vector<int> budgets;
  std::vector<std::string> baselines;  // subset of {uniform, random, occupancy}
  int range_bins = 66;                 // bins across the full gate
  double gate_max = 1.0;
  double worst_chamfer_mm = 200.0;
  double worst_frechet = 2.0;
  int truth_samples = 8000;
  std::vector<double> occupancy_voxels;
  std::uint64_t eval_seed = 0;
  // Baseline ray domain; dims absent from the config default to the design
  // bounds. Lets e.g. the face baselines aim at the FoV window and the
  // tracking grid fix a nadir direction.
  design::DesignBounds baseline_bounds;

  // bake
  int bake_res = 64;

  std::string out_dir;
  std::uint64_t global_seed = 0;
  bool paper_scale = false;
  std::string config_hash;  // 16 hex digits over canonical config + flags

  double r_bin() const { return gate_max / range_bins; }
};

/// Parses and validates a document (consuming every key). The hash covers
/// the canonical document plus the --seed and --paper-scale flags, so runs
/// that could differ never share a hash.
ExperimentConfig parse_experiment(const TomlDoc& doc, std::uint64_t global_seed,
                                  bool paper_scale,
                                  const std::string& out_override = "");

/// Stage seed derivation: config seed mixed with the --seed flag.
std::uint64_t mix_seed(std::uint64_t cfg_seed, std::uint64_t global_seed);

}  // namespace ldesign::cli
