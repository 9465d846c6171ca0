#pragma once

#include <string>
#include <vector>

#include "ldesign/cli/config.hpp"
#include "ldesign/scenes/generators.hpp"
#include "ldesign/sensors/sensor_synth.hpp"
#include "ldesign/sim/sim_eval.hpp"

namespace ldesign::cli {

/// One named ray artifact: a method ("ours-4", "uniform", "occupancy-0.1"),
/// the requested ray budget, and the sensor count G (0 for baselines).
struct RaySetRef {
  std::string method;
  int budget = 0;
  int G = 0;
  std::string label() const {
    return method + "_B" + std::to_string(budget);
  }
};

/// Train/test scene data regenerated from the manifest seeds.
struct Dataset {
  std::vector<scenes::SceneSdf> train, test;           // face, warehouse
  std::vector<scenes::WarehouseLayout> test_layouts;   // warehouse
  std::vector<scenes::TimedSceneSequence> train_seqs, test_seqs;  // tracking
  std::vector<scenes::SceneSdf> train_frames;          // tracking, flattened
};

/// The experiment pipeline. Steps communicate only through artifacts in the
/// output directory; each step checks that its upstream artifacts exist
/// (pipeline-order errors otherwise) and that they carry this config's hash.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig cfg);

  /// Dispatch by subcommand name; "all" runs every step in order.
  void run(const std::string& step);

  void gen_scenes();
  void bake();
  void train_density();
  void fit_sensors();
  void sample_rays();
  void baseline();
  void simulate();
  void evaluate();
  void report();

  const ExperimentConfig& config() const { return cfg_; }

  /// Deterministic enumeration of every ray artifact the config implies:
  /// learned sets (per G, per budget), then the configured baselines.
  std::vector<RaySetRef> ray_sets() const;

  std::string path(const std::string& rel) const;
  std::string rays_path(const RaySetRef& ref) const;
  std::string det_path(const RaySetRef& ref, int scene) const;

 private:
  void ensure_out_dir();
  void check_or_write_hash(bool write);
  void require_artifact(const std::string& rel,
                        const std::string& producing_step) const;
  /// Prepends "# config_hash=<hex>" to a freshly written text artifact.
  void stamp(const std::string& rel) const;
  Dataset load_dataset(bool need_train, bool need_test) const;
  std::vector<std::uint64_t> manifest_seeds(const std::string& key) const;
  sim::TaskDomain baseline_domain() const;
  void scene_bbox(design::Vec3& lo, design::Vec3& hi) const;

  ExperimentConfig cfg_;
};

}  // namespace ldesign::cli
