#include "ldesign/cli/config.hpp"

#include <algorithm>

namespace ldesign::cli {
namespace {

using design::DesignBounds;
using design::kDimNames;

int dim_index(const std::string& name) {
  for (int i = 0; i < 6; ++i)
    if (name == kDimNames[i]) return i;
  throw Error(ErrorKind::Config, "unknown dimension `" + name + "`");
}

/// Reads the six per-dimension [lo, hi] pairs of a bounds table; lo == hi
/// marks the dimension fixed. `base` supplies defaults for absent dims.
DesignBounds parse_bounds(const TomlDoc& doc, const std::string& table,
                          const DesignBounds* base) {
  DesignBounds b;
  if (base) b = *base;
  for (int i = 0; i < 6; ++i) {
    std::string key = table + "." + kDimNames[i];
    if (!doc.has(key)) {
      if (base) continue;
      throw Error(ErrorKind::Config,
                  "missing `" + key + "` (all six dims are required)");
    }
    std::vector<double> pair = doc.get_double_array(key);
    if (pair.size() != 2)
      throw Error(ErrorKind::Config, "`" + key + "` must be [lo, hi]");
    b.lo[i] = pair[0];
    b.hi[i] = pair[1];
    b.fixed[i] = (pair[0] == pair[1]);
    b.circular[i] = false;
  }
  for (const std::string& name :
       doc.has(table + ".circular")
           ? doc.get_string_array(table + ".circular")
           : std::vector<std::string>{})
    b.circular[dim_index(name)] = true;
  b.validate();
  return b;
}

std::uint64_t get_seed(const TomlDoc& doc, const std::string& key) {
  long long s = doc.get_int(key);
  if (s < 0) throw Error(ErrorKind::Config, "`" + key + "` must be >= 0");
  return static_cast<std::uint64_t>(s);
}

std::vector<int> get_int_list(const TomlDoc& doc, const std::string& key) {
  std::vector<int> out;
  for (long long v : doc.get_int_array(key)) {
    if (v < 1) throw Error(ErrorKind::Config, "`" + key + "` entries must be >= 1");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw Error(ErrorKind::Config, "`" + key + "` is empty");
  return out;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t cfg_seed, std::uint64_t global_seed) {
  return cfg_seed + 0x9e3779b97f4a7c15ull * global_seed;
}

ExperimentConfig parse_experiment(const TomlDoc& doc,
                                  std::uint64_t global_seed, bool paper_scale,
                                  const std::string& out_override) {
  ExperimentConfig cfg;
  cfg.global_seed = global_seed;
  cfg.paper_scale = paper_scale;

  cfg.task_name = doc.get_string("task.kind");
  if (cfg.task_name == "face") cfg.task = scenes::TaskKind::Face;
  else if (cfg.task_name == "tracking") cfg.task = scenes::TaskKind::Tracking;
  else if (cfg.task_name == "warehouse") cfg.task = scenes::TaskKind::Warehouse;
  else
    throw Error(ErrorKind::Config,
                "task.kind must be face | tracking | warehouse, got `" +
                    cfg.task_name + "`");
  cfg.out_dir = out_override.empty() ? doc.get_string("task.out") : out_override;
  if (!out_override.empty() && doc.has("task.out"))
    (void)doc.get_string("task.out");  // consume; the flag wins

  cfg.train_scenes = static_cast<int>(doc.get_int("dataset.train_scenes"));
  cfg.test_scenes = static_cast<int>(doc.get_int("dataset.test_scenes"));
  cfg.train_seed = get_seed(doc, "dataset.train_seed");
  cfg.test_seed = get_seed(doc, "dataset.test_seed");
  cfg.frames = static_cast<int>(doc.get_int("dataset.frames", 24));
  if (cfg.train_scenes < 1 || cfg.test_scenes < 1 || cfg.frames < 2)
    throw Error(ErrorKind::Config, "dataset: scene counts >= 1, frames >= 2");

  cfg.bounds = parse_bounds(doc, "bounds", nullptr);

  // Constraint boxes: [constraints.box1], [constraints.box2], ... Each table
  // lists only the dims it restricts; the rest default to the bounds.
  for (int n = 1;; ++n) {
    std::string table = "constraints.box" + std::to_string(n);
    if (doc.keys_with_prefix(table + ".").empty()) break;
    design::ConstraintBox box;
    for (int i = 0; i < 6; ++i) {
      box.lo[i] = cfg.bounds.lo[i];
      box.hi[i] = cfg.bounds.hi[i];
      std::string key = table + "." + kDimNames[i];
      if (doc.has(key)) {
        std::vector<double> pair = doc.get_double_array(key);
        if (pair.size() != 2)
          throw Error(ErrorKind::Config, "`" + key + "` must be [lo, hi]");
        box.lo[i] = pair[0];
        box.hi[i] = pair[1];
      }
      if (box.lo[i] > box.hi[i])
        throw Error(ErrorKind::Config, "`" + table + "` has lo > hi in " +
                                           kDimNames[i]);
    }
    cfg.constraints.boxes.push_back(box);
  }
  if (cfg.constraints.boxes.empty())
    cfg.constraints = design::ConstraintRegion::full(cfg.bounds);

  for (int i = 0; i < 6; ++i) {
    std::string lo_key = std::string("constraints.clamps.sigma_min_") + kDimNames[i];
    std::string hi_key = std::string("constraints.clamps.sigma_max_") + kDimNames[i];
    if (doc.has(lo_key)) cfg.constraints.clamps.sigma_min[i] = doc.get_double(lo_key);
    if (doc.has(hi_key)) cfg.constraints.clamps.sigma_max[i] = doc.get_double(hi_key);
  }
  cfg.constraints.clamps.zero_extent_origin =
      doc.get_bool("constraints.clamps.zero_extent_origin", false);

  cfg.density.sigma = doc.get_double("density.sigma", cfg.density.sigma);
  cfg.density.beta = doc.get_double("density.beta", cfg.density.beta);
  cfg.density.n_strat =
      static_cast<int>(doc.get_int("density.n_strat", cfg.density.n_strat));
  cfg.density.validate();

  cfg.train.ramp.zero_until = doc.get_int("ramp.zero_until");
  cfg.train.ramp.ramp_length = doc.get_int("ramp.ramp_length");
  cfg.train.ramp.target = doc.get_double("ramp.target");
  if (cfg.train.ramp.target < 0 || cfg.train.ramp.target > 1)
    throw Error(ErrorKind::Config, "ramp.target must be in [0, 1]");

  cfg.flow_cfg.layers = static_cast<int>(doc.get_int("flow.layers"));
  cfg.flow_cfg.hidden = static_cast<int>(doc.get_int("flow.hidden"));
  cfg.flow_cfg.bins = static_cast<int>(doc.get_int("flow.bins"));
  cfg.flow_cfg.dropout = doc.get_double("flow.dropout", cfg.flow_cfg.dropout);
  cfg.flow_cfg.validate();
  cfg.flow_seed = get_seed(doc, "flow.seed");

  cfg.train.steps = doc.get_int("train.steps");
  cfg.train.batch = static_cast<int>(doc.get_int("train.batch"));
  cfg.train.lr = doc.get_double("train.lr", cfg.train.lr);
  cfg.train.eta_entropy =
      doc.get_double("train.eta_entropy", cfg.train.eta_entropy);
  cfg.train.scene_batch =
      static_cast<int>(doc.get_int("train.scene_batch", cfg.train.scene_batch));
  cfg.train.seed = get_seed(doc, "train.seed");

  // Warehouse synthesis derives G from the per-position ray budget, so its
  // configs may omit the G list.
  if (cfg.task != scenes::TaskKind::Warehouse || doc.has("synthesis.g_list"))
    cfg.g_list = get_int_list(doc, "synthesis.g_list");
  cfg.synth_samples = static_cast<int>(doc.get_int("synthesis.samples"));
  cfg.synth_seed = get_seed(doc, "synthesis.seed");
  cfg.em_max_iters =
      static_cast<int>(doc.get_int("synthesis.em_max_iters", cfg.em_max_iters));
  cfg.n_positions =
      static_cast<int>(doc.get_int("synthesis.positions", cfg.n_positions));
  cfg.slice_delta = doc.get_double("synthesis.slice_delta", cfg.slice_delta);
  cfg.slice_samples = static_cast<int>(
      doc.get_int("synthesis.slice_samples", cfg.slice_samples));
  if (cfg.synth_samples < 1 || cfg.n_positions < 1 || cfg.slice_samples < 1 ||
      !(cfg.slice_delta > 0))
    throw Error(ErrorKind::Config, "synthesis: counts >= 1, slice_delta > 0");

  cfg.budgets = get_int_list(doc, "evaluation.budgets");
  cfg.baselines = doc.get_string_array("evaluation.baselines");
  for (const std::string& b : cfg.baselines)
    if (b != "uniform" && b != "random" && b != "occupancy")
      throw Error(ErrorKind::Config, "unknown baseline `" + b + "`");
  cfg.range_bins = static_cast<int>(doc.get_int("evaluation.range_bins"));
  cfg.gate_max = doc.get_double("evaluation.gate_max");
  if (cfg.range_bins < 1 || !(cfg.gate_max > 0))
    throw Error(ErrorKind::Config,
                "evaluation: range_bins >= 1, gate_max > 0");
  cfg.worst_chamfer_mm =
      doc.get_double("evaluation.worst_chamfer_mm", cfg.worst_chamfer_mm);
  cfg.worst_frechet =
      doc.get_double("evaluation.worst_frechet", cfg.worst_frechet);
  cfg.truth_samples = static_cast<int>(
      doc.get_int("evaluation.truth_samples", cfg.truth_samples));
  if (doc.has("evaluation.occupancy_voxels"))
    cfg.occupancy_voxels = doc.get_double_array("evaluation.occupancy_voxels");
  cfg.eval_seed = get_seed(doc, "evaluation.seed");
  cfg.baseline_bounds = parse_bounds(doc, "baseline", &cfg.bounds);
  if (std::count(cfg.baselines.begin(), cfg.baselines.end(), "occupancy") &&
      cfg.occupancy_voxels.empty())
    throw Error(ErrorKind::Config,
                "occupancy baseline needs evaluation.occupancy_voxels");

  cfg.bake_res = static_cast<int>(doc.get_int("output.bake_res", cfg.bake_res));
  if (cfg.bake_res < 2)
    throw Error(ErrorKind::Config, "output.bake_res must be >= 2");

  if (paper_scale) {
    cfg.train_scenes = 50;
    cfg.test_scenes = 50;
    cfg.train.steps = 5000;
    cfg.train.batch = 1024;
  }
  cfg.train.validate();

  doc.check_all_consumed();

  std::string stamp = doc.canonical();
  stamp += "meta.seed = " + std::to_string(global_seed) + "\n";
  stamp += std::string("meta.paper_scale = ") +
           (paper_scale ? "true" : "false") + "\n";
  cfg.config_hash = fnv1a_hex(stamp);
  return cfg;
}

}  // namespace ldesign::cli
