#include "ldesign/cli/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ldesign/flow/train.hpp"
#include "ldesign/scenes/sdf.hpp"

namespace ldesign::cli {

namespace fs = std::filesystem;
using design::DesignBounds;
using design::Vec3;
using scenes::SceneSdf;
using scenes::TaskKind;
using sensors::Ray;
using sensors::RaySet;
using sensors::SensorSpec;
using sim::Detection;
using sim::DetectionSet;
using sim::MetricReport;

namespace {

/// Warehouse position layout for a per-position budget b: the adaptive
/// system spreads its total budget (n_positions * b) as at most 2 rays per
/// stop, trading per-stop rays for aisle coverage.
std::pair<int, int> warehouse_split(int n_positions, int b) {
  int per_pos = std::min(b, 2);
  return {n_positions * b / per_pos, per_pos};
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\n' && c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Pipeline-side sensors CSV reader (mirrors write_sensors_csv).
std::vector<SensorSpec> read_sensors_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorKind::Config, "cannot open sensors CSV: " + path);
  std::vector<SensorSpec> out;
  char line[512];
  bool header = true;
  while (std::fgets(line, sizeof line, f)) {
    if (line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    SensorSpec s;
    if (std::sscanf(line,
                    "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                    &s.id, &s.weight, &s.origin_center.x, &s.origin_center.y,
                    &s.origin_center.z, &s.origin_half.x, &s.origin_half.y,
                    &s.origin_half.z, &s.phi_lo, &s.phi_hi, &s.psi_lo,
                    &s.psi_hi, &s.tau_min, &s.tau_max) != 14) {
      std::fclose(f);
      throw Error(ErrorKind::Config, "malformed sensors CSV line in " + path);
    }
    out.push_back(s);
  }
  std::fclose(f);
  return out;
}

DetectionSet read_detections_csv(const std::string& path, int n_frames) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f)
    throw Error(ErrorKind::Config, "cannot open detections CSV: " + path);
  DetectionSet out;
  out.n_frames = n_frames;
  char line[512];
  bool header = true;
  while (std::fgets(line, sizeof line, f)) {
    if (line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    Detection d;
    int hit = 0, in_gate = 0;
    if (std::sscanf(line, "%d,%d,%d,%lf,%lf,%lf,%lf,%d", &d.ray, &d.frame,
                    &hit, &d.point.x, &d.point.y, &d.point.z, &d.tau_hit,
                    &in_gate) != 8) {
      std::fclose(f);
      throw Error(ErrorKind::Config,
                  "malformed detections CSV line in " + path);
    }
    d.hit = hit != 0;
    d.in_gate = in_gate != 0;
    out.detections.push_back(d);
  }
  std::fclose(f);
  return out;
}

std::string first_line(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

int method_rank(const std::string& method) {
  if (method == "random") return 0;
  if (method == "uniform") return 1;
  if (method.rfind("occupancy", 0) == 0) return 2;
  return 3;  // ours-*
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

std::string Pipeline::path(const std::string& rel) const {
  return cfg_.out_dir + "/" + rel;
}

std::string Pipeline::rays_path(const RaySetRef& ref) const {
  return "rays_" + ref.label() + ".csv";
}

std::string Pipeline::det_path(const RaySetRef& ref, int scene) const {
  return "detections/det_" + ref.label() + "_S" + std::to_string(scene) +
         ".csv";
}

void Pipeline::ensure_out_dir() { fs::create_directories(cfg_.out_dir); }

void Pipeline::check_or_write_hash(bool write) {
  std::string hash_path = path("config_hash.txt");
  if (fs::exists(hash_path)) {
    std::string existing = first_line(hash_path);
    if (existing != cfg_.config_hash)
      throw Error(ErrorKind::Config,
                  "output directory " + cfg_.out_dir +
                      " holds artifacts for config hash " + existing +
                      ", refusing to mix with " + cfg_.config_hash);
    return;
  }
  if (!write)
    throw Error(ErrorKind::PipelineOrder,
                "missing artifact " + hash_path + "; run `gen-scenes` first");
  ensure_out_dir();
  std::ofstream(hash_path) << cfg_.config_hash << "\n";
}

void Pipeline::require_artifact(const std::string& rel,
                                const std::string& producing_step) const {
  std::string p = path(rel);
  if (!fs::exists(p))
    throw Error(ErrorKind::PipelineOrder, "missing artifact " + p + "; run `" +
                                              producing_step + "` first");
  // Stamped text artifacts must carry this run's hash.
  std::string head = first_line(p);
  if (head.rfind("# config_hash=", 0) == 0 &&
      head != "# config_hash=" + cfg_.config_hash)
    throw Error(ErrorKind::Config,
                p + " carries a different config hash; refusing to mix");
}

void Pipeline::stamp(const std::string& rel) const {
  std::string p = path(rel);
  std::ifstream in(p, std::ios::binary);
  std::ostringstream body;
  body << in.rdbuf();
  in.close();
  std::ofstream out(p, std::ios::binary);
  out << "# config_hash=" << cfg_.config_hash << "\n" << body.str();
}

void Pipeline::scene_bbox(Vec3& lo, Vec3& hi) const {
  switch (cfg_.task) {
    case TaskKind::Face:
      lo = {-0.45, -0.45, -0.45};
      hi = {0.45, 0.45, 0.45};
      break;
    case TaskKind::Tracking:
      // z starts above the ground plane so occupancy statistics describe the
      // moving geometry rather than the floor.
      lo = {-0.5, -0.5, 0.03};
      hi = {0.5, 0.5, 0.95};
      break;
    case TaskKind::Warehouse:
      lo = {0.0, -2.0, 0.0};
      hi = {8.0, 0.5, 2.2};
      break;
  }
}

std::vector<std::uint64_t> Pipeline::manifest_seeds(
    const std::string& key) const {
  TomlDoc manifest = TomlDoc::parse_file(path("scenes.toml"));
  if (manifest.get_string("meta.config_hash") != cfg_.config_hash)
    throw Error(ErrorKind::Config,
                "scenes.toml carries a different config hash; refusing to mix");
  std::vector<std::uint64_t> out;
  for (const std::string& s : manifest.get_string_array(key))
    out.push_back(std::strtoull(s.c_str(), nullptr, 10));
  return out;
}

Dataset Pipeline::load_dataset(bool need_train, bool need_test) const {
  require_artifact("scenes.toml", "gen-scenes");
  Dataset ds;
  auto build = [&](const std::vector<std::uint64_t>& seeds, bool train) {
    for (std::uint64_t s : seeds) {
      switch (cfg_.task) {
        case TaskKind::Face:
          (train ? ds.train : ds.test).push_back(scenes::gen_face_scene(s));
          break;
        case TaskKind::Warehouse: {
          scenes::WarehouseScene ws = scenes::gen_warehouse_scene(s);
          (train ? ds.train : ds.test).push_back(ws.sdf);
          if (!train) ds.test_layouts.push_back(ws.layout);
          break;
        }
        case TaskKind::Tracking: {
          scenes::TrajectoryParams params;
          params.frames = cfg_.frames;
          auto seq = scenes::gen_trajectory_scene(s, params);
          if (train) {
            for (const SceneSdf& frame : seq.frames)
              ds.train_frames.push_back(frame);
            ds.train_seqs.push_back(std::move(seq));
          } else {
            ds.test_seqs.push_back(std::move(seq));
          }
          break;
        }
      }
    }
  };
  if (need_train) build(manifest_seeds("scenes.train_seeds"), true);
  if (need_test) build(manifest_seeds("scenes.test_seeds"), false);
  return ds;
}

sim::TaskDomain Pipeline::baseline_domain() const {
  sim::TaskDomain domain;
  domain.bounds = cfg_.baseline_bounds;
  domain.gate_max = cfg_.gate_max;
  return domain;
}

std::vector<RaySetRef> Pipeline::ray_sets() const {
  std::vector<RaySetRef> out;
  bool warehouse = cfg_.task == TaskKind::Warehouse;
  if (warehouse) {
    // Budget means rays per robot position; G components == budget rays.
    for (int b : cfg_.budgets) out.push_back({"ours", b, b});
  } else {
    for (int g : cfg_.g_list)
      for (int b : cfg_.budgets)
        out.push_back({"ours-" + std::to_string(g), b, g});
  }
  for (const std::string& base : cfg_.baselines) {
    if (base == "occupancy") {
      for (double v : cfg_.occupancy_voxels)
        out.push_back({"occupancy-" + fmt_num(v), cfg_.budgets.front(), 0});
    } else {
      for (int b : cfg_.budgets) out.push_back({base, b, 0});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Steps

void Pipeline::gen_scenes() {
  ensure_out_dir();
  check_or_write_hash(true);
  std::uint64_t train_base = mix_seed(cfg_.train_seed, cfg_.global_seed);
  std::uint64_t test_base = mix_seed(cfg_.test_seed, cfg_.global_seed);
  std::FILE* f = std::fopen(path("scenes.toml").c_str(), "wb");
  if (!f) throw Error(ErrorKind::Config, "cannot write scenes.toml");
  std::fprintf(f, "# config_hash=%s\n[meta]\nconfig_hash = \"%s\"\ntask = \"%s\"\n\n",
               cfg_.config_hash.c_str(), cfg_.config_hash.c_str(),
               cfg_.task_name.c_str());
  auto write_seeds = [&](const char* key, std::uint64_t base, int n) {
    std::fprintf(f, "%s = [", key);
    for (int i = 0; i < n; ++i)
      std::fprintf(f, "%s\"%llu\"", i ? ", " : "",
                   static_cast<unsigned long long>(base + i));
    std::fprintf(f, "]\n");
  };
  std::fprintf(f, "[scenes]\n");
  write_seeds("train_seeds", train_base, cfg_.train_scenes);
  write_seeds("test_seeds", test_base, cfg_.test_scenes);
  std::fclose(f);
}

void Pipeline::bake() {
  check_or_write_hash(false);
  if (cfg_.task == TaskKind::Tracking) {
    std::fprintf(stderr,
                 "bake: tracking sequences stay analytic (per-frame grids "
                 "are not exported)\n");
    return;
  }
  Dataset ds = load_dataset(true, true);
  fs::create_directories(path("grids"));
  Vec3 lo, hi;
  scene_bbox(lo, hi);
  int r = cfg_.bake_res;
  auto bake_split = [&](const std::vector<SceneSdf>& split, const char* name) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      SceneSdf baked = scenes::bake_grid(split[i], r, r, r, lo, hi);
      scenes::write_sdfgrid(
          path("grids/" + std::string(name) + "_" + std::to_string(i) +
               ".sdfgrid"),
          *baked.grid());
    }
  };
  bake_split(ds.train, "train");
  bake_split(ds.test, "test");
  std::ofstream(path("grids/config_hash.txt")) << cfg_.config_hash << "\n";
}

void Pipeline::train_density() {
  check_or_write_hash(false);
  Dataset ds = load_dataset(true, false);
  const std::vector<SceneSdf>& train_scenes =
      cfg_.task == TaskKind::Tracking ? ds.train_frames : ds.train;

  flow::FlowModel model(cfg_.bounds, cfg_.flow_cfg,
                        mix_seed(cfg_.flow_seed, cfg_.global_seed));
  flow::TrainConfig tc = cfg_.train;
  tc.seed = mix_seed(cfg_.train.seed, cfg_.global_seed);
  std::vector<flow::TraceRow> trace =
      flow::train_flow(model, train_scenes, cfg_.density, tc);
  model.save(path("flow.ckpt"));
  std::ofstream(path("flow.ckpt.hash")) << cfg_.config_hash << "\n";
  flow::write_trace_csv(path("trace.csv"), trace);
  stamp("trace.csv");
}

void Pipeline::fit_sensors() {
  check_or_write_hash(false);
  require_artifact("flow.ckpt", "train-density");
  if (first_line(path("flow.ckpt.hash")) != cfg_.config_hash)
    throw Error(ErrorKind::Config,
                "flow.ckpt carries a different config hash; refusing to mix");
  flow::FlowModel model = flow::FlowModel::load(path("flow.ckpt"));
  numerics::Rng base(mix_seed(cfg_.synth_seed, cfg_.global_seed));
  sensors::EmOptions opts;
  opts.max_iters = cfg_.em_max_iters;

  if (cfg_.task == TaskKind::Warehouse) {
    for (int b : cfg_.budgets) {
      // The adaptive system spends its total budget (n_positions * b rays)
      // as fewer rays at more stops along the aisle: boxes are sparse in x,
      // so position coverage beats per-position ray count. Baselines keep
      // the configured n_positions with b rays each; totals match.
      auto [n_pos, per_pos] = warehouse_split(cfg_.n_positions, b);
      std::vector<double> positions(n_pos);
      double x_lo = cfg_.bounds.lo[0] + cfg_.slice_delta;
      double x_hi = cfg_.bounds.hi[0] - cfg_.slice_delta;
      for (int i = 0; i < n_pos; ++i)
        positions[i] = x_lo + (x_hi - x_lo) * i / std::max(n_pos - 1, 1);
      // Fit more components than rays; apportionment at sampling time puts
      // the rays on the strongest modes. A mixture as small as the ray
      // count tends to park component means between surface modes.
      int g_fit = 2 * per_pos;
      std::vector<sensors::AdaptiveSlice> slices = sensors::fit_adaptive_slices(
          model, positions, g_fit, cfg_.slice_delta, cfg_.constraints,
          base.substream("slices").substream(static_cast<std::uint64_t>(b))
              .next_u64(),
          cfg_.slice_samples, opts);
      std::vector<SensorSpec> specs;
      for (const sensors::AdaptiveSlice& slice : slices)
        for (SensorSpec s : sensors::extract_sensors(slice.mixture)) {
          s.id = static_cast<int>(specs.size());
          specs.push_back(s);
        }
      std::string rel = "sensors_B" + std::to_string(b) + ".csv";
      sensors::write_sensors_csv(path(rel), specs);
      stamp(rel);
    }
    return;
  }

  for (int g : cfg_.g_list) {
    numerics::Rng sample_rng =
        base.substream("flow-samples").substream(static_cast<std::uint64_t>(g));
    std::vector<design::DesignPoint> samples = flow::sample_flow(
        model, cfg_.synth_samples, sample_rng, &cfg_.constraints);
    sensors::EmResult em = sensors::em_fit(
        samples, g, cfg_.bounds, cfg_.constraints,
        base.substream("em").substream(static_cast<std::uint64_t>(g)).next_u64(),
        opts);
    std::vector<SensorSpec> specs = sensors::extract_sensors(em.mixture);
    std::string rel = "sensors_G" + std::to_string(g) + ".csv";
    sensors::write_sensors_csv(path(rel), specs);
    stamp(rel);
  }
}

void Pipeline::sample_rays() {
  check_or_write_hash(false);
  numerics::Rng base(mix_seed(cfg_.synth_seed, cfg_.global_seed));

  if (cfg_.task == TaskKind::Warehouse) {
    for (int b : cfg_.budgets) {
      std::string in_rel = "sensors_B" + std::to_string(b) + ".csv";
      require_artifact(in_rel, "fit-sensors");
      std::vector<SensorSpec> specs = read_sensors_csv(path(in_rel));
      RaySet rays;
      rays.budget = b;
      // Per position: rays sampled inside that slice's 95% sensor boxes
      // (component means alone are brittle against test-scene variation in
      // shelf heights). Time gates are widened from the 95% interval to
      // ~3 sigma: inventory wants recall and the bandwidth headroom is
      // large. Specs arrive as consecutive per-position groups.
      const double widen = 3.0 / 1.96;
      auto [n_pos, per_pos] = warehouse_split(cfg_.n_positions, b);
      (void)n_pos;
      int g_fit = 2 * per_pos;  // components per slice (see fit_sensors)
      for (int pos = 0; pos * g_fit < static_cast<int>(specs.size()); ++pos) {
        std::vector<SensorSpec> group(
            specs.begin() + pos * g_fit,
            specs.begin() +
                std::min<std::size_t>((pos + 1) * g_fit, specs.size()));
        std::uint64_t seed =
            base.substream("warehouse-rays")
                .substream(static_cast<std::uint64_t>(b) * 1000 + pos)
                .next_u64();
        RaySet slice_rays =
            sensors::allocate_and_sample_rays(group, per_pos, seed);
        for (Ray r : slice_rays.rays) {
          const SensorSpec& s = group[r.sensor - group.front().id];
          double tc = 0.5 * (s.tau_min + s.tau_max);
          double th = 0.5 * (s.tau_max - s.tau_min) * widen;
          r.tau_min = std::max(cfg_.bounds.lo[5], tc - th);
          r.tau_max = std::min(cfg_.bounds.hi[5], tc + th);
          rays.rays.push_back(r);
        }
      }
      RaySetRef ref{"ours", b, b};
      sensors::write_rays_csv(path(rays_path(ref)), rays);
      stamp(rays_path(ref));
    }
    return;
  }

  for (int g : cfg_.g_list) {
    std::string in_rel = "sensors_G" + std::to_string(g) + ".csv";
    require_artifact(in_rel, "fit-sensors");
    std::vector<SensorSpec> specs = read_sensors_csv(path(in_rel));
    for (int b : cfg_.budgets) {
      std::uint64_t seed = base.substream("rays")
                               .substream(static_cast<std::uint64_t>(g) * 10000 + b)
                               .next_u64();
      RaySet rays = sensors::allocate_and_sample_rays(specs, b, seed);
      RaySetRef ref{"ours-" + std::to_string(g), b, g};
      sensors::write_rays_csv(path(rays_path(ref)), rays);
      stamp(rays_path(ref));
    }
  }
}

void Pipeline::baseline() {
  check_or_write_hash(false);
  numerics::Rng base(mix_seed(cfg_.eval_seed, cfg_.global_seed));
  bool warehouse = cfg_.task == TaskKind::Warehouse;

  auto emit = [&](const RaySetRef& ref, const RaySet& rays) {
    sensors::write_rays_csv(path(rays_path(ref)), rays);
    stamp(rays_path(ref));
  };

  for (const std::string& kind : cfg_.baselines) {
    if (kind == "uniform" || kind == "random") {
      for (int b : cfg_.budgets) {
        RaySet rays;
        rays.budget = b;
        if (warehouse) {
          // Per robot position: a 1D elevation grid (uniform) or i.i.d.
          // elevations (random) with the full time gate.
          double x_lo = cfg_.bounds.lo[0] + cfg_.slice_delta;
          double x_hi = cfg_.bounds.hi[0] - cfg_.slice_delta;
          for (int i = 0; i < cfg_.n_positions; ++i) {
            sim::TaskDomain domain = baseline_domain();
            double pos = x_lo + (x_hi - x_lo) * i /
                                    std::max(cfg_.n_positions - 1, 1);
            domain.bounds.lo[0] = domain.bounds.hi[0] = pos;
            domain.bounds.fixed[0] = true;
            RaySet part =
                kind == "uniform"
                    ? sim::baseline_uniform(domain, b)
                    : sim::baseline_random(
                          domain, b,
                          base.substream("baseline")
                              .substream(static_cast<std::uint64_t>(b) * 1000 + i)
                              .next_u64());
            for (Ray r : part.rays) {
              r.sensor = i;
              rays.rays.push_back(r);
            }
          }
        } else {
          rays = kind == "uniform"
                     ? sim::baseline_uniform(baseline_domain(), b)
                     : sim::baseline_random(
                           baseline_domain(), b,
                           base.substream("baseline")
                               .substream(static_cast<std::uint64_t>(b))
                               .next_u64());
        }
        emit({kind, b, 0}, rays);
      }
    } else {  // occupancy
      Dataset ds = load_dataset(true, false);
      const std::vector<SceneSdf>& occ_scenes =
          cfg_.task == TaskKind::Tracking ? ds.train_frames : ds.train;
      Vec3 lo, hi;
      scene_bbox(lo, hi);
      // The occupancy baseline explores the full design bounds (minus tau),
      // not the narrowed uniform-grid domain.
      sim::TaskDomain domain;
      domain.bounds = cfg_.bounds;
      domain.gate_max = cfg_.gate_max;
      int b = cfg_.budgets.front();
      for (std::size_t vi = 0; vi < cfg_.occupancy_voxels.size(); ++vi) {
        double v = cfg_.occupancy_voxels[vi];
        sim::OccupancyGrid grid = sim::build_occupancy_grid(
            occ_scenes, lo, hi, v, cfg_.density.sigma);
        RaySet rays = sim::baseline_occupancy(
            grid, domain, b,
            base.substream("occupancy").substream(vi).next_u64());
        emit({"occupancy-" + fmt_num(v), b, 0}, rays);
      }
    }
  }
}

void Pipeline::simulate() {
  check_or_write_hash(false);
  Dataset ds = load_dataset(false, true);
  fs::create_directories(path("detections"));
  int n_scenes = cfg_.task == TaskKind::Tracking
                     ? static_cast<int>(ds.test_seqs.size())
                     : static_cast<int>(ds.test.size());
  for (const RaySetRef& ref : ray_sets()) {
    std::string producing =
        ref.method.rfind("ours", 0) == 0 ? "sample-rays" : "baseline";
    require_artifact(rays_path(ref), producing);
    RaySet rays = sensors::read_rays_csv(path(rays_path(ref)));
    for (int i = 0; i < n_scenes; ++i) {
      DetectionSet dets = cfg_.task == TaskKind::Tracking
                              ? sim::simulate_system(rays, ds.test_seqs[i])
                              : sim::simulate_system(rays, ds.test[i]);
      sim::write_detections_csv(path(det_path(ref, i)), dets);
      stamp(det_path(ref, i));
    }
  }
}

void Pipeline::evaluate() {
  check_or_write_hash(false);
  Dataset ds = load_dataset(false, true);
  int n_scenes = cfg_.task == TaskKind::Tracking
                     ? static_cast<int>(ds.test_seqs.size())
                     : static_cast<int>(ds.test.size());
  numerics::Rng base(mix_seed(cfg_.eval_seed, cfg_.global_seed));

  // Ground truth per scene (face: surface samples for Chamfer).
  std::vector<std::vector<Vec3>> truth(n_scenes);
  if (cfg_.task == TaskKind::Face) {
    Vec3 lo{-0.35, -0.35, -0.3}, hi{0.35, 0.35, 0.3};
    for (int i = 0; i < n_scenes; ++i)
      truth[i] = sim::sample_surface(
          ds.test[i], cfg_.truth_samples, lo, hi,
          base.substream("surface-sampling")
              .substream(static_cast<std::uint64_t>(i))
              .next_u64());
  }

  // Visibility reference scenes: tracking subsamples frames to keep the
  // transmittance quadrature cheap.
  std::vector<SceneSdf> vis_scenes;
  if (cfg_.task == TaskKind::Tracking) {
    int n_seqs = std::min<int>(8, static_cast<int>(ds.test_seqs.size()));
    for (int s = 0; s < n_seqs; ++s)
      for (std::size_t fr = 0; fr < ds.test_seqs[s].frames.size(); fr += 4)
        vis_scenes.push_back(ds.test_seqs[s].frames[fr]);
  } else {
    vis_scenes = ds.test;
  }

  sim::BandwidthModel bw;
  bw.r_bin = cfg_.r_bin();

  std::string main_metric = cfg_.task == TaskKind::Face      ? "chamfer_mm"
                            : cfg_.task == TaskKind::Tracking ? "frechet"
                                                              : "miss_rate_pct";

  std::FILE* values = std::fopen(path("values.csv").c_str(), "wb");
  if (!values) throw Error(ErrorKind::Config, "cannot write values.csv");
  std::fprintf(values, "task,method,budget,G,metric,scene,value\n");
  auto emit_values = [&](const RaySetRef& ref, const std::string& metric,
                         const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i)
      std::fprintf(values, "%s,%s,%d,%d,%s,%zu,%.10g\n",
                   cfg_.task_name.c_str(), ref.method.c_str(), ref.budget,
                   ref.G, metric.c_str(), i, vals[i]);
  };

  std::vector<MetricReport> reports;
  auto push_report = [&](const RaySetRef& ref, const std::string& metric,
                         std::vector<double> vals) {
    MetricReport r = vals.size() >= 2
                         ? sim::metric_report(cfg_.task_name, metric, vals)
                         : MetricReport{cfg_.task_name, "", 0, 0, metric, vals,
                                        vals.empty() ? 0.0 : vals[0], 0.0};
    r.method = ref.method;
    r.budget = ref.budget;
    r.G = ref.G;
    reports.push_back(std::move(r));
  };

  std::vector<RaySetRef> sets = ray_sets();
  for (std::size_t si = 0; si < sets.size(); ++si) {
    const RaySetRef& ref = sets[si];
    require_artifact(rays_path(ref),
                     ref.method.rfind("ours", 0) == 0 ? "sample-rays"
                                                      : "baseline");
    RaySet rays = sensors::read_rays_csv(path(rays_path(ref)));

    std::vector<double> main_vals, hit_fracs;
    for (int i = 0; i < n_scenes; ++i) {
      require_artifact(det_path(ref, i), "simulate");
      DetectionSet dets = read_detections_csv(
          path(det_path(ref, i)),
          cfg_.task == TaskKind::Tracking ? cfg_.frames : 0);

      long casts = static_cast<long>(dets.detections.size());
      long surface_hits = 0;
      for (const Detection& d : dets.detections)
        if (d.in_gate &&
            (cfg_.task != TaskKind::Tracking || d.point.z > 0.02))
          ++surface_hits;
      hit_fracs.push_back(casts > 0 ? static_cast<double>(surface_hits) / casts
                                    : 0.0);

      switch (cfg_.task) {
        case TaskKind::Face: {
          std::vector<Vec3> hits;
          for (const Detection& d : dets.detections)
            if (d.in_gate) hits.push_back(d.point);
          double value = cfg_.worst_chamfer_mm;
          try {
            std::vector<Vec3> recon = sim::delaunay_reconstruct(
                hits, Vec3{1, 0, 0}, 0.05, 1e4,
                base.substream("densify")
                    .substream(si * 131071 + static_cast<std::uint64_t>(i))
                    .next_u64());
            value = sim::chamfer_mm(recon, truth[i]);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateReconstruction &&
                e.kind() != ErrorKind::Degenerate)
              throw;
          }
          main_vals.push_back(std::min(value, cfg_.worst_chamfer_mm));
          break;
        }
        case TaskKind::Tracking: {
          double value = cfg_.worst_frechet;
          try {
            std::vector<Vec3> recon = sim::reconstruct_trajectory(dets, 10);
            value = sim::frechet(recon, ds.test_seqs[i].trajectory);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::TrackingFailure) throw;
          }
          main_vals.push_back(std::min(value, cfg_.worst_frechet));
          break;
        }
        case TaskKind::Warehouse:
          main_vals.push_back(
              sim::miss_rate_pct(dets, ds.test_layouts[i], 0.01));
          break;
      }
    }

    emit_values(ref, main_metric, main_vals);
    emit_values(ref, "hit_fraction", hit_fracs);
    push_report(ref, main_metric, main_vals);
    push_report(ref, "hit_fraction", hit_fracs);
    push_report(ref, "bandwidth_mbps", {sim::bandwidth_mbps(rays, bw)});
    push_report(ref, "visibility",
                {sensors::mean_visibility(rays, vis_scenes, cfg_.density.beta,
                                          cfg_.density.n_strat)});
  }
  std::fclose(values);
  stamp("values.csv");

  sim::write_metrics_csv(path("metrics.csv"), reports, false);
  stamp("metrics.csv");
}

void Pipeline::report() {
  check_or_write_hash(false);
  require_artifact("metrics.csv", "evaluate");
  if (first_line(path("metrics.csv")) != "# config_hash=" + cfg_.config_hash)
    throw Error(ErrorKind::Config,
                "metrics.csv carries a different config hash; refusing to mix");

  // metric -> method -> budget -> "mean (two_sem)"
  std::map<std::string, std::map<std::string, std::map<int, std::string>>>
      table;
  std::set<int> budget_set;
  std::ifstream in(path("metrics.csv"));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cols = split_csv(line);
    if (cols.size() != 7)
      throw Error(ErrorKind::Config, "malformed metrics.csv row: " + line);
    int budget = std::atoi(cols[2].c_str());
    budget_set.insert(budget);
    table[cols[4]][cols[1]][budget] = cols[5];
  }

  for (const auto& [metric, methods] : table) {
    std::vector<std::string> order;
    for (const auto& [method, cells] : methods) order.push_back(method);
    std::stable_sort(order.begin(), order.end(),
                     [](const std::string& a, const std::string& b) {
                       if (method_rank(a) != method_rank(b))
                         return method_rank(a) < method_rank(b);
                       // occupancy-<voxel>: coarse to fine; ours-<G>: ascending.
                       if (method_rank(a) == 2) {
                         double va = std::atof(a.c_str() + 10);
                         double vb = std::atof(b.c_str() + 10);
                         if (va != vb) return va > vb;
                       }
                       if (a.size() != b.size()) return a.size() < b.size();
                       return a < b;
                     });

    std::string rel = "report_" + metric + ".csv";
    std::FILE* f = std::fopen(path(rel).c_str(), "wb");
    if (!f) throw Error(ErrorKind::Config, "cannot write " + rel);
    std::fprintf(f, "method");
    for (int b : budget_set) std::fprintf(f, ",B%d", b);
    std::fprintf(f, "\n");
    std::printf("\n== %s (%s) ==\n", metric.c_str(), cfg_.task_name.c_str());
    std::printf("%-16s", "method");
    for (int b : budget_set) std::printf(" %12s", ("B" + std::to_string(b)).c_str());
    std::printf("\n");
    for (const std::string& method : order) {
      std::fprintf(f, "%s", method.c_str());
      std::printf("%-16s", method.c_str());
      for (int b : budget_set) {
        auto it = methods.at(method).find(b);
        std::string cell = it == methods.at(method).end() ? "-" : it->second;
        std::fprintf(f, ",%s", cell.c_str());
        std::printf(" %12s", cell.c_str());
      }
      std::fprintf(f, "\n");
      std::printf("\n");
    }
    std::fclose(f);
    stamp(rel);
  }
}

void Pipeline::run(const std::string& step) {
  if (step == "gen-scenes") gen_scenes();
  else if (step == "bake") bake();
  else if (step == "train-density") train_density();
  else if (step == "fit-sensors") fit_sensors();
  else if (step == "sample-rays") sample_rays();
  else if (step == "baseline") baseline();
  else if (step == "simulate") simulate();
  else if (step == "evaluate") evaluate();
  else if (step == "report") report();
  else if (step == "all") {
    gen_scenes();
    bake();
    train_density();
    fit_sensors();
    sample_rays();
    baseline();
    simulate();
    evaluate();
    report();
  } else {
    throw Error(ErrorKind::Config, "unknown subcommand `" + step + "`");
  }
}

}  // namespace ldesign::cli
