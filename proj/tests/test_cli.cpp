#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ldesign/cli/config.hpp"
#include "ldesign/cli/pipeline.hpp"
#include "ldesign/cli/toml.hpp"

using namespace ldesign;
using cli::ExperimentConfig;
using cli::TomlDoc;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = std::string(LDESIGN_SOURCE_DIR) + "/configs/";

std::string kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind_name();
  }
  return "";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
struct TempDir {
  fs::path dir;
  explicit TempDir(const std::string& tag) {
    dir = fs::temp_directory_path() / ("ldesign_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
};

/// Shipped face config shrunk to run in well under a second.
ExperimentConfig micro_face(const std::string& out, std::uint64_t seed) {
  TomlDoc doc = TomlDoc::parse_file(kConfigs + "face.toml");
  doc.set_override("dataset.train_scenes", "2");
  doc.set_override("dataset.test_scenes", "2");
  doc.set_override("train.steps", "10");
  doc.set_override("train.batch", "16");
  doc.set_override("synthesis.g_list", "[2]");
  doc.set_override("synthesis.samples", "1000");
  doc.set_override("evaluation.budgets", "[32]");
  doc.set_override("evaluation.truth_samples", "500");
  doc.set_override("output.bake_res", "8");
  return cli::parse_experiment(doc, seed, false, out);
}

}  // namespace

TEST_CASE("toml: scalars, arrays, tables and comments parse") {
  TomlDoc doc = TomlDoc::parse_string(
      "top = 1\n"
      "[alpha]            # section comment\n"
      "name = \"has # hash and, comma\"\n"
      "count = 42\n"
      "rate = 2.5e-3      # trailing comment\n"
      "on = true\n"
      "grid = [1, 2, 3]\n"
      "mixed = [0.5, 2]\n"
      "words = [\"a\", \"b\"]\n"
      "[alpha.beta]\n"
      "deep = -7\n");
  CHECK(doc.get_int("top") == 1);
  CHECK(doc.get_string("alpha.name") == "has # hash and, comma");
  CHECK(doc.get_int("alpha.count") == 42);
  CHECK(doc.get_double("alpha.rate") == doctest::Approx(2.5e-3));
  CHECK(doc.get_bool("alpha.on"));
  CHECK(doc.get_int_array("alpha.grid") == std::vector<long long>{1, 2, 3});
  CHECK(doc.get_double_array("alpha.mixed") == std::vector<double>{0.5, 2.0});
  CHECK(doc.get_string_array("alpha.words") ==
        std::vector<std::string>{"a", "b"});
  CHECK(doc.get_int("alpha.beta.deep") == -7);
  CHECK(doc.get_int("absent", 9) == 9);
  CHECK_NOTHROW(doc.check_all_consumed());
}

TEST_CASE("toml: parse errors carry source and line number") {
  auto parse = [](const std::string& text) {
    return TomlDoc::parse_string(text, "cfg.toml");
  };
  for (const auto& [text, needle] :
       std::vector<std::pair<std::string, std::string>>{
           {"a = 1\nb == 2\n", "cfg.toml:2"},
           {"a = \"unterminated\n", "cfg.toml:1"},
           {"a = [1, 2\n", "cfg.toml:1"},
           {"a = 1\na = 2\n", "duplicate key"},
           {"x = zzz\n", "cannot parse value"},
           {"[bad name]\n", "bad table name"},
       }) {
    try {
      parse(text);
      FAIL_CHECK("expected a config error for: " << text);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  }
}

TEST_CASE("toml: typed getters reject wrong kinds") {
  TomlDoc doc = TomlDoc::parse_string("a = 1\nb = \"s\"\nc = 1.5\n");
  CHECK(kind_of([&] { doc.get_string("a"); }) == "config");
  CHECK(kind_of([&] { doc.get_int("c"); }) == "config");
  CHECK(kind_of([&] { doc.get_bool("b"); }) == "config");
  CHECK(doc.get_double("a") == 1.0);  // integers widen to double
  CHECK(kind_of([&] { doc.get_int("missing"); }) == "config");
}

TEST_CASE("toml: unconsumed keys are rejected with their line") {
  TomlDoc doc = TomlDoc::parse_string("a = 1\ntypo = 2\n", "cfg.toml");
  (void)doc.get_int("a");
  try {
    doc.check_all_consumed();
    FAIL_CHECK("expected unknown-key rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unknown key `typo`") !=
          std::string::npos);
    CHECK(std::string(e.what()).find("cfg.toml:2") != std::string::npos);
  }
}

TEST_CASE("toml: overrides replace values and change the canonical form") {
  TomlDoc doc = TomlDoc::parse_string("[t]\nsteps = 100\n");
  std::string before = doc.canonical();
  doc.set_override("t.steps", "250");
  doc.set_override("t.list", "[1, 2]");
  CHECK(doc.get_int("t.steps") == 250);
  CHECK(doc.get_int_array("t.list") == std::vector<long long>{1, 2});
  CHECK(doc.canonical() != before);
  CHECK(kind_of([&] { doc.set_override("bad key", "1"); }) == "config");
}

TEST_CASE("toml: canonical form is sorted and hash is stable") {
  TomlDoc a = TomlDoc::parse_string("b = 2\na = 1\n");
  TomlDoc b = TomlDoc::parse_string("a = 1\nb = 2   # comment\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(cli::fnv1a_hex(a.canonical()) == cli::fnv1a_hex(b.canonical()));
  CHECK(cli::fnv1a_hex("") == "cbf29ce484222325");  // FNV-1a offset basis
}

TEST_CASE("shipped configs parse with the published sensor counts") {
  TomlDoc face = TomlDoc::parse_file(kConfigs + "face.toml");
  ExperimentConfig fc = cli::parse_experiment(face, 0, false);
  CHECK(fc.task == scenes::TaskKind::Face);
  CHECK(fc.g_list == std::vector<int>{2, 4, 10});
  CHECK(fc.budgets == std::vector<int>{196, 361, 576});
  CHECK(fc.r_bin() == doctest::Approx(1.0 / 66.0));
  CHECK(fc.bounds.fixed[0]);
  CHECK(fc.bounds.circular[3]);
  CHECK(fc.constraints.boxes.size() == 2);
  CHECK(fc.constraints.clamps.zero_extent_origin);
  CHECK(fc.constraints.clamps.sigma_max[3].has_value());
  // Baseline domain: unwrapped azimuth window around +x, not circular.
  CHECK(fc.baseline_bounds.lo[3] == doctest::Approx(5.497787143782138));
  CHECK_FALSE(fc.baseline_bounds.circular[3]);

  TomlDoc tracking = TomlDoc::parse_file(kConfigs + "tracking.toml");
  ExperimentConfig tc = cli::parse_experiment(tracking, 0, false);
  CHECK(tc.task == scenes::TaskKind::Tracking);
  CHECK(tc.g_list == std::vector<int>{2, 4, 8});
  CHECK(tc.budgets == std::vector<int>{300, 900, 1500});
  CHECK(tc.r_bin() == doctest::Approx(2.0 / 67.0));
  CHECK(tc.occupancy_voxels == std::vector<double>{0.2, 0.1, 0.05});
  CHECK(tc.bounds.lo[2] == 1.0);  // ceiling mount
  CHECK(tc.bounds.hi[4] == doctest::Approx(-1.0471975511965976));

  TomlDoc warehouse = TomlDoc::parse_file(kConfigs + "warehouse.toml");
  ExperimentConfig wc = cli::parse_experiment(warehouse, 0, false);
  CHECK(wc.task == scenes::TaskKind::Warehouse);
  CHECK(wc.budgets == std::vector<int>{1, 3, 5});
  CHECK(wc.r_bin() == doctest::Approx(5.0 / 800.0));
  CHECK(wc.bounds.fixed[3]);  // azimuth locked toward the shelving
  CHECK(wc.bounds.lo[3] == doctest::Approx(4.71238898038469));
}

TEST_CASE("ablation config differs from tracking only in w_vis target") {
  TomlDoc tracking = TomlDoc::parse_file(kConfigs + "tracking.toml");
  TomlDoc ablation = TomlDoc::parse_file(kConfigs + "ablation_vis.toml");
  std::set<std::string> t_lines, a_lines;
  for (std::istringstream in(tracking.canonical()); !in.eof();) {
    std::string line;
    if (std::getline(in, line)) t_lines.insert(line);
  }
  for (std::istringstream in(ablation.canonical()); !in.eof();) {
    std::string line;
    if (std::getline(in, line)) a_lines.insert(line);
  }
  std::vector<std::string> only_t, only_a;
  for (const std::string& l : t_lines)
    if (!a_lines.count(l)) only_t.push_back(l);
  for (const std::string& l : a_lines)
    if (!t_lines.count(l)) only_a.push_back(l);
  CHECK(only_t == std::vector<std::string>{"ramp.target = 1",
                                           "task.out = \"out/tracking\""});
  CHECK(only_a == std::vector<std::string>{"ramp.target = 0",
                                           "task.out = \"out/ablation_vis\""});
  ExperimentConfig ac = cli::parse_experiment(ablation, 0, false);
  CHECK(ac.train.ramp.target == 0.0);
}

TEST_CASE("--paper-scale restores the full-scale settings and the hash") {
  TomlDoc doc = TomlDoc::parse_file(kConfigs + "face.toml");
  ExperimentConfig desk = cli::parse_experiment(doc, 0, false);
  TomlDoc doc2 = TomlDoc::parse_file(kConfigs + "face.toml");
  ExperimentConfig paper = cli::parse_experiment(doc2, 0, true);
  CHECK(desk.train.steps == 2000);
  CHECK(desk.train.batch == 256);
  CHECK(paper.train_scenes == 50);
  CHECK(paper.test_scenes == 50);
  CHECK(paper.train.steps == 5000);
  CHECK(paper.train.batch == 1024);
  CHECK(desk.config_hash != paper.config_hash);

  TomlDoc doc3 = TomlDoc::parse_file(kConfigs + "face.toml");
  ExperimentConfig seeded = cli::parse_experiment(doc3, 7, false);
  CHECK(seeded.config_hash != desk.config_hash);
}

TEST_CASE("config validation rejects bad experiment settings") {
  auto patched = [](const std::string& key, const std::string& value) {
    TomlDoc doc = TomlDoc::parse_file(kConfigs + "face.toml");
    doc.set_override(key, value);
    return cli::parse_experiment(doc, 0, false);
  };
  CHECK(kind_of([&] { patched("task.kind", "\"faces\""); }) == "config");
  CHECK(kind_of([&] { patched("ramp.target", "1.5"); }) == "config");
  CHECK(kind_of([&] { patched("bounds.tau", "[1.0, 0.0]"); }) == "config");
  CHECK(kind_of([&] { patched("evaluation.baselines", "[\"grid\"]"); }) ==
        "config");
  CHECK(kind_of([&] { patched("train.seed", "-3"); }) == "config");
  CHECK(kind_of([&] { patched("bounds.phi", "[0.0]"); }) == "config");
}

TEST_CASE("pipeline order: steps demand their upstream artifacts by name") {
  TempDir tmp("order");
  cli::Pipeline p(micro_face(tmp.dir.string(), 0));
  try {
    p.evaluate();
    FAIL_CHECK("expected pipeline-order error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PipelineOrder);
    CHECK(std::string(e.what()).find("gen-scenes") != std::string::npos);
  }
  p.gen_scenes();
  try {
    p.fit_sensors();
    FAIL_CHECK("expected pipeline-order error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PipelineOrder);
    CHECK(std::string(e.what()).find("train-density") != std::string::npos);
  }
  p.train_density();
  // simulate before any rays exist: names the ray-producing step.
  CHECK(kind_of([&] { p.simulate(); }) == "pipeline-order");
}

TEST_CASE("pipeline refuses to mix artifacts across config hashes") {
  TempDir tmp("mix");
  cli::Pipeline first(micro_face(tmp.dir.string(), 0));
  first.gen_scenes();
  cli::Pipeline second(micro_face(tmp.dir.string(), 1));  // different seed
  try {
    second.gen_scenes();
    FAIL_CHECK("expected hash-mixing rejection");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("refusing to mix") != std::string::npos);
  }
}

TEST_CASE("micro pipeline: all steps run and rerunning is byte-identical") {
  TempDir a("det_a"), b("det_b");
  cli::Pipeline pa(micro_face(a.dir.string(), 7));
  cli::Pipeline pb(micro_face(b.dir.string(), 7));
  pa.run("all");
  pb.run("all");

  std::string metrics_a = read_file((a.dir / "metrics.csv").string());
  CHECK(metrics_a == read_file((b.dir / "metrics.csv").string()));
  CHECK(metrics_a.rfind("# config_hash=" + pa.config().config_hash, 0) == 0);
  CHECK(read_file((a.dir / "values.csv").string()) ==
        read_file((b.dir / "values.csv").string()));
  CHECK(read_file((a.dir / "rays_ours-2_B32.csv").string()) ==
        read_file((b.dir / "rays_ours-2_B32.csv").string()));

  // Report tables exist with the canonical row order.
  std::string report = read_file((a.dir / "report_chamfer_mm.csv").string());
  std::size_t r = report.find("random");
  std::size_t u = report.find("uniform");
  std::size_t o = report.find("ours-2");
  CHECK(r != std::string::npos);
  CHECK(r < u);
  CHECK(u < o);

  // A different seed changes the artifacts (and their hash stamp).
  TempDir c("det_c");
  cli::Pipeline pc(micro_face(c.dir.string(), 8));
  pc.run("all");
  CHECK(read_file((c.dir / "metrics.csv").string()) != metrics_a);
}

TEST_CASE("ray sets enumerate learned systems then baselines") {
  TempDir tmp("sets");
  cli::Pipeline p(micro_face(tmp.dir.string(), 0));
  std::vector<cli::RaySetRef> sets = p.ray_sets();
  REQUIRE(sets.size() == 3);  // ours-2, uniform, random at one budget
  CHECK(sets[0].method == "ours-2");
  CHECK(sets[0].G == 2);
  CHECK(sets[1].method == "uniform");
  CHECK(sets[2].method == "random");
  for (const cli::RaySetRef& s : sets) CHECK(s.budget == 32);
}
