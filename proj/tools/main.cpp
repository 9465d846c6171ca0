#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ldesign/cli/config.hpp"
#include "ldesign/cli/pipeline.hpp"
#include "ldesign/error.hpp"

namespace {

int exit_code(ldesign::ErrorKind kind) {
  using ldesign::ErrorKind;
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Domain:
    case ErrorKind::Shape:
      return 2;
    case ErrorKind::PipelineOrder:
      return 3;
    default:  // numerical / degeneracy failures
      return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ldesign: task-driven LiDAR design pipeline "
      "(gen-scenes | bake | train-density | fit-sensors | sample-rays | "
      "baseline | simulate | evaluate | report | all)"};

  std::string subcommand, config_path, out_dir;
  std::uint64_t seed = 0;
  bool paper_scale = false;
  std::vector<std::string> sets;

  app.add_option("subcommand", subcommand, "pipeline step to run")->required();
  app.add_option("--config", config_path, "experiment TOML config")->required();
  app.add_option("--seed", seed, "global seed mixed into every stage seed");
  app.add_option("--out", out_dir, "output directory (overrides task.out)");
  app.add_flag("--paper-scale", paper_scale,
               "full paper scale: 50/50 scenes, 5000 steps, batch 1024");
  app.add_option("--set", sets, "config override key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    ldesign::cli::TomlDoc doc = ldesign::cli::TomlDoc::parse_file(config_path);
    for (const std::string& s : sets) {
      std::size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw ldesign::Error(ldesign::ErrorKind::Config,
                             "--set expects key=value, got `" + s + "`");
      doc.set_override(s.substr(0, eq), s.substr(eq + 1));
    }
    ldesign::cli::ExperimentConfig cfg =
        ldesign::cli::parse_experiment(doc, seed, paper_scale, out_dir);
    ldesign::cli::Pipeline pipeline(std::move(cfg));
    pipeline.run(subcommand);
  } catch (const ldesign::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", e.kind_name(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
