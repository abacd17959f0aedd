// Command-line front end: build, render, eval, export-gan.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "surfelsim/pipeline.hpp"

namespace fs = std::filesystem;
using namespace surfelsim;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat:
    case ErrorKind::kValidation:
    case ErrorKind::kConfig:
    case ErrorKind::kDimension:
      return 1;
    default:
      return 2;
  }
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : PipelineConfig::from_file(config_path);
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON pipeline configuration");
  cmd->add_option("--seed", o.seed, "Seed for all randomness");
  cmd->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surfel-based camera simulation"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string scene_dir, out_dir, map_dir, render_dir, real_dir, poses_file;
  bool perturb = false;

  auto* build = app.add_subcommand("build", "Reconstruct a scene directory into a surfel map and object models");
  build->add_option("scene_dir", scene_dir)->required();
  build->add_option("--out", out_dir)->required();
  add_common(build, common);

  auto* render = app.add_subcommand("render", "Render camera images from a built map");
  render->add_option("map_dir", map_dir)->required();
  render->add_option("--out", out_dir)->required();
  auto* poses_opt = render->add_option("--poses", poses_file, "JSON list of camera poses to render");
  render->add_flag("--perturb", perturb, "Randomly perturb each trajectory pose")->excludes(poses_opt);
  add_common(render, common);

  auto* eval = app.add_subcommand("eval", "Summarize a render export by deviation and coverage");
  eval->add_option("render_dir", render_dir)->required();
  eval->add_option("--real", real_dir, "Directory of real images named NNNNNN.png");
  eval->add_option("--out", out_dir, "Write the report here instead of stdout");
  add_common(eval, common);

  auto* gan = app.add_subcommand("export-gan", "Lay out paired and unpaired training data");
  gan->add_option("render_dir", render_dir)->required();
  gan->add_option("--scene", scene_dir)->required();
  gan->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      const auto report = cmd_build(scene_dir, out_dir, common.resolve());
      std::cout << "surfels: " << report.surfel_count << "\nobjects: " << report.object_count << "\n";
    } else if (*render) {
      RenderOptions opts;
      if (!poses_file.empty()) opts.poses_file = fs::path(poses_file);
      opts.perturb = perturb;
      const auto failures = cmd_render(map_dir, out_dir, opts, common.resolve());
      if (failures > 0) std::cerr << failures << " pose(s) without a collision-free perturbation\n";
    } else if (*eval) {
      std::optional<fs::path> real;
      if (!real_dir.empty()) real = fs::path(real_dir);
      const auto report = cmd_eval(render_dir, real, common.resolve());
      if (out_dir.empty()) {
        std::cout << report.dump(2) << "\n";
      } else {
        fs::create_directories(fs::path(out_dir).parent_path().empty() ? fs::path(".") : fs::path(out_dir).parent_path());
        detail::write_json(out_dir, report);
      }
    } else if (*gan) {
      const auto s = cmd_export_gan(render_dir, scene_dir, out_dir);
      std::cout << "paired: " << s.paired << "\nunpaired renders: " << s.unpaired_renders
                << "\nunpaired reals: " << s.unpaired_reals << "\n";
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return EXIT_SUCCESS;
}
