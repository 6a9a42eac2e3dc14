// Command-line front end for the cascaded music-to-dance pipeline.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffdance/core/error.hpp"
#include "diffdance/metrics/metrics.hpp"
#include "diffdance/motion/motion_io.hpp"
#include "diffdance/pipeline/commands.hpp"
#include "diffdance/pipeline/dataset.hpp"

namespace dd = diffdance;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  dd::write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw dd::DomainError("--levels: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded diffusion music-to-dance toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--out", out, "Override the run directory");
  app.add_option("--set", overrides, "Extra key=value overrides, applied last");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic clip sets");
  auto* align = app.add_subcommand("train-align", "Train the music adapter with InfoNCE");
  auto* m2d = app.add_subcommand("train-m2d", "Train the 15 fps base diffusion model");
  auto* ssr = app.add_subcommand("train-ssr", "Train the 60 fps super-resolution model");
  bool resume = false;
  for (auto* sub : {m2d, ssr}) sub->add_flag("--resume", resume, "Continue from the stage checkpoint");

  auto* sample = app.add_subcommand("sample", "Sample 60 fps dance for held-out music");
  std::string sidecar, output;
  int count = 1;
  sample->add_option("--music", sidecar, "Sidecar JSON of the music clip (default: held-out clips)");
  sample->add_option("--count", count, "Number of held-out clips to sample into a clip set");
  sample->add_option("--output", output, "Output .motseq file (with --music) or directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a generated clip set against a reference set");
  std::string gen_dir, ref_dir;
  eval->add_option("--generated", gen_dir, "Generated clip-set directory")->required();
  eval->add_option("--reference", ref_dir, "Reference clip-set directory")->required();
  eval->add_option("--output", output, "Report JSON path (default: stdout only)");

  auto* plot = app.add_subcommand("plot-data", "Export kinetic velocity and beat flags as CSV");
  std::string motion_path;
  plot->add_option("--motion", motion_path, "MOTSEQ01 file")->required();
  plot->add_option("--beats", sidecar, "Sidecar JSON with music beats")->required();
  plot->add_option("--output", output, "CSV path (default: stdout)");

  auto* sweep = app.add_subcommand("sweep-s", "Evaluate SSR inference across augmentation levels");
  std::string levels = "0,10,20,30,40";
  sweep->add_option("--levels", levels, "Comma-separated augmentation steps");

  CLI11_PARSE(app, argc, argv);

  try {
    dd::RunConfig config;
    if (!config_path.empty()) config = dd::RunConfig::load(config_path);
    std::map<std::string, std::string> kv;
    if (seed) kv["seed"] = std::to_string(*seed);
    if (!out.empty()) kv["out"] = out;
    for (const std::string& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw dd::DomainError("--set expects key=value, got " + o);
      kv[o.substr(0, eq)] = o.substr(eq + 1);
    }
    config = dd::RunConfig::from_map(kv, config);
    const dd::SkeletonSpec skel = dd::SkeletonSpec::by_name(config.skeleton);
    const dd::RunPaths paths{config.out_path()};

    if (*gen) {
      const auto s = dd::cmd_gen_data(config);
      std::cout << "wrote " << s.clips << " clips under " << (paths.root / "data").string()
                << "; worst beat error " << s.worst_beat_error << " frames\n";
    } else if (*align) {
      const auto s = dd::cmd_train_align(config, &std::cout);
      std::cout << "tau " << s.tau << ", checkpoint " << paths.align_checkpoint().string() << "\n";
    } else if (*m2d || *ssr) {
      const dd::Stage stage = *m2d ? dd::Stage::M2D : dd::Stage::SSR;
      dd::cmd_train_stage(config, stage, resume, &std::cout);
      std::cout << "checkpoint " << paths.checkpoint(stage).string() << "\n";
    } else if (*sample) {
      if (!sidecar.empty()) {
        dd::SyntheticClip music = dd::parse_sidecar([&] {
          const auto b = dd::read_file_bytes(sidecar);
          return std::string(b.begin(), b.end());
        }());
        // The generator parameters rebuild the music window and seed prefix.
        music = dd::generate_synthetic_clip(music.params, skel);
        const dd::MotionSequence m = dd::cmd_sample(config, music, config.seed);
        const fs::path dest = output.empty() ? paths.samples_dir() / "sample.motseq" : fs::path(output);
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        dd::save_motion(m, dest);
        dd::SyntheticClip side = dd::evaluation_window(music, config.low_frames);
        side.motion = m;
        write_text(fs::path(dest).replace_extension(".json"), dd::sidecar_json(side));
        std::cout << "wrote " << dest.string() << " (" << m.length() << " frames at " << m.fps << " fps)\n";
      } else {
        const fs::path dest = output.empty() ? paths.samples_dir() : fs::path(output);
        dd::cmd_sample_set(config, dest, count, config.seed);
        std::cout << "wrote " << count << " samples to " << dest.string() << "\n";
      }
    } else if (*eval) {
      const std::string report = dd::report_to_json(dd::cmd_eval(gen_dir, ref_dir, skel));
      if (!output.empty()) write_text(output, report + "\n");
      std::cout << report << "\n";
    } else if (*plot) {
      const std::string csv = dd::cmd_plot_data(motion_path, sidecar, skel);
      if (output.empty()) {
        std::cout << csv;
      } else {
        write_text(output, csv);
      }
    } else if (*sweep) {
      const auto rows = dd::cmd_sweep_s(config, parse_levels(levels), config.seed);
      std::cout << dd::sweep_csv(rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
