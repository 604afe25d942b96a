// Copyright 2026 The dovkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: one subcommand per pipeline stage plus `pipeline`,
// `report` and `synth`.

#include "dovkit/data/io.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/pipeline/pipeline.hpp"
#include "dovkit/synth/world.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace dovkit;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string stage;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonArgs& args, bool with_stage) {
  app->add_option("--config", args.config, "Experiment config (TOML subset)")->required();
  app->add_option("--out", args.out, "Output directory (overrides output_dir)");
  app->add_option("--seed", args.seed, "Override the top-level seed");
  if (with_stage) app->add_option("--stage", args.stage, "Run a single stage");
  app->add_flag("--force", args.force, "Ignore cached stage artifacts");
  app->add_flag("-q,--quiet", args.quiet, "Only print the summary");
}

int run(const CommonArgs& args, std::optional<std::string> stage) {
  pipeline::ExperimentConfig cfg = pipeline::load_experiment_config(args.config, args.seed);
  if (!args.out.empty()) cfg.output_dir = fs::absolute(args.out);
  pipeline::PipelineOptions opts;
  if (!args.stage.empty()) stage = args.stage;
  opts.only_stage = stage;
  opts.force = args.force;
  if (!args.quiet) opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
  const pipeline::RunManifest m = pipeline::run_pipeline(cfg, opts);
  if (m.teacher_report && m.student_report && m.teacher_accuracy && m.student_accuracy) {
    std::cout << pipeline::format_summary(m);
  } else {
    for (const std::string& w : m.warnings) std::cout << "warning: " << w << '\n';
  }
  std::cout << "manifest: " << (cfg.output_dir / "manifest.json").string() << '\n';
  return 0;
}

int report(const std::string& dir, const std::string& json_path) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) throw ValidationError("no manifest at " + manifest_path.string());
  const pipeline::RunManifest m = pipeline::load_manifest(manifest_path);
  nlohmann::json j;
  try {
    j = pipeline::report_json(m);
  } catch (const PreconditionError& e) {
    throw ValidationError(e.what());
  }
  std::cout << pipeline::format_summary(m);
  const fs::path out = json_path.empty() ? fs::path(dir) / "report.json" : fs::path(json_path);
  atomic_write(out, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
  std::cout << "report: " << out.string() << '\n';
  return 0;
}

int synth_world(const std::string& out, std::uint64_t seed, int gallery_size) {
  synth::WorldConfig wc;
  wc.seed = seed;
  if (gallery_size > 0) wc.gallery_size = gallery_size;
  const synth::World w = synth::make_world(wc);
  const fs::path d = out;
  fs::create_directories(d);
  save_packed_dataset(w.train, d / "train.bin");
  save_packed_dataset(w.test, d / "test.bin");
  save_packed_dataset(w.gallery, d / "gallery.bin");
  atomic_write(d / "descriptions.json", [&](std::ostream& s) { s << w.descriptions.dump(2) << '\n'; });
  std::cout << "wrote " << w.train.size() << " train, " << w.test.size() << " test and " << w.gallery.size()
            << " gallery images to " << d.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset-ownership verification and evasion toolkit"};
  app.require_subcommand(1);

  const char* stage_help[][2] = {{"mark", "Embed the configured watermark or fingerprint"},
                                 {"train-teacher", "Train the teacher on the marked dataset"},
                                 {"bank", "Embed the gallery into the feature bank"},
                                 {"curate", "Curate the transfer set from the gallery"},
                                 {"gen-pool", "Generate the perturbation pool"},
                                 {"gen-chain", "Search the corruption chain"},
                                 {"distill", "Distill the student with selective knowledge transfer"},
                                 {"verify", "Verify teacher and student"}};
  std::vector<std::pair<CLI::App*, std::string>> stage_cmds;
  std::vector<std::unique_ptr<CommonArgs>> stage_args;
  for (const auto& [name, help] : stage_help) {
    stage_args.push_back(std::make_unique<CommonArgs>());
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, *stage_args.back(), false);
    stage_cmds.emplace_back(sub, name);
  }

  CommonArgs pipe_args;
  CLI::App* pipe = app.add_subcommand("pipeline", "Run every stage, reusing cached artifacts");
  add_common(pipe, pipe_args, true);

  std::string report_dir;
  std::string report_json_path;
  CLI::App* rep = app.add_subcommand("report", "Summarize a finished run");
  rep->add_option("--out", report_dir, "Run output directory holding manifest.json")->required();
  rep->add_option("--json", report_json_path, "Where to write the JSON report");

  std::string synth_out;
  std::uint64_t synth_seed = 0;
  int synth_gallery = 0;
  CLI::App* syn = app.add_subcommand("synth", "Write the synthetic desk world as packed datasets");
  syn->add_option("--out", synth_out, "Directory for train/test/gallery and descriptions")->required();
  syn->add_option("--seed", synth_seed, "World seed");
  syn->add_option("--gallery-size", synth_gallery, "Gallery images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    for (std::size_t i = 0; i < stage_cmds.size(); ++i) {
      if (stage_cmds[i].first->parsed()) return run(*stage_args[i], stage_cmds[i].second);
    }
    if (pipe->parsed()) return run(pipe_args, std::nullopt);
    if (rep->parsed()) return report(report_dir, report_json_path);
    if (syn->parsed()) return synth_world(synth_out, synth_seed, synth_gallery);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
