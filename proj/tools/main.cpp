// Copyright 2026 The ueforensics Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ueforensics/cli.hpp"

#include <iostream>

#include <CLI11.hpp>

using namespace ueforensics;
using namespace ueforensics::cli;


namespace
{

  void
  emit(const Output& out, bool as_json)
  {
    if (as_json)
      std::cout << out.json << "\n";
    else
      std::cout << out.text;
  }

}


int
main(int argc, char** argv)
{
  CLI::App app{"UEFI runtime memory forensics toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, seed_text, map_file, out_dir;
  bool as_json = false;
  unsigned threads = 0;
  app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_text, "Seed (decimal or 0x hex)");
  auto* map_opt = app.add_option("--map", map_file, "Memory map JSON")->check(CLI::ExistingFile);
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--json", as_json, "Print JSON instead of text");
  auto* threads_opt = app.add_option("--threads", threads, "Diff worker threads")->check(CLI::Range(1u, 256u));

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Write pre-reset (Q1) and post-reset (Q2) images");
  std::string profile_file;
  bool no_footprint = false;
  simulate->add_option("--profile", profile_file, "Footprint profile JSON")->check(CLI::ExistingFile);
  simulate->add_flag("--no-footprint", no_footprint, "Skip the reboot footprint");

  // acquire
  auto* acquire = app.add_subcommand("acquire", "Stream an image to a receiver");
  std::string image_file, to;
  acquire->add_option("--image", image_file, "Raw dump to send (default: seeded image)")
      ->check(CLI::ExistingFile);
  acquire->add_option("--to", to, "Receiver host:port");

  // receive
  auto* receive = app.add_subcommand("receive", "Receive dumps from agents");
  std::string listen, name = "dump";
  std::size_t sessions = 1;
  receive->add_option("--listen", listen, "Listen host:port");
  receive->add_option("--name", name, "Dump name (prefix when serving several sessions)");
  receive->add_option("--sessions", sessions, "Number of acquisitions to accept")->check(CLI::PositiveNumber);

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Produce Q1, Q2, UF, Q3 with reports and pixmaps");
  std::string post_profile, acq_bytes, acq_start;
  pipeline->add_option("--profile", profile_file, "Footprint profile JSON")->check(CLI::ExistingFile);
  pipeline->add_flag("--no-footprint", no_footprint, "Skip the reboot footprint");
  pipeline->add_option("--post-profile", post_profile, "Profile applied after acquisition")
      ->check(CLI::ExistingFile);
  pipeline->add_option("--acq-footprint-bytes", acq_bytes, "Bytes rewritten during acquisition");
  pipeline->add_option("--acq-footprint-start", acq_start, "Start of that region");
  pipeline->add_option("--listen", listen, "Loopback listen address");

  // diff / render
  std::string dump_a, dump_b, ppm;
  auto* diff = app.add_subcommand("diff", "Compare two raw dumps");
  diff->add_option("a", dump_a)->required()->check(CLI::ExistingFile);
  diff->add_option("b", dump_b)->required()->check(CLI::ExistingFile);
  diff->add_option("--ppm", ppm, "Also write the difference pixmap");

  auto* render = app.add_subcommand("render", "Render the difference pixmap of two raw dumps");
  render->add_option("a", dump_a)->required()->check(CLI::ExistingFile);
  render->add_option("b", dump_b)->required()->check(CLI::ExistingFile);
  render->add_option("ppm", ppm, "Output P6 file")->required();

  // table
  auto* table = app.add_subcommand("table", "Pairwise table over raw dumps");
  std::vector<std::string> dumps;
  table->add_option("dumps", dumps)->required()->expected(2, -1)->check(CLI::ExistingFile);

  // trace
  auto* trace = app.add_subcommand("trace", "Run a scenario through the hooked services");
  std::string scenario, log_file;
  trace->add_option("--scenario", scenario, "Built-in name or scenario JSON");
  trace->add_option("--log", log_file, "Log path (default: <out>/<scenario>.log)");

  auto* trace_stats = app.add_subcommand("trace-stats", "Per-service call counts of trace logs");
  std::vector<std::string> logs;
  trace_stats->add_option("logs", logs)->required()->check(CLI::ExistingFile);

  auto* trace_diff = app.add_subcommand("trace-diff", "Call-count delta between two scenarios or logs");
  std::string trace_a, trace_b;
  trace_diff->add_option("a", trace_a)->required();
  trace_diff->add_option("b", trace_b)->required();

  auto* segments = app.add_subcommand("trace-segments", "Compare the first two boots of one log or scenario");
  std::string segment_source;
  segments->add_option("source", segment_source)->required();

  auto* scenario_cmd = app.add_subcommand("scenario", "Print a built-in scenario as JSON");
  std::string scenario_name;
  scenario_cmd->add_option("name", scenario_name)->required();

  CLI11_PARSE(app, argc, argv);

  try
    {
      PipelineConfig config;
      if (!config_file.empty())
        config = load_config(config_file);
      try
        {
          if (*seed_opt)
            config.seed = memory::parse_address(seed_text);
          if (!acq_bytes.empty())
            config.acquisition_footprint_bytes = memory::parse_address(acq_bytes);
          if (!acq_start.empty())
            config.acquisition_footprint_start = memory::parse_address(acq_start);
        }
      catch (const std::exception& e)
        {
          throw StageError("args", e.what());
        }
      if (*map_opt)
        config.map_file = map_file;
      if (*out_opt)
        config.out_dir = out_dir;
      if (*threads_opt)
        config.threads = threads;
      if (!profile_file.empty())
        config.profile_file = profile_file;
      if (no_footprint)
        config.footprint = false;
      if (!post_profile.empty())
        config.post_profile_file = post_profile;
      if (!listen.empty())
        config.listen = listen;
      if (!to.empty())
        config.to = to;
      if (!scenario.empty())
        config.scenario = scenario;

      if (*simulate)
        {
          emit(cmd_simulate(config).output, as_json);
        }
      else if (*acquire)
        {
          std::optional<fs::path> image;
          if (!image_file.empty())
            image = image_file;
          emit(cmd_acquire(config, image), as_json);
        }
      else if (*receive)
        {
          auto announce = [](const acquisition::Endpoint& ep) {
            std::cerr << "listening on " << ep.to_string() << std::endl;
          };
          emit(cmd_receive(config, name, sessions, announce), as_json);
        }
      else if (*pipeline)
        {
          emit(cmd_pipeline(config).output, as_json);
        }
      else if (*diff)
        {
          std::optional<fs::path> out;
          if (!ppm.empty())
            out = ppm;
          emit(cmd_diff(dump_a, dump_b, out, config.threads), as_json);
        }
      else if (*render)
        {
          emit(cmd_render(dump_a, dump_b, ppm, config.threads), as_json);
        }
      else if (*table)
        {
          std::vector<fs::path> paths(dumps.begin(), dumps.end());
          emit(cmd_table(paths, config.out_dir, config.threads), as_json);
        }
      else if (*trace)
        {
          fs::path log = log_file.empty()
                             ? config.out_dir / (fs::path(config.scenario).stem().string() + ".log")
                             : fs::path(log_file);
          emit(cmd_trace(config.scenario, config.seed, log), as_json);
        }
      else if (*trace_stats)
        {
          std::vector<fs::path> paths(logs.begin(), logs.end());
          emit(cmd_trace_stats(paths), as_json);
        }
      else if (*trace_diff)
        {
          emit(cmd_trace_diff(trace_a, trace_b, config.seed), as_json);
        }
      else if (*segments)
        {
          emit(cmd_trace_segments(segment_source, config.seed), as_json);
        }
      else if (*scenario_cmd)
        {
          emit(cmd_scenario(scenario_name), as_json);
        }
    }
  catch (const std::exception& e)
    {
      std::cerr << "ueforensics: " << e.what() << "\n";
      return 1;
    }
  return 0;
}
