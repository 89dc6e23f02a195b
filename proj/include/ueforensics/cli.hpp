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

#pragma once

// Commands behind the ueforensics tool. Each returns both a human-readable
// text and a JSON document.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ueforensics/acquisition.hpp"
#include "ueforensics/diff.hpp"
#include "ueforensics/memory_model.hpp"
#include "ueforensics/rts.hpp"
#include "ueforensics/trace_analysis.hpp"

namespace ueforensics::cli
{

  namespace fs = std::filesystem;

  /// Failure of one pipeline stage; what() starts with the stage name.
  class StageError : public std::runtime_error
  {
  public:
    StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage))
    { }

    const std::string& stage() const noexcept
    { return stage_; }

  private:
    std::string stage_;
  };

  struct PipelineConfig
  {
    std::optional<fs::path> map_file;   // default: 2 GiB QEMU layout
    std::uint64_t seed = 0;
    std::optional<fs::path> profile_file;   // default: FootprintProfile::ovmf_reboot
    bool footprint = true;
    /// Region rewritten while the agent runs, so UF differs from Q2.
    std::uint64_t acquisition_footprint_bytes = 0;
    std::uint64_t acquisition_footprint_start = 0x2000000;
    /// Applied after acquisition to produce Q3.
    std::optional<fs::path> post_profile_file;
    fs::path out_dir = ".";
    std::string scenario = "boot";
    std::string listen = "127.0.0.1:0";
    std::string to;
    unsigned threads = 1;
  };

  /// JSON keys: map, seed, profile, footprint, acquisition_footprint_bytes,
  /// acquisition_footprint_start, post_profile, out, scenario, listen, to,
  /// threads. Relative paths resolve against the config file's directory.
  PipelineConfig load_config(const fs::path& path);

  memory::MemoryMap resolve_map(const PipelineConfig& config);
  memory::FootprintProfile resolve_profile(const PipelineConfig& config);

  struct Output
  {
    std::string text;
    std::string json;
  };

  struct SimulateResult
  {
    fs::path pre_reset;
    fs::path post_reset;
    Output output;
  };

  /// Writes Q1.raw and Q2.raw (after the footprint) plus map.json.
  SimulateResult cmd_simulate(const PipelineConfig& config);

  struct PipelineResult
  {
    fs::path q1, q2, uf, q3;
    acquisition::DumpArtifact uf_artifact;
    std::vector<diff::DiffReport> reports;
    std::vector<fs::path> pixmaps;
    fs::path table_path;
    fs::path report_path;
    Output output;
  };

  /// Q1 ground truth, Q2 after the footprint, UF acquired over loopback from
  /// Q2 plus the acquisition footprint, Q3 after acquisition; then the six
  /// pairwise reports, pixmaps and table.
  PipelineResult cmd_pipeline(const PipelineConfig& config);

  /// Streams an image (raw file, or a fresh seeded image) to a receiver.
  Output cmd_acquire(const PipelineConfig& config, const std::optional<fs::path>& image);

  /// Serves `sessions` acquisitions; the bound endpoint is reported through
  /// on_listening before the first accept.
  Output cmd_receive(const PipelineConfig& config, const std::string& name, std::size_t sessions,
                     const std::function<void(const acquisition::Endpoint&)>& on_listening = {});

  Output cmd_diff(const fs::path& a, const fs::path& b, const std::optional<fs::path>& ppm,
                  unsigned threads);

  Output cmd_render(const fs::path& a, const fs::path& b, const fs::path& ppm, unsigned threads);

  /// Pairwise table over two or more raw dumps; writes table.txt and
  /// report.json to out_dir.
  Output cmd_table(const std::vector<fs::path>& dumps, const fs::path& out_dir, unsigned threads);

  /// `scenario` is a built-in name or a scenario JSON file.
  Output cmd_trace(const std::string& scenario, std::uint64_t seed, const fs::path& log_path);

  Output cmd_trace_stats(const std::vector<fs::path>& logs);

  /// Each side is a log file or a built-in scenario name.
  Output cmd_trace_diff(const std::string& a, const std::string& b, std::uint64_t seed);

  /// Compares the first two boots of one multi-boot log.
  Output cmd_trace_segments(const std::string& source, std::uint64_t seed);

  /// Built-in scenario spec JSON.
  Output cmd_scenario(const std::string& name);

}
