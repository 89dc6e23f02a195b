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

// Offline parser for RTS tracer logs: record extraction, reassembly of
// chunked arguments into calls, and per-scenario call statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "ueforensics/rts.hpp"

namespace ueforensics::trace
{

  using rts::Argument;
  using rts::CallStats;
  using rts::TraceRecord;

  struct ParseIssue
  {
    std::size_t line = 0;   // 1-based
    std::string message;
  };

  struct ParseResult
  {
    std::vector<TraceRecord> records;
    /// Line of the "[RTSTracer]" prefix each record started on.
    std::vector<std::size_t> record_lines;
    std::vector<ParseIssue> issues;
  };

  /// Lines without the tracer prefix are skipped. A record may span several
  /// lines and may use single-quoted strings; 'argmuent' is read as
  /// 'argument'. Never throws on malformed input.
  ParseResult parse_log(std::string_view text);
  ParseResult parse_log(std::span<const std::string> lines);

  /// Throws std::runtime_error if the file cannot be read.
  ParseResult parse_log_file(const std::filesystem::path& path);

  /// Reads one JSON object (prefix already stripped) into a record.
  /// Returns an error message on failure.
  std::variant<TraceRecord, std::string> parse_record(std::string_view object_text);

  struct CallSummary
  {
    std::uint64_t id = 0;
    std::string service;
    std::vector<Argument> in_args;
    std::vector<Argument> out_args;

    bool operator==(const CallSummary&) const = default;
  };

  struct ReassemblyIssue
  {
    std::string service;
    std::uint64_t id = 0;
    std::string message;
  };

  struct Reassembly
  {
    /// Ordered by id, then service.
    std::vector<CallSummary> calls;
    std::vector<ReassemblyIssue> issues;
  };

  /// Groups records by (service, id) and joins argument parts. A call with
  /// a missing or repeated part is reported and dropped.
  Reassembly reassemble_calls(std::span<const TraceRecord> records);

  /// GetVariable reads are additionally broken down by variable name.
  CallStats count_by_service(std::span<const CallSummary> calls);

  /// Splits a multi-boot log. A boot starts at a ConvertPointer call that
  /// does not follow another ConvertPointer call.
  std::vector<std::vector<CallSummary>> split_boot_segments(std::span<const CallSummary> calls);

  /// Calls of `service` per VariableName.Name.
  std::map<std::string, std::uint64_t> variable_accesses(std::span<const CallSummary> calls,
                                                         std::string_view service);

  struct ScenarioDelta
  {
    std::map<std::string, std::int64_t> services;
    /// GetVariable delta per variable name; zero entries omitted.
    std::map<std::string, std::int64_t> get_variable;
    std::int64_t total = 0;

    std::int64_t service(std::string_view name) const;

    bool operator==(const ScenarioDelta&) const = default;
  };

  /// b - a.
  ScenarioDelta compare_scenarios(const CallStats& a, const CallStats& b);

  /// {scenario, counts, total}, counts restricted to called services.
  std::string stats_to_json(std::string_view scenario, const CallStats& stats);

  std::string delta_to_json(std::string_view a, std::string_view b, const ScenarioDelta& delta);

  /// Service rows by scenario columns with a Total row. The five services
  /// seen in practice always appear; others only when called.
  std::string format_stats_table(std::span<const std::pair<std::string, CallStats>> columns);

  std::string format_delta(std::string_view a, std::string_view b, const ScenarioDelta& delta);

}
