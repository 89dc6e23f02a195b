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

#include "ueforensics/trace_analysis.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

using namespace ueforensics::trace;
using json = nlohmann::ordered_json;
namespace rts = ueforensics::rts;


namespace
{

  constexpr std::string_view kTableRows[] = {
      "GetTime", "GetVariable", "SetVariable", "GetNextVariableName", "ConvertPointer",
  };

  const std::string*
  variable_name(const CallSummary& call)
  {
    for (const auto& arg : call.in_args)
      if (arg.name == "VariableName")
        for (const auto& [key, value] : arg.data)
          if (key == "Name")
            return std::get_if<std::string>(&value);
    return nullptr;
  }

  std::string
  signed_text(std::int64_t v)
  {
    return (v > 0 ? "+" : "") + std::to_string(v);
  }

}


CallStats
ueforensics::trace::count_by_service(std::span<const CallSummary> calls)
{
  CallStats stats;
  for (const auto& call : calls)
    {
      ++stats.counts[call.service];
      ++stats.total;
      if (call.service == "GetVariable")
        if (const std::string* name = variable_name(call))
          ++stats.variable_reads[*name];
    }
  return stats;
}


std::vector<std::vector<CallSummary>>
ueforensics::trace::split_boot_segments(std::span<const CallSummary> calls)
{
  std::vector<const CallSummary*> ordered;
  for (const auto& c : calls)
    ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const CallSummary* a, const CallSummary* b) { return a->id < b->id; });

  std::vector<std::vector<CallSummary>> segments;
  const CallSummary* previous = nullptr;
  for (const CallSummary* c : ordered)
    {
      bool boundary = c->service == "ConvertPointer"
                      && (!previous || previous->service != "ConvertPointer");
      if (segments.empty() || (boundary && previous))
        segments.emplace_back();
      segments.back().push_back(*c);
      previous = c;
    }
  return segments;
}


std::map<std::string, std::uint64_t>
ueforensics::trace::variable_accesses(std::span<const CallSummary> calls, std::string_view service)
{
  std::map<std::string, std::uint64_t> out;
  for (const auto& call : calls)
    if (call.service == service)
      if (const std::string* name = variable_name(call))
        ++out[*name];
  return out;
}


std::int64_t
ScenarioDelta::service(std::string_view name) const
{
  auto it = services.find(std::string(name));
  return it == services.end() ? 0 : it->second;
}


ScenarioDelta
ueforensics::trace::compare_scenarios(const CallStats& a, const CallStats& b)
{
  ScenarioDelta d;
  std::set<std::string> names;
  for (const auto& [s, n] : a.counts)
    names.insert(s);
  for (const auto& [s, n] : b.counts)
    names.insert(s);
  for (const auto& s : names)
    d.services[s] = static_cast<std::int64_t>(b.count(s)) - static_cast<std::int64_t>(a.count(s));

  std::set<std::string> vars;
  for (const auto& [v, n] : a.variable_reads)
    vars.insert(v);
  for (const auto& [v, n] : b.variable_reads)
    vars.insert(v);
  auto reads = [](const CallStats& s, const std::string& v) -> std::int64_t {
    auto it = s.variable_reads.find(v);
    return it == s.variable_reads.end() ? 0 : static_cast<std::int64_t>(it->second);
  };
  for (const auto& v : vars)
    if (std::int64_t diff = reads(b, v) - reads(a, v))
      d.get_variable[v] = diff;

  d.total = static_cast<std::int64_t>(b.total) - static_cast<std::int64_t>(a.total);
  return d;
}


std::string
ueforensics::trace::stats_to_json(std::string_view scenario, const CallStats& stats)
{
  json j = json::object();
  j["scenario"] = scenario;
  json counts = json::object();
  for (const auto& [s, n] : stats.counts)
    counts[s] = n;
  j["counts"] = std::move(counts);
  j["total"] = stats.total;
  if (!stats.variable_reads.empty())
    j["variable_reads"] = stats.variable_reads;
  return j.dump(2);
}


std::string
ueforensics::trace::delta_to_json(std::string_view a, std::string_view b, const ScenarioDelta& delta)
{
  json j = json::object();
  j["a"] = a;
  j["b"] = b;
  j["services"] = delta.services;
  j["get_variable"] = delta.get_variable;
  j["total"] = delta.total;
  return j.dump(2);
}


std::string
ueforensics::trace::format_stats_table(std::span<const std::pair<std::string, CallStats>> columns)
{
  std::vector<std::string> rows(std::begin(kTableRows), std::end(kTableRows));
  for (auto s : rts::all_services())
    {
      std::string name(rts::service_name(s));
      if (std::find(rows.begin(), rows.end(), name) != rows.end())
        continue;
      bool used = std::any_of(columns.begin(), columns.end(),
                              [&](const auto& c) { return c.second.count(name) > 0; });
      if (used)
        rows.push_back(name);
    }
  // Services outside the known fourteen still get a row.
  for (const auto& [label, stats] : columns)
    for (const auto& [name, n] : stats.counts)
      if (std::find(rows.begin(), rows.end(), name) == rows.end())
        rows.push_back(name);

  std::size_t first = std::string_view("Runtime Service").size();
  for (const auto& r : rows)
    first = std::max(first, r.size());
  std::vector<std::size_t> widths;
  for (const auto& [label, stats] : columns)
    widths.push_back(std::max<std::size_t>({label.size(), std::to_string(stats.total).size(), 5}));

  std::ostringstream out;
  auto line = [&](std::string_view head, auto cell) {
    out << std::left << std::setw(static_cast<int>(first)) << head;
    for (std::size_t c = 0; c < columns.size(); ++c)
      out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << cell(c);
    out << '\n';
  };
  auto rule = [&] {
    std::size_t width = first;
    for (auto w : widths)
      width += 2 + w;
    out << std::string(width, '-') << '\n';
  };

  line("Runtime Service", [&](std::size_t c) { return columns[c].first; });
  rule();
  for (const auto& r : rows)
    line(r, [&](std::size_t c) { return std::to_string(columns[c].second.count(r)); });
  rule();
  line("Total", [&](std::size_t c) { return std::to_string(columns[c].second.total); });
  return out.str();
}


std::string
ueforensics::trace::format_delta(std::string_view a, std::string_view b, const ScenarioDelta& delta)
{
  std::ostringstream out;
  out << a << " -> " << b << '\n';
  std::size_t width = 5;
  for (const auto& [s, n] : delta.services)
    width = std::max(width, s.size());
  for (const auto& [v, n] : delta.get_variable)
    width = std::max(width, v.size());
  for (const auto& [s, n] : delta.services)
    out << "  " << std::left << std::setw(static_cast<int>(width)) << s << "  "
        << std::right << std::setw(6) << signed_text(n) << '\n';
  out << "  " << std::left << std::setw(static_cast<int>(width)) << "Total" << "  "
      << std::right << std::setw(6) << signed_text(delta.total) << '\n';
  if (!delta.get_variable.empty())
    {
      out << "GetVariable by name\n";
      for (const auto& [v, n] : delta.get_variable)
        out << "  " << std::left << std::setw(static_cast<int>(width)) << v << "  "
            << std::right << std::setw(6) << signed_text(n) << '\n';
    }
  return out.str();
}
