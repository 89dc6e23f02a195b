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

#include "ueforensics/rts.hpp"

#include <random>

#include <json.hpp>

using namespace ueforensics::rts;
using json = nlohmann::ordered_json;


namespace
{

  using Mix = std::map<std::string, std::uint64_t>;

  const Mix kBootReads = {
      {"OsIndicationsSupported", 29}, {"OsIndications", 29}, {"BootCurrent", 46},
      {"BootOrder", 46},   {"Boot0000", 69},     {"Boot0001", 69},    {"Timeout", 23},
      {"PlatformLang", 46}, {"Lang", 23},        {"ConIn", 23},       {"ConOut", 46},
      {"ErrOut", 23},      {"SecureBoot", 69},   {"SetupMode", 46},   {"PK", 23},
      {"KEK", 23},         {"db", 46},           {"dbx", 46},         {"MokListRT", 9},
      {"MokListXRT", 9},   {"SbatLevelRT", 9},   {"VarErrorFlag", 2},
  };

  const Mix kBootWrites = {
      {"OsIndications", 2}, {"BootOrder", 4},  {"Boot0000", 4},     {"Boot0001", 4},
      {"BootCurrent", 8},   {"Timeout", 2},    {"PlatformLang", 4}, {"Lang", 4},
      {"ConIn", 6},         {"ConOut", 6},     {"ErrOut", 6},       {"MokListRT", 15},
      {"MokListXRT", 15},   {"SbatLevelRT", 15}, {"MokSBStateRT", 15},
  };

  std::uint64_t
  mix_total(const Mix& mix)
  {
    std::uint64_t n = 0;
    for (const auto& [name, count] : mix)
      n += count;
    return n;
  }

  SegmentSpec
  make_segment(std::uint64_t get_next, Mix reads, Mix writes)
  {
    SegmentSpec seg;
    seg.counts[Service::GetTime] = 46;
    seg.counts[Service::ConvertPointer] = 91;
    seg.counts[Service::GetNextVariableName] = get_next;
    seg.counts[Service::GetVariable] = mix_total(reads);
    seg.counts[Service::SetVariable] = mix_total(writes);
    seg.variable_mix[Service::GetVariable] = std::move(reads);
    seg.variable_mix[Service::SetVariable] = std::move(writes);
    return seg;
  }

  // Each login, and each logout, reads the two feature variables 16 times.
  Mix
  with_sessions(Mix reads, unsigned events)
  {
    reads["OsIndicationsSupported"] += 16 * events;
    reads["OsIndications"] += 16 * events;
    return reads;
  }

  SegmentSpec
  second_boot()
  {
    Mix reads = with_sessions(kBootReads, 1);
    reads["OsIndications"] += 1;
    for (const char* name : {"BootCurrent", "BootOrder", "Boot0000", "Boot0001"})
      reads[name] += 11;

    Mix writes = kBootWrites;
    for (const char* name : {"OsIndications", "MokListRT", "MokListXRT", "SbatLevelRT"})
      writes.erase(name);
    writes["MokSBStateRT"] = 7;

    return make_segment(568, std::move(reads), std::move(writes));
  }

  const char* kSessionNote =
      "Login and logout each add 16 OsIndicationsSupported and 16 OsIndications "
      "reads; the even split is an assumption.";

  std::vector<Argument>
  default_args(Service service)
  {
    switch (service)
      {
      case Service::SetTime:
        return {time_argument(EfiTime{})};
      case Service::ResetSystem:
        return {{"ResetType", {{"Value", std::int64_t{0}}}}};
      case Service::QueryVariableInfo:
        return {{"Attributes", {{"Value", std::int64_t{0x7}}}}};
      default:
        return {};
      }
  }

  bool
  is_variable_service(Service s)
  {
    return s == Service::GetVariable || s == Service::SetVariable
        || s == Service::GetNextVariableName;
  }

  // Template of one call before ids are assigned; name is empty for
  // services without a variable name.
  struct Planned
  {
    Service service;
    std::string name;
  };

  std::vector<Planned>
  plan_segment(const SegmentSpec& seg, std::mt19937_64& rng)
  {
    std::vector<Planned> calls;
    for (const auto& [service, count] : seg.counts)
      {
        if (service == Service::ConvertPointer)
          continue;
        auto mix = seg.variable_mix.find(service);
        if (mix != seg.variable_mix.end() && is_variable_service(service))
          {
            for (const auto& [name, n] : mix->second)
              calls.insert(calls.end(), n, Planned{service, name});
          }
        else
          {
            calls.insert(calls.end(), count, Planned{service, {}});
          }
      }

    for (std::size_t i = calls.size(); i > 1; --i)
      {
        std::size_t j = rng() % i;
        std::swap(calls[i - 1], calls[j]);
      }
    return calls;
  }

  json
  counts_json(const std::map<Service, std::uint64_t>& counts)
  {
    json out = json::object();
    for (const auto& [s, n] : counts)
      out[std::string(service_name(s))] = n;
    return out;
  }

  json
  mix_json(const std::map<Service, Mix>& mix)
  {
    json out = json::object();
    for (const auto& [s, names] : mix)
      {
        json inner = json::object();
        for (const auto& [name, n] : names)
          inner[name] = n;
        out[std::string(service_name(s))] = std::move(inner);
      }
    return out;
  }

  std::map<Service, std::uint64_t>
  counts_from(const json& j)
  {
    std::map<Service, std::uint64_t> out;
    for (const auto& [key, value] : j.items())
      {
        if (!value.is_number_integer() || value.get<std::int64_t>() < 0)
          throw RtsError(RtsErrc::BadScenario, "count for " + key + " must be a non-negative integer");
        out[parse_service(key)] = value.get<std::uint64_t>();
      }
    return out;
  }

  std::map<Service, Mix>
  mix_from(const json& j)
  {
    std::map<Service, Mix> out;
    for (const auto& [key, names] : j.items())
      {
        Mix& mix = out[parse_service(key)];
        for (const auto& [name, value] : names.items())
          {
            if (!value.is_number_integer() || value.get<std::int64_t>() < 0)
              throw RtsError(RtsErrc::BadScenario,
                             "variable count for " + name + " must be a non-negative integer");
            mix[name] = value.get<std::uint64_t>();
          }
      }
    return out;
  }

}


std::map<Service, std::uint64_t>
ScenarioSpec::counts() const
{
  std::map<Service, std::uint64_t> total;
  for (const auto& seg : segments)
    for (const auto& [s, n] : seg.counts)
      total[s] += n;
  return total;
}


std::uint64_t
CallStats::count(std::string_view service) const
{
  auto it = counts.find(std::string(service));
  return it == counts.end() ? 0 : it->second;
}


const std::vector<std::string>&
ueforensics::rts::builtin_scenario_names()
{
  static const std::vector<std::string> names{"boot", "login", "working", "hour", "switch", "reboot"};
  return names;
}


ScenarioSpec
ueforensics::rts::builtin_scenario(std::string_view name)
{
  ScenarioSpec spec;
  spec.name = std::string(name);

  if (name == "boot")
    {
      spec.segments.push_back(make_segment(499, kBootReads, kBootWrites));
    }
  else if (name == "login" || name == "working" || name == "hour")
    {
      spec.segments.push_back(make_segment(499, with_sessions(kBootReads, 1), kBootWrites));
      spec.notes = kSessionNote;
    }
  else if (name == "switch")
    {
      // login, logout, login of the second user
      spec.segments.push_back(make_segment(499, with_sessions(kBootReads, 3), kBootWrites));
      spec.notes = kSessionNote;
    }
  else if (name == "reboot")
    {
      spec.segments.push_back(make_segment(499, with_sessions(kBootReads, 1), kBootWrites));
      spec.segments.push_back(second_boot());
      spec.notes = std::string(kSessionNote)
                   + " The second boot reuses variables registered by the first.";
    }
  else
    {
      throw RtsError(RtsErrc::UnknownScenario, "unknown scenario '" + std::string(name) + "'");
    }
  return spec;
}


void
ueforensics::rts::validate_scenario(const ScenarioSpec& spec)
{
  if (spec.segments.empty())
    throw RtsError(RtsErrc::BadScenario, "scenario " + spec.name + " has no boot segment");
  for (std::size_t i = 0; i < spec.segments.size(); ++i)
    {
      const SegmentSpec& seg = spec.segments[i];
      for (const auto& [service, mix] : seg.variable_mix)
        {
          if (!is_variable_service(service))
            throw RtsError(RtsErrc::BadScenario,
                           "segment " + std::to_string(i) + ": variable mix for "
                           + std::string(service_name(service)));
          auto it = seg.counts.find(service);
          std::uint64_t expected = it == seg.counts.end() ? 0 : it->second;
          if (mix_total(mix) != expected)
            throw RtsError(RtsErrc::BadScenario,
                           "segment " + std::to_string(i) + ": " + std::string(service_name(service))
                           + " mix sums to " + std::to_string(mix_total(mix)) + ", count is "
                           + std::to_string(expected));
        }
    }
}


std::string
ueforensics::rts::scenario_to_json(const ScenarioSpec& spec)
{
  std::map<Service, Mix> mix;
  for (const auto& seg : spec.segments)
    for (const auto& [s, names] : seg.variable_mix)
      for (const auto& [name, n] : names)
        mix[s][name] += n;

  json j = json::object();
  j["name"] = spec.name;
  j["counts"] = counts_json(spec.counts());
  j["variable_mix"] = mix_json(mix);
  j["boot_segments"] = spec.boot_segments();
  json segs = json::array();
  for (const auto& seg : spec.segments)
    segs.push_back({{"counts", counts_json(seg.counts)}, {"variable_mix", mix_json(seg.variable_mix)}});
  j["segments"] = std::move(segs);
  if (!spec.notes.empty())
    j["notes"] = spec.notes;
  return j.dump(2);
}


ScenarioSpec
ueforensics::rts::scenario_from_json(std::string_view text)
{
  json j;
  try
    {
      j = json::parse(text);
    }
  catch (const json::parse_error& e)
    {
      throw RtsError(RtsErrc::BadScenario, e.what());
    }
  if (!j.is_object())
    throw RtsError(RtsErrc::BadScenario, "scenario must be a JSON object");

  ScenarioSpec spec;
  try
    {
      spec.name = j.value("name", std::string("custom"));
      spec.notes = j.value("notes", std::string());
      if (j.contains("segments"))
        {
          for (const auto& s : j.at("segments"))
            {
              SegmentSpec seg;
              seg.counts = counts_from(s.value("counts", json::object()));
              seg.variable_mix = mix_from(s.value("variable_mix", json::object()));
              spec.segments.push_back(std::move(seg));
            }
        }
      else
        {
          std::uint64_t boots = j.value("boot_segments", std::uint64_t{1});
          if (boots == 0)
            throw RtsError(RtsErrc::BadScenario, "boot_segments must be at least 1");
          auto counts = counts_from(j.value("counts", json::object()));
          auto mix = mix_from(j.value("variable_mix", json::object()));
          // Without explicit segments the totals are spread evenly.
          SegmentSpec seg;
          for (const auto& [s, n] : counts)
            {
              if (n % boots)
                throw RtsError(RtsErrc::BadScenario,
                               std::string(service_name(s)) + " count not divisible by boot_segments");
              seg.counts[s] = n / boots;
            }
          for (const auto& [s, names] : mix)
            for (const auto& [name, n] : names)
              {
                if (n % boots)
                  throw RtsError(RtsErrc::BadScenario,
                                 "mix for " + name + " not divisible by boot_segments");
                seg.variable_mix[s][name] = n / boots;
              }
          spec.segments.assign(boots, seg);
        }
    }
  catch (const json::exception& e)
    {
      throw RtsError(RtsErrc::BadScenario, e.what());
    }

  if (j.contains("counts") && j.contains("segments") && counts_from(j["counts"]) != spec.counts())
    throw RtsError(RtsErrc::BadScenario, "counts disagree with segment totals");
  validate_scenario(spec);
  return spec;
}


CallStats
ueforensics::rts::run_scenario(const ScenarioSpec& spec, ServiceTable& table,
                               const ScenarioOptions& options, TraceSink& sink)
{
  validate_scenario(spec);
  for (const auto& [service, n] : spec.counts())
    if (n && !table.slot(service).original)
      throw RtsError(RtsErrc::NotHooked, std::string(service_name(service)) + " is not hooked");
  if (table.mode() != AddressMode::Physical)
    throw RtsError(RtsErrc::WrongPhase, "scenario must start before SetVirtualAddressMap");

  CallStats stats;
  std::uint64_t id = 0;
  std::string enum_cursor;

  auto issue = [&](Service service, std::vector<Argument> args) {
    ServiceResult r = table.dispatch({service, id++, std::move(args)}, &sink);
    ++stats.counts[std::string(service_name(service))];
    ++stats.total;
    return r;
  };

  for (std::size_t seg_index = 0; seg_index < spec.segments.size(); ++seg_index)
    {
      const SegmentSpec& seg = spec.segments[seg_index];
      if (seg_index > 0)
        table.reboot();

      std::mt19937_64 rng(options.seed ^ (0x9e3779b97f4a7c15ULL * (seg_index + 1)));
      std::vector<Planned> calls = plan_segment(seg, rng);

      auto cp = seg.counts.find(Service::ConvertPointer);
      std::uint64_t conversions = cp == seg.counts.end() ? 0 : cp->second;
      for (std::uint64_t i = 0; i < conversions; ++i)
        issue(Service::ConvertPointer,
              {{"DebugDisposition", {{"Value", std::int64_t{0}}}},
               {"Address", {{"Value", static_cast<std::int64_t>(0x7f000000 + 0x1000 * i)}}}});
      table.set_virtual_address_map(options.virtual_offset);

      for (const Planned& call : calls)
        {
          switch (call.service)
            {
            case Service::GetVariable:
              ++stats.variable_reads[call.name.empty() ? std::string("?") : call.name];
              [[fallthrough]];
            case Service::SetVariable:
              issue(call.service, variable_call_args(call.service, call.name));
              break;
            case Service::GetNextVariableName:
              {
                ServiceResult r = issue(call.service,
                                        variable_call_args(call.service, enum_cursor));
                enum_cursor.clear();
                if (r.status == Status::Success && !r.out_args.empty())
                  enum_cursor = std::get<std::string>(r.out_args[0].data.at(0).second);
                break;
              }
            default:
              issue(call.service, default_args(call.service));
              break;
            }
        }
    }
  return stats;
}
