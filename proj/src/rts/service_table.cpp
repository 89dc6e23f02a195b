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

#include <algorithm>

using namespace ueforensics::rts;


namespace
{

  // Physical placement of the runtime driver images in the code space.
  constexpr std::uint64_t kOriginalBase = 0x7fe00000;
  constexpr std::uint64_t kHookBase = 0x7fd00000;
  constexpr std::uint64_t kEntryStride = 0x40;

  constexpr std::array<std::string_view, kServiceCount> kNames{
      "GetTime",
      "SetTime",
      "GetWakeupTime",
      "SetWakeupTime",
      "SetVirtualAddressMap",
      "ConvertPointer",
      "GetVariable",
      "GetNextVariableName",
      "SetVariable",
      "GetNextHighMonotonicCount",
      "ResetSystem",
      "UpdateCapsule",
      "QueryCapsuleCapabilities",
      "QueryVariableInfo",
  };

  std::size_t
  index_of(Service s)
  {
    return static_cast<std::size_t>(s);
  }

  std::uint64_t
  original_address(Service s)
  {
    return kOriginalBase + index_of(s) * kEntryStride;
  }

  std::uint64_t
  hook_address(Service s)
  {
    return kHookBase + index_of(s) * kEntryStride;
  }

  const ArgValue*
  find_value(const std::vector<Argument>& args, std::string_view arg, std::string_view key)
  {
    for (const auto& a : args)
      if (a.name == arg)
        for (const auto& [k, v] : a.data)
          if (k == key)
            return &v;
    return nullptr;
  }

  std::string
  string_arg(const std::vector<Argument>& args, std::string_view arg, std::string_view key)
  {
    const ArgValue* v = find_value(args, arg, key);
    if (v)
      if (const auto* s = std::get_if<std::string>(v))
        return *s;
    return {};
  }

  std::int64_t
  int_arg(const std::vector<Argument>& args, std::string_view arg, std::string_view key,
          std::int64_t fallback = 0)
  {
    const ArgValue* v = find_value(args, arg, key);
    if (v)
      if (const auto* i = std::get_if<std::int64_t>(v))
        return *i;
    return fallback;
  }

  // Variables a freshly flashed firmware already holds.
  void
  seed_variables(FirmwareState& state)
  {
    constexpr std::pair<std::string_view, std::int64_t> defaults[] = {
        {"Boot0000", 84},     {"Boot0001", 118},  {"BootCurrent", 2}, {"BootOrder", 4},
        {"BootOptionSupport", 4}, {"ConIn", 46},  {"ConOut", 46},     {"ErrOut", 46},
        {"Lang", 4},          {"OsIndicationsSupported", 8},          {"PlatformLang", 3},
        {"SecureBoot", 1},    {"SetupMode", 1},   {"Timeout", 2},     {"KEK", 0},
        {"PK", 0},            {"db", 0},          {"dbx", 0},
    };
    for (const auto& [name, size] : defaults)
      state.variables[std::string(name)] = {size, 0x7};
  }

}


std::string_view
ueforensics::rts::service_name(Service service)
{
  return kNames[index_of(service)];
}


std::optional<Service>
ueforensics::rts::find_service(std::string_view name)
{
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name)
      return static_cast<Service>(i);
  return std::nullopt;
}


Service
ueforensics::rts::parse_service(std::string_view name)
{
  if (auto s = find_service(name))
    return *s;
  throw RtsError(RtsErrc::UnknownService, "unknown runtime service '" + std::string(name) + "'");
}


const std::array<Service, kServiceCount>&
ueforensics::rts::all_services()
{
  static const auto services = [] {
    std::array<Service, kServiceCount> out{};
    for (std::size_t i = 0; i < kServiceCount; ++i)
      out[i] = static_cast<Service>(i);
    return out;
  }();
  return services;
}


const char*
ueforensics::rts::to_string(RtsErrc code)
{
  switch (code)
    {
    case RtsErrc::AlreadyHooked:       return "AlreadyHooked";
    case RtsErrc::UnknownService:      return "UnknownService";
    case RtsErrc::WrongPhase:          return "WrongPhase";
    case RtsErrc::AlreadyVirtual:      return "AlreadyVirtual";
    case RtsErrc::InvalidHook:         return "InvalidHook";
    case RtsErrc::NotHooked:           return "NotHooked";
    case RtsErrc::UnserializableValue: return "UnserializableValue";
    case RtsErrc::UnknownScenario:     return "UnknownScenario";
    case RtsErrc::BadScenario:         return "BadScenario";
    case RtsErrc::RoutingFault:        return "RoutingFault";
    }
  return "?";
}


std::string_view
ueforensics::rts::to_string(Status status)
{
  switch (status)
    {
    case Status::Success:          return "EFI_SUCCESS";
    case Status::NotFound:         return "EFI_NOT_FOUND";
    case Status::Unsupported:      return "EFI_UNSUPPORTED";
    case Status::InvalidParameter: return "EFI_INVALID_PARAMETER";
    case Status::ResetTriggered:   return "RESET";
    }
  return "?";
}


std::vector<Hook>
ueforensics::rts::trace_all_hooks()
{
  std::vector<Hook> hooks;
  for (Service s : all_services())
    hooks.push_back({s, TraceOnly{}, Phase::Dxe});
  return hooks;
}


Argument
ueforensics::rts::time_argument(const EfiTime& t)
{
  return {"Time",
          {{"Year", t.year},
           {"Month", t.month},
           {"Day", t.day},
           {"Hour", t.hour},
           {"Minute", t.minute},
           {"Second", t.second},
           {"Pad1", std::int64_t{0}},
           {"Nanoseconds", t.nanosecond},
           {"TimeZone", t.time_zone},
           {"Daylight", t.daylight},
           {"Pad2", std::int64_t{0}}}};
}


std::vector<Argument>
ueforensics::rts::variable_call_args(Service service, std::string_view name)
{
  std::vector<Argument> args;
  args.push_back({"VariableName", {{"Name", std::string(name)}}});
  args.push_back({"VendorGuid", {{"Guid", std::string(kGlobalVariableGuid)}}});
  if (service == Service::SetVariable)
    args.push_back({"Data", {{"Size", std::int64_t{8}}, {"Attributes", std::int64_t{0x7}}}});
  return args;
}


ServiceTable::ServiceTable(FirmwareConfig config)
{
  state_.config = config;
  seed_variables(state_);
  for (Service s : all_services())
    {
      code_[original_address(s)] = {Code::Original, s};
      code_[hook_address(s)] = {Code::HookDispatcher, s};
      slots_[index_of(s)].current = original_address(s);
    }
}


std::size_t
ServiceTable::hooked_count() const
{
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(),
                                                [](const Slot& s) { return s.original; }));
}


void
ServiceTable::install_hooks(std::span<const Hook> hooks)
{
  if (mode_ != AddressMode::Physical)
    throw RtsError(RtsErrc::WrongPhase, "hooks must be installed before SetVirtualAddressMap");

  std::array<bool, kServiceCount> seen{};
  for (const auto& hook : hooks)
    {
      auto i = index_of(hook.service);
      if (i >= kServiceCount)
        throw RtsError(RtsErrc::UnknownService, "hook for unknown service");
      if (hook.installed_at != Phase::Dxe)
        throw RtsError(RtsErrc::WrongPhase, "hooks are installed in the DXE phase only");
      if (slots_[i].original || seen[i])
        throw RtsError(RtsErrc::AlreadyHooked,
                       std::string(service_name(hook.service)) + " is already hooked");
      if (std::holds_alternative<ForcedReset>(hook.action) && hook.service != Service::GetVariable)
        throw RtsError(RtsErrc::InvalidHook, "ForcedReset applies to GetVariable only");
      seen[i] = true;
    }

  for (const auto& hook : hooks)
    {
      Slot& slot = slots_[index_of(hook.service)];
      slot.original = slot.current;
      slot.current = hook_address(hook.service);
      slot.action = hook.action;
      slot.installed_at = Phase::Dxe;
    }
}


void
ServiceTable::set_virtual_address_map(std::int64_t offset)
{
  if (mode_ == AddressMode::Virtual)
    throw RtsError(RtsErrc::AlreadyVirtual, "SetVirtualAddressMap may only be called once");
  const auto delta = static_cast<std::uint64_t>(offset);
  for (auto& slot : slots_)
    {
      slot.current += delta;
      if (slot.original)
        *slot.original += delta;
    }
  offset_ = offset;
  mode_ = AddressMode::Virtual;
}


void
ServiceTable::reboot()
{
  for (Service s : all_services())
    {
      Slot& slot = slots_[index_of(s)];
      if (slot.original)
        {
          slot.original = original_address(s);
          slot.current = hook_address(s);
        }
      else
        {
          slot.current = original_address(s);
        }
    }
  offset_ = 0;
  mode_ = AddressMode::Physical;
}


std::uint64_t
ServiceTable::resolve(std::uint64_t address) const
{
  return mode_ == AddressMode::Virtual ? address - static_cast<std::uint64_t>(offset_) : address;
}


const ServiceTable::CodeEntry&
ServiceTable::entry_at(std::uint64_t address) const
{
  auto it = code_.find(resolve(address));
  if (it == code_.end())
    throw RtsError(RtsErrc::RoutingFault, "no code at " + std::to_string(address));
  return it->second;
}


ServiceResult
ServiceTable::dispatch(const ServiceCall& call, TraceSink* sink)
{
  if (index_of(call.service) >= kServiceCount)
    throw RtsError(RtsErrc::UnknownService, "call to unknown service");
  const CodeEntry& entry = entry_at(slot(call.service).current);
  if (entry.kind == Code::HookDispatcher)
    return run_hook(entry.service, call, sink);
  return run_original(entry.service, call);
}


ServiceResult
ServiceTable::run_hook(Service service, const ServiceCall& call, TraceSink* sink)
{
  const Slot& s = slot(service);
  const std::string_view name = service_name(service);

  auto emit = [&](Direction dir, const std::vector<Argument>& args) {
    if (!sink)
      return;
    for (const auto& arg : args)
      for (const auto& line : emit_trace(name, call.id, dir, arg))
        sink->append(line);
  };

  emit(Direction::In, call.in_args);

  if (const auto* reset = std::get_if<ForcedReset>(&*s.action))
    {
      if (string_arg(call.in_args, "VariableName", "Name") == reset->match)
        {
          ServiceCall cold{Service::ResetSystem, call.id, {{"ResetType", {{"Value", std::int64_t{0}}}}}};
          const Slot& reset_slot = slot(Service::ResetSystem);
          std::uint64_t target = reset_slot.original ? *reset_slot.original : reset_slot.current;
          return run_original(entry_at(target).service, cold);
        }
    }

  const CodeEntry& original = entry_at(*s.original);
  if (original.kind != Code::Original)
    throw RtsError(RtsErrc::RoutingFault, "hook chain does not end in a service");
  ServiceResult result = run_original(original.service, call);
  emit(Direction::Out, result.out_args);
  return result;
}


ServiceResult
ServiceTable::run_original(Service service, const ServiceCall& call)
{
  ++state_.invocations[index_of(service)];
  const auto& in = call.in_args;

  switch (service)
    {
    case Service::GetTime:
      return {Status::Success,
              {time_argument(state_.config.clock),
               {"Capabilities",
                {{"Resolution", std::int64_t{0}},
                 {"Accuracy", std::int64_t{0}},
                 {"SetsToZero", std::int64_t{0}}}}}};

    case Service::SetTime:
      {
        EfiTime& t = state_.config.clock;
        t.year = int_arg(in, "Time", "Year", t.year);
        t.month = int_arg(in, "Time", "Month", t.month);
        t.day = int_arg(in, "Time", "Day", t.day);
        t.hour = int_arg(in, "Time", "Hour", t.hour);
        t.minute = int_arg(in, "Time", "Minute", t.minute);
        t.second = int_arg(in, "Time", "Second", t.second);
        return {Status::Success, {}};
      }

    case Service::SetVirtualAddressMap:
      return {Status::Success, {}};

    case Service::ConvertPointer:
      {
        std::int64_t address = int_arg(in, "Address", "Value");
        return {Status::Success,
                {{"Address", {{"Value", address + state_.config.convert_pointer_delta}}}}};
      }

    case Service::GetVariable:
      {
        auto it = state_.variables.find(string_arg(in, "VariableName", "Name"));
        if (it == state_.variables.end())
          return {Status::NotFound, {}};
        return {Status::Success,
                {{"Data", {{"Size", it->second.size}, {"Attributes", it->second.attributes}}}}};
      }

    case Service::GetNextVariableName:
      {
        std::string previous = string_arg(in, "VariableName", "Name");
        auto it = previous.empty() ? state_.variables.begin()
                                   : state_.variables.upper_bound(previous);
        if (it == state_.variables.end())
          return {Status::NotFound, {}};
        return {Status::Success, {{"VariableName", {{"Name", it->first}}}}};
      }

    case Service::SetVariable:
      {
        std::string name = string_arg(in, "VariableName", "Name");
        if (name.empty())
          return {Status::InvalidParameter, {}};
        std::int64_t size = int_arg(in, "Data", "Size");
        if (size == 0)
          state_.variables.erase(name);
        else
          state_.variables[name] = {size, int_arg(in, "Data", "Attributes", 0x7)};
        return {Status::Success, {}};
      }

    case Service::GetNextHighMonotonicCount:
      return {Status::Success, {{"HighCount", {{"Value", ++state_.monotonic_high}}}}};

    case Service::ResetSystem:
      ++state_.reset_requests;
      return {Status::ResetTriggered, {}};

    case Service::QueryVariableInfo:
      return {Status::Success,
              {{"Storage",
                {{"MaximumVariableStorageSize", std::int64_t{0x40000}},
                 {"RemainingVariableStorageSize",
                  std::int64_t{0x40000} - 0x40 * static_cast<std::int64_t>(state_.variables.size())},
                 {"MaximumVariableSize", std::int64_t{0x8400}}}}}};

    case Service::GetWakeupTime:
    case Service::SetWakeupTime:
    case Service::UpdateCapsule:
    case Service::QueryCapsuleCapabilities:
      return {Status::Unsupported, {}};
    }
  return {Status::Unsupported, {}};
}
