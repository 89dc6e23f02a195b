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

// Simulated UEFI runtime-service dispatch table with hook installation,
// SetVirtualAddressMap pointer conversion and a JSON call tracer.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ueforensics::rts
{

  enum class Service : std::uint8_t
  {
    GetTime,
    SetTime,
    GetWakeupTime,
    SetWakeupTime,
    SetVirtualAddressMap,
    ConvertPointer,
    GetVariable,
    GetNextVariableName,
    SetVariable,
    GetNextHighMonotonicCount,
    ResetSystem,
    UpdateCapsule,
    QueryCapsuleCapabilities,
    QueryVariableInfo,
  };

  inline constexpr std::size_t kServiceCount = 14;

  std::string_view service_name(Service service);
  std::optional<Service> find_service(std::string_view name);
  const std::array<Service, kServiceCount>& all_services();

  enum class RtsErrc
  {
    AlreadyHooked,
    UnknownService,
    WrongPhase,
    AlreadyVirtual,
    InvalidHook,
    NotHooked,
    UnserializableValue,
    UnknownScenario,
    BadScenario,
    RoutingFault,
  };

  const char* to_string(RtsErrc code);

  class RtsError : public std::runtime_error
  {
  public:
    RtsError(RtsErrc code, const std::string& what)
      : std::runtime_error(what), code_(code)
    { }

    RtsErrc code() const noexcept
    { return code_; }

  private:
    RtsErrc code_;
  };

  /// Throws UnknownService.
  Service parse_service(std::string_view name);

  // --- Arguments and trace records -------------------------------------

  using ArgValue = std::variant<std::int64_t, std::string>;

  /// Flat argument data in emission order.
  using ArgData = std::vector<std::pair<std::string, ArgValue>>;

  struct Argument
  {
    std::string name;
    ArgData data;

    bool operator==(const Argument&) const = default;
  };

  enum class Direction
  {
    In,
    Out,
  };

  std::string_view to_string(Direction dir);

  inline constexpr std::string_view kTracePrefix = "[RTSTracer]";
  inline constexpr std::size_t kMaxRecordLength = 255;

  /// One JSON object of the trace log.
  struct TraceRecord
  {
    std::string service;
    std::uint64_t id = 0;
    Direction type = Direction::Out;
    std::string argument;
    std::uint32_t part = 0;
    ArgData data;

    bool operator==(const TraceRecord&) const = default;
  };

  /// Serializes with key order service, id, type, argument, part, data;
  /// part is omitted when zero.
  std::string record_to_json(const TraceRecord& record);

  /// Splits one argument into records whose JSON text fits in 255
  /// characters and returns the prefixed log lines.
  std::vector<std::string> emit_trace(std::string_view service, std::uint64_t id,
                                      Direction type, const Argument& argument);

  std::vector<TraceRecord> chunk_argument(std::string_view service, std::uint64_t id,
                                          Direction type, const Argument& argument);

  class TraceSink
  {
  public:
    virtual ~TraceSink() = default;
    virtual void append(std::string_view line) = 0;
  };

  class VectorSink final : public TraceSink
  {
  public:
    void append(std::string_view line) override
    { lines.emplace_back(line); }

    std::vector<std::string> lines;
  };

  /// Writes one line per record.
  class StreamSink final : public TraceSink
  {
  public:
    explicit StreamSink(std::ostream& out)
      : out_(out)
    { }

    void append(std::string_view line) override;

  private:
    std::ostream& out_;
  };

  // --- Calls -------------------------------------------------------------

  struct ServiceCall
  {
    Service service = Service::GetTime;
    std::uint64_t id = 0;
    std::vector<Argument> in_args;
  };

  enum class Status
  {
    Success,
    NotFound,
    Unsupported,
    InvalidParameter,
    ResetTriggered,
  };

  std::string_view to_string(Status status);

  struct ServiceResult
  {
    Status status = Status::Success;
    std::vector<Argument> out_args;

    bool operator==(const ServiceResult&) const = default;
  };

  // --- Hooks ---------------------------------------------------------------

  struct TraceOnly
  {
    bool operator==(const TraceOnly&) const = default;
  };

  /// Reset the machine instead of serving a GetVariable for `match`.
  struct ForcedReset
  {
    std::string match;

    bool operator==(const ForcedReset&) const = default;
  };

  using HookAction = std::variant<TraceOnly, ForcedReset>;

  enum class Phase
  {
    Dxe,
    Runtime,
  };

  struct Hook
  {
    Service service = Service::GetTime;
    HookAction action = TraceOnly{};
    Phase installed_at = Phase::Dxe;
  };

  /// TraceOnly hooks for all 14 services.
  std::vector<Hook> trace_all_hooks();

  enum class AddressMode
  {
    Physical,
    Virtual,
  };

  struct EfiTime
  {
    std::int64_t year = 2020;
    std::int64_t month = 9;
    std::int64_t day = 22;
    std::int64_t hour = 16;
    std::int64_t minute = 12;
    std::int64_t second = 49;
    std::int64_t nanosecond = 0;
    std::int64_t time_zone = 2047;   // EFI_UNSPECIFIED_TIMEZONE
    std::int64_t daylight = 0;
  };

  Argument time_argument(const EfiTime& time);

  struct FirmwareConfig
  {
    EfiTime clock;
    /// Displacement ConvertPointer applies to the pointers it is handed.
    std::int64_t convert_pointer_delta = 0x100000000;
  };

  /// Canned firmware state behind the original handlers.
  struct FirmwareState
  {
    struct Variable
    {
      std::int64_t size = 0;
      std::int64_t attributes = 0;
    };

    FirmwareConfig config;
    std::map<std::string, Variable> variables;
    std::int64_t monotonic_high = 0;
    std::uint64_t reset_requests = 0;
    std::array<std::uint64_t, kServiceCount> invocations{};
  };

  inline constexpr std::string_view kGlobalVariableGuid = "8BE4DF61-93CA-11D2-AA0D-00E098032B8C";

  /// In args of GetVariable/SetVariable/GetNextVariableName for a name.
  std::vector<Argument> variable_call_args(Service service, std::string_view name);

  /// 14-slot runtime-service table of one simulated machine. Slots hold
  /// addresses into a small code space; hooking swaps a slot to a dispatcher
  /// and keeps the original address, and SetVirtualAddressMap relocates every
  /// stored address. Single-threaded.
  class ServiceTable
  {
  public:
    struct Slot
    {
      std::uint64_t current = 0;
      std::optional<std::uint64_t> original;
      std::optional<HookAction> action;
      Phase installed_at = Phase::Dxe;
    };

    explicit ServiceTable(FirmwareConfig config = {});

    static constexpr std::size_t size()
    { return kServiceCount; }

    const Slot& slot(Service service) const
    { return slots_[static_cast<std::size_t>(service)]; }

    std::optional<Service> lookup(std::string_view name) const
    { return find_service(name); }

    AddressMode mode() const
    { return mode_; }

    std::int64_t virtual_offset() const
    { return offset_; }

    std::size_t hooked_count() const;

    /// Validates every hook before touching the table.
    void install_hooks(std::span<const Hook> hooks);

    /// One-shot relocation of every slot address by offset.
    void set_virtual_address_map(std::int64_t offset);

    ServiceResult dispatch(const ServiceCall& call, TraceSink* sink = nullptr);

    /// Firmware reload on warm reset: back to physical addresses with the
    /// hooks re-installed by the driver. Variables persist.
    void reboot();

    const FirmwareState& firmware() const
    { return state_; }

    /// Address the slot's current entry resolves to in the physical code space.
    std::uint64_t resolve(std::uint64_t address) const;

  private:
    enum class Code
    {
      Original,
      HookDispatcher,
    };

    struct CodeEntry
    {
      Code kind;
      Service service;
    };

    const CodeEntry& entry_at(std::uint64_t address) const;
    ServiceResult run_original(Service service, const ServiceCall& call);
    ServiceResult run_hook(Service service, const ServiceCall& call, TraceSink* sink);

    std::array<Slot, kServiceCount> slots_{};
    std::map<std::uint64_t, CodeEntry> code_;
    AddressMode mode_ = AddressMode::Physical;
    std::int64_t offset_ = 0;
    FirmwareState state_;
  };

  // --- Scenarios ---------------------------------------------------------

  /// Calls issued during one boot of the machine.
  struct SegmentSpec
  {
    std::map<Service, std::uint64_t> counts;
    /// Per-name call counts for GetVariable, SetVariable and
    /// GetNextVariableName. When absent for a service, names are drawn from
    /// the variable store in enumeration order.
    std::map<Service, std::map<std::string, std::uint64_t>> variable_mix;

    bool operator==(const SegmentSpec&) const = default;
  };

  struct ScenarioSpec
  {
    std::string name;
    std::vector<SegmentSpec> segments;
    std::string notes;

    std::size_t boot_segments() const
    { return segments.size(); }

    /// Totals over all segments.
    std::map<Service, std::uint64_t> counts() const;

    bool operator==(const ScenarioSpec&) const = default;
  };

  /// boot, login, working, hour, switch, reboot.
  const std::vector<std::string>& builtin_scenario_names();

  /// Throws UnknownScenario.
  ScenarioSpec builtin_scenario(std::string_view name);

  /// Checks non-negative counts and that every variable mix sums to its
  /// service's count. Throws BadScenario.
  void validate_scenario(const ScenarioSpec& spec);

  /// {name, counts, variable_mix, boot_segments, segments, notes}.
  std::string scenario_to_json(const ScenarioSpec& spec);
  ScenarioSpec scenario_from_json(std::string_view text);

  /// Per-service call counts plus the GetVariable name breakdown.
  struct CallStats
  {
    std::map<std::string, std::uint64_t> counts;
    std::map<std::string, std::uint64_t> variable_reads;
    std::uint64_t total = 0;

    std::uint64_t count(std::string_view service) const;

    bool operator==(const CallStats&) const = default;
  };

  struct ScenarioOptions
  {
    std::uint64_t seed = 0;
    std::int64_t virtual_offset = -0x7f000000;
  };

  /// Drives the table through the scenario's boots. Each segment issues the
  /// ConvertPointer block in physical mode, switches to virtual mode, then
  /// dispatches the remaining calls in a seeded shuffle. Call ids run 0, 1,
  /// 2, ... across the whole run.
  CallStats run_scenario(const ScenarioSpec& spec, ServiceTable& table,
                         const ScenarioOptions& options, TraceSink& sink);

}
