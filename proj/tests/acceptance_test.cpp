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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. The two 2 GiB criteria run first so that the peak
// resident size is measured before the small cases allocate anything.

#include "test_util.hpp"
#include "ueforensics/acquisition.hpp"
#include "ueforensics/cli.hpp"
#include "ueforensics/diff.hpp"
#include "ueforensics/memory_model.hpp"
#include "ueforensics/rts.hpp"
#include "ueforensics/trace_analysis.hpp"
#include "ueforensics/wire.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

using namespace ueforensics;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace
{

  // Tolerances.
  constexpr double kScenarioSeconds = 10.0;
  constexpr double kAcquisitionSeconds = 120.0;
  constexpr double kDiffSeconds = 30.0;
  constexpr std::uint64_t kDiffRssKiB = 256 * 1024;
  constexpr std::uint64_t kTable1Bytes = 0x80000000;

  struct Failure
  {
    std::string what;
  };

  void
  expect(bool ok, const std::string& what)
  {
    if (!ok)
      throw Failure{what};
  }

  int failures = 0;

  void
  criterion(const std::string& name, const std::function<std::string()>& body)
  {
    std::string detail;
    bool ok = false;
    try
      {
        detail = body();
        ok = true;
      }
    catch (const Failure& f)
      {
        detail = f.what;
      }
    catch (const std::exception& e)
      {
        detail = std::string("exception: ") + e.what();
      }
    if (!ok)
      ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : " (" + detail + ")")
              << std::endl;
  }

  double
  seconds_since(Clock::time_point t0)
  {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  }

  std::string
  fixed1(double v)
  {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(1);
    s << v;
    return s.str();
  }

  std::uint64_t
  status_kib(const std::string& key)
  {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line))
      if (line.rfind(key + ":", 0) == 0)
        return std::stoull(line.substr(key.size() + 1));
    return 0;
  }

  // Resets VmHWM to the current RSS.
  bool
  reset_peak_rss()
  {
    std::ofstream out("/proc/self/clear_refs");
    out << "5";
    out.flush();
    return static_cast<bool>(out);
  }

  // --- 2 GiB cases ------------------------------------------------------

  // Flushes a file and drops it from the page cache so reads hit the disk.
  void
  evict(const fs::path& path)
  {
    int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0)
      return;
    ::fdatasync(fd);
    ::posix_fadvise(fd, 0, 0, POSIX_FADV_DONTNEED);
    ::close(fd);
  }

  struct BigFiles
  {
    fs::path q1;
    fs::path q2;
  };

  std::string
  performance(const BigFiles& f)
  {
    expect(fs::file_size(f.q1) == kTable1Bytes && fs::file_size(f.q2) == kTable1Bytes,
           "dump files are not 2 GiB");
    evict(f.q1);
    evict(f.q2);
    bool reset = reset_peak_rss();
    std::uint64_t before = status_kib("VmHWM");
    auto t0 = Clock::now();
    diff::DiffOptions opts;
    auto report = diff::diff_files(f.q1, f.q2, opts);
    double secs = seconds_since(t0);
    std::uint64_t peak = status_kib("VmHWM");

    expect(report.total_pages == kTable1Bytes / 4096, "page count");
    expect(report.pages_differing > 0, "reboot footprint not detected");
    expect(secs < kDiffSeconds, "took " + fixed1(secs) + " s");
    expect(peak < kDiffRssKiB, "peak RSS " + std::to_string(peak / 1024) + " MiB");
    return fixed1(secs) + " s, peak RSS " + std::to_string(peak / 1024) + " MiB"
           + (reset ? "" : " (peak not reset, includes " + std::to_string(before / 1024) + " MiB before)");
  }

  std::uint64_t
  load_le64(const std::uint8_t* p)
  {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
      v = (v << 8) | p[i];
    return v;
  }

  void
  read_exact(int fd, std::uint8_t* out, std::size_t n)
  {
    while (n)
      {
        ssize_t r = ::read(fd, out, n);
        if (r < 0 && errno == EINTR)
          continue;
        if (r <= 0)
          throw std::runtime_error("relay: short read");
        out += r;
        n -= static_cast<std::size_t>(r);
      }
  }

  // Forwards frames from the agent to the receiver and records the address
  // of every page frame on the way.
  struct OrderTap
  {
    std::uint64_t pages = 0;
    bool ascending = true;
    std::optional<std::uint64_t> last;
  };

  void
  relay(acquisition::Listener& from, const acquisition::Endpoint& to, OrderTap& tap)
  {
    auto in = from.accept();
    auto out = acquisition::connect_to(to);
    std::vector<std::uint8_t> frame;
    while (true)
      {
        frame.resize(wire::kHeaderSize);
        read_exact(in.get(), frame.data(), wire::kHeaderSize);
        auto header = wire::decode_header(frame);
        frame.resize(wire::kHeaderSize + header.payload_len);
        read_exact(in.get(), frame.data() + wire::kHeaderSize, header.payload_len);
        if (header.kind == wire::Kind::Page)
          {
            std::uint64_t addr = load_le64(frame.data() + wire::kHeaderSize);
            if (tap.last && addr <= *tap.last)
              tap.ascending = false;
            tap.last = addr;
            ++tap.pages;
          }
        acquisition::send_all(out.get(), frame);
        if (header.kind == wire::Kind::End)
          return;
      }
  }

  std::string
  acquisition_fidelity(const BigFiles& f, const fs::path& dir)
  {
    auto map = memory::MemoryMap::qemu_2gib();
    auto image = memory::new_image(map, 1, "Q1");

    auto t0 = Clock::now();
    auto receiver = acquisition::Listener::bind(acquisition::Endpoint::parse("127.0.0.1:0"));
    auto tap_listener = acquisition::Listener::bind(acquisition::Endpoint::parse("127.0.0.1:0"));
    acquisition::DumpArtifact artifact;
    OrderTap tap;
    std::exception_ptr recv_error, relay_error;
    std::thread recv_thread([&] {
      try
        {
          artifact = acquisition::receive(receiver, dir, "UF");
        }
      catch (...)
        {
          recv_error = std::current_exception();
        }
    });
    std::thread relay_thread([&] {
      try
        {
          relay(tap_listener, receiver.local_endpoint(), tap);
        }
      catch (...)
        {
          relay_error = std::current_exception();
        }
    });
    auto summary = acquisition::acquire(image, tap_listener.local_endpoint());
    relay_thread.join();
    recv_thread.join();
    double secs = seconds_since(t0);
    if (relay_error)
      std::rethrow_exception(relay_error);
    if (recv_error)
      std::rethrow_exception(recv_error);

    const std::uint64_t ram_pages = (0xa0000 + (0x80000000 - 0x100000)) / 4096;
    expect(artifact.digest_verified, "digest did not verify");
    expect(summary.pages_sent == ram_pages && tap.pages == ram_pages, "page count");
    expect(tap.ascending, "page addresses not strictly ascending");
    expect(testutil::files_equal(artifact.raw_dump_path, f.q1), "received dump differs from flat dump");
    expect(secs < kAcquisitionSeconds, "took " + fixed1(secs) + " s");
    fs::remove(artifact.raw_dump_path);
    return std::to_string(tap.pages) + " pages, " + fixed1(secs) + " s";
  }

  // --- traces -----------------------------------------------------------

  struct Analysis
  {
    std::vector<std::string> lines;
    std::vector<trace::CallSummary> calls;
    rts::CallStats direct;
    rts::CallStats parsed;
    std::size_t issues = 0;
  };

  Analysis
  analyze(const std::string& scenario, std::uint64_t seed = 0, std::int64_t offset = -0x7f000000)
  {
    Analysis a;
    rts::ServiceTable table;
    auto hooks = rts::trace_all_hooks();
    table.install_hooks(hooks);
    rts::VectorSink sink;
    a.direct = rts::run_scenario(rts::builtin_scenario(scenario), table, {seed, offset}, sink);
    a.lines = std::move(sink.lines);
    auto parsed = trace::parse_log(std::span<const std::string>(a.lines));
    auto calls = trace::reassemble_calls(parsed.records);
    a.issues = parsed.issues.size() + calls.issues.size();
    a.calls = std::move(calls.calls);
    a.parsed = trace::count_by_service(a.calls);
    return a;
  }

  const char* const kColumns[] = {"GetTime", "GetVariable", "SetVariable", "GetNextVariableName",
                                  "ConvertPointer"};

  std::string
  scenario_counts()
  {
    // Expected per-service counts.
    const std::map<std::string, std::array<std::uint64_t, 6>> expected{
        {"boot", {46, 754, 110, 499, 91, 1500}},    {"login", {46, 786, 110, 499, 91, 1532}},
        {"working", {46, 786, 110, 499, 91, 1532}}, {"hour", {46, 786, 110, 499, 91, 1532}},
        {"switch", {46, 850, 110, 499, 91, 1596}},  {"reboot", {92, 1617, 165, 1067, 182, 3123}},
    };
    double slowest = 0;
    for (const auto& [name, cells] : expected)
      {
        auto t0 = Clock::now();
        Analysis a = analyze(name);
        double secs = seconds_since(t0);
        slowest = std::max(slowest, secs);
        expect(a.issues == 0, name + ": parse issues");
        for (const auto* stats : {&a.direct, &a.parsed})
          {
            for (std::size_t i = 0; i < 5; ++i)
              expect(stats->count(kColumns[i]) == cells[i],
                     name + " " + kColumns[i] + " = " + std::to_string(stats->count(kColumns[i])));
            expect(stats->total == cells[5], name + " total = " + std::to_string(stats->total));
            expect(stats->counts.size() == 5, name + ": services outside the five columns");
          }
        expect(secs < kScenarioSeconds, name + " took " + fixed1(secs) + " s");
      }
    return "6 scenarios, slowest " + fixed1(slowest) + " s";
  }

  std::string
  deltas()
  {
    Analysis boot = analyze("boot"), login = analyze("login"), reboot = analyze("reboot");
    auto d = trace::compare_scenarios(boot.parsed, login.parsed);
    expect(d.service("GetVariable") == 32 && d.total == 32, "boot->login is not +32 GetVariable");
    std::int64_t named = 0;
    for (const auto& [var, n] : d.get_variable)
      {
        expect(var == "OsIndications" || var == "OsIndicationsSupported", "login delta touches " + var);
        named += n;
      }
    expect(named == 32, "named GetVariable delta");

    auto segments = trace::split_boot_segments(reboot.calls);
    expect(segments.size() == 2, "reboot log has " + std::to_string(segments.size()) + " boots");
    auto first = trace::count_by_service(segments[0]);
    auto second = trace::count_by_service(segments[1]);
    auto r = trace::compare_scenarios(first, second);
    expect(r.service("GetVariable") == 45, "GetVariable " + std::to_string(r.service("GetVariable")));
    expect(r.service("GetNextVariableName") == 69, "GetNextVariableName");
    expect(r.service("SetVariable") == -55, "SetVariable");

    auto os1 = first.variable_reads["OsIndications"], os2 = second.variable_reads["OsIndications"];
    expect(os1 == 45 && os2 == 46, "OsIndications reads " + std::to_string(os1) + "/" + std::to_string(os2));
    auto sets1 = trace::variable_accesses(segments[0], "SetVariable");
    auto sets2 = trace::variable_accesses(segments[1], "SetVariable");
    expect(sets1.count("OsIndications") && !sets2.count("OsIndications"), "OsIndications set in boot 2");
    return "";
  }

  std::string
  random_token(std::mt19937_64& rng, std::size_t max_len)
  {
    static const char alphabet[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_ -\"\\/:{}";
    std::string s(1 + rng() % max_len, ' ');
    for (auto& c : s)
      c = alphabet[rng() % (sizeof(alphabet) - 1)];
    return s;
  }

  // Independent check of one log line: prefix, length, JSON object.
  void
  check_line(const std::string& line)
  {
    const std::string prefix(rts::kTracePrefix);
    expect(line.rfind(prefix, 0) == 0, "missing prefix");
    std::string body = line.substr(prefix.size());
    expect(body.size() <= 255, "record of " + std::to_string(body.size()) + " chars");
    json j = json::parse(body);
    expect(j.is_object(), "record is not an object");
  }

  std::string
  trace_format()
  {
    std::size_t lines_checked = 0;
    for (const auto& name : rts::builtin_scenario_names())
      for (const auto& line : analyze(name).lines)
        {
          check_line(line);
          ++lines_checked;
        }

    std::mt19937_64 rng(2024);
    for (int i = 0; i < 1000; ++i)
      {
        rts::Argument arg{"Arg" + std::to_string(i % 7), {}};
        std::set<std::string> keys;
        std::size_t n = rng() % 40;
        while (arg.data.size() < n)
          {
            std::string k = random_token(rng, 20);
            if (!keys.insert(k).second)
              continue;
            if (rng() % 2)
              arg.data.emplace_back(k, static_cast<std::int64_t>(rng()));
            else
              arg.data.emplace_back(k, random_token(rng, 60));
          }
        auto dir = rng() % 2 ? rts::Direction::In : rts::Direction::Out;
        auto lines = rts::emit_trace("GetVariable", i, dir, arg);
        for (const auto& l : lines)
          {
            check_line(l);
            ++lines_checked;
          }
        auto parsed = trace::parse_log(std::span<const std::string>(lines));
        auto calls = trace::reassemble_calls(parsed.records);
        expect(parsed.issues.empty() && calls.issues.empty() && calls.calls.size() == 1,
               "map " + std::to_string(i) + " did not reassemble");
        const auto& got = dir == rts::Direction::In ? calls.calls[0].in_args : calls.calls[0].out_args;
        expect(got.size() == 1 && got[0] == arg, "map " + std::to_string(i) + " changed");
      }

    // GetTime output of the tracer example, parsed back from text.
    const std::string example
        = "[RTSTracer]{'service':'GetTime','id':0,'type':'OUT','argument':'Time','data':\n"
          "  {'Year':2020,'Month':9,'Day':22,'Hour':16,'Minute':12,'Second':49,'Pad1':0,\n"
          "   'Nanoseconds':0,'TimeZone':2047,'Daylight':0,'Pad2':0}}\n";
    auto parsed = trace::parse_log(example);
    expect(parsed.issues.empty() && parsed.records.size() == 1, "example did not parse");
    const rts::ArgData fields{{"Year", 2020},   {"Month", 9},        {"Day", 22},
                              {"Hour", 16},     {"Minute", 12},      {"Second", 49},
                              {"Pad1", 0},      {"Nanoseconds", 0},  {"TimeZone", 2047},
                              {"Daylight", 0},  {"Pad2", 0}};
    expect(parsed.records[0].data == fields, "example fields differ");
    auto emitted = rts::emit_trace("GetTime", 0, rts::Direction::Out, {"Time", fields});
    expect(emitted.size() == 1, "example split");
    auto again = trace::parse_log(std::span<const std::string>(emitted));
    expect(again.records.size() == 1 && again.records[0] == parsed.records[0], "round trip differs");

    rts::ServiceTable table;
    auto hooks = rts::trace_all_hooks();
    table.install_hooks(hooks);
    rts::VectorSink sink;
    table.dispatch({rts::Service::GetTime, 0, {}}, &sink);
    auto live = trace::parse_log(std::span<const std::string>(sink.lines));
    expect(!live.records.empty() && live.records[0].data == fields, "GetTime hook output differs");
    return std::to_string(lines_checked) + " lines checked";
  }

  rts::RtsErrc
  rts_error_of(const std::function<void()>& fn)
  {
    try
      {
        fn();
      }
    catch (const rts::RtsError& e)
      {
        return e.code();
      }
    throw Failure{"expected an error"};
  }

  std::string
  hook_state_machine()
  {
    // Ordering: hooks go in before conversion, conversion happens once, and
    // a scenario needs hooks.
    {
      rts::ServiceTable t;
      rts::VectorSink sink;
      t.dispatch({rts::Service::GetTime, 0, {}}, &sink);
      expect(sink.lines.empty(), "unhooked service traced");
      expect(rts_error_of([&] { rts::run_scenario(rts::builtin_scenario("boot"), t, {}, sink); })
                 == rts::RtsErrc::NotHooked,
             "scenario ran without hooks");
      std::vector<rts::Hook> late{{rts::Service::GetTime, rts::TraceOnly{}, rts::Phase::Runtime}};
      expect(rts_error_of([&] { t.install_hooks(late); }) == rts::RtsErrc::WrongPhase, "runtime install");
      auto hooks = rts::trace_all_hooks();
      t.install_hooks(hooks);
      t.set_virtual_address_map(0x1000);
      expect(rts_error_of([&] { t.install_hooks(hooks); }) == rts::RtsErrc::WrongPhase,
             "install after conversion");
      expect(rts_error_of([&] { t.set_virtual_address_map(0); }) == rts::RtsErrc::AlreadyVirtual,
             "second conversion");
      expect(rts_error_of([&] { rts::run_scenario(rts::builtin_scenario("boot"), t, {}, sink); })
                 == rts::RtsErrc::WrongPhase,
             "scenario on converted table");
    }

    // Record-by-record equality across conversion offsets.
    std::vector<std::string> reference;
    for (std::int64_t offset : {std::int64_t{0}, std::int64_t{-0x7f000000}, std::int64_t{0x12345000}})
      {
        auto lines = analyze("reboot", 5, offset).lines;
        if (reference.empty())
          {
            reference = lines;
            continue;
          }
        expect(lines.size() == reference.size(), "line count differs at offset " + std::to_string(offset));
        for (std::size_t i = 0; i < lines.size(); ++i)
          expect(lines[i] == reference[i], "record " + std::to_string(i) + " differs");
      }

    // ForcedReset.
    rts::ServiceTable t;
    std::vector<rts::Hook> hooks{{rts::Service::GetVariable, rts::ForcedReset{"SecureBoot"}, rts::Phase::Dxe},
                                 {rts::Service::ResetSystem, rts::TraceOnly{}, rts::Phase::Dxe}};
    t.install_hooks(hooks);
    t.set_virtual_address_map(-0x7f000000);
    rts::VectorSink sink;
    const auto gv = static_cast<std::size_t>(rts::Service::GetVariable);
    auto miss = t.dispatch({rts::Service::GetVariable, 0,
                            rts::variable_call_args(rts::Service::GetVariable, "BootOrder")}, &sink);
    expect(miss.status == rts::Status::Success && t.firmware().invocations[gv] == 1, "non-matching call");
    auto hit = t.dispatch({rts::Service::GetVariable, 1,
                           rts::variable_call_args(rts::Service::GetVariable, "SecureBoot")}, &sink);
    expect(hit.status == rts::Status::ResetTriggered, "no reset on match");
    expect(t.firmware().invocations[gv] == 1, "original GetVariable ran on match");
    expect(t.firmware().reset_requests == 1, "reset not requested");
    return std::to_string(reference.size()) + " records x 3 offsets";
  }

  // --- diff -------------------------------------------------------------

  std::string
  diff_oracle(const fs::path& dir)
  {
    std::mt19937_64 rng(77);
    for (int round = 0; round < 200; ++round)
      {
        // Random layout of at most 256 pages, page aligned.
        std::vector<memory::MemoryRange> ranges;
        std::uint64_t at = 0;
        std::uint64_t budget = 1 + rng() % 256;
        while (at / 4096 < budget)
          {
            std::uint64_t len = std::min<std::uint64_t>(1 + rng() % 64, budget - at / 4096) * 4096;
            auto purpose = rng() % 4 ? memory::RangePurpose::SystemRam : memory::RangePurpose::Reserved;
            ranges.push_back({at, at + len - 1, purpose});
            at += len;
          }
        ranges.front().purpose = memory::RangePurpose::SystemRam;
        auto map = memory::MemoryMap::create(ranges);

        auto a = memory::new_image(map, rng(), "A");
        memory::FootprintProfile p;
        for (const auto& r : map.ranges())
          if (r.purpose == memory::RangePurpose::SystemRam && rng() % 2)
            {
              std::uint64_t start = r.start + rng() % r.size();
              std::uint64_t len = 1 + rng() % (r.end - start + 1);
              p.overwrite_regions.push_back({start, len,
                                             rng() % 2 ? memory::FillMode::Zero : memory::FillMode::PseudoRandom,
                                             rng()});
            }
        p.decay_bitflip_rate = rng() % 3 ? 0.0 : 1e-4;
        auto b = memory::apply_footprint(a, p, rng()).with_provenance("B");

        memory::write_raw_dump(a, dir / "a.raw");
        memory::write_raw_dump(b, dir / "b.raw");
        auto x = testutil::read_file(dir / "a.raw"), y = testutil::read_file(dir / "b.raw");
        std::uint64_t bytes = 0;
        std::set<std::uint64_t> pages;
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] != y[i])
            {
              ++bytes;
              pages.insert(i / 4096);
            }

        diff::DiffOptions opts;
        opts.chunk_pages = 1 + rng() % 100;
        opts.threads = 1 + rng() % 3;
        auto rep = diff::diff(a, b, opts);
        std::string tag = "round " + std::to_string(round);
        expect(rep.total_bytes == x.size() && rep.total_pages == (x.size() + 4095) / 4096, tag + " totals");
        expect(rep.bytes_differing == bytes, tag + " bytes");
        expect(rep.pages_differing == pages.size(), tag + " pages");
        for (std::uint64_t pg = 0; pg < rep.total_pages; ++pg)
          expect(rep.page_bitmap.test(pg) == (pages.count(pg) > 0), tag + " bitmap");
      }

    // 24.6 MiB of 2048 MiB.
    const std::uint64_t bytes = 25794970;   // round(24.6 * 2^20)
    expect(diff::format_mib(bytes) == "24.6", "24.6 MiB formats as " + diff::format_mib(bytes));
    expect(diff::format_percent(bytes, kTable1Bytes) + " %" == "1.2 %",
           "proportion formats as " + diff::format_percent(bytes, kTable1Bytes));
    return "200 rounds";
  }

  std::string
  visualization()
  {
    diff::DiffReport rep;
    rep.total_pages = 524288;
    rep.total_bytes = rep.total_pages * 4096;
    rep.page_size = 4096;
    rep.page_bitmap = diff::PageBitmap(rep.total_pages);
    rep.page_bitmap.set(0);
    rep.page_bitmap.set(513);
    auto pm = diff::render_diff(rep);
    expect(pm.width == 512 && pm.height == 1024,
           std::to_string(pm.width) + "x" + std::to_string(pm.height));
    auto same = [](diff::Rgb a, diff::Rgb b) { return a.r == b.r && a.g == b.g && a.b == b.b; };
    expect(same(pm.at(0, 1023), diff::kDifferColor), "page 0 is not bottom-left");
    expect(same(pm.at(1, 1022), diff::kDifferColor), "page 513 misplaced");
    expect(same(pm.at(1, 1023), diff::kEqualColor), "page 1 misplaced");
    expect(same(pm.at(511, 0), diff::kEqualColor), "last page misplaced");

    std::mt19937_64 rng(50);
    for (int i = 0; i < 50; ++i)
      {
        std::uint64_t pages = 1 + rng() % 20000;
        std::uint32_t h = diff::pixmap_height(pages);
        expect(h == (pages + 511) / 512, "height for " + std::to_string(pages));
        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        for (std::uint64_t pg = 0; pg < pages; ++pg)
          {
            auto pos = diff::page_to_pixel(pg, h);
            expect(pos.x < 512 && pos.y < h, "pixel out of range");
            // Row from the bottom, column left to right.
            expect(pos.x == pg % 512 && pos.y == h - 1 - pg / 512, "layout of page " + std::to_string(pg));
            expect(seen.insert({pos.x, pos.y}).second, "two pages on one pixel");
            expect(diff::pixel_to_page(pos, h) == pg, "inverse");
          }
        diff::DiffReport r;
        r.total_pages = pages;
        r.page_bitmap = diff::PageBitmap(pages);
        auto img = diff::render_diff(r);
        std::uint64_t padding = 0;
        for (const auto& px : img.pixels)
          padding += same(px, diff::kPaddingColor);
        expect(padding == std::uint64_t{h} * 512 - pages, "padding count");
      }
    return "";
  }

  // --- pipeline ---------------------------------------------------------

  std::set<std::uint64_t>
  pages_of(const memory::FootprintProfile& p)
  {
    std::set<std::uint64_t> out;
    for (const auto& r : p.overwrite_regions)
      for (std::uint64_t pg = r.start / 4096; pg <= (r.start + r.length - 1) / 4096; ++pg)
        out.insert(pg);
    return out;
  }

  std::set<std::uint64_t>
  bitmap_pages(const diff::PageBitmap& b)
  {
    std::set<std::uint64_t> out;
    for (std::uint64_t pg = 0; pg < b.size(); ++pg)
      if (b.test(pg))
        out.insert(pg);
    return out;
  }

  std::string
  pipeline(const fs::path& dir)
  {
    auto map = memory::MemoryMap::create({{0x0, 0x9ffff, memory::RangePurpose::SystemRam},
                                          {0xa0000, 0xfffff, memory::RangePurpose::Reserved},
                                          {0x100000, 0x3ffffff, memory::RangePurpose::SystemRam}});
    memory::save_map(map, dir / "map.json");
    memory::FootprintProfile p;
    p.overwrite_regions.push_back({0x1000000, 0x700000, memory::FillMode::PseudoRandom, 1});
    p.overwrite_regions.push_back({0x3e00123, 0x10000, memory::FillMode::PseudoRandom, 2});
    std::ofstream(dir / "profile.json") << memory::profile_to_json(p);

    cli::PipelineConfig c;
    c.map_file = dir / "map.json";
    c.profile_file = dir / "profile.json";
    c.seed = 9;
    c.out_dir = dir / "zero";
    auto r = cli::cmd_pipeline(c);
    expect(r.reports.size() == 6 && r.reports[0].dump_a == "Q1" && r.reports[3].dump_b == "UF", "row order");
    expect(bitmap_pages(r.reports[0].page_bitmap) == pages_of(p), "diff(Q1,Q2) pages != profile pages");
    expect(r.reports[3].pages_differing == 0, "diff(Q2,UF) not empty without acquisition footprint");

    memory::FootprintProfile a;
    a.overwrite_regions.push_back({0x2000800, 0x20000, memory::FillMode::PseudoRandom, 0xA});
    c.acquisition_footprint_start = a.overwrite_regions[0].start;
    c.acquisition_footprint_bytes = a.overwrite_regions[0].length;
    c.out_dir = dir / "acq";
    auto s = cli::cmd_pipeline(c);
    auto q2uf = bitmap_pages(s.reports[3].page_bitmap);
    auto allowed = pages_of(a);
    expect(!q2uf.empty(), "acquisition footprint invisible");
    for (auto pg : q2uf)
      expect(allowed.count(pg), "page " + std::to_string(pg) + " outside the acquisition footprint");
    expect(bitmap_pages(s.reports[0].page_bitmap) == pages_of(p), "diff(Q1,Q2) changed");
    return std::to_string(r.reports[0].pages_differing) + " footprint pages, "
           + std::to_string(q2uf.size()) + " acquisition pages";
  }

}


int
main()
{
  testutil::TempDir dir;
  BigFiles big{dir / "Q1.raw", dir / "Q2.raw"};
  bool have_big = false;
  std::string big_error;
  try
    {
      auto map = memory::MemoryMap::qemu_2gib();
      auto q1 = memory::new_image(map, 1, "Q1");
      memory::write_raw_dump(q1, big.q1);
      memory::write_raw_dump(memory::apply_footprint(q1, memory::FootprintProfile::ovmf_reboot(), 1),
                             big.q2);
      have_big = true;
    }
  catch (const std::exception& e)
    {
      big_error = e.what();
    }

  auto needs_big = [&](auto fn) {
    return [&, fn] {
      if (!have_big)
        throw Failure{"could not write 2 GiB dumps: " + big_error};
      return fn();
    };
  };

  criterion("performance: 2 GiB x 2 GiB diff < 30 s, RSS < 256 MiB",
            needs_big([&] { return performance(big); }));
  criterion("acquisition fidelity: 2 GiB loopback", needs_big([&] { return acquisition_fidelity(big, dir.path()); }));
  fs::remove(big.q1);
  fs::remove(big.q2);

  criterion("scenario counts: call table reproduced exactly", scenario_counts);
  criterion("deltas: login +32 on OsIndications*, second boot +45/+69/-55", deltas);
  criterion("trace format: line bound, 1000 random maps, GetTime example", trace_format);
  criterion("hook state machine: ordering, offset invariance, ForcedReset", hook_state_machine);
  criterion("diff engine: 200 oracle rounds, 1.2 % row", [&] { return diff_oracle(dir.path()); });
  criterion("visualization: 512x1024, bottom-left origin, bijection", visualization);
  criterion("pipeline: footprint pages, empty Q2/UF, acquisition subset", [&] { return pipeline(dir.path()); });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
