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

#include <doctest.h>

#include "test_util.hpp"
#include "ueforensics/cli.hpp"

#include <fstream>
#include <future>
#include <map>
#include <thread>

#include <json.hpp>

using namespace ueforensics;
using namespace ueforensics::cli;
using json = nlohmann::json;
using memory::FillMode;
using memory::RangePurpose;


namespace
{

  memory::MemoryMap
  small_map()
  {
    return memory::MemoryMap::create({{0x0, 0x9ffff, RangePurpose::SystemRam},
                                      {0xa0000, 0xfffff, RangePurpose::Reserved},
                                      {0x100000, 0x3ffffff, RangePurpose::SystemRam}});
  }

  constexpr std::uint64_t kAcqBytes = 0x10000;

  PipelineConfig
  small_config(const testutil::TempDir& dir, const std::string& out)
  {
    memory::save_map(small_map(), dir / "map.json");
    memory::FootprintProfile p;
    p.overwrite_regions.push_back({0x1000000, 0x200000, FillMode::PseudoRandom, 1});
    std::ofstream(dir / "profile.json") << memory::profile_to_json(p);

    PipelineConfig c;
    c.map_file = dir / "map.json";
    c.profile_file = dir / "profile.json";
    c.seed = 42;
    c.acquisition_footprint_bytes = kAcqBytes;
    c.acquisition_footprint_start = 0x2000000;
    c.out_dir = dir / out;
    return c;
  }

  // Byte-by-byte count, independent of the diff engine.
  std::pair<std::uint64_t, std::uint64_t>
  naive_diff(const fs::path& a, const fs::path& b)
  {
    auto x = testutil::read_file(a), y = testutil::read_file(b);
    REQUIRE(x.size() == y.size());
    std::uint64_t bytes = 0, pages = 0;
    for (std::size_t page = 0; page * 4096 < x.size(); ++page)
      {
        std::uint64_t here = 0;
        for (std::size_t i = page * 4096; i < std::min(x.size(), (page + 1) * 4096); ++i)
          here += x[i] != y[i];
        bytes += here;
        pages += here != 0;
      }
    return {pages, bytes};
  }

  std::string
  stage_of(const std::function<void()>& fn)
  {
    try
      {
        fn();
      }
    catch (const StageError& e)
      {
        return e.stage();
      }
    return "";
  }

}


TEST_CASE("simulate writes two images of map.top bytes, deterministic in seed")
{
  testutil::TempDir dir;
  auto c = small_config(dir, "a");
  auto a = cmd_simulate(c);
  CHECK(fs::file_size(a.pre_reset) == small_map().top());
  CHECK(fs::file_size(a.post_reset) == small_map().top());
  CHECK(fs::exists(c.out_dir / "map.json"));

  c.out_dir = dir / "b";
  auto b = cmd_simulate(c);
  CHECK(testutil::files_equal(a.pre_reset, b.pre_reset));
  CHECK(testutil::files_equal(a.post_reset, b.post_reset));
  auto ja = json::parse(a.output.json), jb = json::parse(b.output.json);
  CHECK(ja["rewritten_pages"] == jb["rewritten_pages"]);
  CHECK(ja["bytes"] == jb["bytes"]);

  c.out_dir = dir / "c";
  c.seed = 43;
  auto d = cmd_simulate(c);
  CHECK_FALSE(testutil::files_equal(a.pre_reset, d.pre_reset));

  // Rewritten region only.
  auto [pages, bytes] = naive_diff(a.pre_reset, a.post_reset);
  CHECK(pages == 0x200000 / 4096);
  CHECK(bytes <= 0x200000);
}


TEST_CASE("pipeline emits six rows in order that match a naive byte count")
{
  testutil::TempDir dir;
  auto c = small_config(dir, "out");
  auto r = cmd_pipeline(c);

  REQUIRE(r.reports.size() == 6);
  const std::pair<const char*, const char*> order[] = {{"Q1", "Q2"}, {"Q1", "UF"}, {"Q1", "Q3"},
                                                       {"Q2", "UF"}, {"Q2", "Q3"}, {"UF", "Q3"}};
  std::map<std::string, fs::path> files{{"Q1", r.q1}, {"Q2", r.q2}, {"UF", r.uf}, {"Q3", r.q3}};
  for (std::size_t i = 0; i < 6; ++i)
    {
      CAPTURE(i);
      CHECK(r.reports[i].dump_a == order[i].first);
      CHECK(r.reports[i].dump_b == order[i].second);
      auto [pages, bytes] = naive_diff(files[order[i].first], files[order[i].second]);
      CHECK(r.reports[i].pages_differing == pages);
      CHECK(r.reports[i].bytes_differing == bytes);
    }

  CHECK(r.uf_artifact.digest_verified);
  CHECK(r.reports[3].bytes_differing > 0);
  CHECK(r.reports[3].bytes_differing <= kAcqBytes);
  CHECK(r.reports[3].pages_differing <= kAcqBytes / 4096);
  // No post profile: Q3 is the machine as the agent left it.
  CHECK(r.reports[5].bytes_differing == 0);

  CHECK(r.pixmaps.size() == 6);
  for (const auto& p : r.pixmaps)
    CHECK(fs::exists(p));
  CHECK(fs::exists(r.pixmaps[0].parent_path() / "diff-Q1-Q2.ppm"));
  auto table = testutil::read_file(r.table_path);
  CHECK(r.output.text.ends_with(std::string(table.begin(), table.end())));
  auto report = json::parse(std::ifstream(r.report_path));
  CHECK(report["pairs"].size() == 6);
  CHECK(json::parse(r.output.json)["pairs"] == report["pairs"]);
}


TEST_CASE("pipeline is deterministic and zero without footprints")
{
  testutil::TempDir dir;
  auto c = small_config(dir, "one");
  auto a = cmd_pipeline(c);
  c.out_dir = dir / "two";
  auto b = cmd_pipeline(c);
  CHECK(testutil::files_equal(a.uf, b.uf));
  CHECK(testutil::files_equal(a.q3, b.q3));
  CHECK(testutil::files_equal(a.table_path, b.table_path));
  CHECK(testutil::files_equal(a.report_path, b.report_path));

  c.out_dir = dir / "none";
  c.footprint = false;
  c.acquisition_footprint_bytes = 0;
  auto z = cmd_pipeline(c);
  for (const auto& rep : z.reports)
    {
      CHECK(rep.pages_differing == 0);
      CHECK(rep.bytes_differing == 0);
    }
  CHECK(z.output.text.find("1  Q1      Q2                0  0.0 MiB  0.0 %") != std::string::npos);
}


TEST_CASE("stage failures name the stage")
{
  testutil::TempDir dir;
  auto c = small_config(dir, "out");

  auto bad_profile = c;
  bad_profile.profile_file = dir / "missing.json";
  CHECK(stage_of([&] { cmd_pipeline(bad_profile); }) == "profile");

  // Default profile targets 2 GiB and does not fit the small map.
  auto default_profile = c;
  default_profile.profile_file.reset();
  CHECK(stage_of([&] { cmd_pipeline(default_profile); }) == "Q2");

  auto bad_acq = c;
  bad_acq.acquisition_footprint_start = 0xa0000;
  CHECK(stage_of([&] { cmd_pipeline(bad_acq); }) == "acquisition footprint");

  auto bad_listen = c;
  bad_listen.listen = "not-an-endpoint";
  CHECK(stage_of([&] { cmd_pipeline(bad_listen); }) == "UF");

  auto bad_map = c;
  std::ofstream(dir / "bad_map.json") << "{\"ranges\": 5}";
  bad_map.map_file = dir / "bad_map.json";
  CHECK(stage_of([&] { cmd_simulate(bad_map); }) == "map");

  CHECK(stage_of([&] { cmd_diff(dir / "map.json", dir / "profile.json", {}, 1); }) == "diff");
  CHECK(stage_of([&] { cmd_acquire(c, std::nullopt); }) == "acquire");
}


TEST_CASE("config file with relative paths, unknown keys rejected")
{
  testutil::TempDir dir;
  small_config(dir, "unused");
  std::ofstream(dir / "cfg.json") << R"({"map": "map.json", "seed": "0x10", "profile": "profile.json",
    "acquisition_footprint_bytes": 4096, "out": "res", "threads": 2, "footprint": true})";
  auto c = load_config(dir / "cfg.json");
  CHECK(c.map_file == dir / "map.json");
  CHECK(c.profile_file == dir / "profile.json");
  CHECK(c.seed == 16);
  CHECK(c.acquisition_footprint_bytes == 4096);
  CHECK(c.out_dir == dir / "res");
  CHECK(c.threads == 2);
  CHECK(resolve_map(c) == small_map());

  std::ofstream(dir / "typo.json") << R"({"sed": 1})";
  CHECK(stage_of([&] { load_config(dir / "typo.json"); }) == "config");
  std::ofstream(dir / "broken.json") << "{";
  CHECK(stage_of([&] { load_config(dir / "broken.json"); }) == "config");
}


TEST_CASE("acquire and receive commands over loopback")
{
  testutil::TempDir dir;
  auto c = small_config(dir, "recv");
  c.listen = "127.0.0.1:0";

  std::promise<acquisition::Endpoint> bound;
  auto ready = bound.get_future();
  Output received;
  std::thread receiver([&] {
    received = cmd_receive(c, "sent", 1, [&](const acquisition::Endpoint& ep) { bound.set_value(ep); });
  });
  auto sender = c;
  sender.to = ready.get().to_string();
  Output sent = cmd_acquire(sender, std::nullopt);
  receiver.join();

  memory::write_raw_dump(memory::new_image(small_map(), c.seed), dir / "expected.raw");
  CHECK(testutil::files_equal(c.out_dir / "sent.raw", dir / "expected.raw"));
  CHECK(json::parse(received.json)["sessions"][0]["digest_verified"] == true);
  CHECK(json::parse(sent.json)["pages_sent"] == (0xa0000 + 0x3f00000) / 4096);
}


TEST_CASE("trace commands")
{
  testutil::TempDir dir;
  auto log = dir / "boot.log";
  Output t = cmd_trace("boot", 0, log);
  CHECK(json::parse(t.json)["total"] == 1500);

  Output s = cmd_trace_stats({log});
  auto stats = json::parse(s.json);
  CHECK(stats["total"] == 1500);
  CHECK(stats["issues"] == 0);
  CHECK(s.text.find("Total                 1500") != std::string::npos);

  // Same seed, same log.
  cmd_trace("boot", 0, dir / "again.log");
  CHECK(testutil::files_equal(log, dir / "again.log"));

  Output d = cmd_trace_diff("boot", "login", 0);
  auto delta = json::parse(d.json);
  CHECK(delta["services"]["GetVariable"] == 32);
  CHECK(delta["total"] == 32);

  // A log file and a built-in name mix.
  CHECK(json::parse(cmd_trace_diff(log.string(), "boot", 0).json)["total"] == 0);

  std::ofstream(dir / "empty.log").close();
  Output e = cmd_trace_stats({dir / "empty.log"});
  CHECK(json::parse(e.json)["total"] == 0);
  CHECK(e.text.find("Total                    0") != std::string::npos);

  CHECK(stage_of([&] { cmd_trace("nonexistent", 0, dir / "x.log"); }) == "scenario");
  CHECK(stage_of([&] { cmd_trace_stats({dir / "missing.log"}); }) == "trace-stats");

  auto seg = json::parse(cmd_trace_segments("reboot", 0).json);
  CHECK(seg["services"]["GetVariable"] == 45);
  CHECK(seg["services"]["SetVariable"] == -55);
  CHECK(stage_of([&] { cmd_trace_segments("boot", 0); }) == "trace-diff");

  // Scenario JSON round trip through the trace command.
  std::ofstream(dir / "spec.json") << cmd_scenario("login").json;
  CHECK(json::parse(cmd_trace((dir / "spec.json").string(), 0, dir / "spec.log").json)["total"] == 1532);
}
