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

#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

using namespace ueforensics;
using namespace ueforensics::cli;
using json = nlohmann::ordered_json;


namespace
{

  template <typename F>
  auto
  stage(const std::string& name, F&& fn) -> decltype(fn())
  {
    try
      {
        return fn();
      }
    catch (const StageError&)
      {
        throw;
      }
    catch (const std::exception& e)
      {
        throw StageError(name, e.what());
      }
  }

  std::string
  read_text(const fs::path& path)
  {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  void
  write_text(const fs::path& path, const std::string& text)
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out)
      throw std::runtime_error("cannot write " + path.string());
  }

  std::uint64_t
  number_or_address(const json& v)
  {
    if (v.is_string())
      return memory::parse_address(v.get<std::string>());
    return v.get<std::uint64_t>();
  }

  std::string
  json_text(const json& j)
  {
    return j.dump(2);
  }

  std::string
  digest_hex(const wire::Digest& d)
  {
    return acquisition::to_hex(d);
  }

  rts::ScenarioSpec
  resolve_scenario(const std::string& name)
  {
    if (fs::is_regular_file(name))
      return rts::scenario_from_json(read_text(name));
    return rts::builtin_scenario(name);
  }

  std::vector<std::string>
  generate_log(const rts::ScenarioSpec& spec, std::uint64_t seed)
  {
    rts::ServiceTable table;
    auto hooks = rts::trace_all_hooks();
    table.install_hooks(hooks);
    rts::VectorSink sink;
    rts::run_scenario(spec, table, {seed, rts::ScenarioOptions{}.virtual_offset}, sink);
    return std::move(sink.lines);
  }

  struct Analyzed
  {
    std::string label;
    std::vector<trace::CallSummary> calls;
    rts::CallStats stats;
    std::size_t issues = 0;
  };

  Analyzed
  analyze_text(std::string label, std::string_view text)
  {
    Analyzed a{std::move(label), {}, {}, 0};
    auto parsed = trace::parse_log(text);
    auto calls = trace::reassemble_calls(parsed.records);
    a.issues = parsed.issues.size() + calls.issues.size();
    a.calls = std::move(calls.calls);
    a.stats = trace::count_by_service(a.calls);
    return a;
  }

  // A log file if one exists at `source`, else a built-in scenario.
  Analyzed
  analyze_source(const std::string& source, std::uint64_t seed)
  {
    if (fs::is_regular_file(source))
      return analyze_text(fs::path(source).stem().string(), read_text(source));
    std::string text;
    for (const auto& line : generate_log(rts::builtin_scenario(source), seed))
      text += line + "\n";
    return analyze_text(source, text);
  }

  std::vector<diff::LabeledSource>
  file_sources(const std::vector<fs::path>& paths)
  {
    std::vector<diff::LabeledSource> out;
    for (const auto& p : paths)
      out.push_back({p.stem().string(), diff::file_source(p)});
    return out;
  }

  json
  summary_json(const acquisition::AcquisitionSummary& s)
  {
    return {{"pages_sent", s.pages_sent},
            {"bytes_sent", s.bytes_sent},
            {"first_ts_ns", s.first_ts_ns},
            {"last_ts_ns", s.last_ts_ns},
            {"digest", digest_hex(s.digest)}};
  }

  json
  artifact_json(const acquisition::DumpArtifact& a)
  {
    return {{"raw_dump", a.raw_dump_path.string()},
            {"metadata", a.metadata_path.string()},
            {"pages_received", a.pages_received},
            {"atomicity_window_ns", a.atomicity_window_ns},
            {"digest_verified", a.digest_verified}};
  }

  std::string
  artifact_text(const std::string& name, const acquisition::DumpArtifact& a)
  {
    std::ostringstream out;
    out << name << ": " << a.raw_dump_path.string() << ", " << a.pages_received << " pages, window "
        << a.atomicity_window_ns << " ns, digest " << (a.digest_verified ? "verified" : "MISMATCH")
        << "\n";
    return out.str();
  }

}


PipelineConfig
ueforensics::cli::load_config(const fs::path& path)
{
  json j;
  try
    {
      j = json::parse(read_text(path));
    }
  catch (const json::exception& e)
    {
      throw StageError("config", path.string() + ": " + e.what());
    }
  catch (const std::exception& e)
    {
      throw StageError("config", e.what());
    }
  if (!j.is_object())
    throw StageError("config", path.string() + " is not a JSON object");

  const fs::path base = path.parent_path();
  auto resolve = [&](const json& v) {
    fs::path p = v.get<std::string>();
    return p.is_relative() ? base / p : p;
  };

  PipelineConfig c;
  return stage("config", [&] {
    for (const auto& [key, v] : j.items())
      {
        if (key == "map")
          c.map_file = resolve(v);
        else if (key == "seed")
          c.seed = number_or_address(v);
        else if (key == "profile")
          c.profile_file = resolve(v);
        else if (key == "footprint")
          c.footprint = v.get<bool>();
        else if (key == "acquisition_footprint_bytes")
          c.acquisition_footprint_bytes = number_or_address(v);
        else if (key == "acquisition_footprint_start")
          c.acquisition_footprint_start = number_or_address(v);
        else if (key == "post_profile")
          c.post_profile_file = resolve(v);
        else if (key == "out")
          c.out_dir = resolve(v);
        else if (key == "scenario")
          c.scenario = v.get<std::string>();
        else if (key == "listen")
          c.listen = v.get<std::string>();
        else if (key == "to")
          c.to = v.get<std::string>();
        else if (key == "threads")
          c.threads = v.get<unsigned>();
        else
          throw std::runtime_error("unknown key '" + key + "'");
      }
    return c;
  });
}


memory::MemoryMap
ueforensics::cli::resolve_map(const PipelineConfig& config)
{
  return stage("map", [&] {
    return config.map_file ? memory::load_map(*config.map_file) : memory::MemoryMap::qemu_2gib();
  });
}


memory::FootprintProfile
ueforensics::cli::resolve_profile(const PipelineConfig& config)
{
  return stage("profile", [&] {
    if (!config.footprint)
      return memory::FootprintProfile{};
    return config.profile_file ? memory::load_profile(*config.profile_file)
                               : memory::FootprintProfile::ovmf_reboot();
  });
}


SimulateResult
ueforensics::cli::cmd_simulate(const PipelineConfig& config)
{
  auto map = resolve_map(config);
  auto profile = resolve_profile(config);
  SimulateResult r;
  r.pre_reset = config.out_dir / "Q1.raw";
  r.post_reset = config.out_dir / "Q2.raw";

  auto q1 = stage("Q1", [&] {
    fs::create_directories(config.out_dir);
    memory::save_map(map, config.out_dir / "map.json");
    auto image = memory::new_image(map, config.seed, "Q1");
    memory::write_raw_dump(image, r.pre_reset);
    return image;
  });
  auto q2 = stage("Q2", [&] {
    auto image = memory::apply_footprint(q1, profile, config.seed).with_provenance("Q2");
    memory::write_raw_dump(image, r.post_reset);
    return image;
  });

  r.output.text = "Q1 " + r.pre_reset.string() + " (" + std::to_string(map.top()) + " bytes)\n"
                  + "Q2 " + r.post_reset.string() + " (" + std::to_string(q2.overlay_pages())
                  + " rewritten pages)\n";
  r.output.json = json_text({{"seed", config.seed},
                             {"bytes", map.top()},
                             {"pre_reset", r.pre_reset.string()},
                             {"post_reset", r.post_reset.string()},
                             {"map", (config.out_dir / "map.json").string()},
                             {"rewritten_pages", q2.overlay_pages()}});
  return r;
}


PipelineResult
ueforensics::cli::cmd_pipeline(const PipelineConfig& config)
{
  auto map = resolve_map(config);
  auto profile = resolve_profile(config);
  auto post_profile = stage("profile", [&] {
    return config.post_profile_file ? memory::load_profile(*config.post_profile_file)
                                    : memory::FootprintProfile{};
  });

  PipelineResult r;
  const fs::path& out = config.out_dir;
  r.q1 = out / "Q1.raw";
  r.q2 = out / "Q2.raw";
  r.q3 = out / "Q3.raw";

  auto q1 = stage("Q1", [&] {
    fs::create_directories(out);
    memory::save_map(map, out / "map.json");
    auto image = memory::new_image(map, config.seed, "Q1");
    memory::write_raw_dump(image, r.q1);
    return image;
  });

  auto q2 = stage("Q2", [&] {
    auto image = memory::apply_footprint(q1, profile, config.seed).with_provenance("Q2");
    memory::write_raw_dump(image, r.q2);
    return image;
  });

  // State of the machine while the agent reads it.
  auto live = stage("acquisition footprint", [&] {
    if (config.acquisition_footprint_bytes == 0)
      return q2;
    memory::FootprintProfile during;
    during.overwrite_regions.push_back({config.acquisition_footprint_start,
                                        config.acquisition_footprint_bytes,
                                        memory::FillMode::PseudoRandom, 0xA});
    return memory::apply_footprint(q2, during, config.seed + 1);
  });

  acquisition::AcquisitionSummary sent;
  r.uf_artifact = stage("UF", [&] {
    auto listener = acquisition::Listener::bind(acquisition::Endpoint::parse(config.listen));
    auto endpoint = listener.local_endpoint();
    acquisition::DumpArtifact artifact;
    std::exception_ptr receive_error;
    std::thread receiver([&] {
      try
        {
          artifact = acquisition::receive(listener, out, "UF");
        }
      catch (...)
        {
          receive_error = std::current_exception();
        }
    });
    try
      {
        sent = acquisition::acquire(live, endpoint);
      }
    catch (...)
      {
        // Unblock a receiver still waiting in accept.
        try
          {
            acquisition::connect_to(endpoint);
          }
        catch (...)
          {
          }
        receiver.join();
        throw;
      }
    receiver.join();
    if (receive_error)
      std::rethrow_exception(receive_error);
    if (!artifact.digest_verified)
      throw std::runtime_error("received dump failed digest verification");
    return artifact;
  });
  r.uf = r.uf_artifact.raw_dump_path;

  stage("Q3", [&] {
    auto image = memory::apply_footprint(live, post_profile, config.seed + 2).with_provenance("Q3");
    memory::write_raw_dump(image, r.q3);
    return 0;
  });

  r.reports = stage("diff", [&] {
    diff::DiffOptions opts;
    opts.threads = config.threads;
    auto sources = file_sources({r.q1, r.q2, r.uf, r.q3});
    return diff::pairwise_report(sources, opts);
  });

  stage("render", [&] {
    for (const auto& report : r.reports)
      {
        fs::path p = out / ("diff-" + report.dump_a + "-" + report.dump_b + ".ppm");
        diff::write_ppm(diff::render_diff(report), p);
        r.pixmaps.push_back(p);
      }
    return 0;
  });

  std::string table = diff::format_table(r.reports);
  std::string report_json = diff::report_to_json(r.reports);
  stage("report", [&] {
    r.table_path = out / "table.txt";
    r.report_path = out / "report.json";
    write_text(r.table_path, table);
    write_text(r.report_path, report_json);
    return 0;
  });

  r.output.text = artifact_text("UF", r.uf_artifact) + "\n" + table;
  json j = json::parse(report_json);
  j["seed"] = config.seed;
  j["acquisition"] = {{"sent", summary_json(sent)}, {"received", artifact_json(r.uf_artifact)}};
  json files = json::object();
  files["Q1"] = r.q1.string();
  files["Q2"] = r.q2.string();
  files["UF"] = r.uf.string();
  files["Q3"] = r.q3.string();
  j["dumps"] = std::move(files);
  json pix = json::array();
  for (const auto& p : r.pixmaps)
    pix.push_back(p.string());
  j["pixmaps"] = std::move(pix);
  r.output.json = json_text(j);
  return r;
}


Output
ueforensics::cli::cmd_acquire(const PipelineConfig& config, const std::optional<fs::path>& image)
{
  auto map = resolve_map(config);
  auto source = stage("image", [&] {
    return image ? memory::load_raw_dump(*image, map, image->stem().string())
                 : memory::new_image(map, config.seed, "seeded");
  });
  auto summary = stage("acquire", [&] {
    if (config.to.empty())
      throw std::runtime_error("no receiver endpoint given (--to host:port)");
    return acquisition::acquire(source, acquisition::Endpoint::parse(config.to));
  });
  Output o;
  o.text = "sent " + std::to_string(summary.pages_sent) + " pages ("
           + std::to_string(summary.bytes_sent) + " bytes) to " + config.to + "\nsha256 "
           + digest_hex(summary.digest) + "\nwindow "
           + std::to_string(summary.last_ts_ns - summary.first_ts_ns) + " ns\n";
  o.json = json_text(summary_json(summary));
  return o;
}


Output
ueforensics::cli::cmd_receive(const PipelineConfig& config, const std::string& name,
                              std::size_t sessions,
                              const std::function<void(const acquisition::Endpoint&)>& on_listening)
{
  auto listener = stage("listen", [&] {
    fs::create_directories(config.out_dir);
    return acquisition::Listener::bind(acquisition::Endpoint::parse(config.listen));
  });
  if (on_listening)
    on_listening(listener.local_endpoint());

  Output o;
  json list = json::array();
  if (sessions <= 1)
    {
      auto artifact = stage("receive", [&] { return acquisition::receive(listener, config.out_dir, name); });
      o.text = artifact_text(name, artifact);
      list.push_back(artifact_json(artifact));
      list.back()["name"] = name;
    }
  else
    {
      auto outcomes = stage("receive", [&] {
        return acquisition::serve(listener, config.out_dir, sessions, name);
      });
      std::string failures;
      for (const auto& s : outcomes)
        {
          json item = s.artifact ? artifact_json(*s.artifact) : json::object();
          item["name"] = s.name;
          if (s.artifact)
            {
              o.text += artifact_text(s.name, *s.artifact);
            }
          else
            {
              item["error"] = s.error;
              o.text += s.name + ": failed: " + s.error + "\n";
              failures += (failures.empty() ? "" : "; ") + s.name + ": " + s.error;
            }
          list.push_back(std::move(item));
        }
      if (!failures.empty())
        throw StageError("receive", failures);
    }
  o.json = json_text({{"sessions", std::move(list)}});
  return o;
}


Output
ueforensics::cli::cmd_diff(const fs::path& a, const fs::path& b, const std::optional<fs::path>& ppm,
                           unsigned threads)
{
  auto report = stage("diff", [&] {
    diff::DiffOptions opts;
    opts.threads = threads;
    return diff::diff_files(a, b, opts);
  });
  if (ppm)
    stage("render", [&] {
      diff::write_ppm(diff::render_diff(report), *ppm);
      return 0;
    });
  std::vector<diff::DiffReport> one{report};
  return {diff::format_table(one), diff::report_to_json(one)};
}


Output
ueforensics::cli::cmd_render(const fs::path& a, const fs::path& b, const fs::path& ppm, unsigned threads)
{
  Output o = cmd_diff(a, b, ppm, threads);
  auto j = json::parse(o.json);
  j["pixmap"] = ppm.string();
  o.text += "pixmap " + ppm.string() + "\n";
  o.json = json_text(j);
  return o;
}


Output
ueforensics::cli::cmd_table(const std::vector<fs::path>& dumps, const fs::path& out_dir, unsigned threads)
{
  auto reports = stage("diff", [&] {
    diff::DiffOptions opts;
    opts.threads = threads;
    auto sources = file_sources(dumps);
    return diff::pairwise_report(sources, opts);
  });
  Output o{diff::format_table(reports), diff::report_to_json(reports)};
  stage("report", [&] {
    fs::create_directories(out_dir);
    write_text(out_dir / "table.txt", o.text);
    write_text(out_dir / "report.json", o.json);
    return 0;
  });
  return o;
}


Output
ueforensics::cli::cmd_trace(const std::string& scenario, std::uint64_t seed, const fs::path& log_path)
{
  auto spec = stage("scenario", [&] { return resolve_scenario(scenario); });
  auto stats = stage("trace", [&] {
    if (log_path.has_parent_path())
      fs::create_directories(log_path.parent_path());
    std::ofstream out(log_path, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write " + log_path.string());
    rts::ServiceTable table;
    auto hooks = rts::trace_all_hooks();
    table.install_hooks(hooks);
    rts::StreamSink sink(out);
    auto s = rts::run_scenario(spec, table, {seed, rts::ScenarioOptions{}.virtual_offset}, sink);
    out.flush();
    if (!out)
      throw std::runtime_error("cannot write " + log_path.string());
    return s;
  });
  std::vector<std::pair<std::string, rts::CallStats>> column{{spec.name, stats}};
  return {trace::format_stats_table(column) + "log " + log_path.string() + "\n",
          trace::stats_to_json(spec.name, stats)};
}


Output
ueforensics::cli::cmd_trace_stats(const std::vector<fs::path>& logs)
{
  std::vector<Analyzed> analyzed;
  for (const auto& log : logs)
    analyzed.push_back(stage("trace-stats", [&] {
      return analyze_text(log.stem().string(), read_text(log));
    }));

  std::vector<std::pair<std::string, rts::CallStats>> columns;
  json list = json::array();
  std::string notes;
  for (const auto& a : analyzed)
    {
      columns.emplace_back(a.label, a.stats);
      json j = json::parse(trace::stats_to_json(a.label, a.stats));
      j["issues"] = a.issues;
      list.push_back(std::move(j));
      if (a.issues)
        notes += a.label + ": " + std::to_string(a.issues) + " malformed records skipped\n";
    }
  return {trace::format_stats_table(columns) + notes,
          json_text(list.size() == 1 ? list[0] : list)};
}


Output
ueforensics::cli::cmd_trace_diff(const std::string& a, const std::string& b, std::uint64_t seed)
{
  auto left = stage("trace-diff", [&] { return analyze_source(a, seed); });
  auto right = stage("trace-diff", [&] { return analyze_source(b, seed); });
  auto delta = trace::compare_scenarios(left.stats, right.stats);
  return {trace::format_delta(left.label, right.label, delta),
          trace::delta_to_json(left.label, right.label, delta)};
}


Output
ueforensics::cli::cmd_trace_segments(const std::string& source, std::uint64_t seed)
{
  auto analyzed = stage("trace-diff", [&] { return analyze_source(source, seed); });
  auto segments = trace::split_boot_segments(analyzed.calls);
  if (segments.size() < 2)
    throw StageError("trace-diff", analyzed.label + " contains " + std::to_string(segments.size())
                                       + " boot(s); two are needed");
  auto first = trace::count_by_service(segments[0]);
  auto second = trace::count_by_service(segments[1]);
  auto delta = trace::compare_scenarios(first, second);

  std::string a = analyzed.label + "#1", b = analyzed.label + "#2";
  std::vector<std::pair<std::string, rts::CallStats>> columns{{a, first}, {b, second}};
  json j = json::parse(trace::delta_to_json(a, b, delta));
  j["first"] = json::parse(trace::stats_to_json(a, first));
  j["second"] = json::parse(trace::stats_to_json(b, second));
  return {trace::format_stats_table(columns) + "\n" + trace::format_delta(a, b, delta), json_text(j)};
}


Output
ueforensics::cli::cmd_scenario(const std::string& name)
{
  auto spec = stage("scenario", [&] { return rts::builtin_scenario(name); });
  std::string j = rts::scenario_to_json(spec);
  return {j + "\n", j};
}
