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
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

using namespace ueforensics::trace;
using ueforensics::rts::ArgData;
using ueforensics::rts::Direction;
using json = nlohmann::ordered_json;
namespace rts = ueforensics::rts;


namespace
{

  constexpr std::size_t kMaxContinuation = 256;

  std::string_view
  trim_left(std::string_view s)
  {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
      s.remove_prefix(1);
    return s;
  }

  std::string_view
  after_prefix(std::string_view line, bool& found)
  {
    line = trim_left(line);
    found = line.substr(0, rts::kTracePrefix.size()) == rts::kTracePrefix;
    return found ? line.substr(rts::kTracePrefix.size()) : std::string_view{};
  }

  // Tracks nesting over a growing text; complete() once the first object
  // closes.
  class ObjectScanner
  {
  public:
    void feed(std::string_view text)
    {
      for (char c : text)
        {
          if (done_)
            return;
          if (quote_)
            {
              if (escape_)
                escape_ = false;
              else if (c == '\\')
                escape_ = true;
              else if (c == quote_)
                quote_ = 0;
              continue;
            }
          if (c == '"' || c == '\'')
            quote_ = c;
          else if (c == '{' || c == '[')
            ++depth_, started_ = true;
          else if (c == '}' || c == ']')
            {
              --depth_;
              if (started_ && depth_ <= 0)
                done_ = true;
            }
        }
    }

    bool complete() const
    { return done_; }

  private:
    long depth_ = 0;
    char quote_ = 0;
    bool escape_ = false;
    bool started_ = false;
    bool done_ = false;
  };

  // Rewrites 'single quoted' strings as JSON strings.
  std::string
  normalize_quotes(std::string_view text)
  {
    std::string out;
    out.reserve(text.size());
    char quote = 0;
    bool escape = false;
    for (char c : text)
      {
        if (!quote)
          {
            if (c == '\'' || c == '"')
              {
                quote = c;
                out += '"';
              }
            else
              {
                out += c;
              }
            continue;
          }
        if (escape)
          {
            escape = false;
            if (quote == '\'' && c == '\'')
              out.back() = '\'';
            else
              out += c;
            continue;
          }
        if (c == '\\')
          {
            escape = true;
            out += c;
          }
        else if (c == quote)
          {
            quote = 0;
            out += '"';
          }
        else if (c == '"')
          {
            out += "\\\"";
          }
        else
          {
            out += c;
          }
      }
    return out;
  }

  std::optional<std::uint64_t>
  as_unsigned(const json& v)
  {
    if (v.is_number_unsigned())
      return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    return std::nullopt;
  }

  std::variant<TraceRecord, std::string>
  record_from(const json& j)
  {
    if (!j.is_object())
      return std::string("record is not a JSON object");

    TraceRecord r;
    auto service = j.find("service");
    if (service == j.end() || !service->is_string() || service->get<std::string>().empty())
      return std::string("missing or invalid 'service'");
    r.service = service->get<std::string>();

    auto id = j.find("id");
    if (id == j.end() || !as_unsigned(*id))
      return std::string("missing or invalid 'id'");
    r.id = *as_unsigned(*id);

    auto type = j.find("type");
    if (type == j.end() || !type->is_string())
      return std::string("missing or invalid 'type'");
    if (*type == "IN")
      r.type = Direction::In;
    else if (*type == "OUT")
      r.type = Direction::Out;
    else
      return std::string("'type' must be IN or OUT");

    auto arg = j.find("argument");
    auto typo = j.find("argmuent");
    if (arg == j.end())
      arg = typo;
    else if (typo != j.end() && *typo != *arg)
      return std::string("'argument' and 'argmuent' disagree");
    if (arg == j.end() || !arg->is_string())
      return std::string("missing or invalid 'argument'");
    r.argument = arg->get<std::string>();

    if (auto part = j.find("part"); part != j.end())
      {
        auto p = as_unsigned(*part);
        if (!p || *p > std::numeric_limits<std::uint32_t>::max())
          return std::string("invalid 'part'");
        r.part = static_cast<std::uint32_t>(*p);
      }

    auto data = j.find("data");
    if (data == j.end() || !data->is_object())
      return std::string("missing or invalid 'data'");
    for (const auto& [key, value] : data->items())
      {
        if (value.is_string())
          r.data.emplace_back(key, value.get<std::string>());
        else if (value.is_number_integer()
                 && (!value.is_number_unsigned()
                     || value.get<std::uint64_t>()
                            <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())))
          r.data.emplace_back(key, value.get<std::int64_t>());
        else
          return "data value '" + key + "' is not an integer or string";
      }
    return r;
  }

}


std::variant<TraceRecord, std::string>
ueforensics::trace::parse_record(std::string_view object_text)
{
  json j = json::parse(normalize_quotes(object_text), nullptr, false);
  if (j.is_discarded())
    return std::string("malformed JSON");
  return record_from(j);
}


ParseResult
ueforensics::trace::parse_log(std::span<const std::string> lines)
{
  ParseResult result;
  std::size_t i = 0;
  while (i < lines.size())
    {
      bool prefixed = false;
      std::string_view body = after_prefix(lines[i], prefixed);
      if (!prefixed)
        {
          ++i;
          continue;
        }

      const std::size_t start = i;
      std::string text(body);
      ObjectScanner scanner;
      scanner.feed(body);
      ++i;
      while (!scanner.complete() && i < lines.size() && i - start <= kMaxContinuation)
        {
          bool next_prefixed = false;
          after_prefix(lines[i], next_prefixed);
          if (next_prefixed)
            break;
          text += '\n';
          text += lines[i];
          scanner.feed("\n");
          scanner.feed(lines[i]);
          ++i;
        }

      if (!scanner.complete())
        {
          result.issues.push_back({start + 1, "unterminated record"});
          continue;
        }
      auto parsed = parse_record(text);
      if (auto* r = std::get_if<TraceRecord>(&parsed))
        {
          result.records.push_back(std::move(*r));
          result.record_lines.push_back(start + 1);
        }
      else
        {
          result.issues.push_back({start + 1, std::get<std::string>(parsed)});
        }
    }
  return result;
}


ParseResult
ueforensics::trace::parse_log(std::string_view text)
{
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size())
    {
      std::size_t nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
      if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
      lines.emplace_back(line);
      if (nl == std::string_view::npos)
        break;
      pos = nl + 1;
    }
  return parse_log(std::span<const std::string>(lines));
}


ParseResult
ueforensics::trace::parse_log_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open trace log " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad())
    throw std::runtime_error("cannot read trace log " + path.string());
  return parse_log(buf.str());
}


Reassembly
ueforensics::trace::reassemble_calls(std::span<const TraceRecord> records)
{
  struct Group
  {
    Direction type;
    std::string name;
    std::map<std::uint32_t, const ArgData*> parts;
    bool repeated = false;
  };
  struct Pending
  {
    std::vector<Group> groups;
  };

  std::map<std::pair<std::uint64_t, std::string>, Pending> calls;
  for (const auto& r : records)
    {
      Pending& call = calls[{r.id, r.service}];
      auto g = std::find_if(call.groups.begin(), call.groups.end(), [&](const Group& x) {
        return x.type == r.type && x.name == r.argument;
      });
      if (g == call.groups.end())
        {
          call.groups.push_back({r.type, r.argument, {}, false});
          g = call.groups.end() - 1;
        }
      if (!g->parts.emplace(r.part, &r.data).second)
        g->repeated = true;
    }

  Reassembly out;
  for (const auto& [key, pending] : calls)
    {
      const auto& [id, service] = key;
      CallSummary summary{id, service, {}, {}};
      std::string problem;
      for (const Group& g : pending.groups)
        {
          const std::string label = std::string(rts::to_string(g.type)) + " " + g.name;
          if (g.repeated)
            {
              problem = label + ": repeated part";
              break;
            }
          if (g.parts.rbegin()->first + 1 != g.parts.size())
            {
              std::uint32_t missing = 0;
              while (g.parts.count(missing))
                ++missing;
              problem = label + ": missing part " + std::to_string(missing);
              break;
            }
          Argument arg{g.name, {}};
          std::set<std::string_view> keys;
          for (const auto& [part, data] : g.parts)
            for (const auto& entry : *data)
              {
                if (!keys.insert(entry.first).second)
                  problem = label + ": key '" + entry.first + "' appears in two parts";
                arg.data.push_back(entry);
              }
          if (!problem.empty())
            break;
          (g.type == Direction::In ? summary.in_args : summary.out_args).push_back(std::move(arg));
        }
      if (problem.empty())
        out.calls.push_back(std::move(summary));
      else
        out.issues.push_back({service, id, problem});
    }
  return out;
}
