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

#include <ostream>
#include <set>

#include <json.hpp>

using namespace ueforensics::rts;
using ordered_json = nlohmann::ordered_json;


namespace
{

  ordered_json
  data_object(const ArgData& data, std::size_t from, std::size_t to)
  {
    ordered_json obj = ordered_json::object();
    for (std::size_t i = from; i < to; ++i)
      std::visit([&](const auto& v) { obj[data[i].first] = v; }, data[i].second);
    return obj;
  }

  ordered_json
  record_object(std::string_view service, std::uint64_t id, Direction type,
                std::string_view argument, std::uint32_t part, ordered_json data)
  {
    ordered_json obj = ordered_json::object();
    obj["service"] = service;
    obj["id"] = id;
    obj["type"] = to_string(type);
    obj["argument"] = argument;
    if (part != 0)
      obj["part"] = part;
    obj["data"] = std::move(data);
    return obj;
  }

  std::string
  dump(const ordered_json& obj)
  {
    try
      {
        return obj.dump();
      }
    catch (const nlohmann::json::exception& e)
      {
        throw RtsError(RtsErrc::UnserializableValue, e.what());
      }
  }

}


std::string_view
ueforensics::rts::to_string(Direction dir)
{
  return dir == Direction::In ? "IN" : "OUT";
}


std::string
ueforensics::rts::record_to_json(const TraceRecord& record)
{
  return dump(record_object(record.service, record.id, record.type, record.argument,
                            record.part, data_object(record.data, 0, record.data.size())));
}


std::vector<TraceRecord>
ueforensics::rts::chunk_argument(std::string_view service, std::uint64_t id, Direction type,
                                 const Argument& argument)
{
  const ArgData& data = argument.data;
  std::set<std::string_view> keys;
  for (const auto& [key, value] : data)
    if (!keys.insert(key).second)
      throw RtsError(RtsErrc::UnserializableValue,
                     "duplicate key '" + key + "' in argument " + argument.name);

  auto length_of = [&](std::uint32_t part, std::size_t from, std::size_t to) {
    return dump(record_object(service, id, type, argument.name, part,
                              data_object(data, from, to))).size();
  };

  // Greedy packing. Every part after the first carries a "part" key, which
  // the first one omits, so each chunk is measured with its own index.
  std::vector<TraceRecord> records;
  std::size_t from = 0;
  std::uint32_t part = 0;
  do
    {
      if (length_of(part, from, from) > kMaxRecordLength)
        throw RtsError(RtsErrc::UnserializableValue,
                       "record header for " + argument.name + " exceeds 255 characters");
      std::size_t to = from;
      while (to < data.size() && length_of(part, from, to + 1) <= kMaxRecordLength)
        ++to;
      if (to == from && from < data.size())
        throw RtsError(RtsErrc::UnserializableValue,
                       "entry '" + data[from].first + "' of " + argument.name
                       + " does not fit in one trace record");
      records.push_back({std::string(service), id, type, argument.name, part,
                         ArgData(data.begin() + static_cast<std::ptrdiff_t>(from),
                                 data.begin() + static_cast<std::ptrdiff_t>(to))});
      from = to;
      ++part;
    }
  while (from < data.size());
  return records;
}


std::vector<std::string>
ueforensics::rts::emit_trace(std::string_view service, std::uint64_t id, Direction type,
                             const Argument& argument)
{
  std::vector<std::string> lines;
  for (const auto& record : chunk_argument(service, id, type, argument))
    lines.push_back(std::string(kTracePrefix) + record_to_json(record));
  return lines;
}


void
StreamSink::append(std::string_view line)
{
  out_ << line << '\n';
}
