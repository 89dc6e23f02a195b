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

#include "ueforensics/wire.hpp"

#include <algorithm>

using namespace ueforensics::wire;


namespace
{

  template <typename T>
  void
  put_le(std::vector<std::uint8_t>& out, T value)
  {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }

  template <typename T>
  T
  get_le(std::span<const std::uint8_t> bytes, std::size_t offset)
  {
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      value |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return static_cast<T>(value);
  }

  void
  put_header(std::vector<std::uint8_t>& out, Kind kind, std::size_t payload_len)
  {
    out.push_back(static_cast<std::uint8_t>(kind));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(payload_len));
  }

  void
  require_len(bool ok, const char* what)
  {
    if (!ok)
      throw WireError(WireErrc::Malformed, what);
  }

}


const char*
ueforensics::wire::to_string(WireErrc code)
{
  switch (code)
    {
    case WireErrc::BadMagic:           return "BadMagic";
    case WireErrc::UnknownKind:        return "UnknownKind";
    case WireErrc::Truncated:          return "Truncated";
    case WireErrc::LengthOverflow:     return "LengthOverflow";
    case WireErrc::Malformed:          return "Malformed";
    case WireErrc::UnsupportedVersion: return "UnsupportedVersion";
    }
  return "?";
}


Kind
ueforensics::wire::kind_of(const WireMessage& msg)
{
  return static_cast<Kind>(msg.index() + 1);
}


void
ueforensics::wire::encode_page(std::uint64_t address, std::uint64_t timestamp_ns,
                               std::span<const std::uint8_t> data,
                               std::vector<std::uint8_t>& out)
{
  if (kPageFixedSize + data.size() > kMaxPayload)
    throw WireError(WireErrc::LengthOverflow, "page payload too large");
  put_header(out, Kind::Page, kPageFixedSize + data.size());
  put_le<std::uint64_t>(out, address);
  put_le<std::uint64_t>(out, timestamp_ns);
  out.insert(out.end(), data.begin(), data.end());
}


void
ueforensics::wire::encode_message(const WireMessage& msg, std::vector<std::uint8_t>& out)
{
  if (const auto* hello = std::get_if<Hello>(&msg))
    {
      std::size_t len = kHelloFixedSize + kRangeRecordSize * hello->ranges.size();
      if (len > kMaxPayload)
        throw WireError(WireErrc::LengthOverflow, "too many ranges");
      put_header(out, Kind::Hello, len);
      out.insert(out.end(), kMagic.begin(), kMagic.end());
      put_le<std::uint16_t>(out, hello->version);
      put_le<std::uint32_t>(out, hello->page_size);
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(hello->ranges.size()));
      for (const auto& r : hello->ranges)
        {
          put_le<std::uint64_t>(out, r.start);
          put_le<std::uint64_t>(out, r.end);
          out.push_back(r.purpose);
        }
    }
  else if (const auto* page = std::get_if<PageFrame>(&msg))
    {
      encode_page(page->address, page->timestamp_ns, page->data, out);
    }
  else
    {
      const auto& end = std::get<End>(msg);
      put_header(out, Kind::End, kEndPayloadSize);
      put_le<std::uint64_t>(out, end.page_count);
      out.insert(out.end(), end.digest.begin(), end.digest.end());
    }
}


std::vector<std::uint8_t>
ueforensics::wire::encode_message(const WireMessage& msg)
{
  std::vector<std::uint8_t> out;
  encode_message(msg, out);
  return out;
}


FrameHeader
ueforensics::wire::decode_header(std::span<const std::uint8_t> bytes)
{
  if (bytes.size() < kHeaderSize)
    throw WireError(WireErrc::Truncated, "frame header truncated");
  std::uint8_t kind = bytes[0];
  if (kind < 1 || kind > 3)
    throw WireError(WireErrc::UnknownKind, "unknown frame kind " + std::to_string(kind));
  auto len = get_le<std::uint32_t>(bytes, 1);
  if (len > kMaxPayload)
    throw WireError(WireErrc::LengthOverflow, "payload length " + std::to_string(len));
  return {static_cast<Kind>(kind), len};
}


WireMessage
ueforensics::wire::decode_payload(Kind kind, std::span<const std::uint8_t> payload)
{
  switch (kind)
    {
    case Kind::Hello:
      {
        if (payload.size() < 4)
          throw WireError(WireErrc::Truncated, "hello truncated");
        if (!std::equal(kMagic.begin(), kMagic.end(), payload.begin()))
          throw WireError(WireErrc::BadMagic, "bad hello magic");
        require_len(payload.size() >= kHelloFixedSize, "hello shorter than fixed fields");
        Hello hello;
        hello.version = get_le<std::uint16_t>(payload, 4);
        if (hello.version != kVersion)
          throw WireError(WireErrc::UnsupportedVersion,
                          "protocol version " + std::to_string(hello.version));
        hello.page_size = get_le<std::uint32_t>(payload, 6);
        auto count = get_le<std::uint32_t>(payload, 10);
        require_len(payload.size() == kHelloFixedSize + kRangeRecordSize * std::size_t{count},
                    "hello range count disagrees with payload length");
        for (std::size_t i = 0; i < count; ++i)
          {
            std::size_t off = kHelloFixedSize + i * kRangeRecordSize;
            hello.ranges.push_back({get_le<std::uint64_t>(payload, off),
                                    get_le<std::uint64_t>(payload, off + 8),
                                    payload[off + 16]});
          }
        return hello;
      }
    case Kind::Page:
      {
        require_len(payload.size() >= kPageFixedSize, "page shorter than fixed fields");
        PageFrame page;
        page.address = get_le<std::uint64_t>(payload, 0);
        page.timestamp_ns = get_le<std::uint64_t>(payload, 8);
        page.data.assign(payload.begin() + kPageFixedSize, payload.end());
        return page;
      }
    case Kind::End:
      {
        require_len(payload.size() == kEndPayloadSize, "end payload must be 40 bytes");
        End end;
        end.page_count = get_le<std::uint64_t>(payload, 0);
        std::copy(payload.begin() + 8, payload.end(), end.digest.begin());
        return end;
      }
    }
  throw WireError(WireErrc::UnknownKind, "unknown frame kind");
}


Decoded
ueforensics::wire::decode_message(std::span<const std::uint8_t> bytes)
{
  FrameHeader header = decode_header(bytes);
  if (bytes.size() - kHeaderSize < header.payload_len)
    throw WireError(WireErrc::Truncated, "frame payload truncated");
  auto payload = bytes.subspan(kHeaderSize, header.payload_len);
  return {decode_payload(header.kind, payload), kHeaderSize + header.payload_len};
}
