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

// Acquisition wire format. Every frame is
//
//   kind u8 | payload_len u32 | payload
//
// with all integers little-endian.
//
//   Hello (1): "UEFO" | version u16 | page_size u32 | range_count u32 |
//              range_count x { start u64 | end u64 | purpose u8 }
//   Page  (2): address u64 | timestamp_ns u64 | page_size bytes of data
//   End   (3): page_count u64 | SHA-256 over all page data in send order

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ueforensics::wire
{

  inline constexpr std::array<std::uint8_t, 4> kMagic{'U', 'E', 'F', 'O'};
  inline constexpr std::uint16_t kVersion = 1;
  inline constexpr std::size_t kHeaderSize = 5;
  inline constexpr std::uint32_t kMaxPayload = 16u * 1024 * 1024;
  inline constexpr std::size_t kRangeRecordSize = 17;
  inline constexpr std::size_t kHelloFixedSize = 4 + 2 + 4 + 4;
  inline constexpr std::size_t kPageFixedSize = 16;
  inline constexpr std::size_t kEndPayloadSize = 8 + 32;

  enum class Kind : std::uint8_t
  {
    Hello = 1,
    Page = 2,
    End = 3,
  };

  enum class WireErrc
  {
    BadMagic,
    UnknownKind,
    Truncated,
    LengthOverflow,
    Malformed,
    UnsupportedVersion,
  };

  const char* to_string(WireErrc code);

  class WireError : public std::runtime_error
  {
  public:
    WireError(WireErrc code, const std::string& what)
      : std::runtime_error(what), code_(code)
    { }

    WireErrc code() const noexcept
    { return code_; }

  private:
    WireErrc code_;
  };

  using Digest = std::array<std::uint8_t, 32>;

  struct WireRange
  {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    std::uint8_t purpose = 1;   // 1 = SystemRam, 2 = Reserved

    bool operator==(const WireRange&) const = default;
  };

  struct Hello
  {
    std::uint16_t version = kVersion;
    std::uint32_t page_size = 4096;
    std::vector<WireRange> ranges;

    bool operator==(const Hello&) const = default;
  };

  struct PageFrame
  {
    std::uint64_t address = 0;
    std::uint64_t timestamp_ns = 0;
    std::vector<std::uint8_t> data;

    bool operator==(const PageFrame&) const = default;
  };

  struct End
  {
    std::uint64_t page_count = 0;
    Digest digest{};

    bool operator==(const End&) const = default;
  };

  using WireMessage = std::variant<Hello, PageFrame, End>;

  Kind kind_of(const WireMessage& msg);

  /// Appends one encoded frame to out.
  void encode_message(const WireMessage& msg, std::vector<std::uint8_t>& out);
  std::vector<std::uint8_t> encode_message(const WireMessage& msg);

  /// Page frame without materializing a PageFrame; used on the hot path.
  void encode_page(std::uint64_t address, std::uint64_t timestamp_ns,
                   std::span<const std::uint8_t> data, std::vector<std::uint8_t>& out);

  struct FrameHeader
  {
    Kind kind;
    std::uint32_t payload_len;
  };

  /// Validates the 5-byte frame header.
  FrameHeader decode_header(std::span<const std::uint8_t> bytes);

  /// Decodes a payload of the given kind.
  WireMessage decode_payload(Kind kind, std::span<const std::uint8_t> payload);

  struct Decoded
  {
    WireMessage message;
    std::size_t consumed = 0;
  };

  /// Decodes the first frame in bytes. Throws WireError.
  Decoded decode_message(std::span<const std::uint8_t> bytes);

}
