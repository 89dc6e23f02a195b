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

#include "ueforensics/detail/unique_fd.hpp"
#include "ueforensics/memory_model.hpp"
#include "ueforensics/wire.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ueforensics::acquisition
{

  enum class AcqErrc
  {
    ConnectionFailed,
    PeerClosed,
    Io,
    ProtocolViolation,
    MissingMetadata,
    BadEndpoint,
  };

  const char* to_string(AcqErrc code);

  class AcquisitionError : public std::runtime_error
  {
  public:
    AcquisitionError(AcqErrc code, const std::string& what)
      : std::runtime_error(what), code_(code)
    { }

    AcqErrc code() const noexcept
    { return code_; }

  private:
    AcqErrc code_;
  };

  struct Endpoint
  {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port"; host may be a name or dotted IPv4 address.
    static Endpoint parse(std::string_view text);
    std::string to_string() const;
  };

  /// Incremental SHA-256 (OpenSSL EVP).
  class Sha256
  {
  public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::span<const std::uint8_t> bytes);
    wire::Digest finish();

    static wire::Digest of(std::span<const std::uint8_t> bytes);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
  };

  std::string to_hex(std::span<const std::uint8_t> bytes);

  /// Bound TCP listening socket. Port 0 binds an ephemeral port.
  class Listener
  {
  public:
    static Listener bind(const Endpoint& endpoint, int backlog = 16);

    Endpoint local_endpoint() const;

    /// Blocks for the next connection.
    detail::UniqueFd accept();

  private:
    detail::UniqueFd fd_;
  };

  /// Connected TCP stream with blocking send/receive helpers.
  detail::UniqueFd connect_to(const Endpoint& endpoint);

  /// Sends every byte or throws PeerClosed / Io.
  void send_all(int fd, std::span<const std::uint8_t> bytes);

  /// Inclusive address interval restricting which pages are sent.
  struct AddressFilter
  {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
  };

  struct AcquireOptions
  {
    /// Empty means every SystemRam page.
    std::vector<AddressFilter> ranges_filter;
    /// Delay inserted after each page.
    std::chrono::nanoseconds throttle{0};
  };

  struct AcquisitionSummary
  {
    std::uint64_t pages_sent = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t first_ts_ns = 0;
    std::uint64_t last_ts_ns = 0;
    wire::Digest digest{};
  };

  wire::Hello hello_for(const memory::MemoryMap& map);

  /// Agent side: streams every SystemRam page of source, ascending, over an
  /// established connection.
  AcquisitionSummary acquire(const memory::MemoryImage& source, int fd,
                             const AcquireOptions& options = {});

  AcquisitionSummary acquire(const memory::MemoryImage& source, const Endpoint& endpoint,
                             const AcquireOptions& options = {});

  struct DumpArtifact
  {
    std::filesystem::path raw_dump_path;
    std::filesystem::path metadata_path;
    std::uint64_t pages_received = 0;
    std::uint64_t atomicity_window_ns = 0;
    bool digest_verified = false;
  };

  /// Receiver side for one connection: writes <name>.raw and <name>.meta.json
  /// into out_dir.
  DumpArtifact receive_session(int fd, const std::filesystem::path& out_dir,
                               const std::string& name);

  /// Accepts one connection on the listener and receives it.
  DumpArtifact receive(Listener& listener, const std::filesystem::path& out_dir,
                       const std::string& name = "dump");

  DumpArtifact receive(const Endpoint& listen, const std::filesystem::path& out_dir,
                       const std::string& name = "dump");

  struct SessionOutcome
  {
    std::string name;
    std::optional<DumpArtifact> artifact;
    std::string error;
  };

  /// Accepts `sessions` connections and serves each on its own thread.
  /// Session i writes <prefix>-<i>.raw; failures are isolated per session.
  std::vector<SessionOutcome> serve(Listener& listener, const std::filesystem::path& out_dir,
                                    std::size_t sessions, const std::string& prefix = "dump");

  /// last_ts - first_ts from the artifact's metadata file.
  std::uint64_t atomicity_window(const DumpArtifact& artifact);
  std::uint64_t atomicity_window(const std::filesystem::path& metadata_path);

}
