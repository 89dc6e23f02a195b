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

#include "ueforensics/acquisition.hpp"

#include <fcntl.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

using namespace ueforensics::acquisition;
using namespace ueforensics;
using ueforensics::detail::UniqueFd;
using json = nlohmann::json;


namespace
{

  [[noreturn]] void
  violation(const std::string& what)
  {
    throw AcquisitionError(AcqErrc::ProtocolViolation, what);
  }

  /// Buffered frame reader over a stream socket.
  class FrameReader
  {
  public:
    explicit FrameReader(int fd)
      : fd_(fd), buffer_(kCapacity)
    { }

    /// Returns false on orderly EOF at a frame boundary.
    bool next(wire::FrameHeader& header, std::span<const std::uint8_t>& payload)
    {
      if (!fill(wire::kHeaderSize, true))
        return false;
      try
        {
          header = wire::decode_header(view(wire::kHeaderSize));
        }
      catch (const wire::WireError& e)
        {
          violation(std::string(wire::to_string(e.code())) + ": " + e.what());
        }
      fill(wire::kHeaderSize + header.payload_len, false);
      payload = view(wire::kHeaderSize + header.payload_len).subspan(wire::kHeaderSize);
      begin_ += wire::kHeaderSize + header.payload_len;
      return true;
    }

  private:
    static constexpr std::size_t kCapacity = 1 << 20;

    std::span<const std::uint8_t> view(std::size_t n) const
    {
      return {buffer_.data() + begin_, n};
    }

    bool fill(std::size_t need, bool eof_ok)
    {
      if (end_ - begin_ >= need)
        return true;
      if (need > buffer_.size())
        buffer_.resize(need);
      if (begin_ + need > buffer_.size())
        {
          std::memmove(buffer_.data(), buffer_.data() + begin_, end_ - begin_);
          end_ -= begin_;
          begin_ = 0;
        }
      while (end_ - begin_ < need)
        {
          ssize_t n = ::recv(fd_, buffer_.data() + end_, buffer_.size() - end_, 0);
          if (n < 0 && errno == EINTR)
            continue;
          if (n == 0)
            {
              if (eof_ok && end_ == begin_)
                return false;
              throw AcquisitionError(AcqErrc::PeerClosed, "stream ended inside a frame");
            }
          if (n < 0)
            throw AcquisitionError(errno == ECONNRESET ? AcqErrc::PeerClosed : AcqErrc::Io,
                                   std::string("recv: ") + std::strerror(errno));
          end_ += static_cast<std::size_t>(n);
        }
      return true;
    }

    int fd_;
    std::vector<std::uint8_t> buffer_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
  };

  /// Coalesces consecutive pages into larger positional writes.
  class DumpWriter
  {
  public:
    DumpWriter(const std::filesystem::path& path, std::uint64_t length)
      : path_(path)
    {
      fd_.reset(::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
      if (!fd_)
        throw AcquisitionError(AcqErrc::Io, "cannot create " + path.string() + ": "
                               + std::strerror(errno));
      if (::ftruncate(fd_.get(), static_cast<off_t>(length)) != 0)
        throw AcquisitionError(AcqErrc::Io, "cannot size " + path.string() + ": "
                               + std::strerror(errno));
      pending_.reserve(kBatch);
    }

    void write(std::uint64_t addr, std::span<const std::uint8_t> data)
    {
      if (!pending_.empty() && (addr != pending_addr_ + pending_.size()
                                || pending_.size() + data.size() > kBatch))
        flush();
      if (pending_.empty())
        pending_addr_ = addr;
      pending_.insert(pending_.end(), data.begin(), data.end());
    }

    void flush()
    {
      std::size_t done = 0;
      while (done < pending_.size())
        {
          ssize_t n = ::pwrite(fd_.get(), pending_.data() + done, pending_.size() - done,
                               static_cast<off_t>(pending_addr_ + done));
          if (n < 0 && errno == EINTR)
            continue;
          if (n <= 0)
            throw AcquisitionError(AcqErrc::Io, "write failed on " + path_.string());
          done += static_cast<std::size_t>(n);
        }
      pending_.clear();
    }

  private:
    static constexpr std::size_t kBatch = 1 << 20;

    UniqueFd fd_;
    std::filesystem::path path_;
    std::vector<std::uint8_t> pending_;
    std::uint64_t pending_addr_ = 0;
  };

  memory::MemoryMap
  map_from_hello(const wire::Hello& hello)
  {
    if (hello.page_size != memory::kPageSize)
      violation("unsupported page size " + std::to_string(hello.page_size));
    std::vector<memory::MemoryRange> ranges;
    for (const auto& r : hello.ranges)
      {
        if (r.purpose != 1 && r.purpose != 2)
          violation("unknown range purpose " + std::to_string(r.purpose));
        ranges.push_back({r.start, r.end, static_cast<memory::RangePurpose>(r.purpose)});
      }
    try
      {
        return memory::MemoryMap::create(std::move(ranges));
      }
    catch (const memory::MemoryError& e)
      {
        violation(std::string("announced map invalid: ") + e.what());
      }
  }

  void
  write_text(const std::filesystem::path& path, const std::string& text)
  {
    std::ofstream out(path);
    out << text << '\n';
    if (!out)
      throw AcquisitionError(AcqErrc::Io, "cannot write " + path.string());
  }

}


DumpArtifact
ueforensics::acquisition::receive_session(int fd, const std::filesystem::path& out_dir,
                                          const std::string& name)
{
  FrameReader reader(fd);
  wire::FrameHeader header{};
  std::span<const std::uint8_t> payload;

  auto decode = [&]() -> wire::WireMessage {
    try
      {
        return wire::decode_payload(header.kind, payload);
      }
    catch (const wire::WireError& e)
      {
        violation(std::string(wire::to_string(e.code())) + ": " + e.what());
      }
  };

  if (!reader.next(header, payload))
    throw AcquisitionError(AcqErrc::PeerClosed, "connection closed before Hello");
  if (header.kind != wire::Kind::Hello)
    violation("first frame is not Hello");
  memory::MemoryMap map = map_from_hello(std::get<wire::Hello>(decode()));

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  DumpArtifact artifact;
  artifact.raw_dump_path = out_dir / (name + ".raw");
  artifact.metadata_path = out_dir / (name + ".meta.json");
  DumpWriter writer(artifact.raw_dump_path, map.top());

  Sha256 sha;
  std::optional<std::uint64_t> last_addr;
  std::uint64_t first_ts = 0, last_ts = 0;
  std::optional<wire::End> end;

  while (!end)
    {
      if (!reader.next(header, payload))
        throw AcquisitionError(AcqErrc::PeerClosed, "connection closed before End");
      switch (header.kind)
        {
        case wire::Kind::Hello:
          violation("duplicate Hello");
        case wire::Kind::End:
          end = std::get<wire::End>(decode());
          break;
        case wire::Kind::Page:
          {
            if (payload.size() != wire::kPageFixedSize + memory::kPageSize)
              violation("page frame with wrong data length");
            // Parse in place to avoid copying every page into a PageFrame.
            std::uint64_t addr = 0, ts = 0;
            for (int i = 7; i >= 0; --i)
              {
                addr = (addr << 8) | payload[i];
                ts = (ts << 8) | payload[8 + i];
              }
            auto data = payload.subspan(wire::kPageFixedSize);
            if (addr % memory::kPageSize != 0)
              violation("unaligned page address " + memory::format_address(addr));
            if (!map.is_system_ram(addr))
              violation("page " + memory::format_address(addr)
                        + " outside announced SystemRam");
            if (last_addr && addr <= *last_addr)
              violation("page " + memory::format_address(addr) + " not above previous "
                        + memory::format_address(*last_addr));
            if (last_addr && ts < last_ts)
              violation("timestamp went backwards at " + memory::format_address(addr));
            if (!last_addr)
              first_ts = ts;
            last_ts = ts;
            last_addr = addr;
            ++artifact.pages_received;
            sha.update(data);
            writer.write(addr, data);
            break;
          }
        }
    }
  writer.flush();

  if (end->page_count != artifact.pages_received)
    violation("End announces " + std::to_string(end->page_count) + " pages, received "
              + std::to_string(artifact.pages_received));

  wire::Digest computed = sha.finish();
  artifact.digest_verified = computed == end->digest;
  artifact.atomicity_window_ns = artifact.pages_received ? last_ts - first_ts : 0;

  json meta = {
      {"name", name},
      {"map", json::parse(memory::map_to_json(map))},
      {"pages_received", artifact.pages_received},
      {"first_ts_ns", artifact.pages_received ? json(first_ts) : json(nullptr)},
      {"last_ts_ns", artifact.pages_received ? json(last_ts) : json(nullptr)},
      {"atomicity_window_ns", artifact.atomicity_window_ns},
      {"digest", to_hex(end->digest)},
      {"computed_digest", to_hex(computed)},
      {"digest_verified", artifact.digest_verified},
  };
  write_text(artifact.metadata_path, meta.dump(2));
  return artifact;
}


DumpArtifact
ueforensics::acquisition::receive(Listener& listener, const std::filesystem::path& out_dir,
                                  const std::string& name)
{
  UniqueFd conn = listener.accept();
  return receive_session(conn.get(), out_dir, name);
}


DumpArtifact
ueforensics::acquisition::receive(const Endpoint& listen, const std::filesystem::path& out_dir,
                                  const std::string& name)
{
  Listener listener = Listener::bind(listen);
  return receive(listener, out_dir, name);
}


std::vector<SessionOutcome>
ueforensics::acquisition::serve(Listener& listener, const std::filesystem::path& out_dir,
                                std::size_t sessions, const std::string& prefix)
{
  std::vector<SessionOutcome> outcomes(sessions);
  std::vector<std::thread> workers;
  workers.reserve(sessions);
  for (std::size_t i = 0; i < sessions; ++i)
    {
      UniqueFd conn = listener.accept();
      outcomes[i].name = prefix + "-" + std::to_string(i);
      workers.emplace_back([&out_dir, &outcome = outcomes[i], conn = std::move(conn)]() {
        try
          {
            outcome.artifact = receive_session(conn.get(), out_dir, outcome.name);
          }
        catch (const std::exception& e)
          {
            outcome.error = e.what();
          }
      });
    }
  for (auto& w : workers)
    w.join();
  return outcomes;
}


std::uint64_t
ueforensics::acquisition::atomicity_window(const std::filesystem::path& metadata_path)
{
  std::ifstream in(metadata_path);
  if (!in)
    throw AcquisitionError(AcqErrc::MissingMetadata, "no metadata at " + metadata_path.string());
  json meta;
  try
    {
      meta = json::parse(in);
    }
  catch (const json::exception& e)
    {
      throw AcquisitionError(AcqErrc::MissingMetadata,
                             "unreadable metadata " + metadata_path.string() + ": " + e.what());
    }
  auto first = meta.find("first_ts_ns");
  auto last = meta.find("last_ts_ns");
  if (first == meta.end() || last == meta.end())
    throw AcquisitionError(AcqErrc::MissingMetadata, "metadata lacks timestamps");
  if (first->is_null() && last->is_null())
    return 0;
  if (!first->is_number_unsigned() || !last->is_number_unsigned())
    throw AcquisitionError(AcqErrc::MissingMetadata, "metadata timestamps malformed");
  return last->get<std::uint64_t>() - first->get<std::uint64_t>();
}


std::uint64_t
ueforensics::acquisition::atomicity_window(const DumpArtifact& artifact)
{
  return atomicity_window(artifact.metadata_path);
}
