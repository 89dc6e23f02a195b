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

#include <sys/socket.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

using namespace ueforensics::acquisition;
using namespace ueforensics;


namespace
{

  constexpr std::size_t kSendBatch = 1 << 20;

  std::uint64_t
  monotonic_ns()
  {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now().time_since_epoch()).count());
  }

  bool
  selected(const AcquireOptions& options, std::uint64_t addr)
  {
    if (options.ranges_filter.empty())
      return true;
    return std::any_of(options.ranges_filter.begin(), options.ranges_filter.end(),
                       [&](const AddressFilter& f) { return addr >= f.start && addr <= f.end; });
  }

  // The receiver closes its side once it has consumed End. A reset instead
  // of an orderly close means the stream was not taken in full.
  void
  await_receiver_close(int fd)
  {
    ::shutdown(fd, SHUT_WR);
    char scratch[256];
    while (true)
      {
        ssize_t n = ::recv(fd, scratch, sizeof(scratch), 0);
        if (n == 0)
          return;
        if (n > 0)
          continue;
        if (errno == EINTR)
          continue;
        if (errno == ECONNRESET || errno == EPIPE)
          throw AcquisitionError(AcqErrc::PeerClosed, "receiver reset the connection");
        throw AcquisitionError(AcqErrc::Io, std::string("recv: ") + std::strerror(errno));
      }
  }

}


wire::Hello
ueforensics::acquisition::hello_for(const memory::MemoryMap& map)
{
  wire::Hello hello;
  hello.page_size = static_cast<std::uint32_t>(memory::kPageSize);
  for (const auto& r : map.ranges())
    hello.ranges.push_back({r.start, r.end, static_cast<std::uint8_t>(r.purpose)});
  return hello;
}


AcquisitionSummary
ueforensics::acquisition::acquire(const memory::MemoryImage& source, int fd,
                                  const AcquireOptions& options)
{
  std::vector<std::uint8_t> buffer;
  buffer.reserve(kSendBatch + memory::kPageSize + 64);
  wire::encode_message(hello_for(source.map()), buffer);

  AcquisitionSummary summary;
  Sha256 sha;
  memory::Page page;

  for (const auto& range : source.map().ranges())
    {
      if (range.purpose != memory::RangePurpose::SystemRam)
        continue;
      for (std::uint64_t addr = range.start; addr <= range.end; addr += memory::kPageSize)
        {
          if (!selected(options, addr))
            continue;
          source.copy_page(addr / memory::kPageSize, page);
          std::uint64_t ts = monotonic_ns();
          if (summary.pages_sent == 0)
            summary.first_ts_ns = ts;
          summary.last_ts_ns = ts;
          sha.update(page);
          wire::encode_page(addr, ts, page, buffer);
          ++summary.pages_sent;
          summary.bytes_sent += page.size();

          if (buffer.size() >= kSendBatch || options.throttle.count() > 0)
            {
              send_all(fd, buffer);
              buffer.clear();
            }
          if (options.throttle.count() > 0)
            std::this_thread::sleep_for(options.throttle);
        }
    }

  summary.digest = sha.finish();
  wire::encode_message(wire::End{summary.pages_sent, summary.digest}, buffer);
  send_all(fd, buffer);
  await_receiver_close(fd);
  return summary;
}


AcquisitionSummary
ueforensics::acquisition::acquire(const memory::MemoryImage& source, const Endpoint& endpoint,
                                  const AcquireOptions& options)
{
  auto fd = connect_to(endpoint);
  return acquire(source, fd.get(), options);
}
