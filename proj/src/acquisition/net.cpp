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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <cerrno>
#include <charconv>
#include <cstring>

using namespace ueforensics::acquisition;
using ueforensics::detail::UniqueFd;


const char*
ueforensics::acquisition::to_string(AcqErrc code)
{
  switch (code)
    {
    case AcqErrc::ConnectionFailed:  return "ConnectionFailed";
    case AcqErrc::PeerClosed:        return "PeerClosed";
    case AcqErrc::Io:                return "Io";
    case AcqErrc::ProtocolViolation: return "ProtocolViolation";
    case AcqErrc::MissingMetadata:   return "MissingMetadata";
    case AcqErrc::BadEndpoint:       return "BadEndpoint";
    }
  return "?";
}


Endpoint
Endpoint::parse(std::string_view text)
{
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
    throw AcquisitionError(AcqErrc::BadEndpoint,
                           "expected host:port, got '" + std::string(text) + "'");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port > 65535)
    throw AcquisitionError(AcqErrc::BadEndpoint, "bad port in '" + std::string(text) + "'");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}


std::string
Endpoint::to_string() const
{
  return host + ":" + std::to_string(port);
}


namespace
{

  sockaddr_in
  resolve(const Endpoint& ep, AcqErrc failure)
  {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    int rc = ::getaddrinfo(ep.host.c_str(), nullptr, &hints, &result);
    if (rc != 0 || !result)
      throw AcquisitionError(failure, "cannot resolve " + ep.host + ": " + gai_strerror(rc));
    sockaddr_in addr{};
    std::memcpy(&addr, result->ai_addr, sizeof(addr));
    ::freeaddrinfo(result);
    addr.sin_port = htons(ep.port);
    return addr;
  }

}


Listener
Listener::bind(const Endpoint& endpoint, int backlog)
{
  sockaddr_in addr = resolve(endpoint, AcqErrc::BadEndpoint);
  Listener l;
  l.fd_.reset(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!l.fd_)
    throw AcquisitionError(AcqErrc::Io, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(l.fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(l.fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw AcquisitionError(AcqErrc::Io, "bind " + endpoint.to_string() + ": "
                           + std::strerror(errno));
  if (::listen(l.fd_.get(), backlog) != 0)
    throw AcquisitionError(AcqErrc::Io, std::string("listen: ") + std::strerror(errno));
  return l;
}


Endpoint
Listener::local_endpoint() const
{
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  char host[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, host, sizeof(host));
  return {host, ntohs(addr.sin_port)};
}


UniqueFd
Listener::accept()
{
  while (true)
    {
      int fd = ::accept4(fd_.get(), nullptr, nullptr, SOCK_CLOEXEC);
      if (fd >= 0)
        return UniqueFd(fd);
      if (errno != EINTR)
        throw AcquisitionError(AcqErrc::Io, std::string("accept: ") + std::strerror(errno));
    }
}


UniqueFd
ueforensics::acquisition::connect_to(const Endpoint& endpoint)
{
  sockaddr_in addr = resolve(endpoint, AcqErrc::ConnectionFailed);
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd)
    throw AcquisitionError(AcqErrc::Io, std::string("socket: ") + std::strerror(errno));
  if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw AcquisitionError(AcqErrc::ConnectionFailed, "connect " + endpoint.to_string() + ": "
                           + std::strerror(errno));
  return fd;
}


void
ueforensics::acquisition::send_all(int fd, std::span<const std::uint8_t> bytes)
{
  std::size_t done = 0;
  while (done < bytes.size())
    {
      ssize_t n = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR)
        continue;
      if (n < 0 && (errno == EPIPE || errno == ECONNRESET))
        throw AcquisitionError(AcqErrc::PeerClosed, "peer closed the connection");
      if (n <= 0)
        throw AcquisitionError(AcqErrc::Io, std::string("send: ") + std::strerror(errno));
      done += static_cast<std::size_t>(n);
    }
}


struct Sha256::Impl
{
  Impl()
    : ctx(EVP_MD_CTX_new())
  { }

  ~Impl()
  { EVP_MD_CTX_free(ctx); }

  EVP_MD_CTX* ctx;
};


Sha256::Sha256()
  : impl_(std::make_unique<Impl>())
{
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 initialisation failed");
}


Sha256::~Sha256() = default;


void
Sha256::update(std::span<const std::uint8_t> bytes)
{
  EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
}


ueforensics::wire::Digest
Sha256::finish()
{
  wire::Digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(impl_->ctx, out.data(), &len);
  return out;
}


ueforensics::wire::Digest
Sha256::of(std::span<const std::uint8_t> bytes)
{
  Sha256 h;
  h.update(bytes);
  return h.finish();
}


std::string
ueforensics::acquisition::to_hex(std::span<const std::uint8_t> bytes)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes)
    {
      out.push_back(digits[b >> 4]);
      out.push_back(digits[b & 0xf]);
    }
  return out;
}
