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

#include <unistd.h>

#include <utility>

namespace ueforensics::detail
{

  /// Owning POSIX file descriptor.
  class UniqueFd
  {
  public:
    UniqueFd() = default;

    explicit UniqueFd(int fd)
      : fd_(fd)
    { }

    UniqueFd(UniqueFd&& other) noexcept
      : fd_(std::exchange(other.fd_, -1))
    { }

    UniqueFd& operator=(UniqueFd&& other) noexcept
    {
      if (this != &other)
        {
          reset();
          fd_ = std::exchange(other.fd_, -1);
        }
      return *this;
    }

    UniqueFd(const UniqueFd&) = delete;
    UniqueFd& operator=(const UniqueFd&) = delete;

    ~UniqueFd()
    { reset(); }

    int get() const
    { return fd_; }

    explicit operator bool() const
    { return fd_ >= 0; }

    void reset(int fd = -1)
    {
      if (fd_ >= 0)
        ::close(fd_);
      fd_ = fd;
    }

  private:
    int fd_ = -1;
  };

}
