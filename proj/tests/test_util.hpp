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

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <system_error>
#include <vector>

namespace testutil
{

  /// Scratch directory removed on destruction.
  class TempDir
  {
  public:
    TempDir()
    {
      std::string tmpl = (std::filesystem::temp_directory_path() / "ueftest-XXXXXX").string();
      if (!::mkdtemp(tmpl.data()))
        throw std::runtime_error("mkdtemp failed");
      path_ = tmpl;
    }

    ~TempDir()
    {
      std::error_code ec;
      std::filesystem::remove_all(path_, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const
    { return path_; }

    std::filesystem::path operator/(const std::string& name) const
    { return path_ / name; }

  private:
    std::filesystem::path path_;
  };

  inline std::vector<unsigned char>
  read_file(const std::filesystem::path& path)
  {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  /// Streams both files and compares them byte for byte.
  inline bool
  files_equal(const std::filesystem::path& a, const std::filesystem::path& b)
  {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb)
      return false;
    std::vector<char> ba(1 << 20), bb(1 << 20);
    while (true)
      {
        fa.read(ba.data(), ba.size());
        fb.read(bb.data(), bb.size());
        if (fa.gcount() != fb.gcount())
          return false;
        if (!std::equal(ba.begin(), ba.begin() + fa.gcount(), bb.begin()))
          return false;
        if (fa.gcount() == 0 || !fa)
          return !fb || fb.peek() == EOF;
      }
  }

}
