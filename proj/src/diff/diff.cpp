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

#include "ueforensics/diff.hpp"

#include "ueforensics/detail/unique_fd.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

using namespace ueforensics::diff;
using ueforensics::memory::MemoryImage;
using ueforensics::memory::kPageSize;


namespace
{

  class ImageSource final : public DiffSource
  {
  public:
    explicit ImageSource(MemoryImage image)
      : image_(std::move(image))
    { }

    std::uint64_t size() const override
    { return image_.size(); }

    void read(std::uint64_t offset, std::span<std::uint8_t> out) const override
    {
      if (offset + out.size() > size())
        throw DiffError(DiffErrc::Io, "read beyond end of image " + image_.provenance());
      ueforensics::memory::Page page;
      std::size_t done = 0;
      while (done < out.size())
        {
          std::uint64_t at = offset + done;
          std::uint64_t index = at / kPageSize;
          std::size_t within = at % kPageSize;
          std::size_t n = std::min<std::size_t>(kPageSize - within, out.size() - done);
          if (within == 0 && n == kPageSize)
            {
              image_.copy_page(index, std::span<std::uint8_t, kPageSize>(out.data() + done, kPageSize));
            }
          else
            {
              image_.copy_page(index, page);
              std::memcpy(out.data() + done, page.data() + within, n);
            }
          done += n;
        }
    }

  private:
    MemoryImage image_;
  };

  class FileSource final : public DiffSource
  {
  public:
    explicit FileSource(const std::filesystem::path& path)
      : path_(path)
    {
      fd_.reset(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
      if (!fd_)
        throw DiffError(DiffErrc::Io, "cannot open " + path.string() + ": " + std::strerror(errno));
      struct stat st{};
      if (::fstat(fd_.get(), &st) != 0)
        throw DiffError(DiffErrc::Io, "cannot stat " + path.string() + ": " + std::strerror(errno));
      size_ = static_cast<std::uint64_t>(st.st_size);
      ::posix_fadvise(fd_.get(), 0, 0, POSIX_FADV_SEQUENTIAL);
    }

    std::uint64_t size() const override
    { return size_; }

    void read(std::uint64_t offset, std::span<std::uint8_t> out) const override
    {
      std::size_t done = 0;
      while (done < out.size())
        {
          ssize_t n = ::pread(fd_.get(), out.data() + done, out.size() - done,
                              static_cast<off_t>(offset + done));
          if (n < 0 && errno == EINTR)
            continue;
          if (n <= 0)
            throw DiffError(DiffErrc::Io, "short read from " + path_.string());
          done += static_cast<std::size_t>(n);
        }
    }

  private:
    std::filesystem::path path_;
    ueforensics::detail::UniqueFd fd_;
    std::uint64_t size_ = 0;
  };

  std::uint64_t
  count_differing(const std::uint8_t* a, const std::uint8_t* b, std::size_t len)
  {
    if (std::memcmp(a, b, len) == 0)
      return 0;
    std::uint64_t n = 0;
    std::size_t i = 0;
    for (; i + 8 <= len; i += 8)
      {
        std::uint64_t x, y;
        std::memcpy(&x, a + i, 8);
        std::memcpy(&y, b + i, 8);
        std::uint64_t d = x ^ y;
        if (!d)
          continue;
        d |= d >> 4;
        d |= d >> 2;
        d |= d >> 1;
        n += static_cast<std::uint64_t>(std::popcount(d & 0x0101010101010101ULL));
      }
    for (; i < len; ++i)
      n += a[i] != b[i];
    return n;
  }

}


const char*
ueforensics::diff::to_string(DiffErrc code)
{
  switch (code)
    {
    case DiffErrc::LengthMismatch: return "LengthMismatch";
    case DiffErrc::Io:             return "Io";
    case DiffErrc::TooFewDumps:    return "TooFewDumps";
    case DiffErrc::BadPageSize:    return "BadPageSize";
    }
  return "?";
}


std::uint64_t
PageBitmap::popcount() const
{
  std::uint64_t n = 0;
  for (auto w : words_)
    n += static_cast<std::uint64_t>(std::popcount(w));
  return n;
}


double
DiffReport::proportion() const
{
  return total_bytes ? static_cast<double>(bytes_differing) / static_cast<double>(total_bytes) : 0.0;
}


std::shared_ptr<const DiffSource>
ueforensics::diff::image_source(MemoryImage image)
{
  return std::make_shared<ImageSource>(std::move(image));
}


std::shared_ptr<const DiffSource>
ueforensics::diff::file_source(const std::filesystem::path& path)
{
  return std::make_shared<FileSource>(path);
}


std::vector<DiffReport>
ueforensics::diff::pairwise_report(std::span<const LabeledSource> dumps, const DiffOptions& options)
{
  if (dumps.size() < 2)
    throw DiffError(DiffErrc::TooFewDumps, "at least two dumps are needed");
  const std::uint64_t page_size = options.page_size;
  if (page_size == 0 || page_size % 8)
    throw DiffError(DiffErrc::BadPageSize, "page size must be a non-zero multiple of 8");

  const std::uint64_t size = dumps[0].source->size();
  for (const auto& d : dumps)
    if (d.source->size() != size)
      throw DiffError(DiffErrc::LengthMismatch,
                      d.label + " has " + std::to_string(d.source->size()) + " bytes, "
                      + dumps[0].label + " has " + std::to_string(size));

  const std::uint64_t pages = (size + page_size - 1) / page_size;
  const std::uint64_t chunk_pages = std::max<std::uint64_t>(64, (options.chunk_pages + 63) / 64 * 64);
  const std::uint64_t chunk_bytes = chunk_pages * page_size;
  const std::uint64_t chunks = (pages + chunk_pages - 1) / chunk_pages;

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < dumps.size(); ++i)
    for (std::size_t j = i + 1; j < dumps.size(); ++j)
      pairs.emplace_back(i, j);

  std::vector<DiffReport> reports;
  for (const auto& [i, j] : pairs)
    {
      DiffReport r;
      r.dump_a = dumps[i].label;
      r.dump_b = dumps[j].label;
      r.page_size = page_size;
      r.total_bytes = size;
      r.total_pages = pages;
      r.page_bitmap = PageBitmap(pages);
      reports.push_back(std::move(r));
    }

  // Per-chunk byte totals, summed in chunk order afterwards. Each chunk owns
  // whole bitmap words, so workers never share a word.
  std::vector<std::uint64_t> chunk_counts(chunks * pairs.size(), 0);
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    try
      {
        std::vector<std::vector<std::uint8_t>> buffers(dumps.size(),
                                                        std::vector<std::uint8_t>(chunk_bytes));
        for (std::uint64_t c = next++; c < chunks && !failed; c = next++)
          {
            const std::uint64_t offset = c * chunk_bytes;
            const std::uint64_t len = std::min(chunk_bytes, size - offset);
            for (std::size_t d = 0; d < dumps.size(); ++d)
              dumps[d].source->read(offset, std::span<std::uint8_t>(buffers[d].data(), len));

            for (std::size_t p = 0; p < pairs.size(); ++p)
              {
                const std::uint8_t* a = buffers[pairs[p].first].data();
                const std::uint8_t* b = buffers[pairs[p].second].data();
                auto words = reports[p].page_bitmap.words();
                std::uint64_t total = 0;
                for (std::uint64_t at = 0; at < len; at += page_size)
                  {
                    std::uint64_t n = count_differing(a + at, b + at, std::min(page_size, len - at));
                    if (n)
                      {
                        std::uint64_t page = c * chunk_pages + at / page_size;
                        words[page / 64] |= std::uint64_t{1} << (page % 64);
                        total += n;
                      }
                  }
                chunk_counts[c * pairs.size() + p] = total;
              }
          }
      }
    catch (...)
      {
        std::lock_guard lock(error_mutex);
        if (!error)
          error = std::current_exception();
        failed = true;
      }
  };

  unsigned threads = std::max(1u, options.threads);
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(chunks, 1)));
  if (threads == 1)
    {
      worker();
    }
  else
    {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back(worker);
      for (auto& t : pool)
        t.join();
    }
  if (error)
    std::rethrow_exception(error);

  for (std::size_t p = 0; p < pairs.size(); ++p)
    {
      for (std::uint64_t c = 0; c < chunks; ++c)
        reports[p].bytes_differing += chunk_counts[c * pairs.size() + p];
      reports[p].pages_differing = reports[p].page_bitmap.popcount();
    }
  return reports;
}


DiffReport
ueforensics::diff::diff(const LabeledSource& a, const LabeledSource& b, const DiffOptions& options)
{
  const LabeledSource both[] = {a, b};
  return std::move(pairwise_report(both, options).front());
}


DiffReport
ueforensics::diff::diff(const MemoryImage& a, const MemoryImage& b, const DiffOptions& options)
{
  return diff(LabeledSource{a.provenance(), image_source(a)},
              LabeledSource{b.provenance(), image_source(b)}, options);
}


DiffReport
ueforensics::diff::diff_files(const std::filesystem::path& a, const std::filesystem::path& b,
                              const DiffOptions& options)
{
  return diff(LabeledSource{a.stem().string(), file_source(a)},
              LabeledSource{b.stem().string(), file_source(b)}, options);
}
