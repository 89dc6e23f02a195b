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

// Byte and page differences between memory dumps, pairwise reports, and
// the page-wise diff pixmap.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ueforensics/memory_model.hpp"

namespace ueforensics::diff
{

  enum class DiffErrc
  {
    LengthMismatch,
    Io,
    TooFewDumps,
    BadPageSize,
  };

  const char* to_string(DiffErrc code);

  class DiffError : public std::runtime_error
  {
  public:
    DiffError(DiffErrc code, const std::string& what)
      : std::runtime_error(what), code_(code)
    { }

    DiffErrc code() const noexcept
    { return code_; }

  private:
    DiffErrc code_;
  };

  /// One bit per page, set when the page differs.
  class PageBitmap
  {
  public:
    PageBitmap() = default;
    explicit PageBitmap(std::uint64_t pages)
      : pages_(pages), words_((pages + 63) / 64, 0)
    { }

    std::uint64_t size() const
    { return pages_; }

    bool test(std::uint64_t page) const
    { return (words_[page / 64] >> (page % 64)) & 1; }

    void set(std::uint64_t page)
    { words_[page / 64] |= std::uint64_t{1} << (page % 64); }

    std::uint64_t popcount() const;

    std::span<const std::uint64_t> words() const
    { return words_; }

    std::span<std::uint64_t> words()
    { return words_; }

    bool operator==(const PageBitmap&) const = default;

  private:
    std::uint64_t pages_ = 0;
    std::vector<std::uint64_t> words_;
  };

  struct DiffReport
  {
    std::string dump_a;
    std::string dump_b;
    std::uint64_t page_size = memory::kPageSize;
    std::uint64_t total_bytes = 0;
    std::uint64_t total_pages = 0;
    std::uint64_t pages_differing = 0;
    std::uint64_t bytes_differing = 0;
    PageBitmap page_bitmap;

    /// bytes_differing / total_bytes; 0 for empty dumps.
    double proportion() const;
  };

  /// Random-access byte content of one dump. Implementations must allow
  /// concurrent reads.
  class DiffSource
  {
  public:
    virtual ~DiffSource() = default;
    virtual std::uint64_t size() const = 0;
    virtual void read(std::uint64_t offset, std::span<std::uint8_t> out) const = 0;
  };

  std::shared_ptr<const DiffSource> image_source(memory::MemoryImage image);

  /// Throws DiffError{Io}.
  std::shared_ptr<const DiffSource> file_source(const std::filesystem::path& path);

  struct LabeledSource
  {
    std::string label;
    std::shared_ptr<const DiffSource> source;
  };

  struct DiffOptions
  {
    /// Must be a non-zero multiple of 8.
    std::uint64_t page_size = memory::kPageSize;
    /// Pages compared per read; rounded up to a multiple of 64.
    std::uint64_t chunk_pages = 1024;
    /// Worker threads; results do not depend on this.
    unsigned threads = 1;
  };

  /// Throws DiffError{LengthMismatch} when sizes differ.
  DiffReport diff(const LabeledSource& a, const LabeledSource& b, const DiffOptions& options = {});

  /// Labels are the images' provenance.
  DiffReport diff(const memory::MemoryImage& a, const memory::MemoryImage& b,
                  const DiffOptions& options = {});

  /// Labels are the file stems.
  DiffReport diff_files(const std::filesystem::path& a, const std::filesystem::path& b,
                        const DiffOptions& options = {});

  /// All unordered pairs (i < j) in lexicographic index order, computed in
  /// one pass over the inputs.
  std::vector<DiffReport> pairwise_report(std::span<const LabeledSource> dumps,
                                          const DiffOptions& options = {});

  // --- Output -------------------------------------------------------------

  struct Rgb
  {
    std::uint8_t r = 0, g = 0, b = 0;

    bool operator==(const Rgb&) const = default;
  };

  inline constexpr Rgb kEqualColor{0, 0, 255};
  inline constexpr Rgb kDifferColor{255, 0, 0};
  inline constexpr Rgb kPaddingColor{0, 0, 0};
  inline constexpr std::uint32_t kPixmapWidth = 512;

  struct Pixmap
  {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<Rgb> pixels;   // row-major, row 0 at the top

    Rgb at(std::uint32_t x, std::uint32_t y) const
    { return pixels[static_cast<std::size_t>(y) * width + x]; }
  };

  struct PixelPos
  {
    std::uint32_t x = 0;
    std::uint32_t y = 0;

    bool operator==(const PixelPos&) const = default;
  };

  std::uint32_t pixmap_height(std::uint64_t total_pages);

  /// Page 0 sits at the bottom-left; indices grow to the right, then up.
  PixelPos page_to_pixel(std::uint64_t page, std::uint32_t height);
  std::uint64_t pixel_to_page(PixelPos pos, std::uint32_t height);

  Pixmap render_diff(const DiffReport& report);

  /// Binary P6 with maxval 255.
  std::string pixmap_to_ppm(const Pixmap& pixmap);
  void write_ppm(const Pixmap& pixmap, const std::filesystem::path& path);

  /// "24.6" for 25794969; half-up to one decimal.
  std::string format_mib(std::uint64_t bytes);
  /// "1.2" for 25794969 of 2 GiB; half-up to one decimal.
  std::string format_percent(std::uint64_t part, std::uint64_t whole);

  /// Aligned rows: index, labels, pages, "<x.y> MiB", "<x.y> %".
  std::string format_table(std::span<const DiffReport> reports);

  /// {"pairs":[{"a","b","pages","bytes","proportion"}]}.
  std::string report_to_json(std::span<const DiffReport> reports);

}
