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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ueforensics::memory
{

  inline constexpr std::uint64_t kPageSize = 4096;

  using Page = std::array<std::uint8_t, kPageSize>;

  enum class RangePurpose : std::uint8_t
  {
    SystemRam = 1,
    Reserved = 2,
  };

  const char* to_string(RangePurpose purpose);
  std::optional<RangePurpose> parse_purpose(std::string_view text);

  enum class MemoryErrc
  {
    OverlappingRanges,
    UnalignedRange,
    NoSystemRam,
    RegionOutOfBounds,
    UnalignedAddress,
    OutOfBounds,
    Io,
    LengthMismatch,
    BadMapFile,
  };

  const char* to_string(MemoryErrc code);

  /// Accepts "0x"-prefixed hex or plain decimal.
  std::uint64_t parse_address(std::string_view text);
  std::string format_address(std::uint64_t addr);

  class MemoryError : public std::runtime_error
  {
  public:
    MemoryError(MemoryErrc code, const std::string& what)
      : std::runtime_error(what), code_(code)
    { }

    MemoryErrc code() const noexcept
    { return code_; }

  private:
    MemoryErrc code_;
  };

  /// Physical address range. The end address is inclusive.
  struct MemoryRange
  {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    RangePurpose purpose = RangePurpose::SystemRam;

    std::uint64_t size() const
    { return end - start + 1; }

    std::uint64_t page_count() const
    { return size() / kPageSize; }

    bool contains(std::uint64_t addr) const
    { return addr >= start && addr <= end; }

    bool operator==(const MemoryRange&) const = default;
  };

  /// Ordered, disjoint set of physical ranges. Construct through
  /// MemoryMap::create, which validates, or build the vector yourself and
  /// call validate_map.
  class MemoryMap
  {
  public:
    MemoryMap() = default;

    /// Throws MemoryError when the ranges violate a map invariant.
    static MemoryMap create(std::vector<MemoryRange> ranges);

    /// The three-range layout of a QEMU guest with 2 GiB of RAM: low
    /// conventional memory, the legacy PCI window and everything above 1 MiB.
    static MemoryMap qemu_2gib();

    const std::vector<MemoryRange>& ranges() const
    { return ranges_; }

    std::uint64_t page_size() const
    { return kPageSize; }

    /// One past the highest mapped address.
    std::uint64_t top() const;

    std::uint64_t total_pages() const
    { return top() / kPageSize; }

    std::uint64_t system_ram_pages() const;

    /// Range containing addr, if any.
    const MemoryRange* find(std::uint64_t addr) const;

    bool is_system_ram(std::uint64_t addr) const;

    bool operator==(const MemoryMap&) const = default;

  private:
    explicit MemoryMap(std::vector<MemoryRange> ranges)
      : ranges_(std::move(ranges))
    { }

    std::vector<MemoryRange> ranges_;
  };

  /// Checks ordering, disjointness, page alignment and the presence of at
  /// least one SystemRam range. Errors name the offending range index.
  void validate_map(std::span<const MemoryRange> ranges);

  inline void validate_map(const MemoryMap& map)
  { validate_map(map.ranges()); }

  /// Sidecar map file: {"page_size":4096,"ranges":[{"start":"0x..",
  /// "end":"0x..","purpose":"SystemRam"}]}.
  std::string map_to_json(const MemoryMap& map);
  MemoryMap map_from_json(std::string_view text);
  void save_map(const MemoryMap& map, const std::filesystem::path& path);
  MemoryMap load_map(const std::filesystem::path& path);

  /// Key of the per-page pseudorandom stream used to populate SystemRam.
  /// Each page is filled with 512 outputs of std::mt19937_64 seeded with
  /// this key, stored little-endian.
  std::uint64_t page_stream_key(std::uint64_t seed, std::uint64_t page_index);

  void fill_pseudorandom_page(std::uint64_t key, std::span<std::uint8_t, kPageSize> out);

  enum class FillMode : std::uint8_t
  {
    Zero,
    PseudoRandom,
  };

  struct OverwriteRegion
  {
    std::uint64_t start = 0;
    std::uint64_t length = 0;
    FillMode fill = FillMode::Zero;
    std::uint64_t fill_seed = 0;

    bool operator==(const OverwriteRegion&) const = default;
  };

  /// Memory a rebooting firmware rewrites, plus optional bit decay in the
  /// rest of SystemRam.
  struct FootprintProfile
  {
    std::vector<OverwriteRegion> overwrite_regions;
    double decay_bitflip_rate = 0.0;

    /// Lower region starting at 16 MiB plus an approximation of the upper
    /// region used by OVMF on a 2 GiB guest.
    static FootprintProfile ovmf_reboot();

    bool operator==(const FootprintProfile&) const = default;
  };

  std::string profile_to_json(const FootprintProfile& profile);
  FootprintProfile profile_from_json(std::string_view text);
  FootprintProfile load_profile(const std::filesystem::path& path);

  class ContentSource;

  /// Immutable view of simulated physical memory. Content is produced on
  /// demand from a base source (pseudorandom, zero, or a raw dump file) and
  /// a copy-on-write overlay of rewritten pages, so a 2 GiB image costs only
  /// the pages that differ from its base.
  class MemoryImage
  {
  public:
    MemoryImage(MemoryMap map, std::shared_ptr<const ContentSource> base,
                std::string provenance);

    const MemoryMap& map() const
    { return map_; }

    const std::string& provenance() const
    { return provenance_; }

    MemoryImage with_provenance(std::string label) const;

    std::uint64_t size() const
    { return map_.top(); }

    std::uint64_t page_count() const
    { return map_.total_pages(); }

    /// Copies page `index` into out. Pages outside SystemRam read as zero.
    void copy_page(std::uint64_t index, std::span<std::uint8_t, kPageSize> out) const;

    std::size_t overlay_pages() const
    { return overlay_ ? overlay_->size() : 0; }

    /// Byte-exact content equality.
    bool content_equals(const MemoryImage& other) const;

  private:
    friend MemoryImage apply_footprint(const MemoryImage&, const FootprintProfile&,
                                       std::uint64_t);

    using Overlay = std::map<std::uint64_t, Page>;

    MemoryMap map_;
    std::shared_ptr<const ContentSource> base_;
    std::shared_ptr<const Overlay> overlay_;
    std::string provenance_;
  };

  /// Supplies base page content for a MemoryImage.
  class ContentSource
  {
  public:
    virtual ~ContentSource() = default;
    virtual void read_page(std::uint64_t index, std::span<std::uint8_t, kPageSize> out) const = 0;
  };

  MemoryImage zero_image(const MemoryMap& map, std::string provenance = {});

  /// SystemRam pages filled from the page stream keyed by seed.
  MemoryImage new_image(const MemoryMap& map, std::uint64_t seed,
                        std::string provenance = {});

  /// Rewrites the profile's regions, then flips each remaining SystemRam bit
  /// with the profile's decay rate. Deterministic in seed.
  MemoryImage apply_footprint(const MemoryImage& image, const FootprintProfile& profile,
                              std::uint64_t seed);

  /// Set of page indices intersecting any region of the profile.
  std::vector<std::uint64_t> pages_touched(const FootprintProfile& profile);

  Page read_page(const MemoryImage& image, std::uint64_t addr);

  void write_raw_dump(const MemoryImage& image, const std::filesystem::path& path);

  /// Maps a flat dump file. Bytes outside SystemRam read as zero.
  MemoryImage load_raw_dump(const std::filesystem::path& path, const MemoryMap& map,
                            std::string provenance = {});

}
