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

#include "ueforensics/memory_model.hpp"

#include "ueforensics/detail/unique_fd.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

using namespace ueforensics::memory;
using ueforensics::detail::UniqueFd;
using json = nlohmann::json;


namespace
{

  constexpr std::uint64_t kFillStreamTag = 0x46494c4c50414745ull;   // "FILLPAGE"
  constexpr std::uint64_t kDecayStreamTag = 0x4445434159424954ull;  // "DECAYBIT"

  std::uint64_t
  splitmix64(std::uint64_t x)
  {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }


  std::string
  errno_text()
  {
    return std::strerror(errno);
  }


  class ZeroSource final : public ContentSource
  {
  public:
    void read_page(std::uint64_t, std::span<std::uint8_t, kPageSize> out) const override
    {
      std::fill(out.begin(), out.end(), std::uint8_t{0});
    }
  };


  class PseudoRandomSource final : public ContentSource
  {
  public:
    explicit PseudoRandomSource(std::uint64_t seed)
      : seed_(seed)
    { }

    void read_page(std::uint64_t index, std::span<std::uint8_t, kPageSize> out) const override
    {
      fill_pseudorandom_page(page_stream_key(seed_, index), out);
    }

  private:
    std::uint64_t seed_;
  };


  class RawFileSource final : public ContentSource
  {
  public:
    explicit RawFileSource(UniqueFd fd, std::filesystem::path path)
      : fd_(std::move(fd)), path_(std::move(path))
    { }

    void read_page(std::uint64_t index, std::span<std::uint8_t, kPageSize> out) const override
    {
      std::size_t done = 0;
      const auto offset = static_cast<off_t>(index * kPageSize);
      while (done < out.size())
        {
          ssize_t n = ::pread(fd_.get(), out.data() + done, out.size() - done,
                              offset + static_cast<off_t>(done));
          if (n < 0 && errno == EINTR)
            continue;
          if (n <= 0)
            throw MemoryError(MemoryErrc::Io, "read failed on " + path_.string());
          done += static_cast<std::size_t>(n);
        }
    }

  private:
    UniqueFd fd_;
    std::filesystem::path path_;
  };


  bool
  region_in_system_ram(const MemoryMap& map, const OverwriteRegion& region)
  {
    if (region.length == 0)
      return true;
    std::uint64_t last = region.start + region.length - 1;
    if (last < region.start)
      return false;
    std::uint64_t addr = region.start;
    while (true)
      {
        const MemoryRange* range = map.find(addr);
        if (!range || range->purpose != RangePurpose::SystemRam)
          return false;
        if (range->end >= last)
          return true;
        addr = range->end + 1;
      }
  }


  void
  fill_region_bytes(const OverwriteRegion& region, std::uint64_t seed,
                    std::uint64_t page_index, std::span<std::uint8_t, kPageSize> page)
  {
    std::uint64_t page_base = page_index * kPageSize;
    std::uint64_t from = std::max(region.start, page_base);
    std::uint64_t to = std::min(region.start + region.length, page_base + kPageSize);
    if (from >= to)
      return;

    if (region.fill == FillMode::Zero)
      {
        std::fill(page.begin() + (from - page_base), page.begin() + (to - page_base),
                  std::uint8_t{0});
        return;
      }

    Page noise;
    std::uint64_t stream_seed = splitmix64(seed) ^ region.fill_seed ^ kFillStreamTag;
    fill_pseudorandom_page(page_stream_key(stream_seed, page_index), noise);
    std::copy(noise.begin() + (from - page_base), noise.begin() + (to - page_base),
              page.begin() + (from - page_base));
  }

}


const char*
ueforensics::memory::to_string(RangePurpose purpose)
{
  switch (purpose)
    {
    case RangePurpose::SystemRam: return "SystemRam";
    case RangePurpose::Reserved:  return "Reserved";
    }
  return "?";
}


std::optional<RangePurpose>
ueforensics::memory::parse_purpose(std::string_view text)
{
  if (text == "SystemRam")
    return RangePurpose::SystemRam;
  if (text == "Reserved")
    return RangePurpose::Reserved;
  return std::nullopt;
}


const char*
ueforensics::memory::to_string(MemoryErrc code)
{
  switch (code)
    {
    case MemoryErrc::OverlappingRanges: return "OverlappingRanges";
    case MemoryErrc::UnalignedRange:    return "UnalignedRange";
    case MemoryErrc::NoSystemRam:       return "NoSystemRam";
    case MemoryErrc::RegionOutOfBounds: return "RegionOutOfBounds";
    case MemoryErrc::UnalignedAddress:  return "UnalignedAddress";
    case MemoryErrc::OutOfBounds:       return "OutOfBounds";
    case MemoryErrc::Io:                return "Io";
    case MemoryErrc::LengthMismatch:    return "LengthMismatch";
    case MemoryErrc::BadMapFile:        return "BadMapFile";
    }
  return "?";
}


std::uint64_t
ueforensics::memory::parse_address(std::string_view text)
{
  int base = 10;
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X'))
    {
      text.remove_prefix(2);
      base = 16;
    }
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, base);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw MemoryError(MemoryErrc::BadMapFile, "bad address: " + std::string(text));
  return value;
}


std::string
ueforensics::memory::format_address(std::uint64_t addr)
{
  char buf[2 + 16 + 1];
  auto [ptr, ec] = std::to_chars(buf + 2, buf + sizeof(buf), addr, 16);
  buf[0] = '0';
  buf[1] = 'x';
  return std::string(buf, ptr);
}


void
ueforensics::memory::validate_map(std::span<const MemoryRange> ranges)
{
  bool have_ram = false;
  for (std::size_t i = 0; i < ranges.size(); ++i)
    {
      const auto& r = ranges[i];
      const std::string tag = "range " + std::to_string(i);
      if (r.start > r.end || r.start % kPageSize != 0 || (r.end + 1) % kPageSize != 0)
        throw MemoryError(MemoryErrc::UnalignedRange, tag + " is not page aligned");
      if (i > 0 && r.start <= ranges[i - 1].end)
        throw MemoryError(MemoryErrc::OverlappingRanges,
                          tag + " overlaps or precedes range " + std::to_string(i - 1));
      have_ram = have_ram || r.purpose == RangePurpose::SystemRam;
    }
  if (!have_ram)
    throw MemoryError(MemoryErrc::NoSystemRam, "map has no SystemRam range");
}


MemoryMap
MemoryMap::create(std::vector<MemoryRange> ranges)
{
  validate_map(ranges);
  return MemoryMap(std::move(ranges));
}


MemoryMap
MemoryMap::qemu_2gib()
{
  return create({
      {0x00000000, 0x0009ffff, RangePurpose::SystemRam},
      {0x000a0000, 0x000bffff, RangePurpose::Reserved},
      {0x00100000, 0x7fffffff, RangePurpose::SystemRam},
    });
}


std::uint64_t
MemoryMap::top() const
{
  return ranges_.empty() ? 0 : ranges_.back().end + 1;
}


std::uint64_t
MemoryMap::system_ram_pages() const
{
  std::uint64_t pages = 0;
  for (const auto& r : ranges_)
    if (r.purpose == RangePurpose::SystemRam)
      pages += r.page_count();
  return pages;
}


const MemoryRange*
MemoryMap::find(std::uint64_t addr) const
{
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), addr,
                             [](std::uint64_t a, const MemoryRange& r) { return a < r.start; });
  if (it == ranges_.begin())
    return nullptr;
  --it;
  return it->contains(addr) ? &*it : nullptr;
}


bool
MemoryMap::is_system_ram(std::uint64_t addr) const
{
  const MemoryRange* r = find(addr);
  return r && r->purpose == RangePurpose::SystemRam;
}


std::string
ueforensics::memory::map_to_json(const MemoryMap& map)
{
  json ranges = json::array();
  for (const auto& r : map.ranges())
    ranges.push_back({{"start", format_address(r.start)},
                      {"end", format_address(r.end)},
                      {"purpose", to_string(r.purpose)}});
  json doc = {{"page_size", kPageSize}, {"ranges", ranges}};
  return doc.dump(2);
}


MemoryMap
ueforensics::memory::map_from_json(std::string_view text)
{
  json doc;
  try
    {
      doc = json::parse(text);
    }
  catch (const json::exception& e)
    {
      throw MemoryError(MemoryErrc::BadMapFile, std::string("map json: ") + e.what());
    }

  auto address_of = [](const json& v) -> std::uint64_t {
    if (v.is_string())
      return parse_address(v.get<std::string>());
    if (v.is_number_unsigned())
      return v.get<std::uint64_t>();
    throw MemoryError(MemoryErrc::BadMapFile, "address must be a hex string");
  };

  if (!doc.is_object() || !doc.contains("ranges") || !doc["ranges"].is_array())
    throw MemoryError(MemoryErrc::BadMapFile, "map json: missing ranges array");
  if (doc.contains("page_size") && doc["page_size"] != kPageSize)
    throw MemoryError(MemoryErrc::BadMapFile, "map json: page_size must be 4096");

  std::vector<MemoryRange> ranges;
  for (const auto& item : doc["ranges"])
    {
      if (!item.is_object() || !item.contains("start") || !item.contains("end")
          || !item.contains("purpose") || !item["purpose"].is_string())
        throw MemoryError(MemoryErrc::BadMapFile, "map json: malformed range");
      auto purpose = parse_purpose(item["purpose"].get<std::string>());
      if (!purpose)
        throw MemoryError(MemoryErrc::BadMapFile, "map json: unknown purpose");
      ranges.push_back({address_of(item["start"]), address_of(item["end"]), *purpose});
    }
  return MemoryMap::create(std::move(ranges));
}


void
ueforensics::memory::save_map(const MemoryMap& map, const std::filesystem::path& path)
{
  std::ofstream out(path);
  out << map_to_json(map) << '\n';
  if (!out)
    throw MemoryError(MemoryErrc::Io, "cannot write " + path.string());
}


namespace
{
  std::string
  slurp(const std::filesystem::path& path)
  {
    std::ifstream in(path);
    if (!in)
      throw MemoryError(MemoryErrc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
}


MemoryMap
ueforensics::memory::load_map(const std::filesystem::path& path)
{
  return map_from_json(slurp(path));
}


FootprintProfile
FootprintProfile::ovmf_reboot()
{
  FootprintProfile p;
  p.overwrite_regions.push_back({0x1000000, 7 * 1024 * 1024, FillMode::PseudoRandom, 1});
  p.overwrite_regions.push_back({0x7e800000, 24 * 1024 * 1024, FillMode::PseudoRandom, 2});
  return p;
}


std::string
ueforensics::memory::profile_to_json(const FootprintProfile& profile)
{
  json regions = json::array();
  for (const auto& r : profile.overwrite_regions)
    {
      json item = {{"start", format_address(r.start)},
                   {"length", format_address(r.length)},
                   {"fill", r.fill == FillMode::Zero ? "zero" : "random"}};
      if (r.fill == FillMode::PseudoRandom)
        item["seed"] = r.fill_seed;
      regions.push_back(item);
    }
  json doc = {{"overwrite_regions", regions}, {"decay_bitflip_rate", profile.decay_bitflip_rate}};
  return doc.dump(2);
}


FootprintProfile
ueforensics::memory::profile_from_json(std::string_view text)
{
  json doc;
  try
    {
      doc = json::parse(text);
    }
  catch (const json::exception& e)
    {
      throw MemoryError(MemoryErrc::BadMapFile, std::string("profile json: ") + e.what());
    }
  if (!doc.is_object())
    throw MemoryError(MemoryErrc::BadMapFile, "profile json: expected object");

  auto number_of = [](const json& v) -> std::uint64_t {
    if (v.is_string())
      return parse_address(v.get<std::string>());
    if (v.is_number_unsigned())
      return v.get<std::uint64_t>();
    throw MemoryError(MemoryErrc::BadMapFile, "profile json: bad number");
  };

  FootprintProfile profile;
  if (doc.contains("decay_bitflip_rate"))
    {
      if (!doc["decay_bitflip_rate"].is_number())
        throw MemoryError(MemoryErrc::BadMapFile, "profile json: bad decay rate");
      profile.decay_bitflip_rate = doc["decay_bitflip_rate"].get<double>();
      if (!(profile.decay_bitflip_rate >= 0.0 && profile.decay_bitflip_rate <= 1.0))
        throw MemoryError(MemoryErrc::BadMapFile, "profile json: decay rate outside [0,1]");
    }
  for (const auto& item : doc.value("overwrite_regions", json::array()))
    {
      if (!item.is_object() || !item.contains("start") || !item.contains("length"))
        throw MemoryError(MemoryErrc::BadMapFile, "profile json: malformed region");
      OverwriteRegion r;
      r.start = number_of(item["start"]);
      r.length = number_of(item["length"]);
      std::string fill = item.value("fill", "zero");
      if (fill == "zero")
        r.fill = FillMode::Zero;
      else if (fill == "random")
        r.fill = FillMode::PseudoRandom;
      else
        throw MemoryError(MemoryErrc::BadMapFile, "profile json: unknown fill " + fill);
      if (item.contains("seed"))
        r.fill_seed = number_of(item["seed"]);
      profile.overwrite_regions.push_back(r);
    }
  return profile;
}


FootprintProfile
ueforensics::memory::load_profile(const std::filesystem::path& path)
{
  return profile_from_json(slurp(path));
}


std::uint64_t
ueforensics::memory::page_stream_key(std::uint64_t seed, std::uint64_t page_index)
{
  return splitmix64(seed ^ splitmix64(page_index));
}


void
ueforensics::memory::fill_pseudorandom_page(std::uint64_t key,
                                            std::span<std::uint8_t, kPageSize> out)
{
  std::mt19937_64 engine(key);
  for (std::size_t i = 0; i < kPageSize; i += 8)
    {
      std::uint64_t word = engine();
      for (std::size_t b = 0; b < 8; ++b)
        out[i + b] = static_cast<std::uint8_t>(word >> (8 * b));
    }
}


MemoryImage::MemoryImage(MemoryMap map, std::shared_ptr<const ContentSource> base,
                         std::string provenance)
  : map_(std::move(map)), base_(std::move(base)), provenance_(std::move(provenance))
{ }


MemoryImage
MemoryImage::with_provenance(std::string label) const
{
  MemoryImage copy = *this;
  copy.provenance_ = std::move(label);
  return copy;
}


void
MemoryImage::copy_page(std::uint64_t index, std::span<std::uint8_t, kPageSize> out) const
{
  if (!map_.is_system_ram(index * kPageSize))
    {
      std::fill(out.begin(), out.end(), std::uint8_t{0});
      return;
    }
  if (overlay_)
    {
      auto it = overlay_->find(index);
      if (it != overlay_->end())
        {
          std::copy(it->second.begin(), it->second.end(), out.begin());
          return;
        }
    }
  base_->read_page(index, out);
}


bool
MemoryImage::content_equals(const MemoryImage& other) const
{
  if (size() != other.size())
    return false;
  Page a, b;
  for (std::uint64_t i = 0; i < page_count(); ++i)
    {
      copy_page(i, a);
      other.copy_page(i, b);
      if (a != b)
        return false;
    }
  return true;
}


MemoryImage
ueforensics::memory::zero_image(const MemoryMap& map, std::string provenance)
{
  validate_map(map);
  return MemoryImage(map, std::make_shared<ZeroSource>(), std::move(provenance));
}


MemoryImage
ueforensics::memory::new_image(const MemoryMap& map, std::uint64_t seed, std::string provenance)
{
  validate_map(map);
  return MemoryImage(map, std::make_shared<PseudoRandomSource>(seed), std::move(provenance));
}


std::vector<std::uint64_t>
ueforensics::memory::pages_touched(const FootprintProfile& profile)
{
  std::set<std::uint64_t> pages;
  for (const auto& r : profile.overwrite_regions)
    {
      if (r.length == 0)
        continue;
      for (std::uint64_t p = r.start / kPageSize; p <= (r.start + r.length - 1) / kPageSize; ++p)
        pages.insert(p);
    }
  return {pages.begin(), pages.end()};
}


MemoryImage
ueforensics::memory::apply_footprint(const MemoryImage& image, const FootprintProfile& profile,
                                     std::uint64_t seed)
{
  for (std::size_t i = 0; i < profile.overwrite_regions.size(); ++i)
    if (!region_in_system_ram(image.map(), profile.overwrite_regions[i]))
      throw MemoryError(MemoryErrc::RegionOutOfBounds,
                        "overwrite region " + std::to_string(i) + " leaves SystemRam");
  if (!(profile.decay_bitflip_rate >= 0.0 && profile.decay_bitflip_rate <= 1.0))
    throw MemoryError(MemoryErrc::RegionOutOfBounds, "decay rate outside [0,1]");

  auto overlay = image.overlay_ ? std::make_shared<MemoryImage::Overlay>(*image.overlay_)
                                : std::make_shared<MemoryImage::Overlay>();

  auto materialize = [&](std::uint64_t page_index) -> Page& {
    auto [it, inserted] = overlay->try_emplace(page_index);
    if (inserted)
      image.copy_page(page_index, it->second);
    return it->second;
  };

  for (const auto& region : profile.overwrite_regions)
    {
      if (region.length == 0)
        continue;
      std::uint64_t first = region.start / kPageSize;
      std::uint64_t last = (region.start + region.length - 1) / kPageSize;
      for (std::uint64_t p = first; p <= last; ++p)
        fill_region_bytes(region, seed, p, materialize(p));
    }

  if (profile.decay_bitflip_rate > 0.0)
    {
      auto in_region = [&](std::uint64_t addr) {
        return std::any_of(profile.overwrite_regions.begin(), profile.overwrite_regions.end(),
                           [&](const OverwriteRegion& r) {
                             return addr >= r.start && addr - r.start < r.length;
                           });
      };

      // Geometric gaps between flipped bits over the SystemRam bit space.
      std::mt19937_64 rng(splitmix64(seed ^ kDecayStreamTag));
      std::geometric_distribution<std::uint64_t> gap(profile.decay_bitflip_rate);
      for (const auto& range : image.map().ranges())
        {
          if (range.purpose != RangePurpose::SystemRam)
            continue;
          const std::uint64_t bits = range.size() * 8;
          for (std::uint64_t bit = gap(rng); bit < bits; bit += 1 + gap(rng))
            {
              std::uint64_t addr = range.start + bit / 8;
              if (in_region(addr))
                continue;
              Page& page = materialize(addr / kPageSize);
              page[addr % kPageSize] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            }
        }
    }

  MemoryImage result = image;
  result.overlay_ = std::move(overlay);
  return result;
}


Page
ueforensics::memory::read_page(const MemoryImage& image, std::uint64_t addr)
{
  if (addr % kPageSize != 0)
    throw MemoryError(MemoryErrc::UnalignedAddress,
                      "address " + format_address(addr) + " is not page aligned");
  if (addr >= image.size())
    throw MemoryError(MemoryErrc::OutOfBounds,
                      "address " + format_address(addr) + " beyond top of memory");
  Page page;
  image.copy_page(addr / kPageSize, page);
  return page;
}


void
ueforensics::memory::write_raw_dump(const MemoryImage& image, const std::filesystem::path& path)
{
  UniqueFd fd(::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (!fd)
    throw MemoryError(MemoryErrc::Io, "cannot create " + path.string() + ": " + errno_text());

  constexpr std::uint64_t kBatch = 256;
  std::vector<std::uint8_t> buffer(kBatch * kPageSize);
  const std::uint64_t pages = image.page_count();
  for (std::uint64_t first = 0; first < pages; first += kBatch)
    {
      std::uint64_t count = std::min(kBatch, pages - first);
      for (std::uint64_t i = 0; i < count; ++i)
        image.copy_page(first + i,
                        std::span<std::uint8_t, kPageSize>(buffer.data() + i * kPageSize,
                                                           kPageSize));
      std::size_t len = count * kPageSize;
      std::size_t done = 0;
      while (done < len)
        {
          ssize_t n = ::write(fd.get(), buffer.data() + done, len - done);
          if (n < 0 && errno == EINTR)
            continue;
          if (n <= 0)
            throw MemoryError(MemoryErrc::Io, "write failed on " + path.string() + ": "
                              + errno_text());
          done += static_cast<std::size_t>(n);
        }
    }
}


MemoryImage
ueforensics::memory::load_raw_dump(const std::filesystem::path& path, const MemoryMap& map,
                                   std::string provenance)
{
  validate_map(map);
  UniqueFd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (!fd)
    throw MemoryError(MemoryErrc::Io, "cannot open " + path.string() + ": " + errno_text());
  struct stat st{};
  if (::fstat(fd.get(), &st) != 0)
    throw MemoryError(MemoryErrc::Io, "cannot stat " + path.string());
  if (static_cast<std::uint64_t>(st.st_size) != map.top())
    throw MemoryError(MemoryErrc::LengthMismatch,
                      path.string() + " has " + std::to_string(st.st_size)
                      + " bytes, map expects " + std::to_string(map.top()));
  return MemoryImage(map, std::make_shared<RawFileSource>(std::move(fd), path),
                     std::move(provenance));
}
