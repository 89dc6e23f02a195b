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

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

using namespace ueforensics::diff;


namespace
{

  using u128 = unsigned __int128;

  std::string
  tenths(std::uint64_t value)
  {
    return std::to_string(value / 10) + "." + std::to_string(value % 10);
  }

  // round(num / den) with halves rounded up
  std::uint64_t
  round_half_up(u128 num, u128 den)
  {
    return static_cast<std::uint64_t>((2 * num + den) / (2 * den));
  }

}


std::uint32_t
ueforensics::diff::pixmap_height(std::uint64_t total_pages)
{
  return static_cast<std::uint32_t>((total_pages + kPixmapWidth - 1) / kPixmapWidth);
}


PixelPos
ueforensics::diff::page_to_pixel(std::uint64_t page, std::uint32_t height)
{
  return {static_cast<std::uint32_t>(page % kPixmapWidth),
          height - 1 - static_cast<std::uint32_t>(page / kPixmapWidth)};
}


std::uint64_t
ueforensics::diff::pixel_to_page(PixelPos pos, std::uint32_t height)
{
  return static_cast<std::uint64_t>(height - 1 - pos.y) * kPixmapWidth + pos.x;
}


Pixmap
ueforensics::diff::render_diff(const DiffReport& report)
{
  Pixmap pm;
  pm.width = kPixmapWidth;
  pm.height = pixmap_height(report.total_pages);
  pm.pixels.assign(static_cast<std::size_t>(pm.width) * pm.height, kPaddingColor);
  for (std::uint64_t page = 0; page < report.total_pages; ++page)
    {
      PixelPos p = page_to_pixel(page, pm.height);
      pm.pixels[static_cast<std::size_t>(p.y) * pm.width + p.x]
          = report.page_bitmap.test(page) ? kDifferColor : kEqualColor;
    }
  return pm;
}


std::string
ueforensics::diff::pixmap_to_ppm(const Pixmap& pm)
{
  std::string out = "P6\n" + std::to_string(pm.width) + " " + std::to_string(pm.height) + "\n255\n";
  out.reserve(out.size() + pm.pixels.size() * 3);
  for (const Rgb& px : pm.pixels)
    {
      out += static_cast<char>(px.r);
      out += static_cast<char>(px.g);
      out += static_cast<char>(px.b);
    }
  return out;
}


void
ueforensics::diff::write_ppm(const Pixmap& pixmap, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  std::string bytes = pixmap_to_ppm(pixmap);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw DiffError(DiffErrc::Io, "cannot write " + path.string());
}


std::string
ueforensics::diff::format_mib(std::uint64_t bytes)
{
  return tenths(round_half_up(u128(bytes) * 10, u128(1) << 20));
}


std::string
ueforensics::diff::format_percent(std::uint64_t part, std::uint64_t whole)
{
  if (whole == 0)
    return "0.0";
  return tenths(round_half_up(u128(part) * 1000, whole));
}


std::string
ueforensics::diff::format_table(std::span<const DiffReport> reports)
{
  const std::vector<std::string> header{"#", "Dump 1", "Dump 2", "Total Pages", "Size", "Proportion"};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < reports.size(); ++i)
    {
      const DiffReport& r = reports[i];
      rows.push_back({std::to_string(i + 1), r.dump_a, r.dump_b, std::to_string(r.pages_differing),
                      format_mib(r.bytes_differing) + " MiB",
                      format_percent(r.bytes_differing, r.total_bytes) + " %"});
    }

  // The last column is sized by its values alone so that rows keep a
  // two-space gap before it.
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c)
    {
      if (c + 1 < header.size())
        width[c] = header[c].size();
      for (const auto& row : rows)
        width[c] = std::max(width[c], row[c].size());
    }

  auto render = [&](const std::vector<std::string>& cells, bool is_header) {
    std::ostringstream line;
    for (std::size_t c = 0; c < cells.size(); ++c)
      {
        if (c)
          line << "  ";
        bool left = c == 1 || c == 2 || (is_header && c + 1 == cells.size());
        line << (left ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << cells[c];
      }
    std::string s = line.str();
    s.erase(s.find_last_not_of(' ') + 1);
    return s + "\n";
  };

  std::string out = render(header, true);
  for (const auto& row : rows)
    out += render(row, false);
  return out;
}


std::string
ueforensics::diff::report_to_json(std::span<const DiffReport> reports)
{
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& r : reports)
    pairs.push_back({{"a", r.dump_a},
                     {"b", r.dump_b},
                     {"pages", r.pages_differing},
                     {"bytes", r.bytes_differing},
                     {"proportion", r.proportion()}});
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["pairs"] = std::move(pairs);
  if (!reports.empty())
    {
      j["total_bytes"] = reports.front().total_bytes;
      j["page_size"] = reports.front().page_size;
    }
  return j.dump(2);
}
