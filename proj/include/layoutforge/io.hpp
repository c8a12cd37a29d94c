#pragma once

// File formats: dataset JSON, PGM/PPM renders and the LFT1 raw tensor dump.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutforge/errors.hpp"
#include "layoutforge/layout.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

using Json = nlohmann::json;

struct Dataset {
  std::vector<std::string> cell_types;
  std::vector<PointPattern> patches;

  std::size_t num_types() const noexcept { return cell_types.size(); }
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  out << text;
}

/// Parses JSON text; on failure the message names the 1-based line of the error.
inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError(source + ": malformed JSON at line " + std::to_string(line) + ": " + e.what());
  }
}

inline Dataset dataset_from_json(const Json& j) {
  Dataset ds;
  try {
    ds.cell_types = j.at("cell_types").get<std::vector<std::string>>();
    for (const Json& p : j.at("patches")) {
      PointPattern pattern;
      pattern.patch_id = p.at("id").get<std::string>();
      pattern.width = p.at("width").get<int>();
      pattern.height = p.at("height").get<int>();
      for (const Json& c : p.at("cells")) {
        const auto type = c.at("type").get<long long>();
        if (type < 0) throw ValidationError(pattern.patch_id, "negative cell type");
        pattern.cells.push_back({c.at("x").get<double>(), c.at("y").get<double>(), CellTypeId{static_cast<std::size_t>(type)}});
      }
      ds.patches.push_back(std::move(pattern));
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("dataset does not match schema: ") + e.what());
  }
  for (const auto& p : ds.patches) p.validate(ds.num_types());
  return ds;
}

inline Json dataset_to_json(const Dataset& ds) {
  Json patches = Json::array();
  for (const auto& p : ds.patches) {
    Json cells = Json::array();
    for (const auto& c : p.cells) cells.push_back({{"x", c.x}, {"y", c.y}, {"type", c.type.index}});
    patches.push_back({{"id", p.patch_id}, {"width", p.width}, {"height", p.height}, {"cells", std::move(cells)}});
  }
  return {{"cell_types", ds.cell_types}, {"patches", std::move(patches)}};
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(parse_json(read_text_file(path), path.string()));
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(ds).dump(1) + "\n");
}

// --- raster renders -------------------------------------------------------

/// Binary PGM (P5) of one channel, values in [0, 1] mapped to 0..255.
inline std::string encode_pgm(std::span<const double> plane, std::size_t height, std::size_t width) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double v : plane) out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

/// Palette for layout renders: tumor green, lymphocyte red, stromal blue, then extras.
inline std::array<std::uint8_t, 3> type_color(std::size_t type) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> palette{
      {{0, 200, 0}, {220, 0, 0}, {0, 80, 255}, {230, 200, 0}, {200, 0, 200}, {0, 200, 200}}};
  return palette[type % palette.size()];
}

/// Binary PPM (P6) composite of layout channels, one color per type on black.
inline std::string encode_ppm(const Tensor& layout, double threshold = 0.5) {
  const auto [types, h, w] = layout.shape();
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      std::array<int, 3> rgb{0, 0, 0};
      for (std::size_t c = 0; c < types; ++c) {
        if (layout.at(c, i, j) < threshold) continue;
        const auto col = type_color(c);
        for (int k = 0; k < 3; ++k) rgb[k] = std::min(255, rgb[k] + col[k]);
      }
      for (int v : rgb) out.push_back(static_cast<char>(v));
    }
  }
  return out;
}

// --- LFT1 raw tensor dump -------------------------------------------------
// 16-byte header: "LFT1", u32 channels, u32 height, u32 width; then float32
// values in (C, H, W) order. Everything little-endian.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + k])) << (8 * k);
  return v;
}

}  // namespace detail

inline std::string encode_lft(const Tensor& t) {
  std::string out = "LFT1";
  detail::put_u32(out, static_cast<std::uint32_t>(t.shape().channels));
  detail::put_u32(out, static_cast<std::uint32_t>(t.shape().height));
  detail::put_u32(out, static_cast<std::uint32_t>(t.shape().width));
  out.reserve(16 + 4 * t.size());
  for (double v : t.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

/// Decodes one LFT1 record starting at `offset`; advances offset past it.
inline Tensor decode_lft(const std::string& bytes, std::size_t& offset) {
  if (bytes.size() < offset + 16 || bytes.compare(offset, 4, "LFT1") != 0) throw ParseError("not an LFT1 tensor record");
  const TensorShape shape{detail::get_u32(bytes, offset + 4), detail::get_u32(bytes, offset + 8),
                          detail::get_u32(bytes, offset + 12)};
  if (bytes.size() < offset + 16 + 4 * shape.size()) throw ParseError("truncated LFT1 tensor payload");
  std::vector<double> data(shape.size());
  for (std::size_t k = 0; k < data.size(); ++k)
    data[k] = std::bit_cast<float>(detail::get_u32(bytes, offset + 16 + 4 * k));
  offset += 16 + 4 * shape.size();
  return {shape, std::move(data)};
}

inline Tensor decode_lft(const std::string& bytes) {
  std::size_t offset = 0;
  return decode_lft(bytes, offset);
}

}  // namespace layoutforge
