#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gal/tensor.hpp"

namespace gal {

namespace detail {

inline void append_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

// Cursor over an in-memory file image; all errors carry the byte offset.
struct ByteReader {
  const std::string& bytes;
  size_t pos = 0;
  const std::string& what;  // file path, for messages

  uint32_t u32(const char* field) {
    if (pos + 4 > bytes.size())
      throw std::runtime_error(what + ": truncated reading " + field + " at byte " +
                               std::to_string(pos) + " (file is " +
                               std::to_string(bytes.size()) + " bytes)");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }

  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  std::string raw(size_t n, const char* field) {
    if (pos + n > bytes.size())
      throw std::runtime_error(what + ": truncated reading " + field + " at byte " +
                               std::to_string(pos) + " (need " + std::to_string(n) +
                               " bytes, have " + std::to_string(bytes.size() - pos) + ")");
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }

  bool done() const { return pos == bytes.size(); }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void encode_galt(std::string& out, const Tensor<float>& t) {
  out += "GALT";
  append_u32(out, 1);  // version
  append_u32(out, static_cast<uint32_t>(t.rank()));
  for (int d = 0; d < t.rank(); ++d) append_u32(out, static_cast<uint32_t>(t.dim(d)));
  for (float v : t.vec()) append_u32(out, std::bit_cast<uint32_t>(v));
}

inline Tensor<float> decode_galt(ByteReader& r) {
  const size_t start = r.pos;
  std::string magic = r.raw(4, "magic");
  if (magic != "GALT")
    throw std::runtime_error(r.what + ": bad magic at byte " + std::to_string(start) +
                             " (expected GALT)");
  uint32_t version = r.u32("version");
  if (version != 1)
    throw std::runtime_error(r.what + ": unsupported version " + std::to_string(version) +
                             " at byte " + std::to_string(start + 4));
  uint32_t rank = r.u32("rank");
  if (rank < 1 || rank > 4)
    throw std::runtime_error(r.what + ": rank " + std::to_string(rank) +
                             " out of range [1,4] at byte " + std::to_string(start + 8));
  Shape shape;
  size_t numel = 1;
  for (uint32_t d = 0; d < rank; ++d) {
    uint32_t dim = r.u32("dim");
    if (dim == 0 || dim > (1u << 24))
      throw std::runtime_error(r.what + ": dimension " + std::to_string(dim) +
                               " out of range at byte " + std::to_string(r.pos - 4));
    shape.push_back(static_cast<int>(dim));
    numel *= dim;
  }
  std::vector<float> data(numel);
  const size_t need = numel * 4;
  if (r.pos + need > r.bytes.size())
    throw std::runtime_error(r.what + ": truncated payload at byte " +
                             std::to_string(r.pos) + " (expected " + std::to_string(need) +
                             " payload bytes, have " +
                             std::to_string(r.bytes.size() - r.pos) + ")");
  for (size_t i = 0; i < numel; ++i) data[i] = r.f32("payload");
  return Tensor<float>(shape, std::move(data));
}

}  // namespace detail

inline void save_galt(const Tensor<float>& t, const std::string& path) {
  std::string out;
  detail::encode_galt(out, t);
  detail::write_file(path, out);
}

inline Tensor<float> load_galt(const std::string& path) {
  std::string bytes = detail::read_file(path);
  detail::ByteReader r{bytes, 0, path};
  Tensor<float> t = detail::decode_galt(r);
  if (!r.done())
    throw std::runtime_error(path + ": " + std::to_string(bytes.size() - r.pos) +
                             " trailing bytes after payload at byte " +
                             std::to_string(r.pos));
  return t;
}

// Checkpoint container: repeated (name_len u32 LE, name bytes, GALT record).
using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

inline void save_checkpoint(const NamedTensors& entries, const std::string& path) {
  std::string out;
  for (const auto& [name, t] : entries) {
    detail::append_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    detail::encode_galt(out, t);
  }
  detail::write_file(path, out);
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::string bytes = detail::read_file(path);
  detail::ByteReader r{bytes, 0, path};
  NamedTensors entries;
  while (!r.done()) {
    uint32_t len = r.u32("name length");
    if (len == 0 || len > 4096)
      throw std::runtime_error(path + ": entry name length " + std::to_string(len) +
                               " out of range at byte " + std::to_string(r.pos - 4));
    std::string name = r.raw(len, "entry name");
    entries.emplace_back(std::move(name), detail::decode_galt(r));
  }
  return entries;
}

inline const Tensor<float>& checkpoint_entry(const NamedTensors& entries,
                                             const std::string& name) {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw std::runtime_error("checkpoint is missing entry '" + name + "'");
}

// --- P5/P6 rasters, 8-bit binary only ---

namespace detail {

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  size_t payload_pos = 0;
};

inline PnmHeader parse_pnm_header(const std::string& bytes, const std::string& path) {
  size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&](const char* field) {
    skip_space();
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    if (start == pos)
      throw std::runtime_error(path + ": truncated raster header reading " +
                               std::string(field));
    return bytes.substr(start, pos - start);
  };
  PnmHeader h;
  h.magic = token("magic");
  if (h.magic == "P2" || h.magic == "P3")
    throw std::runtime_error(path + ": ASCII raster " + h.magic +
                             " unsupported (use binary P5/P6)");
  if (h.magic != "P5" && h.magic != "P6")
    throw std::runtime_error(path + ": not a P5/P6 raster (magic '" + h.magic + "')");
  h.width = std::stoi(token("width"));
  h.height = std::stoi(token("height"));
  h.maxval = std::stoi(token("maxval"));
  if (h.width < 1 || h.height < 1)
    throw std::runtime_error(path + ": bad raster dimensions " + std::to_string(h.width) +
                             "x" + std::to_string(h.height));
  if (h.maxval > 255)
    throw std::runtime_error(path + ": 16-bit raster (maxval " +
                             std::to_string(h.maxval) + ") unsupported");
  if (h.maxval < 1)
    throw std::runtime_error(path + ": bad maxval " + std::to_string(h.maxval));
  // exactly one whitespace byte separates maxval from the payload
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw std::runtime_error(path + ": missing separator after maxval");
  h.payload_pos = pos + 1;
  return h;
}

}  // namespace detail

// PGM -> H×W×1, PPM -> H×W×3; byte values scaled to [0,1].
inline Tensor<float> load_raster(const std::string& path) {
  std::string bytes = detail::read_file(path);
  detail::PnmHeader h = detail::parse_pnm_header(bytes, path);
  const int channels = h.magic == "P5" ? 1 : 3;
  const size_t need = static_cast<size_t>(h.width) * h.height * channels;
  if (bytes.size() - h.payload_pos < need)
    throw std::runtime_error(path + ": truncated raster payload at byte " +
                             std::to_string(h.payload_pos) + " (expected " +
                             std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - h.payload_pos) + ")");
  Tensor<float> t(Shape{h.height, h.width, channels});
  const float scale = 1.0f / static_cast<float>(h.maxval);
  for (size_t i = 0; i < need; ++i)
    t[i] = static_cast<float>(static_cast<unsigned char>(bytes[h.payload_pos + i])) * scale;
  return t;
}

// Label raster: any nonzero byte is class 1.
inline std::vector<int> load_mask(const std::string& path, int* out_h = nullptr,
                                  int* out_w = nullptr) {
  std::string bytes = detail::read_file(path);
  detail::PnmHeader h = detail::parse_pnm_header(bytes, path);
  if (h.magic != "P5")
    throw std::runtime_error(path + ": label raster must be single-channel P5");
  const size_t need = static_cast<size_t>(h.width) * h.height;
  if (bytes.size() - h.payload_pos < need)
    throw std::runtime_error(path + ": truncated raster payload at byte " +
                             std::to_string(h.payload_pos));
  std::vector<int> mask(need);
  for (size_t i = 0; i < need; ++i)
    mask[i] = static_cast<unsigned char>(bytes[h.payload_pos + i]) != 0 ? 1 : 0;
  if (out_h) *out_h = h.height;
  if (out_w) *out_w = h.width;
  return mask;
}

inline void write_pgm(const std::vector<uint8_t>& gray, int h, int w,
                      const std::string& path) {
  if (static_cast<size_t>(h) * w != gray.size())
    throw std::invalid_argument("write_pgm: " + std::to_string(gray.size()) +
                                " bytes do not fill " + std::to_string(h) + "x" +
                                std::to_string(w));
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(gray.data()), gray.size());
  detail::write_file(path, out);
}

inline void write_ppm(const std::vector<uint8_t>& rgb, int h, int w,
                      const std::string& path) {
  if (static_cast<size_t>(h) * w * 3 != rgb.size())
    throw std::invalid_argument("write_ppm: " + std::to_string(rgb.size()) +
                                " bytes do not fill " + std::to_string(h) + "x" +
                                std::to_string(w) + "x3");
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  detail::write_file(path, out);
}

inline uint8_t quantize_unit(float v) {
  if (v <= 0.0f) return 0;
  if (v >= 1.0f) return 255;
  return static_cast<uint8_t>(std::floor(v * 255.0f + 0.5f));
}

// H×W×1 or H×W×3 float tensor in [0,1] -> raster file.
inline void write_raster(const Tensor<float>& t, const std::string& path) {
  if (t.rank() != 3 || (t.dim(2) != 1 && t.dim(2) != 3))
    throw std::invalid_argument("write_raster: expected H×W×1 or H×W×3, got " +
                                shape_str(t.shape()));
  std::vector<uint8_t> bytes(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) bytes[i] = quantize_unit(t[i]);
  if (t.dim(2) == 1)
    write_pgm(bytes, t.dim(0), t.dim(1), path);
  else
    write_ppm(bytes, t.dim(0), t.dim(1), path);
}

inline void write_mask(const std::vector<int>& mask, int h, int w,
                       const std::string& path) {
  std::vector<uint8_t> bytes(mask.size());
  for (size_t i = 0; i < mask.size(); ++i)
    bytes[i] = mask[i] != 0 ? 255 : 0;
  write_pgm(bytes, h, w, path);
}

// --- dataset manifest: `<id> <modality> <image-path> <label-path>` ---

struct ManifestEntry {
  std::string id;
  std::string modality;
  std::string image_path;
  std::string label_path;
};

// Relative paths in a manifest are resolved against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string extra;
    if (!(ss >> e.id >> e.modality >> e.image_path >> e.label_path) || (ss >> extra))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": manifest line must be `<id> <modality> <image-path> "
                               "<label-path>`");
    if (e.modality != "rgb" && e.modality != "disp" && e.modality != "tdisp")
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": unknown modality '" + e.modality + "'");
    e.image_path = resolve(e.image_path);
    e.label_path = resolve(e.label_path);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& e : entries)
    out << e.id << " " << e.modality << " " << e.image_path << " " << e.label_path
        << "\n";
}

}  // namespace gal
