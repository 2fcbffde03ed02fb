#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cardioclr/binary_io.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/params.hpp"
#include "cardioclr/tensor.hpp"

// Checkpoint file layout (little-endian):
//   "CLRW" | u32 format_version | u32 blob_count
//   blob_count x { u32 name_len | name | u32 rank | rank x u32 dim | f32 payload }
//   u32 config_len | config JSON (provenance echo)
namespace cardioclr {

inline constexpr char kCheckpointMagic[4] = {'C', 'L', 'R', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet<float> params;
  std::string config_json;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.params == b.params && a.config_json == b.config_json;
  }
};

// Appends every entry of `src` to `dst` with `prefix` prepended to its name.
inline void append_prefixed(ParameterSet<float>& dst, const ParameterSet<float>& src, const std::string& prefix) {
  for (const auto& e : src.entries()) dst.add(prefix + e.name, e.value);
}

// Entries of `src` whose names start with `prefix`, with the prefix removed.
inline ParameterSet<float> extract_prefixed(const ParameterSet<float>& src, const std::string& prefix) {
  ParameterSet<float> out;
  for (const auto& e : src.entries()) {
    if (e.name.rfind(prefix, 0) == 0) out.add(e.name.substr(prefix.size()), e.value);
  }
  return out;
}

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  std::vector<unsigned char> out;
  io::put_bytes(out, kCheckpointMagic, 4);
  io::put_le(out, kCheckpointVersion);
  io::put_le(out, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& e : ck.params.entries()) {
    io::put_le(out, static_cast<std::uint32_t>(e.name.size()));
    io::put_bytes(out, e.name.data(), e.name.size());
    io::put_le(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) io::put_le(out, static_cast<std::uint32_t>(d));
    for (float v : e.value.values()) io::put_le(out, v);
  }
  io::put_le(out, static_cast<std::uint32_t>(ck.config_json.size()));
  io::put_bytes(out, ck.config_json.data(), ck.config_json.size());
  return out;
}

inline Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& path) {
  io::ByteReader r(std::move(bytes), path);
  if (r.get_string(4) != std::string(kCheckpointMagic, 4)) throw MalformedHeaderError(path, "bad magic, expected CLRW");
  const auto version = r.get_le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw MalformedHeaderError(path, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto count = r.get_le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get_le<std::uint32_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get_le<std::uint32_t>();
    if (rank > 8) throw MalformedHeaderError(path, "implausible rank for blob '" + name + "'");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get_le<std::uint32_t>());
    const std::size_t n = shape_numel(shape);
    r.need(n * 4);
    Tensor<float> t(shape);
    for (std::size_t j = 0; j < n; ++j) t[j] = r.get_le<float>();
    ck.params.add(std::move(name), std::move(t));
  }
  const auto cfg_len = r.get_le<std::uint32_t>();
  ck.config_json = r.get_string(cfg_len);
  if (r.remaining() != 0) throw MalformedHeaderError(path, "trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path), path);
}

}  // namespace cardioclr
