#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cardioclr/binary_io.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/tensor.hpp"

// Raster file layout:
//   "CMRT" | u32 width | u32 height | u32 channels | u8 dtype | row-major payload
// All integers little-endian; dtype 0 = f32 image, 1 = u8 label map.
namespace cardioclr::raster {

inline constexpr char kMagic[4] = {'C', 'M', 'R', 'T'};
inline constexpr std::uint8_t kImageF32 = 0;
inline constexpr std::uint8_t kLabelU8 = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 3 * 4 + 1;

inline std::vector<unsigned char> encode_header(std::uint32_t w, std::uint32_t h, std::uint32_t c,
                                                std::uint8_t dtype) {
  std::vector<unsigned char> out;
  io::put_bytes(out, kMagic, 4);
  io::put_le(out, w);
  io::put_le(out, h);
  io::put_le(out, c);
  io::put_le(out, dtype);
  return out;
}

inline std::vector<unsigned char> encode_image(const Tensor<float>& img) {
  if (img.rank() != 3) throw InputError("raster image must be [C,H,W]");
  auto out = encode_header(static_cast<std::uint32_t>(img.dim(2)), static_cast<std::uint32_t>(img.dim(1)),
                           static_cast<std::uint32_t>(img.dim(0)), kImageF32);
  out.reserve(out.size() + img.numel() * 4);
  for (float v : img.values()) io::put_le(out, v);
  return out;
}

inline std::vector<unsigned char> encode_labels(const LabelMask& m) {
  auto out = encode_header(static_cast<std::uint32_t>(m.width), static_cast<std::uint32_t>(m.height), 1,
                           kLabelU8);
  io::put_bytes(out, m.labels.data(), m.labels.size());
  return out;
}

struct Header {
  std::uint32_t width, height, channels;
  std::uint8_t dtype;
};

inline Header decode_header(io::ByteReader& r) {
  r.need(kHeaderBytes);
  const std::string magic = r.get_string(4);
  if (magic != std::string(kMagic, 4)) throw MalformedHeaderError(r.path(), "bad magic, expected CMRT");
  Header h{};
  h.width = r.get_le<std::uint32_t>();
  h.height = r.get_le<std::uint32_t>();
  h.channels = r.get_le<std::uint32_t>();
  h.dtype = r.get_le<std::uint8_t>();
  if (h.dtype != kImageF32 && h.dtype != kLabelU8) {
    throw MalformedHeaderError(r.path(), "unknown dtype code " + std::to_string(h.dtype));
  }
  if (h.width == 0 || h.height == 0 || h.channels == 0) {
    throw MalformedHeaderError(r.path(), "zero extent in header");
  }
  return h;
}

inline void expect_exact_payload(const io::ByteReader& r, std::size_t bytes) {
  r.need(bytes);
  if (r.remaining() != bytes) {
    throw MalformedHeaderError(r.path(), std::to_string(r.remaining() - bytes) +
                                             " trailing bytes after payload");
  }
}

inline Tensor<float> read_image(const std::string& path) {
  io::ByteReader r(io::read_file(path), path);
  const Header h = decode_header(r);
  if (h.dtype != kImageF32) throw MalformedHeaderError(path, "expected f32 image raster");
  const std::size_t n = std::size_t{h.width} * h.height * h.channels;
  expect_exact_payload(r, n * 4);
  Tensor<float> t(Shape{h.channels, h.height, h.width});
  for (std::size_t i = 0; i < n; ++i) t[i] = r.get_le<float>();
  return t;
}

inline LabelMask read_labels(const std::string& path) {
  io::ByteReader r(io::read_file(path), path);
  const Header h = decode_header(r);
  if (h.dtype != kLabelU8) throw MalformedHeaderError(path, "expected u8 label raster");
  if (h.channels != 1) throw MalformedHeaderError(path, "label raster must have one channel");
  const std::size_t n = std::size_t{h.width} * h.height;
  expect_exact_payload(r, n);
  LabelMask m(h.width, h.height);
  for (std::size_t i = 0; i < n; ++i) {
    m.labels[i] = r.get_le<std::uint8_t>();
    if (m.labels[i] > 3) throw MalformedHeaderError(path, "label value out of range");
  }
  return m;
}

inline void write_image(const std::string& path, const Tensor<float>& img) {
  io::write_file(path, encode_image(img));
}

inline void write_labels(const std::string& path, const LabelMask& m) {
  io::write_file(path, encode_labels(m));
}

}  // namespace cardioclr::raster
