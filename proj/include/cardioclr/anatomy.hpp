#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr {

struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h, bool fill = false) : width(w), height(h), bits(w * h, fill ? 1 : 0) {}

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  void set(std::size_t x, std::size_t y, bool v) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Union of LV blood pool, LV myocardium and RV.
inline BinaryMask build_cardiac_mask(const LabelMask& labels) {
  BinaryMask m(labels.width, labels.height);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) m.bits[i] = labels.labels[i] != 0 ? 1 : 0;
  return m;
}

namespace anatomy_detail {

// Square-window max (dilate) or min (erode) of half-width r. Pixels outside the
// raster are ignored, so the image border neither grows nor erodes the mask.
inline BinaryMask morph(const BinaryMask& in, std::size_t r, bool dilate) {
  if (r == 0) return in;
  const std::size_t W = in.width, H = in.height;
  BinaryMask tmp(W, H), out(W, H);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0, x1 = std::min(W - 1, x + r);
      bool v = !dilate;
      for (std::size_t xx = x0; xx <= x1; ++xx) {
        if (in.at(xx, y) == dilate) {
          v = dilate;
          break;
        }
      }
      tmp.set(x, y, v);
    }
  }
  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t y0 = y >= r ? y - r : 0, y1 = std::min(H - 1, y + r);
    for (std::size_t x = 0; x < W; ++x) {
      bool v = !dilate;
      for (std::size_t yy = y0; yy <= y1; ++yy) {
        if (tmp.at(x, yy) == dilate) {
          v = dilate;
          break;
        }
      }
      out.set(x, y, v);
    }
  }
  return out;
}

}  // namespace anatomy_detail

inline BinaryMask dilate(const BinaryMask& m, std::size_t px) { return anatomy_detail::morph(m, px, true); }
inline BinaryMask erode(const BinaryMask& m, std::size_t px) { return anatomy_detail::morph(m, px, false); }

// Zeroes every pixel outside the mask dilated by `dilate_px` (square element).
inline Tensor<float> apply_mask(const Tensor<float>& image, const BinaryMask& mask, std::size_t dilate_px) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw InputError("apply_mask: image " + shape_str(image.shape()) + " does not match mask " +
                     std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
  const BinaryMask grown = dilate(mask, dilate_px);
  Tensor<float> out(image.shape(), 0.0f);
  const std::size_t plane = mask.width * mask.height;
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (grown.bits[i]) out[c * plane + i] = image[c * plane + i];
    }
  }
  return out;
}

// Emulates segmentation error: erode, dilate, then drop each remaining
// foreground pixel with probability hole_rate.
inline BinaryMask perturb_mask(const BinaryMask& mask, Rng& rng, std::size_t erode_px, std::size_t dilate_px,
                               double hole_rate) {
  if (!(hole_rate >= 0.0 && hole_rate <= 1.0)) throw ConfigError("perturb_mask: hole_rate must lie in [0,1]");
  BinaryMask out = dilate(erode(mask, erode_px), dilate_px);
  if (hole_rate > 0.0) {
    for (auto& b : out.bits) {
      if (b && rng.bernoulli(hole_rate)) b = 0;
    }
  }
  return out;
}

struct MaskStats {
  double foreground_fraction = 0.0;
  std::size_t component_count = 0;
};

// Foreground fraction and number of 4-connected components.
inline MaskStats mask_stats(const BinaryMask& mask) {
  MaskStats s;
  const std::size_t n = mask.bits.size();
  if (n == 0) return s;
  s.foreground_fraction = static_cast<double>(mask.count()) / static_cast<double>(n);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (!mask.bits[start] || seen[start]) continue;
    ++s.component_count;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t x = i % mask.width, y = i / mask.width;
      auto visit = [&](std::size_t j) {
        if (mask.bits[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < mask.width) visit(i + 1);
      if (y > 0) visit(i - mask.width);
      if (y + 1 < mask.height) visit(i + mask.width);
    }
  }
  return s;
}

}  // namespace cardioclr
