#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

#include "cardioclr/errors.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr {

struct AugPolicy {
  double crop_scale_min = 0.9;
  double crop_scale_max = 1.0;
  double rotation_max_deg = 15.0;
  double contrast_min = 0.7;
  double contrast_max = 1.3;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double noise_sigma = 0.0;  // additive Gaussian noise; 0 disables

  void validate() const {
    if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
      throw ValidationError("augmentation.crop_scale", "need 0 < min <= max <= 1");
    }
    if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 180.0)) {
      throw ValidationError("augmentation.rotation_deg", "must lie in [0,180]");
    }
    if (!(contrast_min > 0.0 && contrast_min <= contrast_max)) {
      throw ValidationError("augmentation.contrast", "need 0 < min <= max");
    }
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ValidationError("augmentation.hflip_prob", "must lie in [0,1]");
    if (!(vflip_prob >= 0.0 && vflip_prob <= 1.0)) throw ValidationError("augmentation.vflip_prob", "must lie in [0,1]");
    if (!(noise_sigma >= 0.0)) throw ValidationError("augmentation.noise_sigma", "must be >= 0");
  }

  static AugPolicy identity() { return AugPolicy{1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }

  friend bool operator==(const AugPolicy&, const AugPolicy&) = default;
};

// One sampled transform. The crop box is stored relative to the image so the
// same params replay on any raster size: side = crop_scale * extent, and the
// offsets place the box within the remaining margin.
struct TransformParams {
  double crop_scale = 1.0;
  double crop_offset_x = 0.0;  // in [0,1]
  double crop_offset_y = 0.0;  // in [0,1]
  double angle_deg = 0.0;
  double contrast = 1.0;
  bool hflip = false;
  bool vflip = false;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;

  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

struct ViewPair {
  Tensor<float> first;
  Tensor<float> second;
  TransformParams first_params;
  TransformParams second_params;
};

inline TransformParams sample_params(const AugPolicy& policy, Rng& rng) {
  TransformParams p;
  p.crop_scale = rng.uniform(policy.crop_scale_min, policy.crop_scale_max);
  p.crop_offset_x = rng.uniform();
  p.crop_offset_y = rng.uniform();
  p.angle_deg = rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg);
  p.contrast = rng.uniform(policy.contrast_min, policy.contrast_max);
  p.hflip = rng.bernoulli(policy.hflip_prob);
  p.vflip = rng.bernoulli(policy.vflip_prob);
  p.noise_sigma = policy.noise_sigma;
  p.noise_seed = rng.next_u64();
  return p;
}

namespace augment_detail {

struct CropBox {
  std::size_t x0, y0, w, h;
};

inline CropBox crop_box(const TransformParams& p, std::size_t W, std::size_t H) {
  if (!(p.crop_scale > 0.0 && p.crop_scale <= 1.0) || !(p.crop_offset_x >= 0.0 && p.crop_offset_x <= 1.0) ||
      !(p.crop_offset_y >= 0.0 && p.crop_offset_y <= 1.0)) {
    throw InputError("transform crop box lies outside the image");
  }
  CropBox b{};
  b.w = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(p.crop_scale * static_cast<double>(W))), 1, W);
  b.h = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(p.crop_scale * static_cast<double>(H))), 1, H);
  b.x0 = static_cast<std::size_t>(std::llround(p.crop_offset_x * static_cast<double>(W - b.w)));
  b.y0 = static_cast<std::size_t>(std::llround(p.crop_offset_y * static_cast<double>(H - b.h)));
  return b;
}

// Bilinear resample of the crop box back to the full raster (edge-clamped).
inline Tensor<float> crop_resize(const Tensor<float>& in, const CropBox& b) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  Tensor<float> out(in.shape());
  const double sx = static_cast<double>(b.w) / static_cast<double>(W);
  const double sy = static_cast<double>(b.h) / static_cast<double>(H);
  for (std::size_t y = 0; y < H; ++y) {
    double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(b.h - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, b.h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < W; ++x) {
      double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(b.w - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, b.w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double v00 = in.at(c, b.y0 + y0, b.x0 + x0), v01 = in.at(c, b.y0 + y0, b.x0 + x1);
        const double v10 = in.at(c, b.y0 + y1, b.x0 + x0), v11 = in.at(c, b.y0 + y1, b.x0 + x1);
        out.at(c, y, x) = static_cast<float>((1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11));
      }
    }
  }
  return out;
}

// Rotation about the raster centre; bilinear, zero outside the source.
inline Tensor<float> rotate(const Tensor<float>& in, double angle_deg) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  Tensor<float> out(in.shape());
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = 0.5 * static_cast<double>(W), cy = 0.5 * static_cast<double>(H);
  auto tap = [&](std::size_t c, long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= static_cast<long>(W) || yy >= static_cast<long>(H)) return 0.0;
    return in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
      // inverse map: rotate the output offset by -angle
      const double sx = ca * dx + sa * dy + cx - 0.5;
      const double sy = -sa * dx + ca * dy + cy - 0.5;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t c = 0; c < C; ++c) {
        const double v = (1 - wy) * ((1 - wx) * tap(c, y0, x0) + wx * tap(c, y0, x0 + 1)) +
                         wy * ((1 - wx) * tap(c, y0 + 1, x0) + wx * tap(c, y0 + 1, x0 + 1));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace augment_detail

// crop -> bilinear resize -> rotate -> contrast about the image mean -> noise -> flips.
// Steps whose parameters are neutral are skipped, so identity params return the input bitwise.
inline Tensor<float> apply_transform(const Tensor<float>& image, const TransformParams& p) {
  if (image.rank() != 3) throw InputError("apply_transform: image must be [C,H,W]");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const auto box = augment_detail::crop_box(p, W, H);
  Tensor<float> img = image;
  if (box.w != W || box.h != H) img = augment_detail::crop_resize(img, box);
  if (p.angle_deg != 0.0) img = augment_detail::rotate(img, p.angle_deg);
  if (p.contrast != 1.0) {
    double mean = 0.0;
    for (float v : img.values()) mean += v;
    mean /= static_cast<double>(img.numel());
    for (auto& v : img.values()) {
      v = static_cast<float>(std::clamp(mean + p.contrast * (static_cast<double>(v) - mean), 0.0, 1.0));
    }
  }
  if (p.noise_sigma > 0.0) {
    Rng noise(p.noise_seed);
    for (auto& v : img.values()) {
      v = static_cast<float>(std::clamp(static_cast<double>(v) + p.noise_sigma * noise.normal(), 0.0, 1.0));
    }
  }
  if (p.hflip) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W / 2; ++x) std::swap(img.at(c, y, x), img.at(c, y, W - 1 - x));
  }
  if (p.vflip) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H / 2; ++y)
        for (std::size_t x = 0; x < W; ++x) std::swap(img.at(c, y, x), img.at(c, H - 1 - y, x));
  }
  for (auto& v : img.values()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

inline ViewPair make_view_pair(const Tensor<float>& image, const AugPolicy& policy, Rng& rng) {
  ViewPair vp;
  vp.first_params = sample_params(policy, rng);
  vp.second_params = sample_params(policy, rng);
  vp.first = apply_transform(image, vp.first_params);
  vp.second = apply_transform(image, vp.second_params);
  return vp;
}

}  // namespace cardioclr
