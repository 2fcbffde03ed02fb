#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string_view>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "cardioclr/binary_io.hpp"
#include "cardioclr/contrastive.hpp"
#include "cardioclr/csv.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/raster.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tensor.hpp"

// Out-of-domain pretraining images (random polygons, ellipses and gradients)
// standing in for natural-image transfer learning.
namespace cardioclr {

struct ProxyConfig {
  std::size_t num_images = 175;
  std::size_t image_size = 64;
  double val_fraction = 0.2;
  std::size_t min_shapes = 3;
  std::size_t max_shapes = 7;
  std::uint64_t seed = 99;

  void validate() const {
    if (num_images < 4) throw ValidationError("proxy.num_images", "must be >= 4");
    if (image_size < 8) throw ValidationError("proxy.image_size", "must be >= 8");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("proxy.val_fraction", "must lie in (0,1)");
    if (min_shapes < 1 || min_shapes > max_shapes) {
      throw ValidationError("proxy.min_shapes", "need 1 <= min_shapes <= max_shapes");
    }
  }
  friend bool operator==(const ProxyConfig&, const ProxyConfig&) = default;
};

struct ProxyDataset {
  std::vector<ImageItem> train;
  std::vector<ImageItem> val;
  friend bool operator==(const ProxyDataset& a, const ProxyDataset& b) {
    auto same = [](const std::vector<ImageItem>& x, const std::vector<ImageItem>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].id != y[i].id || !(x[i].image == y[i].image)) return false;
      }
      return true;
    };
    return same(a.train, b.train) && same(a.val, b.val);
  }
};

namespace proxy_detail {

// Point-in-polygon by crossing number.
inline bool inside(const std::vector<std::pair<double, double>>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if (((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi)) in = !in;
  }
  return in;
}

inline Tensor<float> render(std::size_t S, std::size_t min_shapes, std::size_t max_shapes, Rng& rng) {
  const double Sd = static_cast<double>(S);
  Tensor<float> img(Shape{1, S, S});
  // linear gradient background
  const double g0 = rng.uniform(0.0, 1.0), g1 = rng.uniform(0.0, 1.0);
  const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = std::cos(dir), sy = std::sin(dir);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double t = 0.5 + ((static_cast<double>(x) / Sd - 0.5) * cx + (static_cast<double>(y) / Sd - 0.5) * sy);
      img.at(0, y, x) = static_cast<float>(std::clamp(g0 + (g1 - g0) * t, 0.0, 1.0));
    }
  }
  const std::size_t n = min_shapes + rng.index(max_shapes - min_shapes + 1);
  for (std::size_t s = 0; s < n; ++s) {
    const double value = rng.uniform(0.0, 1.0);
    const double ox = rng.uniform(0.1, 0.9) * Sd, oy = rng.uniform(0.1, 0.9) * Sd;
    if (rng.bernoulli(0.5)) {
      const double ax = rng.uniform(0.05, 0.3) * Sd, ay = rng.uniform(0.05, 0.3) * Sd;
      const double a = rng.uniform(0.0, std::numbers::pi), ca = std::cos(a), sa = std::sin(a);
      for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - ox, dy = static_cast<double>(y) + 0.5 - oy;
          const double u = dx * ca + dy * sa, v = -dx * sa + dy * ca;
          if (u * u / (ax * ax) + v * v / (ay * ay) <= 1.0) img.at(0, y, x) = static_cast<float>(value);
        }
      }
    } else {
      const std::size_t k = 3 + rng.index(4);
      std::vector<std::pair<double, double>> poly;
      const double r = rng.uniform(0.08, 0.3) * Sd;
      const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < k; ++i) {
        const double ang = phase0 + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
        const double rr = r * rng.uniform(0.6, 1.0);
        poly.emplace_back(ox + rr * std::cos(ang), oy + rr * std::sin(ang));
      }
      for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
          if (inside(poly, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) {
            img.at(0, y, x) = static_cast<float>(value);
          }
        }
      }
    }
  }
  return img;
}

}  // namespace proxy_detail

inline ProxyDataset generate_transfer_proxy_dataset(const ProxyConfig& cfg) {
  cfg.validate();
  ProxyDataset ds;
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(cfg.num_images))), 2,
      cfg.num_images - 2);
  for (std::size_t i = 0; i < cfg.num_images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "PROXY_%05zu", i);
    Rng rng(StreamKey(cfg.seed)("proxy")(std::string_view(id)));
    ImageItem item{id, proxy_detail::render(cfg.image_size, cfg.min_shapes, cfg.max_shapes, rng)};
    (i < cfg.num_images - n_val ? ds.train : ds.val).push_back(std::move(item));
  }
  return ds;
}

inline constexpr const char* kProxyManifestHeader = "case_id,split,image_path";

inline void write_proxy_dataset(const ProxyDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "rasters");
  std::string manifest = std::string(kProxyManifestHeader) + "\n";
  auto emit = [&](const std::vector<ImageItem>& items, const char* split) {
    for (const auto& it : items) {
      const std::string rel = "rasters/" + it.id + ".cmrt";
      raster::write_image((dir / rel).string(), it.image);
      manifest += it.id + "," + split + "," + rel + "\n";
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  io::write_text((dir / "manifest.csv").string(), manifest);
}

inline ProxyDataset read_proxy_dataset(const std::filesystem::path& dir) {
  const std::string manifest_path = (dir / "manifest.csv").string();
  const auto lines = csv::data_lines(io::read_text(manifest_path));
  if (lines.empty() || lines.front() != kProxyManifestHeader) {
    throw MalformedHeaderError(manifest_path, "proxy manifest header must be '" + std::string(kProxyManifestHeader) + "'");
  }
  ProxyDataset ds;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = csv::split_fields(lines[li]);
    if (f.size() != 3) throw ManifestMismatchError(manifest_path, "line " + std::to_string(li + 1) + ": expected 3 fields");
    ImageItem item{f[0], raster::read_image((dir / f[2]).string())};
    if (f[1] == "train") {
      ds.train.push_back(std::move(item));
    } else if (f[1] == "val") {
      ds.val.push_back(std::move(item));
    } else {
      throw ManifestMismatchError(manifest_path, "line " + std::to_string(li + 1) + ": split must be train or val");
    }
  }
  return ds;
}

}  // namespace cardioclr
