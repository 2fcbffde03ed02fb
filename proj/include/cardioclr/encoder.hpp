#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/ops.hpp"
#include "cardioclr/params.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tape.hpp"

namespace cardioclr {

// Stack of conv(3x3)-ReLU-avgpool blocks, global average pool, dense to the
// embedding. No normalisation layers.
struct EncoderConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t embedding_dim = 64;

  void validate() const {
    if (channels.empty()) throw ConfigError("encoder needs at least one block");
    for (auto c : channels) {
      if (c == 0) throw ConfigError("encoder channel counts must be positive");
    }
    if (embedding_dim == 0 || in_channels == 0) throw ConfigError("encoder dims must be positive");
  }

  // Input extents must survive one halving per block.
  void check_input(std::size_t h, std::size_t w) const {
    const std::size_t f = std::size_t{1} << channels.size();
    if (h % f != 0 || w % f != 0) {
      throw ConfigError("encoder with " + std::to_string(channels.size()) +
                        " blocks needs input extents divisible by " + std::to_string(f));
    }
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <typename T>
struct ConvEncoder {
  EncoderConfig config;
  ParameterSet<T> params;

  static ConvEncoder init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    ConvEncoder enc{cfg, {}};
    std::size_t c_in = cfg.in_channels;
    for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
      const std::size_t c_out = cfg.channels[b];
      const std::string prefix = "block" + std::to_string(b);
      enc.params.add(prefix + ".conv.weight",
                     kaiming_uniform<T>(Shape{c_out, c_in, 3, 3}, c_in * 9, rng));
      enc.params.add(prefix + ".conv.bias", Tensor<T>(Shape{c_out}));
      c_in = c_out;
    }
    enc.params.add("embed.weight", kaiming_uniform<T>(Shape{cfg.embedding_dim, c_in}, c_in, rng));
    enc.params.add("embed.bias", Tensor<T>(Shape{cfg.embedding_dim}));
    return enc;
  }

  // `bound` must come from params.bind() on the same tape.
  Var forward(Tape<T>& tape, const std::vector<Var>& bound, Var image) const {
    const auto& x = tape.value(image);
    if (x.rank() != 3 || x.dim(0) != config.in_channels) {
      throw ConfigError("encoder input must be [" + std::to_string(config.in_channels) +
                        ",H,W], got " + shape_str(x.shape()));
    }
    config.check_input(x.dim(1), x.dim(2));
    Var h = image;
    std::size_t p = 0;
    for (std::size_t b = 0; b < config.channels.size(); ++b) {
      h = ops::conv2d(tape, h, bound[p], bound[p + 1], 1, 1);
      h = ops::relu(tape, h);
      h = ops::pool2x2_avg(tape, h);
      p += 2;
    }
    h = ops::global_avg_pool(tape, h);
    return ops::dense(tape, h, bound[p], bound[p + 1]);
  }

  // Forward pass without gradient tracking.
  Tensor<T> embed(const Tensor<T>& image) const {
    Tape<T> tape;
    auto bound = params.bind(tape, false);
    return tape.value(forward(tape, bound, tape.constant(image)));
  }
};

}  // namespace cardioclr
