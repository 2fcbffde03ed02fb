#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/tape.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, kh, kw, stride, pad, h_out, w_out;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t pixels() const { return h_out * w_out; }
};

// Unfolds [C,H,W] into a [C*kH*kW, H'*W'] patch matrix (zero padding).
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const auto stride = static_cast<long>(g.stride);
  const auto pad = static_cast<long>(g.pad);
  const auto H = static_cast<long>(g.h);
  const auto W = static_cast<long>(g.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const T* plane = in + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        T* dst = cols + row * g.pixels();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
          T* out_row = dst + oy * g.w_out;
          if (iy < 0 || iy >= H) {
            std::fill(out_row, out_row + g.w_out, T{0});
            continue;
          }
          const T* src = plane + iy * W;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
            out_row[ox] = (ix >= 0 && ix < W) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto [C,H,W].
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* out) {
  const auto stride = static_cast<long>(g.stride);
  const auto pad = static_cast<long>(g.pad);
  const auto H = static_cast<long>(g.h);
  const auto W = static_cast<long>(g.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    T* plane = out + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const T* src = cols + row * g.pixels();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
          if (iy < 0 || iy >= H) continue;
          T* dst = plane + iy * W;
          const T* in_row = src + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
            if (ix >= 0 && ix < W) dst[ix] += in_row[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution of a single [C_in,H,W] image (cross-correlation, zero padding).
template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernel, Var bias, std::size_t stride, std::size_t pad) {
  const auto& x = tape.value(input);
  const auto& k = tape.value(kernel);
  const auto& b = tape.value(bias);
  if (x.rank() != 3 || k.rank() != 4 || b.rank() != 1) {
    throw ConfigError("conv2d: expected input [C,H,W], kernel [Co,Ci,kH,kW], bias [Co]");
  }
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (k.dim(1) != x.dim(0)) {
    throw ConfigError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                      " input channels, input has " + std::to_string(x.dim(0)));
  }
  if (b.dim(0) != k.dim(0)) throw ConfigError("conv2d: bias length must equal output channels");
  if (k.dim(2) % 2 == 0 || k.dim(3) % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
  if (x.dim(1) + 2 * pad < k.dim(2) || x.dim(2) + 2 * pad < k.dim(3)) {
    throw ConfigError("conv2d: kernel larger than padded input");
  }

  detail::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2), k.dim(3), stride, pad, 0, 0};
  g.h_out = (g.h + 2 * pad - g.kh) / stride + 1;
  g.w_out = (g.w + 2 * pad - g.kw) / stride + 1;

  auto cols = std::make_shared<AlignedVector<T>>(g.patch() * g.pixels());
  detail::im2col(x.data(), g, cols->data());

  Tensor<T> y(Shape{g.c_out, g.h_out, g.w_out});
  {
    detail::ConstMatMap<T> wm(k.data(), g.c_out, g.patch());
    detail::ConstMatMap<T> cm(cols->data(), g.patch(), g.pixels());
    detail::MatMap<T> ym(y.data(), g.c_out, g.pixels());
    ym.noalias() = wm * cm;
    for (std::size_t co = 0; co < g.c_out; ++co) ym.row(co).array() += b[co];
  }

  return tape.record(
      std::move(y), {input, kernel, bias},
      [input, kernel, bias, g, cols](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(Var{self});
        detail::ConstMatMap<T> gym(gy.data(), g.c_out, g.pixels());
        if (auto* gk = t.grad_slot(kernel)) {
          detail::ConstMatMap<T> cm(cols->data(), g.patch(), g.pixels());
          detail::MatMap<T> gkm(gk->data(), g.c_out, g.patch());
          gkm.noalias() += gym * cm.transpose();
        }
        if (auto* gb = t.grad_slot(bias)) {
          for (std::size_t co = 0; co < g.c_out; ++co) (*gb)[co] += gym.row(co).sum();
        }
        if (auto* gx = t.grad_slot(input)) {
          const auto& k = t.value(kernel);
          detail::ConstMatMap<T> wm(k.data(), g.c_out, g.patch());
          detail::RowMat<T> gcols = wm.transpose() * gym;
          detail::col2im(gcols.data(), g, gx->data());
        }
      },
      "conv2d");
}

// Affine map weight[D_out,D_in] * input[D_in] + bias[D_out].
template <typename T>
Var dense(Tape<T>& tape, Var input, Var weight, Var bias) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  const auto& b = tape.value(bias);
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1 || w.dim(1) != x.dim(0) ||
      b.dim(0) != w.dim(0)) {
    throw ConfigError("dense: incompatible shapes input " + shape_str(x.shape()) + ", weight " +
                      shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
  }
  const std::size_t d_out = w.dim(0), d_in = w.dim(1);
  Tensor<T> y(Shape{d_out});
  {
    detail::ConstMatMap<T> wm(w.data(), d_out, d_in);
    detail::ConstVecMap<T> xv(x.data(), d_in);
    detail::ConstVecMap<T> bv(b.data(), d_out);
    detail::VecMap<T> yv(y.data(), d_out);
    yv.noalias() = wm * xv;
    yv += bv;
  }
  return tape.record(
      std::move(y), {input, weight, bias},
      [input, weight, bias, d_out, d_in](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(Var{self});
        detail::ConstVecMap<T> gyv(gy.data(), d_out);
        if (auto* gw = t.grad_slot(weight)) {
          detail::ConstVecMap<T> xv(t.value(input).data(), d_in);
          detail::MatMap<T> gwm(gw->data(), d_out, d_in);
          gwm.noalias() += gyv * xv.transpose();
        }
        if (auto* gb = t.grad_slot(bias)) {
          for (std::size_t i = 0; i < d_out; ++i) (*gb)[i] += gy[i];
        }
        if (auto* gx = t.grad_slot(input)) {
          detail::ConstMatMap<T> wm(t.value(weight).data(), d_out, d_in);
          detail::VecMap<T> gxv(gx->data(), d_in);
          gxv.noalias() += wm.transpose() * gyv;
        }
      },
      "dense");
}

template <typename T>
Var relu(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return tape.record(
      std::move(y), {input},
      [input](Tape<T>& t, std::size_t self) {
        auto* gx = t.grad_slot(input);
        const auto& gy = t.grad(Var{self});
        const auto& x = t.value(input);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          if (x[i] > T{0}) (*gx)[i] += gy[i];
        }
      },
      "relu");
}

// Mean over non-overlapping 2x2 windows of a [C,H,W] tensor.
template <typename T>
Var pool2x2_avg(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  if (x.rank() != 3) throw ConfigError("pool2x2_avg: expected [C,H,W]");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ConfigError("pool2x2_avg: spatial extents must be even, got " + shape_str(x.shape()));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> y(Shape{C, Ho, Wo});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        y.at(c, oy, ox) = (x.at(c, 2 * oy, 2 * ox) + x.at(c, 2 * oy, 2 * ox + 1) +
                           x.at(c, 2 * oy + 1, 2 * ox) + x.at(c, 2 * oy + 1, 2 * ox + 1)) *
                          T{0.25};
      }
    }
  }
  return tape.record(
      std::move(y), {input},
      [input, C, Ho, Wo](Tape<T>& t, std::size_t self) {
        auto* gx = t.grad_slot(input);
        const auto& gy = t.grad(Var{self});
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const T g = gy.at(c, oy, ox) * T{0.25};
              gx->at(c, 2 * oy, 2 * ox) += g;
              gx->at(c, 2 * oy, 2 * ox + 1) += g;
              gx->at(c, 2 * oy + 1, 2 * ox) += g;
              gx->at(c, 2 * oy + 1, 2 * ox + 1) += g;
            }
          }
        }
      },
      "pool2x2_avg");
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var input) {
  const auto& x = tape.value(input);
  if (x.rank() != 3) throw ConfigError("global_avg_pool: expected [C,H,W]");
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  Tensor<T> y(Shape{C});
  for (std::size_t c = 0; c < C; ++c) {
    T s{0};
    for (std::size_t i = 0; i < HW; ++i) s += x[c * HW + i];
    y[c] = s / static_cast<T>(HW);
  }
  return tape.record(
      std::move(y), {input},
      [input, C, HW](Tape<T>& t, std::size_t self) {
        auto* gx = t.grad_slot(input);
        const auto& gy = t.grad(Var{self});
        for (std::size_t c = 0; c < C; ++c) {
          const T g = gy[c] / static_cast<T>(HW);
          for (std::size_t i = 0; i < HW; ++i) (*gx)[c * HW + i] += g;
        }
      },
      "global_avg_pool");
}

// a.b / (max(|a|,eps) * max(|b|,eps)).
template <typename T>
Var cosine_similarity(Tape<T>& tape, Var a, Var b, T eps) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rank() != 1 || av.shape() != bv.shape() || av.numel() == 0) {
    throw ConfigError("cosine_similarity: operands must be equal-length non-empty vectors");
  }
  const std::size_t d = av.numel();
  T dot{0}, aa{0}, bb{0};
  for (std::size_t i = 0; i < d; ++i) {
    dot += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const T na_raw = std::sqrt(aa), nb_raw = std::sqrt(bb);
  const T na = std::max(na_raw, eps), nb = std::max(nb_raw, eps);
  const T cos = dot / (na * nb);
  return tape.record(
      Tensor<T>::scalar(cos), {a, b},
      [a, b, d, na, nb, cos, clamped_a = na_raw < eps, clamped_b = nb_raw < eps](
          Tape<T>& t, std::size_t self) {
        const T g = t.grad(Var{self}).item();
        const auto& av = t.value(a);
        const auto& bv = t.value(b);
        if (auto* ga = t.grad_slot(a)) {
          for (std::size_t i = 0; i < d; ++i) {
            T v = bv[i] / (na * nb);
            if (!clamped_a) v -= cos * av[i] / (na * na);
            (*ga)[i] += g * v;
          }
        }
        if (auto* gb = t.grad_slot(b)) {
          for (std::size_t i = 0; i < d; ++i) {
            T v = av[i] / (na * nb);
            if (!clamped_b) v -= cos * bv[i] / (nb * nb);
            (*gb)[i] += g * v;
          }
        }
      },
      "cosine_similarity");
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  const T m = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T s{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

// -log softmax(logits)[label]; gradient is softmax - onehot.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::size_t label) {
  const auto& z = tape.value(logits);
  if (z.rank() != 1 || z.numel() == 0) throw ConfigError("softmax_cross_entropy: logits must be a vector");
  const std::size_t K = z.numel();
  if (label >= K) {
    throw InputError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(K) + " classes");
  }
  const T m = *std::max_element(z.values().begin(), z.values().end());
  T s{0};
  for (std::size_t i = 0; i < K; ++i) s += std::exp(z[i] - m);
  const T loss = std::log(s) + m - z[label];
  return tape.record(
      Tensor<T>::scalar(loss), {logits},
      [logits, label](Tape<T>& t, std::size_t self) {
        const T g = t.grad(Var{self}).item();
        auto p = softmax<T>(t.value(logits).values());
        p[label] -= T{1};
        auto* gz = t.grad_slot(logits);
        for (std::size_t i = 0; i < p.size(); ++i) (*gz)[i] += g * p[i];
      },
      "softmax_cross_entropy");
}

// Concatenation of two vectors, a first.
template <typename T>
Var concat(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rank() != 1 || bv.rank() != 1) throw ConfigError("concat: operands must be vectors");
  const std::size_t na = av.numel(), nb = bv.numel();
  std::vector<T> out(av.values().begin(), av.values().end());
  out.insert(out.end(), bv.values().begin(), bv.values().end());
  return tape.record(
      Tensor<T>::vector(std::move(out)), {a, b},
      [a, b, na, nb](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(Var{self});
        if (auto* ga = t.grad_slot(a)) {
          for (std::size_t i = 0; i < na; ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = t.grad_slot(b)) {
          for (std::size_t i = 0; i < nb; ++i) (*gb)[i] += g[na + i];
        }
      },
      "concat");
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  T s{0};
  for (T v : xv.values()) s += v;
  return tape.record(
      Tensor<T>::scalar(s), {x},
      [x](Tape<T>& t, std::size_t self) {
        const T g = t.grad(Var{self}).item();
        auto* gx = t.grad_slot(x);
        for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g;
      },
      "sum");
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.values()) v *= factor;
  return tape.record(
      std::move(y), {x},
      [x, factor](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(Var{self});
        auto* gx = t.grad_slot(x);
        for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += factor * g[i];
      },
      "scale");
}

// Mean of scalar nodes.
template <typename T>
Var mean(Tape<T>& tape, const std::vector<Var>& scalars) {
  if (scalars.empty()) throw UsageError("mean of zero terms");
  T s{0};
  for (Var v : scalars) s += tape.value(v).item();
  const T inv = T{1} / static_cast<T>(scalars.size());
  return tape.record(
      Tensor<T>::scalar(s * inv), scalars,
      [scalars, inv](Tape<T>& t, std::size_t self) {
        const T g = t.grad(Var{self}).item() * inv;
        for (Var v : scalars) {
          if (auto* gv = t.grad_slot(v)) (*gv)[0] += g;
        }
      },
      "mean");
}

}  // namespace cardioclr::ops
