#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cardioclr/adam.hpp"
#include "cardioclr/augment.hpp"
#include "cardioclr/encoder.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/ops.hpp"
#include "cardioclr/parallel.hpp"
#include "cardioclr/params.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tape.hpp"

namespace cardioclr {

struct NTXentConfig {
  double temperature = 0.1;
  std::size_t batch_size = 32;  // positive pairs per minibatch
  double epsilon = 1e-8;

  void validate() const {
    if (!(temperature > 0.0)) throw ValidationError("ntxent.temperature", "must be > 0");
    if (batch_size < 2) throw ValidationError("ntxent.batch_size", "must be >= 2 so that negatives exist");
    if (!(epsilon > 0.0)) throw ValidationError("ntxent.epsilon", "must be > 0");
  }
  friend bool operator==(const NTXentConfig&, const NTXentConfig&) = default;
};

enum class InputMode { Full, Segmented };

inline const char* input_mode_name(InputMode m) { return m == InputMode::Full ? "full" : "segmented"; }

inline InputMode parse_input_mode(const std::string& s) {
  if (s == "full") return InputMode::Full;
  if (s == "segmented") return InputMode::Segmented;
  throw InputError("unknown input mode '" + s + "' (expected full|segmented)");
}

struct PretrainConfig {
  std::size_t max_epochs = 50;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  std::uint64_t validation_view_seed = 0x5eed;
  InputMode input_mode = InputMode::Full;
  bool shared_encoder = false;  // one encoder on pooled ED+ES frames instead of one per phase
  std::size_t threads = 1;

  void validate() const {
    if (max_epochs < 1) throw ValidationError("pretrain.max_epochs", "must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("pretrain.learning_rate", "must be > 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("pretrain.weight_decay", "must be >= 0");
    if (patience < 1) throw ValidationError("pretrain.patience", "must be >= 1");
    if (!(min_delta >= 0.0)) throw ValidationError("pretrain.min_delta", "must be >= 0");
  }
};

// dense(E -> hidden) + ReLU + dense(hidden -> out).
template <typename T>
struct ProjectionHead {
  ParameterSet<T> params;

  static ProjectionHead init(std::size_t in_dim, std::size_t hidden, std::size_t out_dim, Rng& rng) {
    if (out_dim < 2) throw ConfigError("projection head output dim must be >= 2");
    if (in_dim == 0 || hidden == 0) throw ConfigError("projection head dims must be positive");
    ProjectionHead h;
    h.params.add("fc1.weight", kaiming_uniform<T>(Shape{hidden, in_dim}, in_dim, rng));
    h.params.add("fc1.bias", Tensor<T>(Shape{hidden}));
    h.params.add("fc2.weight", kaiming_uniform<T>(Shape{out_dim, hidden}, hidden, rng));
    h.params.add("fc2.bias", Tensor<T>(Shape{out_dim}));
    return h;
  }

  std::size_t in_dim() const { return params[0].dim(1); }
  std::size_t out_dim() const { return params[2].dim(0); }
};

template <typename T>
Var project(Tape<T>& tape, const std::vector<Var>& head_bound, Var h) {
  Var a = ops::dense(tape, h, head_bound[0], head_bound[1]);
  a = ops::relu(tape, a);
  return ops::dense(tape, a, head_bound[2], head_bound[3]);
}

// NT-Xent over 2N projections where items 2k and 2k+1 form a positive pair.
// Returns the mean over all 2N anchors of
//   -log( exp(cos(z_i, z_p(i))/tau) / sum_{k != i} exp(cos(z_i, z_k)/tau) ).
template <typename T>
Var ntxent_loss(Tape<T>& tape, const std::vector<Var>& z, const NTXentConfig& cfg) {
  if (z.size() % 2 != 0) throw ConfigError("ntxent_loss: expected an even number of projections");
  if (z.size() < 4) throw ConfigError("ntxent_loss: need at least two pairs (no negatives otherwise)");
  if (!(cfg.temperature > 0.0)) throw ConfigError("ntxent_loss: temperature must be > 0");
  const std::size_t M = z.size();
  const std::size_t D = tape.value(z[0]).numel();
  for (Var v : z) {
    if (tape.value(v).rank() != 1 || tape.value(v).numel() != D) {
      throw ConfigError("ntxent_loss: projections must be vectors of equal length");
    }
  }
  const T tau = static_cast<T>(cfg.temperature);
  const T eps = static_cast<T>(cfg.epsilon);

  // unit vectors and their (clamped) norms
  std::vector<T> unit(M * D), norm(M);
  std::vector<bool> clamped(M);
  for (std::size_t i = 0; i < M; ++i) {
    const auto& zi = tape.value(z[i]);
    T ss{0};
    for (std::size_t d = 0; d < D; ++d) ss += zi[d] * zi[d];
    const T n = std::sqrt(ss);
    clamped[i] = n < eps;
    norm[i] = clamped[i] ? eps : n;
    for (std::size_t d = 0; d < D; ++d) unit[i * D + d] = zi[d] / norm[i];
  }
  // softmax rows over k != i of the scaled similarities
  std::vector<T> prob(M * M, T{0});
  T total{0};
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<T> s(M);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < M; ++k) {
      if (k == i) continue;
      T dot{0};
      for (std::size_t d = 0; d < D; ++d) dot += unit[i * D + d] * unit[k * D + d];
      s[k] = dot / tau;
      mx = std::max(mx, s[k]);
    }
    T denom{0};
    for (std::size_t k = 0; k < M; ++k) {
      if (k != i) denom += std::exp(s[k] - mx);
    }
    const std::size_t pos = i ^ 1U;
    total += -(s[pos] - mx) + std::log(denom);
    for (std::size_t k = 0; k < M; ++k) {
      if (k != i) prob[i * M + k] = std::exp(s[k] - mx) / denom;
    }
  }
  const T loss = total / static_cast<T>(M);

  return tape.record(
      Tensor<T>::scalar(loss), z,
      [z, M, D, tau, unit = std::move(unit), norm = std::move(norm), clamped = std::move(clamped),
       prob = std::move(prob)](Tape<T>& t, std::size_t self) {
        const T g = t.grad(Var{self}).item();
        const T inv = T{1} / static_cast<T>(M);
        // dL/dsim_ij, symmetrised: A_ij + A_ji with A_ij = (P_ij - [j == p(i)]) / M
        std::vector<T> coef(M * M, T{0});
        for (std::size_t i = 0; i < M; ++i) {
          for (std::size_t j = 0; j < M; ++j) {
            if (i == j) continue;
            const T a = (prob[i * M + j] - ((j == (i ^ 1U)) ? T{1} : T{0})) * inv;
            coef[i * M + j] += a;
            coef[j * M + i] += a;
          }
        }
        std::vector<T> gu(D);
        for (std::size_t i = 0; i < M; ++i) {
          auto* gz = t.grad_slot(z[i]);
          if (!gz) continue;
          std::fill(gu.begin(), gu.end(), T{0});
          for (std::size_t j = 0; j < M; ++j) {
            const T c = coef[i * M + j] / tau;
            if (c == T{0}) continue;
            for (std::size_t d = 0; d < D; ++d) gu[d] += c * unit[j * D + d];
          }
          T proj{0};
          if (!clamped[i]) {
            for (std::size_t d = 0; d < D; ++d) proj += unit[i * D + d] * gu[d];
          }
          for (std::size_t d = 0; d < D; ++d) {
            (*gz)[d] += g * (gu[d] - proj * unit[i * D + d]) / norm[i];
          }
        }
      },
      "ntxent_loss");
}

// Tracks the best validation loss and decides when to stop.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  // Returns true when `value` is a new best (improves by more than min_delta).
  bool update(double value) {
    ++epoch_;
    if (value < best_ - min_delta_) {
      best_ = value;
      best_epoch_ = epoch_;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }

  bool should_stop() const noexcept { return bad_epochs_ >= patience_; }
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t bad_epochs_ = 0;
};

struct ImageItem {
  std::string id;
  Tensor<float> image;
};

template <typename T>
struct PretrainResult {
  ConvEncoder<T> encoder;
  ProjectionHead<T> head;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  std::size_t best_epoch = 0;
};

namespace contrastive_detail {

// Consecutive minibatches of `n` indices; a trailing remainder of fewer than two is dropped.
inline std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order, std::size_t n) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += n) {
    const std::size_t end = std::min(order.size(), start + n);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
  }
  return out;
}

template <typename T>
struct BatchOutcome {
  double loss = 0.0;
  std::vector<Tensor<T>> encoder_grads;
  std::vector<Tensor<T>> head_grads;
};

// Forward + backward of NT-Xent on 2N views (views[2k], views[2k+1] paired).
// Each view runs on its own tape; the head and loss run on a separate tape whose
// inputs are the view embeddings, and their gradients seed the per-view sweeps.
template <typename T>
BatchOutcome<T> batch_step(const ConvEncoder<T>& enc, const ProjectionHead<T>& head,
                           const std::vector<Tensor<T>>& views, const NTXentConfig& cfg, bool want_grads,
                           std::size_t threads) {
  const std::size_t M = views.size();
  std::vector<Tape<T>> tapes(M);
  std::vector<std::vector<Var>> bound(M);
  std::vector<Var> h_vars(M);
  parallel_for(M, threads, [&](std::size_t i) {
    bound[i] = enc.params.bind(tapes[i], want_grads);
    h_vars[i] = enc.forward(tapes[i], bound[i], tapes[i].constant(views[i]));
  });

  Tape<T> top;
  auto head_bound = head.params.bind(top, want_grads);
  std::vector<Var> h_leaves(M), z(M);
  for (std::size_t i = 0; i < M; ++i) {
    h_leaves[i] = top.leaf(tapes[i].value(h_vars[i]), want_grads);
    z[i] = project(top, head_bound, h_leaves[i]);
  }
  Var loss = ntxent_loss(top, z, cfg);
  BatchOutcome<T> out;
  out.loss = static_cast<double>(top.value(loss).item());
  if (!want_grads) return out;

  top.backward(loss);
  out.head_grads = head.params.zeros_like();
  accumulate_grads(top, head_bound, out.head_grads);

  std::vector<std::vector<Tensor<T>>> per_view(M);
  parallel_for(M, threads, [&](std::size_t i) {
    tapes[i].backward(h_vars[i], top.grad(h_leaves[i]));
    per_view[i] = enc.params.zeros_like();
    accumulate_grads(tapes[i], bound[i], per_view[i]);
  });
  out.encoder_grads = enc.params.zeros_like();
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t p = 0; p < out.encoder_grads.size(); ++p) {
      auto& acc = out.encoder_grads[p];
      for (std::size_t j = 0; j < acc.numel(); ++j) acc[j] += per_view[i][p][j];
    }
  }
  return out;
}

}  // namespace contrastive_detail

// Loss of fixed view pairs, evaluated in consecutive minibatches of cfg.batch_size
// pairs and averaged with weights proportional to batch size.
template <typename T>
double evaluate_ntxent(const ConvEncoder<T>& enc, const ProjectionHead<T>& head,
                       const std::vector<ViewPair>& pairs, const NTXentConfig& cfg, std::size_t threads) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  double weighted = 0.0;
  std::size_t count = 0;
  for (const auto& b : contrastive_detail::batches(order, cfg.batch_size)) {
    std::vector<Tensor<T>> views;
    for (auto i : b) {
      views.push_back(pairs[i].first.template cast<T>());
      views.push_back(pairs[i].second.template cast<T>());
    }
    const auto r = contrastive_detail::batch_step(enc, head, views, cfg, false, threads);
    weighted += r.loss * static_cast<double>(b.size());
    count += b.size();
  }
  if (count == 0) throw ConfigError("validation set needs at least two images");
  return weighted / static_cast<double>(count);
}

// simCLR pretraining with early stopping on a fixed validation view set.
// Returns the encoder and head from the best validation epoch.
template <typename T>
PretrainResult<T> pretrain(ConvEncoder<T> encoder, ProjectionHead<T> head, std::span<const ImageItem> train,
                           std::span<const ImageItem> val, const PretrainConfig& pcfg, const NTXentConfig& ncfg,
                           const AugPolicy& policy, const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
  pcfg.validate();
  ncfg.validate();
  policy.validate();
  if (train.size() < ncfg.batch_size) {
    throw ConfigError("pretrain: " + std::to_string(train.size()) + " training images is fewer than batch size " +
                      std::to_string(ncfg.batch_size));
  }
  if (val.size() < 2) throw ConfigError("pretrain: validation needs at least two images");
  if (head.in_dim() != encoder.config.embedding_dim) {
    throw ConfigError("pretrain: projection head input does not match the embedding dim");
  }

  std::vector<ViewPair> val_pairs;
  val_pairs.reserve(val.size());
  for (const auto& item : val) {
    Rng rng(StreamKey(pcfg.validation_view_seed)("val-view")(item.id));
    val_pairs.push_back(make_view_pair(item.image, policy, rng));
  }

  AdamOptions opts{pcfg.learning_rate, pcfg.weight_decay};
  AdamState<T> enc_state(encoder.params, opts), head_state(head.params, opts);
  EarlyStopper stopper(pcfg.patience, pcfg.min_delta);
  PretrainResult<T> result{encoder, head, {}, {}, 0};

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= pcfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(StreamKey(pcfg.seed)("pretrain-shuffle")(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (const auto& b : contrastive_detail::batches(order, ncfg.batch_size)) {
      std::vector<Tensor<T>> views(2 * b.size());
      parallel_for(b.size(), pcfg.threads, [&](std::size_t k) {
        const auto& item = train[b[k]];
        Rng rng(StreamKey(pcfg.seed)("pretrain-view")(epoch)(item.id));
        auto vp = make_view_pair(item.image, policy, rng);
        views[2 * k] = vp.first.template cast<T>();
        views[2 * k + 1] = vp.second.template cast<T>();
      });
      auto step = contrastive_detail::batch_step(encoder, head, views, ncfg, true, pcfg.threads);
      adam_step(encoder.params, step.encoder_grads, enc_state);
      adam_step(head.params, step.head_grads, head_state);
      loss_sum += step.loss;
      ++n_batches;
    }
    const double train_loss = loss_sum / static_cast<double>(n_batches);
    const double val_loss = evaluate_ntxent(encoder, head, val_pairs, ncfg, pcfg.threads);
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
    if (stopper.update(val_loss)) {
      result.encoder = encoder;
      result.head = head;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace cardioclr
