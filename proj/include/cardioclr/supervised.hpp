#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cardioclr/adam.hpp"
#include "cardioclr/augment.hpp"
#include "cardioclr/encoder.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/metrics.hpp"
#include "cardioclr/ops.hpp"
#include "cardioclr/parallel.hpp"
#include "cardioclr/params.hpp"
#include "cardioclr/rng.hpp"

namespace cardioclr {

enum class TrainableSet { HeadOnly, EndToEnd };

inline const char* trainable_set_name(TrainableSet s) {
  return s == TrainableSet::HeadOnly ? "head-only" : "end-to-end";
}

inline TrainableSet parse_trainable_set(const std::string& s) {
  if (s == "head-only") return TrainableSet::HeadOnly;
  if (s == "end-to-end") return TrainableSet::EndToEnd;
  throw InputError("unknown fine-tuning mode '" + s + "' (expected head-only|end-to-end)");
}

// Separate ED and ES encoders whose embeddings are concatenated (ED first)
// and fed to one dense output layer.
template <typename T>
struct FusedClassifier {
  ConvEncoder<T> ed_encoder;
  ConvEncoder<T> es_encoder;
  ParameterSet<T> output;  // "out.weight" [K, 2E], "out.bias" [K]
  TrainableSet trainable = TrainableSet::HeadOnly;

  static FusedClassifier init(ConvEncoder<T> ed, ConvEncoder<T> es, std::size_t num_classes, TrainableSet mode,
                              Rng& rng) {
    if (ed.config.embedding_dim != es.config.embedding_dim) {
      throw ConfigError("ED and ES encoders must share the embedding dim");
    }
    if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
    FusedClassifier c{std::move(ed), std::move(es), {}, mode};
    const std::size_t in = 2 * c.ed_encoder.config.embedding_dim;
    c.output.add("out.weight", kaiming_uniform<T>(Shape{num_classes, in}, in, rng));
    c.output.add("out.bias", Tensor<T>(Shape{num_classes}));
    return c;
  }

  std::size_t num_classes() const { return output[0].dim(0); }
};

template <typename T>
Var fuse_features(Tape<T>& tape, Var h_ed, Var h_es) {
  if (tape.value(h_ed).shape() != tape.value(h_es).shape()) {
    throw ConfigError("fuse_features: ED and ES features differ in shape");
  }
  return ops::concat(tape, h_ed, h_es);
}

struct LabeledCase {
  std::string id;
  Tensor<float> ed;
  Tensor<float> es;
  std::size_t label = 0;
};

struct FinetuneConfig {
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  bool augment = false;
  AugPolicy policy{};
  std::size_t threads = 1;

  void validate() const {
    if (epochs < 1) throw ValidationError("finetune.epochs", "must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("finetune.learning_rate", "must be > 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("finetune.weight_decay", "must be >= 0");
    if (batch_size < 1) throw ValidationError("finetune.batch_size", "must be >= 1");
  }
};

struct TrainCurve {
  std::vector<std::size_t> epoch;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_macro_auc;

  std::size_t size() const { return epoch.size(); }
};

// First epoch whose validation macro-AUC reaches `fraction` of the final epoch's value.
inline std::size_t epochs_to_fraction_of_final(const TrainCurve& c, double fraction = 0.9) {
  if (c.size() == 0) throw InputError("empty training curve");
  const double target = fraction * c.val_macro_auc.back();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.val_macro_auc[i] >= target) return c.epoch[i];
  }
  return c.epoch.back();
}

template <typename T>
struct FinetuneResult {
  FusedClassifier<T> classifier;
  TrainCurve curve;
  std::size_t best_epoch = 0;
  double best_val_macro_auc = 0.0;
};

namespace supervised_detail {

template <typename T>
struct CaseOutcome {
  double loss = 0.0;
  std::vector<double> probs;
  std::vector<Tensor<T>> ed_grads, es_grads, out_grads;
};

// Logits from precomputed features (encoders frozen).
template <typename T>
CaseOutcome<T> head_case(const FusedClassifier<T>& c, const Tensor<T>& feat, std::size_t label, bool grads) {
  Tape<T> tape;
  auto ob = c.output.bind(tape, grads);
  Var logits = ops::dense(tape, tape.constant(feat), ob[0], ob[1]);
  Var loss = ops::softmax_cross_entropy(tape, logits, label);
  CaseOutcome<T> out;
  out.loss = static_cast<double>(tape.value(loss).item());
  const auto p = ops::softmax<T>(tape.value(logits).values());
  out.probs.assign(p.begin(), p.end());
  if (grads) {
    tape.backward(loss);
    out.out_grads = c.output.zeros_like();
    accumulate_grads(tape, ob, out.out_grads);
  }
  return out;
}

template <typename T>
CaseOutcome<T> full_case(const FusedClassifier<T>& c, const Tensor<T>& ed, const Tensor<T>& es, std::size_t label,
                         bool grads, bool encoder_grads) {
  Tape<T> tape;
  auto eb = c.ed_encoder.params.bind(tape, grads && encoder_grads);
  auto sb = c.es_encoder.params.bind(tape, grads && encoder_grads);
  auto ob = c.output.bind(tape, grads);
  Var h_ed = c.ed_encoder.forward(tape, eb, tape.constant(ed));
  Var h_es = c.es_encoder.forward(tape, sb, tape.constant(es));
  Var logits = ops::dense(tape, fuse_features(tape, h_ed, h_es), ob[0], ob[1]);
  Var loss = ops::softmax_cross_entropy(tape, logits, label);
  CaseOutcome<T> out;
  out.loss = static_cast<double>(tape.value(loss).item());
  const auto p = ops::softmax<T>(tape.value(logits).values());
  out.probs.assign(p.begin(), p.end());
  if (grads) {
    tape.backward(loss);
    out.out_grads = c.output.zeros_like();
    accumulate_grads(tape, ob, out.out_grads);
    if (encoder_grads) {
      out.ed_grads = c.ed_encoder.params.zeros_like();
      out.es_grads = c.es_encoder.params.zeros_like();
      accumulate_grads(tape, eb, out.ed_grads);
      accumulate_grads(tape, sb, out.es_grads);
    }
  }
  return out;
}

template <typename T>
Tensor<T> fused_embedding(const FusedClassifier<T>& c, const Tensor<float>& ed, const Tensor<float>& es) {
  const auto a = c.ed_encoder.embed(ed.template cast<T>());
  const auto b = c.es_encoder.embed(es.template cast<T>());
  std::vector<T> v(a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return Tensor<T>::vector(std::move(v));
}

template <typename T>
void add_into(std::vector<Tensor<T>>& acc, const std::vector<Tensor<T>>& g, T scale) {
  for (std::size_t p = 0; p < acc.size(); ++p) {
    for (std::size_t j = 0; j < acc[p].numel(); ++j) acc[p][j] += scale * g[p][j];
  }
}

}  // namespace supervised_detail

struct Evaluation {
  double mean_loss = 0.0;
  double macro_auc = 0.0;
  std::vector<double> per_class_auc;
  std::vector<double> probs;  // N x K row-major
};

template <typename T>
Evaluation evaluate(const FusedClassifier<T>& c, std::span<const LabeledCase> cases, std::size_t threads = 1) {
  if (cases.empty()) throw InputError("evaluate: no cases");
  const std::size_t K = c.num_classes();
  std::vector<supervised_detail::CaseOutcome<T>> outs(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const auto& lc = cases[i];
    if (lc.label >= K) throw InputError("label " + std::to_string(lc.label) + " outside [0," + std::to_string(K) + ")");
    outs[i] = supervised_detail::full_case(c, lc.ed.template cast<T>(), lc.es.template cast<T>(), lc.label, false,
                                           false);
  });
  Evaluation ev;
  std::vector<std::size_t> labels(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    ev.mean_loss += outs[i].loss;
    ev.probs.insert(ev.probs.end(), outs[i].probs.begin(), outs[i].probs.end());
    labels[i] = cases[i].label;
  }
  ev.mean_loss /= static_cast<double>(cases.size());
  ev.per_class_auc = per_class_auc(ev.probs, labels, K);
  double s = 0.0;
  for (double a : ev.per_class_auc) s += a;
  ev.macro_auc = s / static_cast<double>(K);
  return ev;
}

template <typename T>
std::vector<double> predict_proba(const FusedClassifier<T>& c, const Tensor<float>& ed, const Tensor<float>& es) {
  auto out = supervised_detail::full_case(c, ed.template cast<T>(), es.template cast<T>(), 0, false, false);
  return out.probs;
}

// Minimises mean softmax cross-entropy with Adam. HeadOnly leaves both encoders
// untouched. Keeps the parameters of the epoch with the best validation
// macro-AUC (earliest on ties).
template <typename T>
FinetuneResult<T> finetune(FusedClassifier<T> clf, std::span<const LabeledCase> train,
                           std::span<const LabeledCase> val, const FinetuneConfig& cfg,
                           const std::function<void(std::size_t, double, double, double)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty() || val.empty()) throw ConfigError("finetune: train and validation splits must be nonempty");
  const std::size_t K = clf.num_classes();
  for (const auto& s : {train, val}) {
    for (const auto& lc : s) {
      if (lc.label >= K) {
        throw InputError("finetune: label " + std::to_string(lc.label) + " of case '" + lc.id + "' outside [0," +
                         std::to_string(K) + ")");
      }
    }
  }
  const bool head_only = clf.trainable == TrainableSet::HeadOnly;
  const bool cache_features = head_only && !cfg.augment;
  AdamOptions opts{cfg.learning_rate, cfg.weight_decay};
  AdamState<T> out_state(clf.output, opts);
  AdamState<T> ed_state(clf.ed_encoder.params, opts), es_state(clf.es_encoder.params, opts);

  std::vector<Tensor<T>> train_feat;
  if (cache_features) {
    train_feat.resize(train.size());
    parallel_for(train.size(), cfg.threads, [&](std::size_t i) {
      train_feat[i] = supervised_detail::fused_embedding(clf, train[i].ed, train[i].es);
    });
  }

  FinetuneResult<T> result{clf, {}, 0, -1.0};
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(StreamKey(cfg.seed)("finetune-shuffle")(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t B = end - start;
      std::vector<supervised_detail::CaseOutcome<T>> outs(B);
      parallel_for(B, cfg.threads, [&](std::size_t k) {
        const std::size_t idx = order[start + k];
        const auto& lc = train[idx];
        if (cache_features) {
          outs[k] = supervised_detail::head_case(clf, train_feat[idx], lc.label, true);
          return;
        }
        Tensor<float> ed = lc.ed, es = lc.es;
        if (cfg.augment) {
          Rng rng(StreamKey(cfg.seed)("finetune-aug")(epoch)(lc.id));
          ed = apply_transform(ed, sample_params(cfg.policy, rng));
          es = apply_transform(es, sample_params(cfg.policy, rng));
        }
        outs[k] = supervised_detail::full_case(clf, ed.template cast<T>(), es.template cast<T>(), lc.label, true,
                                               !head_only);
      });
      const T inv = T{1} / static_cast<T>(B);
      auto g_out = clf.output.zeros_like();
      auto g_ed = clf.ed_encoder.params.zeros_like();
      auto g_es = clf.es_encoder.params.zeros_like();
      for (const auto& o : outs) {
        loss_sum += o.loss;
        supervised_detail::add_into(g_out, o.out_grads, inv);
        if (!head_only) {
          supervised_detail::add_into(g_ed, o.ed_grads, inv);
          supervised_detail::add_into(g_es, o.es_grads, inv);
        }
      }
      adam_step(clf.output, g_out, out_state);
      if (!head_only) {
        adam_step(clf.ed_encoder.params, g_ed, ed_state);
        adam_step(clf.es_encoder.params, g_es, es_state);
      }
    }
    const auto ev = evaluate(clf, val, cfg.threads);
    const double train_loss = loss_sum / static_cast<double>(train.size());
    result.curve.epoch.push_back(epoch);
    result.curve.train_loss.push_back(train_loss);
    result.curve.val_loss.push_back(ev.mean_loss);
    result.curve.val_macro_auc.push_back(ev.macro_auc);
    if (on_epoch) on_epoch(epoch, train_loss, ev.mean_loss, ev.macro_auc);
    if (ev.macro_auc > result.best_val_macro_auc) {
      result.best_val_macro_auc = ev.macro_auc;
      result.best_epoch = epoch;
      result.classifier = clf;
    }
  }
  return result;
}

}  // namespace cardioclr
