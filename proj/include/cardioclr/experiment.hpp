#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardioclr/checkpoint.hpp"
#include "cardioclr/config.hpp"
#include "cardioclr/contrastive.hpp"
#include "cardioclr/dataset_io.hpp"
#include "cardioclr/inputs.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/proxy.hpp"
#include "cardioclr/report.hpp"
#include "cardioclr/supervised.hpp"

namespace cardioclr {

// A grid cell failed; the message names the cell and repeat.
class CellError : public Error {
 public:
  using Error::Error;
};

// ---- dataset views ---------------------------------------------------------

inline std::vector<ImageItem> phase_items(const Dataset& ds, Split split, Phase phase, InputMode mode,
                                          const MaskingConfig& m) {
  std::vector<ImageItem> out;
  for (const auto* c : ds.split(split)) out.push_back({c->case_id, model_input(*c, phase, mode, m)});
  return out;
}

inline std::vector<LabeledCase> labeled_cases(const Dataset& ds, Split split, InputMode mode, const MaskingConfig& m) {
  std::vector<LabeledCase> out;
  for (const auto* c : ds.split(split)) {
    out.push_back({c->case_id, model_input(*c, Phase::ED, mode, m), model_input(*c, Phase::ES, mode, m),
                   ds.label_index(c->class_label)});
  }
  return out;
}

// ---- pretraining -----------------------------------------------------------

struct PretrainedEncoders {
  ConvEncoder<float> ed;
  ConvEncoder<float> es;
  std::vector<std::string> log;  // one line per pretraining run
};

inline std::string encoder_checkpoint_json(const ExperimentConfig& cfg, PretrainMode mode, std::uint64_t seed) {
  Json j = Json::object();
  j["config_hash"] = config_hash(cfg);
  j["software"] = kSoftwareVersion;
  j["pretrain_mode"] = pretrain_mode_name(mode);
  j["seed"] = seed;
  j["config"] = to_json(cfg);
  return j.dump();
}

inline Checkpoint encoders_to_checkpoint(const PretrainedEncoders& p, std::string config_json) {
  Checkpoint ck;
  append_prefixed(ck.params, p.ed.params, "ed.");
  append_prefixed(ck.params, p.es.params, "es.");
  ck.config_json = std::move(config_json);
  return ck;
}

inline PretrainedEncoders encoders_from_checkpoint(const Checkpoint& ck, const EncoderConfig& ecfg) {
  PretrainedEncoders p;
  auto load = [&](const std::string& prefix) {
    ConvEncoder<float> e{ecfg, extract_prefixed(ck.params, prefix)};
    Rng dummy(0);
    const auto ref = ConvEncoder<float>::init(ecfg, dummy);
    if (e.params.size() != ref.params.size()) {
      throw ConfigError("checkpoint encoder '" + prefix + "' has " + std::to_string(e.params.size()) +
                        " tensors, encoder config expects " + std::to_string(ref.params.size()));
    }
    for (std::size_t i = 0; i < ref.params.size(); ++i) {
      if (e.params.name(i) != ref.params.name(i) || e.params[i].shape() != ref.params[i].shape()) {
        throw ConfigError("checkpoint tensor '" + prefix + e.params.name(i) + "' does not match the encoder config");
      }
    }
    return e;
  };
  p.ed = load("ed.");
  p.es = load("es.");
  return p;
}

namespace experiment_detail {

inline PretrainConfig pretrain_config_for(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& tag) {
  PretrainConfig pc = cfg.pretrain;
  pc.seed = StreamKey(seed)("pretrain")(tag).value();
  pc.threads = cfg.threads;
  return pc;
}

inline ConvEncoder<float> run_one(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& tag,
                                  const std::vector<ImageItem>& train, const std::vector<ImageItem>& val,
                                  std::vector<std::string>& log) {
  Rng enc_rng(StreamKey(seed)("init-encoder")(tag));
  Rng head_rng(StreamKey(seed)("init-projection")(tag));
  auto enc = ConvEncoder<float>::init(cfg.encoder, enc_rng);
  auto head = ProjectionHead<float>::init(cfg.encoder.embedding_dim, cfg.projection.hidden_dim,
                                          cfg.projection.output_dim, head_rng);
  const auto res = pretrain(std::move(enc), std::move(head), std::span<const ImageItem>(train),
                            std::span<const ImageItem>(val), pretrain_config_for(cfg, seed, tag), cfg.ntxent,
                            cfg.augmentation);
  char buf[160];
  std::snprintf(buf, sizeof buf, "pretrain %s: %zu epochs, best epoch %zu, loss %.4f -> %.4f (val %.4f)",
                tag.c_str(), res.train_loss.size(), res.best_epoch, res.train_loss.front(), res.train_loss.back(),
                res.val_loss.at(res.best_epoch - 1));
  log.push_back(buf);
  return res.encoder;
}

inline std::vector<ImageItem> pooled(std::vector<ImageItem> a, const std::vector<ImageItem>& b) {
  for (auto& x : a) x.id += "/ED";
  for (const auto& x : b) a.push_back({x.id + "/ES", x.image});
  return a;
}

}  // namespace experiment_detail

// SSCL pretraining of the ED and ES encoders for one pretraining mode.
// transfer-proxy trains a single encoder on the proxy images and uses it for both phases.
inline PretrainedEncoders pretrain_encoders(const ExperimentConfig& cfg, PretrainMode mode, const Dataset& ds,
                                            const ProxyDataset* proxy, std::uint64_t seed) {
  using experiment_detail::run_one;
  PretrainedEncoders out;
  const std::string mname = pretrain_mode_name(mode);
  switch (mode) {
    case PretrainMode::None:
      throw UsageError("pretrain_encoders: mode 'none' has nothing to pretrain");
    case PretrainMode::TransferProxy: {
      if (!proxy) throw UsageError("pretrain_encoders: transfer-proxy needs a proxy dataset");
      out.ed = run_one(cfg, seed, mname, proxy->train, proxy->val, out.log);
      out.es = out.ed;
      return out;
    }
    case PretrainMode::FullSscl:
    case PretrainMode::SegmentedSscl: {
      const InputMode im = mode == PretrainMode::FullSscl ? InputMode::Full : InputMode::Segmented;
      const auto& m = cfg.masking;
      auto ed_train = phase_items(ds, Split::Train, Phase::ED, im, m);
      auto ed_val = phase_items(ds, Split::Val, Phase::ED, im, m);
      auto es_train = phase_items(ds, Split::Train, Phase::ES, im, m);
      auto es_val = phase_items(ds, Split::Val, Phase::ES, im, m);
      if (cfg.pretrain.shared_encoder) {
        out.ed = run_one(cfg, seed, mname + "/shared", experiment_detail::pooled(ed_train, es_train),
                         experiment_detail::pooled(ed_val, es_val), out.log);
        out.es = out.ed;
      } else {
        out.ed = run_one(cfg, seed, mname + "/ED", ed_train, ed_val, out.log);
        out.es = run_one(cfg, seed, mname + "/ES", es_train, es_val, out.log);
      }
      return out;
    }
  }
  throw UsageError("unknown pretrain mode");
}

// ---- grid ------------------------------------------------------------------

struct RunOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::function<void(const std::string&)> log;
};

inline std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t r) { return cfg.seed + r; }

inline Dataset dataset_for_repeat(const ExperimentConfig& cfg, std::size_t r) {
  if (!cfg.dataset_dir.empty()) return read_dataset(cfg.dataset_dir);
  PhantomConfig pc = cfg.phantom;
  pc.seed = cfg.phantom.seed + r;
  return generate_dataset(pc);
}

// Fine-tunes one grid cell for one repeat and evaluates it on the test split.
inline CellRun run_cell(const ExperimentConfig& cfg, PretrainMode pm, InputMode im, std::size_t r,
                        const Dataset& ds, const PretrainedEncoders* pretrained,
                        FusedClassifier<float>* trained_out = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = repeat_seed(cfg, r);
  const std::string tag = std::string(pretrain_mode_name(pm)) + "/" + input_mode_name(im);
  const auto train = labeled_cases(ds, Split::Train, im, cfg.masking);
  const auto val = labeled_cases(ds, Split::Val, im, cfg.masking);
  const auto test = labeled_cases(ds, Split::Test, im, cfg.masking);

  ConvEncoder<float> ed, es;
  TrainableSet mode;
  if (pm == PretrainMode::None) {
    Rng ed_rng(StreamKey(seed)("init-encoder")("none/ED"));
    Rng es_rng(StreamKey(seed)("init-encoder")("none/ES"));
    ed = ConvEncoder<float>::init(cfg.encoder, ed_rng);
    es = ConvEncoder<float>::init(cfg.encoder, es_rng);
    mode = cfg.baseline_finetune;
  } else {
    if (!pretrained) throw UsageError("run_cell: pretrained encoders missing for " + tag);
    ed = pretrained->ed;
    es = pretrained->es;
    mode = cfg.pretrained_finetune;
  }
  Rng out_rng(StreamKey(seed)("init-output")(tag));
  auto clf = FusedClassifier<float>::init(std::move(ed), std::move(es), ds.classes.size(), mode, out_rng);
  FinetuneConfig fc = cfg.finetune;
  fc.seed = StreamKey(seed)("finetune")(tag).value();
  if (mode == TrainableSet::HeadOnly) fc.learning_rate = cfg.probe_learning_rate;
  fc.threads = cfg.threads;
  auto res = finetune(std::move(clf), std::span<const LabeledCase>(train), std::span<const LabeledCase>(val), fc);
  const auto ev = evaluate(res.classifier, std::span<const LabeledCase>(test), cfg.threads);

  CellRun run;
  run.repeat = r;
  run.seed = seed;
  run.test_macro_auc = ev.macro_auc;
  run.per_class_auc = ev.per_class_auc;
  run.epochs_to_90 = epochs_to_fraction_of_final(res.curve, 0.9);
  run.best_epoch = res.best_epoch;
  run.best_val_macro_auc = res.best_val_macro_auc;
  run.curve = res.curve;
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (trained_out) *trained_out = std::move(res.classifier);
  return run;
}

inline std::string predictions_csv(const ExperimentConfig& cfg, const Dataset& ds, InputMode im,
                                   const FusedClassifier<float>& clf, const std::string& hash) {
  std::string out = "# config_hash=" + hash + "\ncase_id,label";
  for (auto c : ds.classes) out += ",p_" + std::string(class_name(c));
  out += "\n";
  for (const auto& lc : labeled_cases(ds, Split::Test, im, cfg.masking)) {
    out += lc.id + "," + std::string(class_name(ds.classes[lc.label]));
    for (double p : predict_proba(clf, lc.ed, lc.es)) out += "," + report_detail::fmt("%.9g", p);
    out += "\n";
  }
  return out;
}

// Runs every (pretrain mode, input mode) cell for each repeat. Each distinct
// pretraining is computed once per repeat and shared by the cells that use it.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const bool write = !opt.out_dir.empty();
  std::string run_log;
  auto log = [&](const std::string& line) {
    run_log += line + "\n";
    if (opt.log) opt.log(line);
    if (write) io::write_text((opt.out_dir / "run.log").string(), run_log);
  };
  if (write) {
    std::filesystem::create_directories(opt.out_dir / "predictions");
    std::filesystem::create_directories(opt.out_dir / "checkpoints");
    io::write_text((opt.out_dir / "config.json").string(), dump_config(cfg));
  }
  log("config_hash=" + hash + " software=" + kSoftwareVersion);

  ExperimentReport report;
  report.config_hash = hash;
  for (auto pm : cfg.grid.pretrain_modes) {
    for (auto im : cfg.grid.input_modes) {
      report.cells.push_back(
          {pm, im, pm == PretrainMode::None ? cfg.baseline_finetune : cfg.pretrained_finetune, {}});
    }
  }

  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = repeat_seed(cfg, r);
    report.seeds.push_back(seed);
    const Dataset ds = dataset_for_repeat(cfg, r);
    if (report.classes.empty()) report.classes = ds.classes;
    if (ds.classes != report.classes) throw ConfigError("dataset classes differ between repeats");
    log("repeat " + std::to_string(r) + ": seed " + std::to_string(seed) + ", " + std::to_string(ds.cases.size()) +
        " cases");

    std::optional<ProxyDataset> proxy;
    std::map<PretrainMode, PretrainedEncoders> cache;
    for (auto& cell : report.cells) {
      const std::string cell_id = cell.id() + " repeat " + std::to_string(r);
      try {
        const PretrainedEncoders* pre = nullptr;
        if (cell.pretrain != PretrainMode::None) {
          auto it = cache.find(cell.pretrain);
          const std::string key = std::string(pretrain_mode_name(cell.pretrain)) + " seed " + std::to_string(seed);
          if (it == cache.end()) {
            const auto t0 = std::chrono::steady_clock::now();
            if (cell.pretrain == PretrainMode::TransferProxy && !proxy) {
              ProxyConfig pc = cfg.proxy;
              pc.seed = cfg.proxy.seed + r;
              proxy = generate_transfer_proxy_dataset(pc);
            }
            auto enc = pretrain_encoders(cfg, cell.pretrain, ds, proxy ? &*proxy : nullptr, seed);
            for (const auto& l : enc.log) log("  " + l);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log("pretraining computed: " + key + " (" + report_detail::fmt("%.1f", secs) + " s)");
            if (write) {
              const auto path = opt.out_dir / "checkpoints" /
                                (std::string(pretrain_mode_name(cell.pretrain)) + "_r" + std::to_string(r) + ".clrw");
              save_checkpoint(path.string(),
                              encoders_to_checkpoint(enc, encoder_checkpoint_json(cfg, cell.pretrain, seed)));
            }
            it = cache.emplace(cell.pretrain, std::move(enc)).first;
          } else {
            log("pretraining reused: " + key + " for " + cell.id());
          }
          pre = &it->second;
        }
        FusedClassifier<float> trained;
        auto run = run_cell(cfg, cell.pretrain, cell.input, r, ds, pre, &trained);
        log("cell " + cell_id + ": test macro-AUC " + report_detail::fmt("%.4f", run.test_macro_auc) +
            ", epochs to 90% " + std::to_string(run.epochs_to_90) + ", wall " +
            report_detail::fmt("%.1f", run.wall_seconds) + " s");
        if (write) {
          const auto path = opt.out_dir / "predictions" /
                            (std::string(pretrain_mode_name(cell.pretrain)) + "__" + input_mode_name(cell.input) +
                             "__r" + std::to_string(r) + ".csv");
          io::write_text(path.string(), predictions_csv(cfg, ds, cell.input, trained, hash));
        }
        cell.runs.push_back(std::move(run));
      } catch (const CellError&) {
        throw;
      } catch (const std::exception& e) {
        throw CellError("cell " + cell_id + " failed: " + e.what());
      }
    }
  }

  if (write) {
    io::write_text((opt.out_dir / "report.csv").string(), format_report_csv(report));
    io::write_text((opt.out_dir / "curves.csv").string(), format_curves_csv(report));
    std::string timing = "# config_hash=" + hash + "\npretrain,input,repeat,wall_seconds\n";
    for (const auto& c : report.cells) {
      for (const auto& run : c.runs) {
        timing += std::string(pretrain_mode_name(c.pretrain)) + "," + input_mode_name(c.input) + "," +
                  std::to_string(run.repeat) + "," + report_detail::fmt("%.3f", run.wall_seconds) + "\n";
      }
    }
    io::write_text((opt.out_dir / "timing.csv").string(), timing);
    emit_tables(report, opt.out_dir);
    emit_convergence_plots(report, opt.out_dir);
    log("done");
  }
  return report;
}

}  // namespace cardioclr
