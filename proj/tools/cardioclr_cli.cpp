#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cardioclr/checkpoint.hpp"
#include "cardioclr/config.hpp"
#include "cardioclr/dataset_io.hpp"
#include "cardioclr/experiment.hpp"
#include "cardioclr/proxy.hpp"
#include "cardioclr/report.hpp"

namespace fs = std::filesystem;
using namespace cardioclr;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::size_t> threads;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : parse_config(g.config_path);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.phantom.seed = *g.seed;
  }
  if (g.threads) cfg.threads = *g.threads;
  cfg.validate();
  return cfg;
}

Dataset load_or_generate(const ExperimentConfig& cfg, const std::string& data_dir) {
  if (!data_dir.empty()) return read_dataset(data_dir);
  if (!cfg.dataset_dir.empty()) return read_dataset(cfg.dataset_dir);
  return generate_dataset(cfg.phantom);
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

Checkpoint classifier_checkpoint(const FusedClassifier<float>& clf, const ExperimentConfig& cfg,
                                 InputMode input, const std::vector<CardiacClass>& classes) {
  Checkpoint ck;
  append_prefixed(ck.params, clf.ed_encoder.params, "ed.");
  append_prefixed(ck.params, clf.es_encoder.params, "es.");
  append_prefixed(ck.params, clf.output, "");
  Json j = Json::object();
  j["config_hash"] = config_hash(cfg);
  j["software"] = kSoftwareVersion;
  j["kind"] = "classifier";
  j["input_mode"] = input_mode_name(input);
  j["trainable"] = trainable_set_name(clf.trainable);
  Json cls = Json::array();
  for (auto c : classes) cls.push_back(std::string(class_name(c)));
  j["classes"] = cls;
  j["config"] = to_json(cfg);
  ck.config_json = j.dump();
  return ck;
}

FusedClassifier<float> classifier_from_checkpoint(const Checkpoint& ck, const ExperimentConfig& cfg) {
  auto enc = encoders_from_checkpoint(ck, cfg.encoder);
  FusedClassifier<float> clf{std::move(enc.ed), std::move(enc.es), extract_prefixed(ck.params, "out."), {}};
  if (clf.output.size() != 2) throw ConfigError("checkpoint has no output layer (out.weight, out.bias)");
  // extract_prefixed strips the prefix; restore the canonical names.
  ParameterSet<float> out;
  out.add("out.weight", clf.output[0]);
  out.add("out.bias", clf.output[1]);
  clf.output = std::move(out);
  return clf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive pretraining and masking experiments on synthetic cardiac MR phantoms"};
  app.require_subcommand(1);
  app.footer("Default configuration (JSON; any subset may be given via --config):\n" +
             dump_config(ExperimentConfig{}));
  Globals g;
  app.add_option("--config", g.config_path, "Experiment configuration file (JSON)");
  app.add_option("--seed", g.seed, "Overrides both the training seed and the phantom seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (affects speed only)");

  auto* gen = app.add_subcommand("gen-phantoms", "Generate a phantom dataset (manifest.csv + CMRT rasters)");
  auto* gen_proxy = app.add_subcommand("gen-proxy", "Generate the out-of-domain transfer-proxy dataset");

  std::string data_dir, proxy_dir, mode_name = "full-sscl", input_name = "full", ckpt_path;
  auto* pre = app.add_subcommand("pretrain", "SSCL-pretrain ED/ES encoders and write a checkpoint");
  pre->add_option("--mode", mode_name, "transfer-proxy | full-sscl | segmented-sscl")->capture_default_str();
  pre->add_option("--data", data_dir, "Phantom dataset directory (default: generate from config)");
  pre->add_option("--proxy", proxy_dir, "Proxy dataset directory (default: generate from config)");

  auto* fin = app.add_subcommand("finetune", "Fine-tune the fused ED/ES classifier");
  fin->add_option("--data", data_dir, "Phantom dataset directory (default: generate from config)");
  fin->add_option("--checkpoint", ckpt_path, "Pretrained encoder checkpoint (omit for the no-pretraining baseline)");
  fin->add_option("--input", input_name, "full | segmented")->capture_default_str();

  auto* eva = app.add_subcommand("evaluate", "Evaluate a classifier checkpoint on the test split");
  eva->add_option("--data", data_dir, "Phantom dataset directory (default: generate from config)");
  eva->add_option("--model", ckpt_path, "Classifier checkpoint written by finetune")->required();
  eva->add_option("--input", input_name, "full | segmented")->capture_default_str();

  auto* exp = app.add_subcommand("experiment", "Run the pretraining x input-mode grid and write all reports");
  auto* rep = app.add_subcommand("report", "Rebuild tables and plots from report.csv/curves.csv in --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const fs::path out(g.out);
    if (*gen) {
      const auto cfg = load_config(g);
      write_dataset(generate_dataset(cfg.phantom), out);
      std::cout << "wrote " << cfg.phantom.classes.size() * cfg.phantom.cases_per_class << " cases to " << out
                << "\n";
    } else if (*gen_proxy) {
      const auto cfg = load_config(g);
      write_proxy_dataset(generate_transfer_proxy_dataset(cfg.proxy), out);
      std::cout << "wrote " << cfg.proxy.num_images << " proxy images to " << out << "\n";
    } else if (*pre) {
      const auto cfg = load_config(g);
      const auto mode = parse_pretrain_mode(mode_name);
      const Dataset ds = load_or_generate(cfg, data_dir);
      std::optional<ProxyDataset> proxy;
      if (mode == PretrainMode::TransferProxy) {
        proxy = proxy_dir.empty() ? generate_transfer_proxy_dataset(cfg.proxy) : read_proxy_dataset(proxy_dir);
      }
      auto enc = pretrain_encoders(cfg, mode, ds, proxy ? &*proxy : nullptr, cfg.seed);
      for (const auto& l : enc.log) log_line(l);
      fs::create_directories(out);
      const auto path = out / (mode_name + ".clrw");
      save_checkpoint(path.string(), encoders_to_checkpoint(enc, encoder_checkpoint_json(cfg, mode, cfg.seed)));
      std::cout << "wrote " << path.string() << "\n";
    } else if (*fin) {
      auto cfg = load_config(g);
      const auto input = parse_input_mode(input_name);
      const Dataset ds = load_or_generate(cfg, data_dir);
      std::optional<PretrainedEncoders> enc;
      PretrainMode mode = PretrainMode::None;
      if (!ckpt_path.empty()) {
        enc = encoders_from_checkpoint(load_checkpoint(ckpt_path), cfg.encoder);
        mode = PretrainMode::FullSscl;  // any pretrained mode; only selects the fine-tuning regime
      }
      FusedClassifier<float> clf;
      const auto run = run_cell(cfg, mode, input, 0, ds, enc ? &*enc : nullptr, &clf);
      fs::create_directories(out);
      save_checkpoint((out / "classifier.clrw").string(), classifier_checkpoint(clf, cfg, input, ds.classes));
      std::string curve = "# config_hash=" + config_hash(cfg) + "\nepoch,train_loss,val_loss,val_macro_auc\n";
      for (std::size_t i = 0; i < run.curve.size(); ++i) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", run.curve.epoch[i], run.curve.train_loss[i],
                      run.curve.val_loss[i], run.curve.val_macro_auc[i]);
        curve += buf;
      }
      io::write_text((out / "curve.csv").string(), curve);
      std::printf("test macro-AUC %.4f (best epoch %zu, epochs to 90%% of final %zu)\n", run.test_macro_auc,
                  run.best_epoch, run.epochs_to_90);
    } else if (*eva) {
      const auto cfg = load_config(g);
      const auto input = parse_input_mode(input_name);
      const Dataset ds = load_or_generate(cfg, data_dir);
      const auto clf = classifier_from_checkpoint(load_checkpoint(ckpt_path), cfg);
      const auto test = labeled_cases(ds, Split::Test, input, cfg.masking);
      const auto ev = evaluate(clf, std::span<const LabeledCase>(test), cfg.threads);
      fs::create_directories(out);
      io::write_text((out / "predictions.csv").string(), predictions_csv(cfg, ds, input, clf, config_hash(cfg)));
      std::printf("test macro-AUC %.4f\n", ev.macro_auc);
      for (std::size_t k = 0; k < ds.classes.size(); ++k) {
        std::printf("  %-5s %.4f\n", std::string(class_name(ds.classes[k])).c_str(), ev.per_class_auc[k]);
      }
    } else if (*exp) {
      const auto cfg = load_config(g);
      RunOptions opt{out, log_line};
      const auto report = run_experiment(cfg, opt);
      for (const auto& c : report.cells) std::printf("%-28s %.4f\n", c.id().c_str(), c.mean_macro_auc());
    } else if (*rep) {
      const auto report = read_report(out);
      if (!g.config_path.empty()) revalidate_provenance(out, load_config(g));
      emit_tables(report, out);
      emit_convergence_plots(report, out);
      std::cout << "wrote tables.md, tables.csv and convergence plots to " << out << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
