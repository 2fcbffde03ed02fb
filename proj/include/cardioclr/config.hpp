#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "cardioclr/binary_io.hpp"
#include "cardioclr/contrastive.hpp"
#include "cardioclr/encoder.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/inputs.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/proxy.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/supervised.hpp"

namespace cardioclr {

using Json = nlohmann::ordered_json;

enum class PretrainMode { None, TransferProxy, FullSscl, SegmentedSscl };

inline constexpr std::array<PretrainMode, 4> kAllPretrainModes{
    PretrainMode::None, PretrainMode::TransferProxy, PretrainMode::FullSscl, PretrainMode::SegmentedSscl};

inline const char* pretrain_mode_name(PretrainMode m) {
  switch (m) {
    case PretrainMode::None: return "none";
    case PretrainMode::TransferProxy: return "transfer-proxy";
    case PretrainMode::FullSscl: return "full-sscl";
    case PretrainMode::SegmentedSscl: return "segmented-sscl";
  }
  return "?";
}

inline PretrainMode parse_pretrain_mode(const std::string& s) {
  for (auto m : kAllPretrainModes) {
    if (s == pretrain_mode_name(m)) return m;
  }
  throw InputError("unknown pretrain mode '" + s + "' (expected none|transfer-proxy|full-sscl|segmented-sscl)");
}

struct ProjectionConfig {
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 32;
  friend bool operator==(const ProjectionConfig&, const ProjectionConfig&) = default;
};

struct GridConfig {
  std::vector<PretrainMode> pretrain_modes{kAllPretrainModes.begin(), kAllPretrainModes.end()};
  std::vector<InputMode> input_modes{InputMode::Full, InputMode::Segmented};
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

// Everything an experiment run depends on. `threads` only changes speed and
// is left out of the config hash.
struct ExperimentConfig {
  std::uint64_t seed = 0;  // training seed; repeat r uses seed + r
  std::size_t repeats = 3;
  std::size_t threads = 1;
  std::string dataset_dir;  // empty: generate phantoms (phantom.seed + r per repeat)
  PhantomConfig phantom;
  ProxyConfig proxy;
  EncoderConfig encoder;
  ProjectionConfig projection;
  NTXentConfig ntxent;
  AugPolicy augmentation;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  double probe_learning_rate = 3e-2;  // fine-tuning lr when only the output layer trains
  TrainableSet pretrained_finetune = TrainableSet::HeadOnly;
  TrainableSet baseline_finetune = TrainableSet::EndToEnd;
  MaskingConfig masking;
  GridConfig grid;

  void validate() const;
};

namespace config_detail {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  // std::size_t and std::uint64_t are the same type on the supported platforms.
  static_assert(std::is_same_v<std::size_t, std::uint64_t>);
  void read(const std::string& key, std::size_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ValidationError(key_path(key), "must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ValidationError(key_path(key), "must be a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ValidationError(key_path(key), "must be a boolean");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ValidationError(key_path(key), "must be a string");
      out = v->get<std::string>();
    }
  }
  void read_pair(const std::string& key, double& lo, double& hi) {
    if (const Json* v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw ValidationError(key_path(key), "must be a [lo, hi] pair of numbers");
      }
      lo = (*v)[0].get<double>();
      hi = (*v)[1].get<double>();
    }
  }
  // Reads a string-valued enum through `parse`, rewrapping parse failures with the key path.
  template <typename E, typename Parse>
  void read_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    if (!j_.contains(key)) {
      seen_.insert(key);
      return;
    }
    read(key, s);
    try {
      out = parse(s);
    } catch (const InputError& e) {
      throw ValidationError(key_path(key), e.what());
    }
  }
  template <typename E, typename Parse>
  void read_enum_list(const std::string& key, std::vector<E>& out, Parse parse) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) throw ValidationError(key_path(key), "must be an array of strings");
      std::vector<E> items;
      for (const auto& x : *v) {
        if (!x.is_string()) throw ValidationError(key_path(key), "must be an array of strings");
        try {
          items.push_back(parse(x.template get<std::string>()));
        } catch (const InputError& e) {
          throw ValidationError(key_path(key), e.what());
        }
      }
      out = std::move(items);
    }
  }

  Section child(const std::string& key) {
    static const Json empty = Json::object();
    const Json* v = find(key);
    return Section(v ? *v : empty, key_path(key));
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(key_path(it.key()), "unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline CardiacClass class_from(const std::string& s) { return parse_class(s); }

inline Json pair(double lo, double hi) { return Json::array({lo, hi}); }

inline Json geometry_json(const ClassGeometry& g) {
  Json j = Json::object();
  j["cavity_radius"] = pair(g.cavity_radius.lo, g.cavity_radius.hi);
  j["wall_thickness"] = pair(g.wall_thickness.lo, g.wall_thickness.hi);
  j["ejection"] = pair(g.ejection.lo, g.ejection.hi);
  j["rv_scale"] = pair(g.rv_scale.lo, g.rv_scale.hi);
  j["rv_ejection"] = pair(g.rv_ejection.lo, g.rv_ejection.hi);
  j["infarct_thinning"] = pair(g.infarct_thinning.lo, g.infarct_thinning.hi);
  j["infarct_arc_deg"] = pair(g.infarct_arc_deg.lo, g.infarct_arc_deg.hi);
  return j;
}

inline void read_geometry(Section s, ClassGeometry& g) {
  s.read_pair("cavity_radius", g.cavity_radius.lo, g.cavity_radius.hi);
  s.read_pair("wall_thickness", g.wall_thickness.lo, g.wall_thickness.hi);
  s.read_pair("ejection", g.ejection.lo, g.ejection.hi);
  s.read_pair("rv_scale", g.rv_scale.lo, g.rv_scale.hi);
  s.read_pair("rv_ejection", g.rv_ejection.lo, g.rv_ejection.hi);
  s.read_pair("infarct_thinning", g.infarct_thinning.lo, g.infarct_thinning.hi);
  s.read_pair("infarct_arc_deg", g.infarct_arc_deg.lo, g.infarct_arc_deg.hi);
  s.finish();
}

template <typename E, typename Name>
Json name_list(const std::vector<E>& v, Name name) {
  Json a = Json::array();
  for (auto e : v) a.push_back(std::string(name(e)));
  return a;
}

}  // namespace config_detail

inline void ExperimentConfig::validate() const {
  if (repeats < 1) throw ValidationError("repeats", "must be >= 1");
  if (threads < 1) throw ValidationError("threads", "must be >= 1");
  phantom.validate();
  proxy.validate();
  if (proxy.image_size != phantom.image_size) {
    throw ValidationError("proxy.image_size", "must equal phantom.image_size");
  }
  try {
    encoder.validate();
    encoder.check_input(phantom.image_size, phantom.image_size);
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError("encoder", e.what());
  }
  if (projection.hidden_dim < 1) throw ValidationError("projection.hidden_dim", "must be >= 1");
  if (projection.output_dim < 2) throw ValidationError("projection.output_dim", "must be >= 2");
  ntxent.validate();
  augmentation.validate();
  pretrain.validate();
  finetune.validate();
  if (!(probe_learning_rate > 0.0)) throw ValidationError("finetune.probe_learning_rate", "must be > 0");
  masking.validate();
  if (grid.pretrain_modes.empty()) throw ValidationError("grid.pretrain_modes", "must be nonempty");
  if (grid.input_modes.empty()) throw ValidationError("grid.input_modes", "must be nonempty");
}

inline Json to_json(const ExperimentConfig& c) {
  using namespace config_detail;
  Json j = Json::object();
  j["seed"] = c.seed;
  j["repeats"] = c.repeats;
  j["threads"] = c.threads;
  j["dataset_dir"] = c.dataset_dir;

  Json ph = Json::object();
  const auto& p = c.phantom;
  ph["seed"] = p.seed;
  ph["image_size"] = p.image_size;
  ph["cases_per_class"] = p.cases_per_class;
  ph["classes"] = name_list(p.classes, class_name);
  ph["confounder_strength"] = p.confounder_strength;
  ph["confounded_classes"] = name_list(p.confounded_classes, class_name);
  ph["noise_sigma"] = p.noise_sigma;
  ph["texture_blobs"] = p.texture_blobs;
  ph["rv_base_radius"] = p.rv_base_radius;
  ph["train_fraction"] = p.train_fraction;
  ph["val_fraction"] = p.val_fraction;
  Json geo = Json::object();
  for (const auto& [cls, g] : p.geometry) geo[std::string(class_name(cls))] = geometry_json(g);
  ph["geometry"] = geo;
  j["phantom"] = ph;

  j["proxy"] = Json{{"seed", c.proxy.seed},
                    {"num_images", c.proxy.num_images},
                    {"image_size", c.proxy.image_size},
                    {"val_fraction", c.proxy.val_fraction},
                    {"min_shapes", c.proxy.min_shapes},
                    {"max_shapes", c.proxy.max_shapes}};
  j["encoder"] = Json{{"in_channels", c.encoder.in_channels},
                      {"channels", c.encoder.channels},
                      {"embedding_dim", c.encoder.embedding_dim}};
  j["projection"] = Json{{"hidden_dim", c.projection.hidden_dim}, {"output_dim", c.projection.output_dim}};
  j["ntxent"] = Json{{"temperature", c.ntxent.temperature},
                     {"batch_size", c.ntxent.batch_size},
                     {"epsilon", c.ntxent.epsilon}};
  const auto& a = c.augmentation;
  j["augmentation"] = Json{{"crop_scale", pair(a.crop_scale_min, a.crop_scale_max)},
                           {"rotation_deg", a.rotation_max_deg},
                           {"contrast", pair(a.contrast_min, a.contrast_max)},
                           {"hflip_prob", a.hflip_prob},
                           {"vflip_prob", a.vflip_prob},
                           {"noise_sigma", a.noise_sigma}};
  j["pretrain"] = Json{{"max_epochs", c.pretrain.max_epochs},
                       {"learning_rate", c.pretrain.learning_rate},
                       {"weight_decay", c.pretrain.weight_decay},
                       {"patience", c.pretrain.patience},
                       {"min_delta", c.pretrain.min_delta},
                       {"validation_view_seed", c.pretrain.validation_view_seed},
                       {"shared_encoder", c.pretrain.shared_encoder}};
  j["finetune"] = Json{{"epochs", c.finetune.epochs},
                       {"learning_rate", c.finetune.learning_rate},
                       {"probe_learning_rate", c.probe_learning_rate},
                       {"weight_decay", c.finetune.weight_decay},
                       {"batch_size", c.finetune.batch_size},
                       {"augment", c.finetune.augment},
                       {"pretrained_mode", trainable_set_name(c.pretrained_finetune)},
                       {"baseline_mode", trainable_set_name(c.baseline_finetune)}};
  j["masking"] = Json{{"dilate_px", c.masking.dilate_px},
                      {"perturb", Json{{"erode_px", c.masking.perturb_erode_px},
                                       {"dilate_px", c.masking.perturb_dilate_px},
                                       {"hole_rate", c.masking.perturb_hole_rate},
                                       {"seed", c.masking.perturb_seed}}}};
  j["grid"] = Json{{"pretrain_modes", name_list(c.grid.pretrain_modes, pretrain_mode_name)},
                   {"input_modes", name_list(c.grid.input_modes, input_mode_name)}};
  return j;
}

inline ExperimentConfig config_from_json(const Json& root) {
  using namespace config_detail;
  ExperimentConfig c;
  Section s(root, "");
  s.read("seed", c.seed);
  s.read("repeats", c.repeats);
  s.read("threads", c.threads);
  s.read("dataset_dir", c.dataset_dir);

  {
    Section ph = s.child("phantom");
    auto& p = c.phantom;
    ph.read("seed", p.seed);
    ph.read("image_size", p.image_size);
    ph.read("cases_per_class", p.cases_per_class);
    ph.read_enum_list("classes", p.classes, class_from);
    ph.read("confounder_strength", p.confounder_strength);
    ph.read_enum_list("confounded_classes", p.confounded_classes, class_from);
    ph.read("noise_sigma", p.noise_sigma);
    ph.read("texture_blobs", p.texture_blobs);
    ph.read("rv_base_radius", p.rv_base_radius);
    ph.read("train_fraction", p.train_fraction);
    ph.read("val_fraction", p.val_fraction);
    Section geo = ph.child("geometry");
    for (auto cls : kAllClasses) {
      const std::string name(class_name(cls));
      if (geo.has(name)) read_geometry(geo.child(name), p.geometry[cls]);
    }
    geo.finish();
    ph.finish();
  }
  c.proxy.image_size = c.phantom.image_size;
  {
    Section px = s.child("proxy");
    px.read("seed", c.proxy.seed);
    px.read("num_images", c.proxy.num_images);
    px.read("image_size", c.proxy.image_size);
    px.read("val_fraction", c.proxy.val_fraction);
    px.read("min_shapes", c.proxy.min_shapes);
    px.read("max_shapes", c.proxy.max_shapes);
    px.finish();
  }
  {
    Section e = s.child("encoder");
    e.read("in_channels", c.encoder.in_channels);
    if (const Json* v = e.find("channels")) {
      if (!v->is_array()) throw ValidationError("encoder.channels", "must be an array of positive integers");
      c.encoder.channels.clear();
      for (const auto& x : *v) {
        if (!x.is_number_unsigned() || x.get<std::size_t>() == 0) {
          throw ValidationError("encoder.channels", "must be an array of positive integers");
        }
        c.encoder.channels.push_back(x.get<std::size_t>());
      }
    }
    e.read("embedding_dim", c.encoder.embedding_dim);
    e.finish();
  }
  c.projection.hidden_dim = c.encoder.embedding_dim;
  {
    Section pr = s.child("projection");
    pr.read("hidden_dim", c.projection.hidden_dim);
    pr.read("output_dim", c.projection.output_dim);
    pr.finish();
  }
  {
    Section n = s.child("ntxent");
    n.read("temperature", c.ntxent.temperature);
    n.read("batch_size", c.ntxent.batch_size);
    n.read("epsilon", c.ntxent.epsilon);
    n.finish();
  }
  {
    Section a = s.child("augmentation");
    auto& p = c.augmentation;
    a.read_pair("crop_scale", p.crop_scale_min, p.crop_scale_max);
    a.read("rotation_deg", p.rotation_max_deg);
    a.read_pair("contrast", p.contrast_min, p.contrast_max);
    a.read("hflip_prob", p.hflip_prob);
    a.read("vflip_prob", p.vflip_prob);
    a.read("noise_sigma", p.noise_sigma);
    a.finish();
  }
  {
    Section p = s.child("pretrain");
    p.read("max_epochs", c.pretrain.max_epochs);
    p.read("learning_rate", c.pretrain.learning_rate);
    p.read("weight_decay", c.pretrain.weight_decay);
    p.read("patience", c.pretrain.patience);
    p.read("min_delta", c.pretrain.min_delta);
    p.read("validation_view_seed", c.pretrain.validation_view_seed);
    p.read("shared_encoder", c.pretrain.shared_encoder);
    p.finish();
  }
  {
    Section f = s.child("finetune");
    f.read("epochs", c.finetune.epochs);
    f.read("learning_rate", c.finetune.learning_rate);
    f.read("probe_learning_rate", c.probe_learning_rate);
    f.read("weight_decay", c.finetune.weight_decay);
    f.read("batch_size", c.finetune.batch_size);
    f.read("augment", c.finetune.augment);
    f.read_enum("pretrained_mode", c.pretrained_finetune, parse_trainable_set);
    f.read_enum("baseline_mode", c.baseline_finetune, parse_trainable_set);
    f.finish();
  }
  {
    Section m = s.child("masking");
    m.read("dilate_px", c.masking.dilate_px);
    Section pt = m.child("perturb");
    pt.read("erode_px", c.masking.perturb_erode_px);
    pt.read("dilate_px", c.masking.perturb_dilate_px);
    pt.read("hole_rate", c.masking.perturb_hole_rate);
    pt.read("seed", c.masking.perturb_seed);
    pt.finish();
    m.finish();
  }
  {
    Section g = s.child("grid");
    g.read_enum_list("pretrain_modes", c.grid.pretrain_modes, parse_pretrain_mode);
    g.read_enum_list("input_modes", c.grid.input_modes, parse_input_mode);
    g.finish();
  }
  s.finish();
  c.finetune.policy = c.augmentation;
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig parse_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError(path, "config file not found");
  return parse_config_text(io::read_text(path));
}

inline std::string dump_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

// FNV-1a over the canonical compact dump, excluding `threads`.
inline std::string config_hash(const ExperimentConfig& c) {
  Json j = to_json(c);
  j.erase("threads");
  const std::uint64_t h = hash_string(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

}  // namespace cardioclr
