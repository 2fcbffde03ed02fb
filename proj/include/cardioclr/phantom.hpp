#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr {

enum class CardiacClass : std::uint8_t { NOR = 0, DCM = 1, HCM = 2, MINF = 3, ARV = 4 };

inline constexpr std::array<CardiacClass, 5> kAllClasses{
    CardiacClass::NOR, CardiacClass::DCM, CardiacClass::HCM, CardiacClass::MINF, CardiacClass::ARV};

inline std::string_view class_name(CardiacClass c) {
  switch (c) {
    case CardiacClass::NOR: return "NOR";
    case CardiacClass::DCM: return "DCM";
    case CardiacClass::HCM: return "HCM";
    case CardiacClass::MINF: return "MINF";
    case CardiacClass::ARV: return "ARV";
  }
  return "?";
}

inline CardiacClass parse_class(std::string_view s) {
  for (auto c : kAllClasses) {
    if (class_name(c) == s) return c;
  }
  throw InputError("unknown class '" + std::string(s) + "'");
}

enum class Split : std::uint8_t { Train, Val, Test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InputError("unknown split '" + std::string(s) + "'");
}

enum class Tissue : std::uint8_t { Background = 0, LvPool = 1, LvMyocardium = 2, Rv = 3 };

struct LabelMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), labels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }

  std::size_t count(Tissue t) const {
    return static_cast<std::size_t>(
        std::count(labels.begin(), labels.end(), static_cast<std::uint8_t>(t)));
  }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
  double mid() const { return 0.5 * (lo + hi); }
  friend bool operator==(const Range&, const Range&) = default;
};

// Per-class geometry ranges, in pixels at the configured image size.
struct ClassGeometry {
  Range cavity_radius;      // ED LV blood-pool radius
  Range wall_thickness;     // ED remote LV wall thickness
  Range ejection;           // fractional cavity-radius shortening ED -> ES
  Range rv_scale;           // RV area relative to nominal
  Range rv_ejection;        // fractional RV radius shortening ED -> ES
  Range infarct_thinning;   // infarct-sector wall / remote wall; 1 = no infarct
  Range infarct_arc_deg;    // angular width of the infarct sector
  friend bool operator==(const ClassGeometry&, const ClassGeometry&) = default;
};

inline ClassGeometry default_geometry(CardiacClass c) {
  ClassGeometry nor{{7.0, 8.5}, {2.5, 3.5}, {0.30, 0.38}, {0.9, 1.1}, {0.15, 0.25}, {1.0, 1.0}, {0.0, 0.0}};
  switch (c) {
    case CardiacClass::NOR:
      return nor;
    case CardiacClass::DCM: {
      auto g = nor;
      g.cavity_radius = {10.5, 12.0};
      g.wall_thickness = {2.2, 3.0};
      g.ejection = {0.10, 0.20};
      return g;
    }
    case CardiacClass::HCM: {
      auto g = nor;
      g.cavity_radius = {5.0, 6.0};
      g.wall_thickness = {5.5, 7.0};
      g.ejection = {0.35, 0.45};
      return g;
    }
    case CardiacClass::MINF: {
      auto g = nor;
      g.cavity_radius = {8.0, 9.5};
      g.wall_thickness = {3.0, 3.8};
      g.ejection = {0.15, 0.22};
      g.infarct_thinning = {0.40, 0.55};
      g.infarct_arc_deg = {60.0, 100.0};
      return g;
    }
    case CardiacClass::ARV: {
      auto g = nor;
      g.rv_scale = {1.7, 2.1};
      g.rv_ejection = {0.05, 0.12};
      return g;
    }
  }
  return nor;
}

struct PhantomConfig {
  std::size_t image_size = 64;
  std::size_t cases_per_class = 50;
  std::vector<CardiacClass> classes{kAllClasses.begin(), kAllClasses.end()};
  std::map<CardiacClass, ClassGeometry> geometry{
      {CardiacClass::NOR, default_geometry(CardiacClass::NOR)},
      {CardiacClass::DCM, default_geometry(CardiacClass::DCM)},
      {CardiacClass::HCM, default_geometry(CardiacClass::HCM)},
      {CardiacClass::MINF, default_geometry(CardiacClass::MINF)},
      {CardiacClass::ARV, default_geometry(CardiacClass::ARV)}};
  double rv_base_radius = 9.0;
  // Probability of the lower-right bright blob for the confounded classes;
  // the remaining classes get min(rho, 1 - rho).
  double confounder_strength = 0.9;
  std::vector<CardiacClass> confounded_classes{CardiacClass::DCM, CardiacClass::MINF};
  double noise_sigma = 0.03;
  std::size_t texture_blobs = 3;
  double train_fraction = 0.7;
  double val_fraction = 0.2;  // of the training portion
  std::uint64_t seed = 1;

  void validate() const {
    if (image_size < 32) throw ValidationError("phantom.image_size", "must be >= 32");
    if (cases_per_class < 2) throw ValidationError("phantom.cases_per_class", "must be >= 2");
    if (classes.size() < 2) throw ValidationError("phantom.classes", "needs at least two classes");
    for (std::size_t i = 0; i < classes.size(); ++i) {
      for (std::size_t j = i + 1; j < classes.size(); ++j) {
        if (classes[i] == classes[j]) throw ValidationError("phantom.classes", "contains duplicates");
      }
    }
    if (!(confounder_strength >= 0.0 && confounder_strength <= 1.0)) {
      throw ValidationError("phantom.confounder_strength", "must lie in [0,1]");
    }
    if (!(noise_sigma >= 0.0)) throw ValidationError("phantom.noise_sigma", "must be >= 0");
    if (!(rv_base_radius > 0.0)) throw ValidationError("phantom.rv_base_radius", "must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw ValidationError("phantom.train_fraction", "must lie in (0,1)");
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
      throw ValidationError("phantom.val_fraction", "must lie in [0,1)");
    }
    for (auto c : classes) {
      const auto it = geometry.find(c);
      if (it == geometry.end()) {
        throw ValidationError("phantom.geometry", "missing class " + std::string(class_name(c)));
      }
      const auto& g = it->second;
      const std::string key = "phantom.geometry." + std::string(class_name(c));
      auto ordered = [&](const Range& r, const char* name) {
        if (!(r.lo <= r.hi)) throw ValidationError(key + "." + name, "must satisfy lo <= hi");
      };
      ordered(g.cavity_radius, "cavity_radius");
      ordered(g.wall_thickness, "wall_thickness");
      ordered(g.ejection, "ejection");
      ordered(g.rv_scale, "rv_scale");
      ordered(g.rv_ejection, "rv_ejection");
      ordered(g.infarct_thinning, "infarct_thinning");
      ordered(g.infarct_arc_deg, "infarct_arc_deg");
      if (!(g.cavity_radius.lo > 0.0)) throw ValidationError(key + ".cavity_radius", "must be positive");
      if (!(g.wall_thickness.lo >= 2.0)) throw ValidationError(key + ".wall_thickness", "must be >= 2 px");
      if (!(g.ejection.lo >= 0.0 && g.ejection.hi < 1.0)) {
        throw ValidationError(key + ".ejection", "must lie in [0,1)");
      }
      if (!(g.rv_ejection.lo >= 0.0 && g.rv_ejection.hi < 1.0)) {
        throw ValidationError(key + ".rv_ejection", "must lie in [0,1)");
      }
      if (!(g.rv_scale.lo > 0.0)) throw ValidationError(key + ".rv_scale", "must be positive");
      if (!(g.infarct_thinning.lo > 0.0 && g.infarct_thinning.hi <= 1.0)) {
        throw ValidationError(key + ".infarct_thinning", "must lie in (0,1]");
      }
      if (!(g.infarct_arc_deg.lo >= 0.0 && g.infarct_arc_deg.hi <= 180.0)) {
        throw ValidationError(key + ".infarct_arc_deg", "must lie in [0,180]");
      }
      const double extent = g.cavity_radius.hi + g.wall_thickness.hi;
      if (extent > 0.3 * static_cast<double>(image_size)) {
        throw ValidationError(key, "LV extent does not fit the image");
      }
    }
  }

  bool is_confounded(CardiacClass c) const {
    return std::find(confounded_classes.begin(), confounded_classes.end(), c) !=
           confounded_classes.end();
  }

  double confounder_probability(CardiacClass c) const {
    const double rho = confounder_strength;
    return is_confounded(c) ? rho : std::min(rho, 1.0 - rho);
  }

  // Class list in canonical order; a class's label index is its position here.
  std::vector<CardiacClass> ordered_classes() const {
    std::vector<CardiacClass> out;
    for (auto c : kAllClasses) {
      if (std::find(classes.begin(), classes.end(), c) != classes.end()) out.push_back(c);
    }
    return out;
  }
};

// Sampled ground-truth geometry of one case.
struct CaseGeometry {
  CardiacClass label = CardiacClass::NOR;
  double center_x = 0.0, center_y = 0.0;
  double cavity_radius = 0.0;   // ED
  double wall_thickness = 0.0;  // ED, remote wall
  double ejection = 0.0;
  double rv_radius = 0.0;       // ED
  double rv_ejection = 0.0;
  double rv_angle = 0.0;        // direction of the RV from the LV centre
  double infarct_thinning = 1.0;
  double infarct_center = 0.0;  // radians
  double infarct_half_arc = 0.0;  // radians
};

struct PhaseGeometry {
  double cavity_radius;
  double outer_radius_remote;
  double rv_radius;
  double rv_cx, rv_cy;
};

struct CaseRecord {
  std::string case_id;
  CardiacClass class_label = CardiacClass::NOR;
  Split split = Split::Train;
  bool confounder_present = false;
  Tensor<float> ed_frame;
  Tensor<float> es_frame;
  LabelMask ed_mask;
  LabelMask es_mask;

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

namespace phantom_detail {

inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

// Infarct-sector wall never drops below this, so the blood pool stays enclosed.
inline constexpr double kMinWall = 1.5;

inline double systolic_wall(double r, double t, double ejection) {
  const double r_es = r * (1.0 - ejection);
  return std::sqrt(r_es * r_es + (r + t) * (r + t) - r * r) - r_es;
}

inline double ed_wall_at(const CaseGeometry& g, double theta) {
  if (g.infarct_thinning < 1.0 && std::abs(angle_diff(theta, g.infarct_center)) <= g.infarct_half_arc) {
    return std::max(g.wall_thickness * g.infarct_thinning, kMinWall);
  }
  return g.wall_thickness;
}

// ES wall: the cavity contracts and the wall thickens so the annulus area at
// every angle is conserved.
inline double wall_at(const CaseGeometry& g, double theta, bool systole) {
  const double t = ed_wall_at(g, theta);
  return systole ? systolic_wall(g.cavity_radius, t, g.ejection) : t;
}

inline PhaseGeometry phase(const CaseGeometry& g, bool systole) {
  PhaseGeometry p{};
  p.cavity_radius = systole ? g.cavity_radius * (1.0 - g.ejection) : g.cavity_radius;
  p.outer_radius_remote =
      p.cavity_radius +
      (systole ? systolic_wall(g.cavity_radius, g.wall_thickness, g.ejection) : g.wall_thickness);
  p.rv_radius = systole ? g.rv_radius * (1.0 - g.rv_ejection) : g.rv_radius;
  const double d = p.outer_radius_remote + 0.35 * p.rv_radius;
  p.rv_cx = g.center_x + d * std::cos(g.rv_angle);
  p.rv_cy = g.center_y + d * std::sin(g.rv_angle);
  return p;
}

inline LabelMask rasterize(const CaseGeometry& g, std::size_t size, bool systole) {
  LabelMask m(size, size);
  const PhaseGeometry p = phase(g, systole);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double dx = px - g.center_x, dy = py - g.center_y;
      const double d = std::hypot(dx, dy);
      const double theta = std::atan2(dy, dx);
      std::uint8_t label = 0;
      if (d < p.cavity_radius) {
        label = static_cast<std::uint8_t>(Tissue::LvPool);
      } else if (d < p.cavity_radius + wall_at(g, theta, systole)) {
        label = static_cast<std::uint8_t>(Tissue::LvMyocardium);
      } else if (std::hypot(px - p.rv_cx, py - p.rv_cy) < p.rv_radius) {
        label = static_cast<std::uint8_t>(Tissue::Rv);
      }
      m.at(x, y) = label;
    }
  }
  return m;
}

struct Ellipse {
  double cx, cy, ax, ay, angle, intensity;
  bool contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (x - cx) * c + (y - cy) * s;
    const double v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (ax * ax) + (v * v) / (ay * ay) <= 1.0;
  }
};

struct Background {
  double base;
  double ripple_amp, ripple_fx, ripple_fy, ripple_phase;
  std::vector<Ellipse> ellipses;
};

inline Background sample_background(const PhantomConfig& cfg, Rng& rng) {
  const double S = static_cast<double>(cfg.image_size);
  Background b{};
  b.base = rng.uniform(0.18, 0.24);
  b.ripple_amp = rng.uniform(0.0, 0.04);
  b.ripple_fx = rng.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / S;
  b.ripple_fy = rng.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / S;
  b.ripple_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  // chest wall
  b.ellipses.push_back({S * rng.uniform(0.45, 0.55), S * rng.uniform(0.0, 0.05), S * rng.uniform(0.5, 0.7),
                        S * rng.uniform(0.08, 0.12), rng.uniform(-0.1, 0.1), rng.uniform(0.35, 0.5)});
  // lungs
  b.ellipses.push_back({S * rng.uniform(0.1, 0.2), S * rng.uniform(0.2, 0.35), S * rng.uniform(0.1, 0.15),
                        S * rng.uniform(0.15, 0.22), rng.uniform(-0.3, 0.3), rng.uniform(0.03, 0.1)});
  b.ellipses.push_back({S * rng.uniform(0.8, 0.92), S * rng.uniform(0.2, 0.35), S * rng.uniform(0.08, 0.12),
                        S * rng.uniform(0.15, 0.2), rng.uniform(-0.3, 0.3), rng.uniform(0.03, 0.1)});
  // liver
  b.ellipses.push_back({S * rng.uniform(0.1, 0.25), S * rng.uniform(0.82, 0.92), S * rng.uniform(0.18, 0.25),
                        S * rng.uniform(0.12, 0.16), rng.uniform(-0.2, 0.2), rng.uniform(0.45, 0.6)});
  // class-independent clutter, kept out of the lower-right corner
  for (std::size_t i = 0; i < cfg.texture_blobs; ++i) {
    double cx, cy;
    do {
      cx = S * rng.uniform(0.05, 0.95);
      cy = S * rng.uniform(0.05, 0.95);
    } while (cx > 0.65 * S && cy > 0.65 * S);
    b.ellipses.push_back({cx, cy, S * rng.uniform(0.03, 0.10), S * rng.uniform(0.03, 0.10),
                          rng.uniform(0.0, std::numbers::pi), rng.uniform(0.25, 0.95)});
  }
  return b;
}

struct Appearance {
  double pool, myocardium, rv;
  bool confounder;
  double conf_cx, conf_cy, conf_r;
};

inline void paint(Tensor<float>& img, const LabelMask& mask, const Background& bg,
                  const Appearance& app, double sigma, Rng& noise_rng) {
  const std::size_t S = mask.width;
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double v;
      switch (static_cast<Tissue>(mask.at(x, y))) {
        case Tissue::LvPool: v = app.pool; break;
        case Tissue::LvMyocardium: v = app.myocardium; break;
        case Tissue::Rv: v = app.rv; break;
        default: {
          v = bg.base + bg.ripple_amp * std::sin(bg.ripple_fx * px + bg.ripple_fy * py + bg.ripple_phase);
          for (const auto& e : bg.ellipses) {
            if (e.contains(px, py)) v = e.intensity;
          }
          if (app.confounder && std::hypot(px - app.conf_cx, py - app.conf_cy) <= app.conf_r) v = 0.95;
        }
      }
      if (sigma > 0.0) v += sigma * noise_rng.normal();
      img.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

}  // namespace phantom_detail

inline Rng case_stream(std::uint64_t seed, std::string_view case_id) {
  return Rng(StreamKey(seed)("case")(case_id));
}

inline CaseGeometry sample_geometry(CardiacClass label, const PhantomConfig& cfg, Rng& rng) {
  const auto& gr = cfg.geometry.at(label);
  const double S = static_cast<double>(cfg.image_size);
  CaseGeometry g;
  g.label = label;
  g.center_x = 0.56 * S + rng.uniform(-1.5, 1.5);
  g.center_y = 0.47 * S + rng.uniform(-1.5, 1.5);
  g.cavity_radius = gr.cavity_radius.sample(rng);
  g.wall_thickness = gr.wall_thickness.sample(rng);
  g.ejection = gr.ejection.sample(rng);
  g.rv_radius = cfg.rv_base_radius * std::sqrt(gr.rv_scale.sample(rng));
  g.rv_ejection = gr.rv_ejection.sample(rng);
  g.rv_angle = std::numbers::pi + rng.uniform(-0.2, 0.2);
  g.infarct_thinning = gr.infarct_thinning.sample(rng);
  g.infarct_center = rng.uniform(-std::numbers::pi, std::numbers::pi);
  g.infarct_half_arc = 0.5 * gr.infarct_arc_deg.sample(rng) * std::numbers::pi / 180.0;
  return g;
}

// Renders ED/ES frames and their label masks for one sampled geometry.
inline CaseRecord render_geometry(const CaseGeometry& g, const PhantomConfig& cfg, Rng& rng) {
  const std::size_t S = cfg.image_size;
  const double Sd = static_cast<double>(S);
  CaseRecord rec;
  rec.class_label = g.label;
  rec.ed_mask = phantom_detail::rasterize(g, S, false);
  rec.es_mask = phantom_detail::rasterize(g, S, true);

  const auto bg = phantom_detail::sample_background(cfg, rng);
  phantom_detail::Appearance app{};
  app.pool = 0.9 + rng.uniform(-0.03, 0.03);
  app.myocardium = 0.45 + rng.uniform(-0.03, 0.03);
  app.rv = 0.85 + rng.uniform(-0.03, 0.03);
  app.confounder = rng.bernoulli(cfg.confounder_probability(g.label));
  app.conf_cx = 0.86 * Sd + rng.uniform(-1.0, 1.0);
  app.conf_cy = 0.86 * Sd + rng.uniform(-1.0, 1.0);
  app.conf_r = 0.07 * Sd;
  rec.confounder_present = app.confounder;

  rec.ed_frame = Tensor<float>(Shape{1, S, S});
  rec.es_frame = Tensor<float>(Shape{1, S, S});
  phantom_detail::paint(rec.ed_frame, rec.ed_mask, bg, app, cfg.noise_sigma, rng);
  phantom_detail::paint(rec.es_frame, rec.es_mask, bg, app, cfg.noise_sigma, rng);
  return rec;
}

inline CaseRecord render_case(CardiacClass label, const PhantomConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto g = sample_geometry(label, cfg, rng);
  return render_geometry(g, cfg, rng);
}

struct Dataset {
  std::vector<CardiacClass> classes;  // label index = position
  std::vector<CaseRecord> cases;

  std::size_t label_index(CardiacClass c) const {
    const auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end()) throw InputError("class " + std::string(class_name(c)) + " not in dataset");
    return static_cast<std::size_t>(it - classes.begin());
  }

  std::vector<const CaseRecord*> split(Split s) const {
    std::vector<const CaseRecord*> out;
    for (const auto& c : cases) {
      if (c.split == s) out.push_back(&c);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::string make_case_id(CardiacClass c, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", std::string(class_name(c)).c_str(), i);
  return buf;
}

// Per-class split sizes: round(train_fraction*n) train+val (clamped so test is
// nonempty), of which round(val_fraction*n_train) go to validation.
struct SplitCounts {
  std::size_t train, val, test;
};

inline SplitCounts split_counts(std::size_t n, double train_fraction, double val_fraction) {
  auto n_trainval = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_trainval = std::clamp<std::size_t>(n_trainval, 1, n - 1);
  std::size_t n_val = 0;
  if (n_trainval >= 2 && val_fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n_trainval)));
    n_val = std::clamp<std::size_t>(n_val, 1, n_trainval - 1);
  }
  return {n_trainval - n_val, n_val, n - n_trainval};
}

inline Dataset generate_dataset(const PhantomConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.classes = cfg.ordered_classes();
  for (auto c : ds.classes) {
    const SplitCounts counts = split_counts(cfg.cases_per_class, cfg.train_fraction, cfg.val_fraction);
    std::vector<Split> splits;
    splits.insert(splits.end(), counts.train, Split::Train);
    splits.insert(splits.end(), counts.val, Split::Val);
    splits.insert(splits.end(), counts.test, Split::Test);
    Rng split_rng(StreamKey(cfg.seed)("split")(class_name(c)));
    split_rng.shuffle(splits.begin(), splits.end());
    for (std::size_t i = 0; i < cfg.cases_per_class; ++i) {
      const std::string id = make_case_id(c, i);
      Rng rng = case_stream(cfg.seed, id);
      const auto g = sample_geometry(c, cfg, rng);
      CaseRecord rec = render_geometry(g, cfg, rng);
      rec.case_id = id;
      rec.split = splits[i];
      ds.cases.push_back(std::move(rec));
    }
  }
  return ds;
}

}  // namespace cardioclr
