#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "cardioclr/phantom.hpp"

using namespace cardioclr;

namespace {

PhantomConfig clean_config(std::size_t per_class = 50) {
  PhantomConfig cfg;
  cfg.cases_per_class = per_class;
  cfg.noise_sigma = 0.0;
  cfg.confounder_strength = 0.0;
  cfg.seed = 17;
  return cfg;
}

// Geometry recovered from pixel counts: pool area -> cavity radius, pool+myocardium
// area -> outer radius, difference -> mean wall thickness.
struct MaskMeasure {
  double cavity_radius, wall, rv_area, pool_area;
};

MaskMeasure measure(const LabelMask& m) {
  const double pool = static_cast<double>(m.count(Tissue::LvPool));
  const double myo = static_cast<double>(m.count(Tissue::LvMyocardium));
  const double r = std::sqrt(pool / std::numbers::pi);
  const double outer = std::sqrt((pool + myo) / std::numbers::pi);
  return {r, outer - r, static_cast<double>(m.count(Tissue::Rv)), pool};
}

// Mean intensity of the lower-right corner patch where the confounder blob sits.
double corner_mean(const Tensor<float>& img) {
  const std::size_t S = img.dim(2);
  const auto lo = static_cast<std::size_t>(0.82 * static_cast<double>(S));
  const auto hi = static_cast<std::size_t>(0.90 * static_cast<double>(S));
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t y = lo; y < hi; ++y)
    for (std::size_t x = lo; x < hi; ++x) {
      s += img.at(0, y, x);
      ++n;
    }
  return s / static_cast<double>(n);
}

// P(score of a positive > score of a negative), ties counted half.
double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double w = 0.0;
  for (double p : pos)
    for (double n : neg) w += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return w / static_cast<double>(pos.size() * neg.size());
}

std::map<CardiacClass, std::vector<MaskMeasure>> measures_by_class(const Dataset& ds, bool systole = false) {
  std::map<CardiacClass, std::vector<MaskMeasure>> out;
  for (const auto& c : ds.cases) out[c.class_label].push_back(measure(systole ? c.es_mask : c.ed_mask));
  return out;
}

template <typename F>
double mean_of(const std::vector<MaskMeasure>& v, F f) {
  double s = 0.0;
  for (const auto& m : v) s += f(m);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(RenderCase, NorWallThicknessMatchesSampledParameter) {
  const auto cfg = clean_config();
  for (int i = 0; i < 20; ++i) {
    Rng rng(StreamKey(3)("nor")(static_cast<std::uint64_t>(i)));
    const auto g = sample_geometry(CardiacClass::NOR, cfg, rng);
    const auto rec = render_geometry(g, cfg, rng);
    const auto m = measure(rec.ed_mask);
    EXPECT_NEAR(m.wall, g.wall_thickness, 1.0);
    EXPECT_NEAR(m.cavity_radius, g.cavity_radius, 1.0);
  }
}

TEST(RenderCase, HcmWallThickerThanNor) {
  const auto by = measures_by_class(generate_dataset(clean_config()));
  auto wall = [](const MaskMeasure& m) { return m.wall; };
  EXPECT_GT(mean_of(by.at(CardiacClass::HCM), wall), mean_of(by.at(CardiacClass::NOR), wall));
}

TEST(RenderCase, ClassGeometryHonoredOnMasks) {
  const auto ds = generate_dataset(clean_config());
  const auto ed = measures_by_class(ds, false);
  const auto es = measures_by_class(ds, true);
  auto radius = [](const MaskMeasure& m) { return m.cavity_radius; };
  auto wall = [](const MaskMeasure& m) { return m.wall; };
  auto rv = [](const MaskMeasure& m) { return m.rv_area; };
  // radial shortening from ED/ES pool areas
  auto shortening = [&](CardiacClass c) {
    double s = 0.0;
    const auto& a = ed.at(c);
    const auto& b = es.at(c);
    for (std::size_t i = 0; i < a.size(); ++i) s += 1.0 - b[i].cavity_radius / a[i].cavity_radius;
    return s / static_cast<double>(a.size());
  };
  const double nor_r = mean_of(ed.at(CardiacClass::NOR), radius);
  const double nor_t = mean_of(ed.at(CardiacClass::NOR), wall);
  const double nor_ej = shortening(CardiacClass::NOR);

  for (const auto& m : ed.at(CardiacClass::DCM)) EXPECT_GE(m.cavity_radius, 1.3 * nor_r);
  EXPECT_LE(shortening(CardiacClass::DCM), 0.7 * nor_ej);
  for (const auto& m : ed.at(CardiacClass::HCM)) {
    EXPECT_GE(m.wall, 1.5 * nor_t);
    EXPECT_LE(m.cavity_radius, 0.8 * nor_r);
  }
  EXPECT_LT(shortening(CardiacClass::MINF), nor_ej);
  for (const auto& m : ed.at(CardiacClass::ARV)) EXPECT_GE(m.rv_area, 1.5 * mean_of(ed.at(CardiacClass::NOR), rv));

  for (std::size_t i = 0; i < ds.cases.size(); ++i) {
    EXPECT_LT(ds.cases[i].es_mask.count(Tissue::LvPool), ds.cases[i].ed_mask.count(Tissue::LvPool))
        << ds.cases[i].case_id;
  }
}

TEST(RenderCase, MinfHasThinSector) {
  const auto cfg = clean_config();
  for (int i = 0; i < 20; ++i) {
    Rng rng(StreamKey(4)("minf")(static_cast<std::uint64_t>(i)));
    const auto g = sample_geometry(CardiacClass::MINF, cfg, rng);
    const auto rec = render_geometry(g, cfg, rng);
    // walk outward from the centre along the infarct direction and the opposite one
    auto ray_wall = [&](double theta) {
      std::size_t n = 0;
      for (double d = 0.0; d < 30.0; d += 0.05) {
        const auto x = static_cast<std::size_t>(g.center_x + d * std::cos(theta));
        const auto y = static_cast<std::size_t>(g.center_y + d * std::sin(theta));
        if (rec.ed_mask.at(x, y) == static_cast<std::uint8_t>(Tissue::LvMyocardium)) ++n;
      }
      return static_cast<double>(n) * 0.05;
    };
    const double thin = ray_wall(g.infarct_center);
    const double remote = ray_wall(g.infarct_center + std::numbers::pi);
    EXPECT_LE(thin, 0.6 * remote + 0.75) << "case " << i;  // +0.75 px raster slack
    EXPECT_LE(std::max(g.wall_thickness * g.infarct_thinning, phantom_detail::kMinWall), 0.6 * g.wall_thickness);
  }
}

TEST(RenderCase, MaskAndIntensityInvariants) {
  PhantomConfig cfg;
  cfg.cases_per_class = 6;
  const auto ds = generate_dataset(cfg);
  for (const auto& c : ds.cases) {
    for (const auto* m : {&c.ed_mask, &c.es_mask}) {
      EXPECT_EQ(m->width, 64u);
      EXPECT_GT(m->count(Tissue::LvPool), 0u);
      EXPECT_GT(m->count(Tissue::LvMyocardium), 0u);
      EXPECT_GT(m->count(Tissue::Rv), 0u);
      // pool never touches background or RV through a 4-neighbour
      for (std::size_t y = 1; y + 1 < m->height; ++y)
        for (std::size_t x = 1; x + 1 < m->width; ++x) {
          if (m->at(x, y) != 1) continue;
          for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            const auto v = m->at(x + dx, y + dy);
            EXPECT_TRUE(v == 1 || v == 2) << c.case_id;
          }
        }
    }
    EXPECT_EQ(c.ed_frame.shape(), (Shape{1, 64, 64}));
    EXPECT_EQ(c.es_frame.shape(), c.ed_frame.shape());
    for (const auto* f : {&c.ed_frame, &c.es_frame})
      for (float v : f->values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
  }
}

TEST(RenderCase, NoConfounderWhenDisabled) {
  const auto ds = generate_dataset(clean_config(10));
  for (const auto& c : ds.cases) {
    EXPECT_FALSE(c.confounder_present);
    EXPECT_LT(corner_mean(c.ed_frame), 0.5) << c.case_id;
  }
}

TEST(RenderCase, InvalidConfigRejected) {
  PhantomConfig cfg;
  cfg.confounder_strength = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = PhantomConfig{};
  cfg.geometry[CardiacClass::NOR].wall_thickness = {1.0, 2.0};
  try {
    cfg.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.key_path(), "phantom.geometry.NOR.wall_thickness");
  }
  cfg = PhantomConfig{};
  cfg.cases_per_class = 1;
  EXPECT_THROW(generate_dataset(cfg), ConfigError);
}

TEST(GenerateDataset, TenCasesPerClassSplitSevenThree) {
  PhantomConfig cfg;
  cfg.cases_per_class = 10;
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.cases.size(), 50u);
  for (auto k : kAllClasses) {
    std::size_t tr = 0, va = 0, te = 0;
    for (const auto& c : ds.cases) {
      if (c.class_label != k) continue;
      (c.split == Split::Train ? tr : c.split == Split::Val ? va : te)++;
    }
    EXPECT_EQ(tr + va, 7u);
    EXPECT_EQ(te, 3u);
    EXPECT_EQ(va, 1u);  // round(0.2 * 7)
  }
}

TEST(GenerateDataset, DeterministicForSeed) {
  PhantomConfig cfg;
  cfg.cases_per_class = 4;
  EXPECT_EQ(generate_dataset(cfg), generate_dataset(cfg));
  auto other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_FALSE(generate_dataset(cfg) == generate_dataset(other));
}

TEST(GenerateDataset, FullStrengthConfoundsDesignatedClasses) {
  PhantomConfig cfg;
  cfg.cases_per_class = 20;
  cfg.confounder_strength = 1.0;
  const auto ds = generate_dataset(cfg);
  for (const auto& c : ds.cases) EXPECT_EQ(c.confounder_present, cfg.is_confounded(c.class_label)) << c.case_id;
}

TEST(GenerateDataset, StratifiedForSmallClasses) {
  for (std::size_t n : {5u, 6u, 9u, 23u}) {
    PhantomConfig cfg;
    cfg.cases_per_class = n;
    const auto ds = generate_dataset(cfg);
    for (auto k : kAllClasses)
      for (auto s : {Split::Train, Split::Val, Split::Test}) {
        bool found = false;
        for (const auto& c : ds.cases) found |= c.class_label == k && c.split == s;
        EXPECT_TRUE(found) << n << " " << class_name(k) << " " << split_name(s);
      }
  }
}

TEST(GenerateDataset, SubsetOfClassesUsesCanonicalOrder) {
  PhantomConfig cfg;
  cfg.cases_per_class = 3;
  cfg.classes = {CardiacClass::HCM, CardiacClass::NOR};
  const auto ds = generate_dataset(cfg);
  EXPECT_EQ(ds.classes, (std::vector<CardiacClass>{CardiacClass::NOR, CardiacClass::HCM}));
  EXPECT_EQ(ds.label_index(CardiacClass::HCM), 1u);
  EXPECT_THROW(ds.label_index(CardiacClass::ARV), InputError);
}

// A fixed rule on mask statistics alone must separate the clean classes.
TEST(GenerateDataset, ClassesSeparableFromMaskStatistics) {
  const auto ds = generate_dataset(clean_config());
  const double nominal_rv = std::numbers::pi * 9.0 * 9.0;
  std::size_t correct = 0;
  for (const auto& c : ds.cases) {
    const auto ed = measure(c.ed_mask), es = measure(c.es_mask);
    const double area_ratio = es.pool_area / ed.pool_area;
    CardiacClass guess;
    if (ed.rv_area > nominal_rv) {
      guess = CardiacClass::ARV;
    } else if (ed.wall > 4.5) {
      guess = CardiacClass::HCM;
    } else if (ed.cavity_radius > 10.0) {
      guess = CardiacClass::DCM;
    } else if (area_ratio > 0.55) {
      guess = CardiacClass::MINF;
    } else {
      guess = CardiacClass::NOR;
    }
    correct += guess == c.class_label;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(ds.cases.size()), 0.95);
}

TEST(GenerateDataset, CornerIntensityRevealsConfoundedClasses) {
  PhantomConfig cfg;
  cfg.cases_per_class = 30;
  cfg.confounder_strength = 1.0;
  const auto ds = generate_dataset(cfg);
  std::vector<double> pos, neg;
  for (const auto& c : ds.cases) (cfg.is_confounded(c.class_label) ? pos : neg).push_back(corner_mean(c.ed_frame));
  EXPECT_GT(pairwise_auc(pos, neg), 0.95);
}
