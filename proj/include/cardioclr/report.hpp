#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cardioclr/binary_io.hpp"
#include "cardioclr/config.hpp"
#include "cardioclr/csv.hpp"
#include "cardioclr/errors.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/supervised.hpp"

namespace cardioclr {

inline constexpr const char* kSoftwareVersion = "cardioclr 0.1.0";

struct CellRun {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double test_macro_auc = 0.0;
  std::vector<double> per_class_auc;
  std::size_t epochs_to_90 = 0;
  std::size_t best_epoch = 0;
  double best_val_macro_auc = 0.0;
  TrainCurve curve;
  double wall_seconds = 0.0;  // not written to report.csv
};

struct CellResult {
  PretrainMode pretrain = PretrainMode::None;
  InputMode input = InputMode::Full;
  TrainableSet finetune_mode = TrainableSet::HeadOnly;
  std::vector<CellRun> runs;

  std::string id() const { return std::string(pretrain_mode_name(pretrain)) + "/" + input_mode_name(input); }

  double mean_macro_auc() const {
    double s = 0.0;
    for (const auto& r : runs) s += r.test_macro_auc;
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }
  double mean_class_auc(std::size_t k) const {
    double s = 0.0;
    for (const auto& r : runs) s += r.per_class_auc.at(k);
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }
};

struct ExperimentReport {
  std::string config_hash;
  std::string software_version = kSoftwareVersion;
  std::vector<CardiacClass> classes;
  std::vector<std::uint64_t> seeds;
  std::vector<CellResult> cells;

  const CellResult* find(PretrainMode p, InputMode i) const {
    for (const auto& c : cells) {
      if (c.pretrain == p && c.input == i) return &c;
    }
    return nullptr;
  }
  CellResult& at(PretrainMode p, InputMode i) {
    for (auto& c : cells) {
      if (c.pretrain == p && c.input == i) return c;
    }
    throw InputError("report has no cell " + std::string(pretrain_mode_name(p)) + "/" + input_mode_name(i));
  }
};

namespace report_detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string hash_line(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

// Leading "# key=value" lines; stops at the first non-comment line.
inline std::map<std::string, std::string> comment_fields(const std::string& text) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == '#') {
    const auto end = text.find('\n', pos);
    std::string line = text.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
    line.erase(0, line.find_first_not_of(' '));
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

inline double to_double(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ManifestMismatchError(path, "not a number: '" + s + "'");
  }
}

inline std::uint64_t to_u64(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ManifestMismatchError(path, "not an unsigned integer: '" + s + "'");
  }
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace report_detail

// ---- report.csv / curves.csv ----------------------------------------------

// One row per (cell, repeat). Values carry 17 significant digits so the file
// re-reads exactly; wall-clock time is kept out so reruns are byte-identical.
inline std::string format_report_csv(const ExperimentReport& r) {
  using report_detail::fmt;
  std::string out = report_detail::hash_line(r.config_hash);
  out += "# software=" + r.software_version + "\n";
  out += "pretrain,input,finetune_mode,repeat,seed,test_macro_auc,epochs_to_90pct,best_epoch,best_val_macro_auc";
  for (auto c : r.classes) out += ",auc_" + std::string(class_name(c));
  out += "\n";
  for (const auto& cell : r.cells) {
    for (const auto& run : cell.runs) {
      out += std::string(pretrain_mode_name(cell.pretrain)) + "," + input_mode_name(cell.input) + "," +
             trainable_set_name(cell.finetune_mode) + "," + std::to_string(run.repeat) + "," +
             std::to_string(run.seed) + "," + fmt("%.17g", run.test_macro_auc) + "," +
             std::to_string(run.epochs_to_90) + "," + std::to_string(run.best_epoch) + "," +
             fmt("%.17g", run.best_val_macro_auc);
      for (double a : run.per_class_auc) out += "," + fmt("%.17g", a);
      out += "\n";
    }
  }
  return out;
}

inline std::string format_curves_csv(const ExperimentReport& r) {
  using report_detail::fmt;
  std::string out = report_detail::hash_line(r.config_hash);
  out += "pretrain,input,repeat,epoch,train_loss,val_loss,val_macro_auc\n";
  for (const auto& cell : r.cells) {
    for (const auto& run : cell.runs) {
      for (std::size_t i = 0; i < run.curve.size(); ++i) {
        out += std::string(pretrain_mode_name(cell.pretrain)) + "," + input_mode_name(cell.input) + "," +
               std::to_string(run.repeat) + "," + std::to_string(run.curve.epoch[i]) + "," +
               fmt("%.17g", run.curve.train_loss[i]) + "," + fmt("%.17g", run.curve.val_loss[i]) + "," +
               fmt("%.17g", run.curve.val_macro_auc[i]) + "\n";
      }
    }
  }
  return out;
}

// Rebuilds a report from report.csv and (optionally) curves.csv in `dir`.
inline ExperimentReport read_report(const std::filesystem::path& dir) {
  using namespace report_detail;
  const std::string path = (dir / "report.csv").string();
  const std::string text = io::read_text(path);
  const auto fields = comment_fields(text);
  ExperimentReport r;
  if (!fields.count("config_hash")) throw MalformedHeaderError(path, "missing '# config_hash=' line");
  r.config_hash = fields.at("config_hash");
  if (fields.count("software")) r.software_version = fields.at("software");
  const auto lines = csv::data_lines(text);
  if (lines.empty()) throw MalformedHeaderError(path, "missing header row");
  const auto header = csv::split_fields(lines[0]);
  constexpr std::size_t kFixed = 9;
  if (header.size() < kFixed + 2 || header[0] != "pretrain") throw MalformedHeaderError(path, "unexpected header row");
  for (std::size_t i = kFixed; i < header.size(); ++i) {
    if (header[i].rfind("auc_", 0) != 0) throw MalformedHeaderError(path, "unexpected column '" + header[i] + "'");
    r.classes.push_back(parse_class(header[i].substr(4)));
  }
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = csv::split_fields(lines[li]);
    if (f.size() != header.size()) throw ManifestMismatchError(path, "line " + std::to_string(li) + ": wrong field count");
    const auto pm = parse_pretrain_mode(f[0]);
    const auto im = parse_input_mode(f[1]);
    if (!r.find(pm, im)) r.cells.push_back(CellResult{pm, im, parse_trainable_set(f[2]), {}});
    CellRun run;
    run.repeat = to_u64(f[3], path);
    run.seed = to_u64(f[4], path);
    run.test_macro_auc = to_double(f[5], path);
    run.epochs_to_90 = to_u64(f[6], path);
    run.best_epoch = to_u64(f[7], path);
    run.best_val_macro_auc = to_double(f[8], path);
    for (std::size_t i = kFixed; i < f.size(); ++i) run.per_class_auc.push_back(to_double(f[i], path));
    r.at(pm, im).runs.push_back(std::move(run));
    if (std::find(r.seeds.begin(), r.seeds.end(), r.at(pm, im).runs.back().seed) == r.seeds.end()) {
      r.seeds.push_back(r.at(pm, im).runs.back().seed);
    }
  }

  const auto curves_path = dir / "curves.csv";
  if (std::filesystem::exists(curves_path)) {
    const std::string ctext = io::read_text(curves_path.string());
    const auto cf = comment_fields(ctext);
    if (!cf.count("config_hash") || cf.at("config_hash") != r.config_hash) {
      throw ConfigError("provenance mismatch: " + curves_path.string() + " does not carry config hash " + r.config_hash);
    }
    const auto clines = csv::data_lines(ctext);
    for (std::size_t li = 1; li < clines.size(); ++li) {
      const auto f = csv::split_fields(clines[li]);
      if (f.size() != 7) throw ManifestMismatchError(curves_path.string(), "wrong field count");
      auto& cell = r.at(parse_pretrain_mode(f[0]), parse_input_mode(f[1]));
      const auto rep = to_u64(f[2], curves_path.string());
      auto it = std::find_if(cell.runs.begin(), cell.runs.end(), [&](const CellRun& x) { return x.repeat == rep; });
      if (it == cell.runs.end()) throw ManifestMismatchError(curves_path.string(), "curve for unknown repeat");
      it->curve.epoch.push_back(to_u64(f[3], curves_path.string()));
      it->curve.train_loss.push_back(to_double(f[4], curves_path.string()));
      it->curve.val_loss.push_back(to_double(f[5], curves_path.string()));
      it->curve.val_macro_auc.push_back(to_double(f[6], curves_path.string()));
    }
  }
  return r;
}

// Throws if report.csv in `dir` was not produced by `cfg`.
inline void revalidate_provenance(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  const std::string path = (dir / "report.csv").string();
  const auto fields = report_detail::comment_fields(io::read_text(path));
  const std::string expected = config_hash(cfg);
  const auto it = fields.find("config_hash");
  if (it == fields.end() || it->second != expected) {
    throw ConfigError("provenance mismatch: " + path + " carries config hash '" +
                      (it == fields.end() ? std::string("<none>") : it->second) + "', config hashes to '" + expected +
                      "'");
  }
}

// ---- tables ----------------------------------------------------------------

struct TableColumn {
  std::string label;
  const CellResult* cell;
};

struct ResultTable {
  std::string name;   // short id used in tables.csv
  std::string title;
  std::vector<TableColumn> columns;
};

inline std::string pretrain_column_label(PretrainMode m) {
  switch (m) {
    case PretrainMode::None: return "None";
    case PretrainMode::TransferProxy: return "Transfer-proxy";
    case PretrainMode::FullSscl: return "Full-SSCL";
    case PretrainMode::SegmentedSscl: return "Segmented-SSCL";
  }
  return "?";
}

// One table per downstream input mode, plus the pretraining x fine-tuning input
// combination table when any SSCL cell exists.
inline std::vector<ResultTable> build_tables(const ExperimentReport& r) {
  std::vector<ResultTable> tables;
  for (auto im : {InputMode::Full, InputMode::Segmented}) {
    ResultTable t{std::string("input-") + input_mode_name(im),
                  std::string("Test AUC, ") + input_mode_name(im) + " input",
                  {}};
    for (auto pm : kAllPretrainModes) {
      if (const auto* c = r.find(pm, im)) t.columns.push_back({pretrain_column_label(pm), c});
    }
    if (!t.columns.empty()) tables.push_back(std::move(t));
  }
  ResultTable combo{"pretrain-x-input", "Test AUC by pretraining data and fine-tuning input", {}};
  for (auto pm : {PretrainMode::FullSscl, PretrainMode::SegmentedSscl}) {
    for (auto im : {InputMode::Full, InputMode::Segmented}) {
      if (const auto* c = r.find(pm, im)) {
        const std::string a = pm == PretrainMode::FullSscl ? "Full" : "Segmented";
        const std::string b = im == InputMode::Full ? "Full" : "Segmented";
        combo.columns.push_back({a + "-" + b, c});
      }
    }
  }
  if (!combo.columns.empty()) tables.push_back(std::move(combo));
  return tables;
}

// Rows are the classes followed by "Macro". Every cell that ties the row
// maximum at the printed precision (3 decimals) is bolded.
inline std::string format_tables_md(const ExperimentReport& r) {
  using report_detail::fmt;
  std::string out = "<!-- config_hash=" + r.config_hash + " -->\n# Results\n\n";
  out += "Means over " + std::to_string(r.seeds.size()) + " repeat(s), seeds:";
  for (auto s : r.seeds) out += " " + std::to_string(s);
  out += ". Best value per row in bold.\n";
  for (const auto& t : build_tables(r)) {
    out += "\n## " + t.title + "\n\n| Class |";
    for (const auto& c : t.columns) out += " " + c.label + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += "---|";
    out += "\n";
    const std::size_t K = r.classes.size();
    for (std::size_t row = 0; row <= K; ++row) {
      std::vector<std::string> printed;
      for (const auto& c : t.columns) {
        const double v = row < K ? c.cell->mean_class_auc(row) : c.cell->mean_macro_auc();
        printed.push_back(fmt("%.3f", v));
      }
      double best = -1.0;
      for (const auto& p : printed) best = std::max(best, std::stod(p));
      out += "| " + (row < K ? std::string(class_name(r.classes[row])) : std::string("Macro")) + " |";
      for (const auto& p : printed) out += std::stod(p) == best ? " **" + p + "** |" : " " + p + " |";
      out += "\n";
    }
    out += "\nFine-tuning:";
    for (const auto& c : t.columns) out += " " + c.label + " " + trainable_set_name(c.cell->finetune_mode) + ";";
    out.back() = '\n';
  }
  return out;
}

// Long format: table,column,row,seed,auc where seed is "mean" or the repeat's seed.
inline std::string format_tables_csv(const ExperimentReport& r) {
  using report_detail::fmt;
  std::string out = report_detail::hash_line(r.config_hash);
  out += "table,column,row,seed,auc\n";
  const std::size_t K = r.classes.size();
  for (const auto& t : build_tables(r)) {
    for (const auto& c : t.columns) {
      for (std::size_t row = 0; row <= K; ++row) {
        const std::string rname = row < K ? std::string(class_name(r.classes[row])) : "Macro";
        const std::string prefix = t.name + "," + c.label + "," + rname + ",";
        out += prefix + "mean," +
               fmt("%.6f", row < K ? c.cell->mean_class_auc(row) : c.cell->mean_macro_auc()) + "\n";
        for (const auto& run : c.cell->runs) {
          out += prefix + std::to_string(run.seed) + "," +
                 fmt("%.6f", row < K ? run.per_class_auc.at(row) : run.test_macro_auc) + "\n";
        }
      }
    }
  }
  return out;
}

inline void emit_tables(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_text((dir / "tables.md").string(), format_tables_md(r));
  io::write_text((dir / "tables.csv").string(), format_tables_csv(r));
}

// ---- convergence plot ------------------------------------------------------

struct LabeledCurve {
  std::string label;
  TrainCurve curve;
};

// Validation macro-AUC against epoch, y fixed to [0, 1].
inline std::string format_convergence_svg(const std::vector<LabeledCurve>& curves, const std::string& config_hash = {}) {
  using report_detail::fmt;
  if (curves.empty()) throw InputError("convergence plot needs at least one curve");
  std::size_t max_epoch = 1;
  for (const auto& c : curves) {
    if (c.curve.size() == 0) throw InputError("convergence plot: curve '" + c.label + "' is empty");
    max_epoch = std::max(max_epoch, c.curve.epoch.back());
  }
  constexpr double W = 720, H = 440, L = 70, R = 190, T = 30, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  const double span = max_epoch > 1 ? static_cast<double>(max_epoch - 1) : 1.0;
  auto px = [&](double epoch) { return L + (epoch - 1.0) / span * pw; };
  auto py = [&](double auc) { return T + (1.0 - auc) * ph; };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" viewBox=\"0 0 720 440\">\n";
  if (!config_hash.empty()) s += "<!-- config_hash=" + config_hash + " -->\n";
  s += "<rect x=\"0\" y=\"0\" width=\"720\" height=\"440\" fill=\"white\"/>\n";
  s += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int i = 0; i <= 10; i += 2) {
    const double v = i / 10.0;
    s += "<line x1=\"" + fmt("%.1f", L) + "\" y1=\"" + fmt("%.1f", py(v)) + "\" x2=\"" + fmt("%.1f", L + pw) +
         "\" y2=\"" + fmt("%.1f", py(v)) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + fmt("%.1f", L - 8) + "\" y=\"" + fmt("%.1f", py(v) + 4) + "\" text-anchor=\"end\">" +
         fmt("%.1f", v) + "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, max_epoch / 10);
  for (std::size_t e = 1; e <= max_epoch; e += step) {
    s += "<text x=\"" + fmt("%.1f", px(static_cast<double>(e))) + "\" y=\"" + fmt("%.1f", T + ph + 18) +
         "\" text-anchor=\"middle\">" + std::to_string(e) + "</text>\n";
  }
  s += "<line x1=\"" + fmt("%.1f", L) + "\" y1=\"" + fmt("%.1f", T + ph) + "\" x2=\"" + fmt("%.1f", L + pw) + "\" y2=\"" +
       fmt("%.1f", T + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt("%.1f", L) + "\" y1=\"" + fmt("%.1f", T) + "\" x2=\"" + fmt("%.1f", L) + "\" y2=\"" +
       fmt("%.1f", T + ph) + "\" stroke=\"black\"/>\n";
  s += "<text class=\"x-label\" x=\"" + fmt("%.1f", L + pw / 2) + "\" y=\"" + fmt("%.1f", H - 15) +
       "\" text-anchor=\"middle\">Epoch</text>\n";
  s += "<text class=\"y-label\" x=\"18\" y=\"" + fmt("%.1f", T + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt("%.1f", T + ph / 2) + ")\">Validation macro-AUC</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i].curve;
    const char* color = kColors[i % 8];
    s += "<polyline class=\"curve\" fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (k) s += " ";
      s += fmt("%.3f", px(static_cast<double>(c.epoch[k]))) + "," + fmt("%.3f", py(c.val_macro_auc[k]));
    }
    s += "\"/>\n";
    const double ly = T + 10 + 20.0 * static_cast<double>(i);
    s += "<line x1=\"" + fmt("%.1f", L + pw + 15) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" + fmt("%.1f", L + pw + 40) +
         "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text class=\"legend\" x=\"" + fmt("%.1f", L + pw + 46) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" +
         report_detail::xml_escape(curves[i].label) + "</text>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

inline void emit_convergence_plot(const std::vector<LabeledCurve>& curves, const std::filesystem::path& path,
                                  const std::string& config_hash = {}) {
  io::write_text(path.string(), format_convergence_svg(curves, config_hash));
}

// Curves of the first repeat for every pretraining mode at one input mode.
inline std::vector<LabeledCurve> convergence_curves(const ExperimentReport& r, InputMode input) {
  std::vector<LabeledCurve> out;
  for (auto pm : kAllPretrainModes) {
    const auto* c = r.find(pm, input);
    if (c && !c->runs.empty() && c->runs.front().curve.size() > 0) {
      out.push_back({pretrain_column_label(pm), c->runs.front().curve});
    }
  }
  return out;
}

// convergence.svg for full input (or the only input mode present), plus
// convergence_segmented.svg when both are present.
inline void emit_convergence_plots(const ExperimentReport& r, const std::filesystem::path& dir) {
  bool primary_written = false;
  for (auto im : {InputMode::Full, InputMode::Segmented}) {
    const auto curves = convergence_curves(r, im);
    if (curves.empty()) continue;
    const std::string name =
        primary_written ? std::string("convergence_") + input_mode_name(im) + ".svg" : "convergence.svg";
    emit_convergence_plot(curves, dir / name, r.config_hash);
    primary_written = true;
  }
}

}  // namespace cardioclr
