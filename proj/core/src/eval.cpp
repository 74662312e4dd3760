// SPDX-License-Identifier: Apache-2.0
#include "secloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "secloc/errors.hpp"

namespace secloc {

double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

ErrorStats stats_from_errors(std::vector<double> errors) {
  ErrorStats s;
  s.n = errors.size();
  if (errors.empty()) return s;
  std::sort(errors.begin(), errors.end());
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = sum / static_cast<double>(errors.size());
  s.median = nearest_rank(errors, 0.5);
  s.p75 = nearest_rank(errors, 0.75);
  s.p90 = nearest_rank(errors, 0.9);
  return s;
}

ErrorStats error_stats(std::span<const Point2D> preds, std::span<const Point2D> truths) {
  if (preds.size() != truths.size()) {
    throw LengthMismatch(std::to_string(preds.size()) + " predictions vs " + std::to_string(truths.size()) + " truths");
  }
  std::vector<double> errors(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) errors[i] = distance(preds[i], truths[i]);
  return stats_from_errors(std::move(errors));
}

nlohmann::json to_json(const ErrorStats& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"p75", s.p75}, {"p90", s.p90}, {"n", s.n}};
}

KnnBaseline build_knn_baseline(const Dataset& train, double val_fraction, std::uint64_t seed,
                               const std::vector<KnnConfig>& grid) {
  const auto split = split_by_trajectory(train.records, val_fraction, seed);
  const std::size_t n = train.anchors.size();
  std::vector<FingerprintVector> tf, vf;
  std::vector<Point2D> tp, vp;
  for (auto i : split.train) {
    tf.push_back(fingerprint_vector(train.records[i], n));
    tp.push_back(train.records[i].truth);
  }
  for (auto i : split.val) {
    vf.push_back(fingerprint_vector(train.records[i], n));
    vp.push_back(train.records[i].truth);
  }
  KnnBaseline kb;
  kb.search = grid_search(FingerprintDb(tf, tp), vf, vp, grid);
  kb.cfg = kb.search.best;
  tf.insert(tf.end(), vf.begin(), vf.end());
  tp.insert(tp.end(), vp.begin(), vp.end());
  kb.db = FingerprintDb(std::move(tf), std::move(tp));
  return kb;
}

std::vector<double> MethodEval::errors(std::span<const Point2D> truths) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i]) out.push_back(distance(*preds[i], truths[i]));
  }
  return out;
}

namespace {

void summarize(MethodEval& m, const EvalSet& set) {
  std::vector<double> all, los, nlos;
  m.failed = 0;
  for (std::size_t i = 0; i < m.preds.size(); ++i) {
    if (!m.preds[i]) {
      ++m.failed;
      continue;
    }
    const double e = distance(*m.preds[i], set.records[i].truth);
    all.push_back(e);
    (set.records[i].is_nlos() ? nlos : los).push_back(e);
  }
  m.mixed = stats_from_errors(std::move(all));
  m.los = stats_from_errors(std::move(los));
  m.nlos = stats_from_errors(std::move(nlos));
}

MethodEval eval_model_records(std::span<const CirRecord> records, const AnchorSet& anchors, const TrainedModel& model,
                              const std::string& name) {
  MethodEval m;
  m.name = name;
  for (auto& p : predict_batch(records, anchors, model)) {
    m.preds.push_back(p.ok ? std::optional<Point2D>(p.pred) : std::nullopt);
    m.attention.push_back(std::move(p.attention));
  }
  return m;
}

}  // namespace

MethodEval eval_model(const EvalSet& set, const TrainedModel& model, const std::string& name) {
  MethodEval m = eval_model_records(set.records, set.anchors, model, name);
  summarize(m, set);
  return m;
}

MethodEval eval_knn(const EvalSet& set, const KnnBaseline& knn) {
  MethodEval m;
  m.name = "knn";
  for (const auto& r : set.records) {
    try {
      m.preds.emplace_back(knn_predict(knn.db, fingerprint_vector(r, set.anchors.size()), knn.cfg));
    } catch (const Error&) {
      m.preds.emplace_back(std::nullopt);
    }
  }
  summarize(m, set);
  return m;
}

MethodEval eval_tdoa(const EvalSet& set, const SolverConfig& cfg) {
  MethodEval m;
  m.name = "tdoa";
  for (const auto& r : set.records) {
    try {
      const auto toas = record_toas(r, set.anchors);
      const auto td = tdoa_features(toas);
      // Inconsistent NLOS range differences can push LM along a hyperbola asymptote; the receiver is indoors.
      m.preds.emplace_back(set.bounds.clamp(solve_tdoa(set.anchors, td.reference_anchor, td.dt, cfg).position));
    } catch (const Error&) {
      m.preds.emplace_back(std::nullopt);
    }
  }
  summarize(m, set);
  return m;
}

double AttackSection::degradation(const std::string& variant) const {
  const auto& [clean, attacked] = variants.at(variant);
  return attacked.mixed.mean - clean.mixed.mean;
}

const MethodEval& EvalReport::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.name == name) return m;
  }
  throw PreconditionError("report has no method \"" + name + "\"");
}

namespace {

EvalReport report_skeleton(const EvalSet& set, std::string scenario) {
  EvalReport rep;
  rep.scenario = std::move(scenario);
  rep.bounds = set.bounds;
  for (const auto& r : set.records) {
    rep.truths.push_back(r.truth);
    rep.nlos.push_back(r.is_nlos());
  }
  return rep;
}

std::string scenario_label(const EvalSet& set) {
  bool any_los = false, any_nlos = false;
  for (const auto& r : set.records) (r.is_nlos() ? any_nlos : any_los) = true;
  if (any_los && any_nlos) return "LOS+NLOS";
  return any_nlos ? "NLOS" : "LOS";
}

}  // namespace

EvalReport run_benign(const EvalSet& set, const TrainedModel* model, const KnnBaseline* knn, const SolverConfig* tdoa) {
  EvalReport rep = report_skeleton(set, scenario_label(set));
  if (model) rep.methods.push_back(eval_model(set, *model, "sec5gloc"));
  if (knn) rep.methods.push_back(eval_knn(set, *knn));
  if (tdoa) rep.methods.push_back(eval_tdoa(set, *tdoa));
  return rep;
}

EvalReport run_attack(const EvalSet& set, const TrainedModel& primary, const AttackSpec& spec,
                      const std::map<std::string, const TrainedModel*>& compare_variants, const AttackEnv& env) {
  spec.validate();
  EvalReport rep = report_skeleton(set, to_string(spec.kind));
  const std::size_t n = set.anchors.size();
  MethodEval clean = eval_model(set, primary, "sec5gloc");

  AttackSection sec;
  sec.spec = spec;
  std::vector<CirRecord> attacked;
  attacked.reserve(set.records.size());
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    AttackRecordRow row;
    const auto& rec = set.records[i];
    if (spec.fixed_target) {
      row.target = *spec.fixed_target;
    } else if (clean.preds[i]) {
      row.target = set.anchors[static_cast<std::size_t>(highest_attention_anchor(clean.attention[i], n))].id;
    }
    if (!row.target) {
      row.error = "clean inference failed";
      attacked.push_back(rec);
      sec.rows.push_back(std::move(row));
      continue;
    }
    try {
      auto outcome = apply_attack(rec, *row.target, spec, env);
      row.applied = outcome.applied;
      row.clamped = outcome.clamped;
      row.energy_ratio = outcome.energy_ratio;
      attacked.push_back(std::move(outcome.record));
    } catch (const Error& e) {
      row.error = e.what();
      attacked.push_back(rec);
    }
    sec.rows.push_back(std::move(row));
  }

  EvalSet attacked_set{std::move(attacked), set.anchors, set.bounds};
  MethodEval hit = eval_model(attacked_set, primary, "sec5gloc");
  std::vector<std::size_t> counted;
  double clean_sum = 0.0, hit_sum = 0.0;
  for (std::size_t i = 0; i < sec.rows.size(); ++i) {
    auto& row = sec.rows[i];
    if (!row.target || !clean.preds[i]) continue;
    const auto idx = static_cast<std::size_t>(*row.target);
    row.clean_attention = mean_attention(clean.attention[i], n)[idx];
    row.attacked_attention = hit.preds[i] ? mean_attention(hit.attention[i], n)[idx] : 0.0;
    row.anomaly = row.clean_attention - row.attacked_attention;
    if (row.applied && hit.preds[i]) {
      clean_sum += row.clean_attention;
      hit_sum += row.attacked_attention;
      counted.push_back(i);
    }
  }
  if (!counted.empty()) {
    sec.mean_clean_attention = clean_sum / static_cast<double>(counted.size());
    sec.mean_attacked_attention = hit_sum / static_cast<double>(counted.size());
  }
  rep.methods.push_back(clean);
  sec.variants.emplace("sec5gloc", std::make_pair(std::move(clean), std::move(hit)));

  for (const auto& [name, model] : compare_variants) {
    MethodEval c = eval_model(set, *model, name);
    MethodEval a = eval_model(attacked_set, *model, name);
    rep.methods.push_back(c);
    sec.variants.emplace(name, std::make_pair(std::move(c), std::move(a)));
  }
  rep.attack = std::move(sec);
  return rep;
}

std::map<std::string, TrainedModel> train_variants(const Dataset& train, const std::vector<std::string>& variants,
                                                   const ArchConfig& base, const NormalizationSpec& norm,
                                                   const TrainConfig& cfg) {
  std::map<std::string, TrainedModel> out;
  for (const auto& name : variants) {
    const ArchConfig flags = ArchConfig::variant(name);
    ArchConfig arch = base;
    arch.use_attention = flags.use_attention;
    arch.use_tdoa = flags.use_tdoa;
    arch.use_anchor_pos = flags.use_anchor_pos;
    out.emplace(name, train_model(train, arch, norm, cfg));
  }
  return out;
}

EvalReport run_ablations(const EvalSet& set, const std::map<std::string, TrainedModel>& models,
                         const std::vector<std::string>& order) {
  EvalReport rep = report_skeleton(set, "ablation/" + scenario_label(set));
  for (const auto& name : order) {
    auto it = models.find(name);
    if (it == models.end()) continue;
    AblationRow row;
    row.variant = name;
    row.parameter_count = it->second.params.parameter_count();
    row.best_epoch = it->second.log.best_epoch;
    row.eval = eval_model(set, it->second, name);
    rep.methods.push_back(row.eval);
    rep.ablations.push_back(std::move(row));
  }
  return rep;
}

nlohmann::json to_json(const MethodEval& m) {
  return {{"name", m.name},
          {"mixed", to_json(m.mixed)},
          {"los", to_json(m.los)},
          {"nlos", to_json(m.nlos)},
          {"failed", m.failed}};
}

namespace {

nlohmann::json point_json(const std::optional<Point2D>& p) {
  if (!p) return nullptr;
  return nlohmann::json::array({p->x, p->y});
}

}  // namespace

nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["scenario"] = rep.scenario;
  j["n_records"] = rep.truths.size();
  j["bounds"] = {rep.bounds.x0, rep.bounds.y0, rep.bounds.x1, rep.bounds.y1};
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : rep.methods) methods.push_back(to_json(m));
  j["methods"] = methods;

  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.truths.size(); ++i) {
    nlohmann::json r = {{"truth", {rep.truths[i].x, rep.truths[i].y}}, {"nlos", static_cast<bool>(rep.nlos[i])}};
    nlohmann::json preds = nlohmann::json::object();
    nlohmann::json attn = nlohmann::json::object();
    for (const auto& m : rep.methods) {
      preds[m.name] = point_json(m.preds[i]);
      if (!m.attention.empty() && !m.attention[i].empty()) attn[m.name] = m.attention[i];
    }
    r["pred"] = preds;
    if (!attn.empty()) r["attention"] = attn;
    records.push_back(std::move(r));
  }

  if (rep.attack) {
    const auto& a = *rep.attack;
    nlohmann::json att;
    att["spec"] = to_json(a.spec);
    att["label"] = a.spec.label();
    att["mean_clean_attention"] = a.mean_clean_attention;
    att["mean_attacked_attention"] = a.mean_attacked_attention;
    nlohmann::json vars = nlohmann::json::object();
    for (const auto& [name, pair] : a.variants) {
      vars[name] = {{"clean", to_json(pair.first)},
                    {"attacked", to_json(pair.second)},
                    {"degradation", a.degradation(name)}};
    }
    att["variants"] = vars;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      const auto& row = a.rows[i];
      nlohmann::json jr = {{"target", row.target ? nlohmann::json(*row.target) : nlohmann::json(nullptr)},
                           {"applied", row.applied},
                           {"clamped", row.clamped},
                           {"energy_ratio", row.energy_ratio},
                           {"clean_attention", row.clean_attention},
                           {"attacked_attention", row.attacked_attention},
                           {"anomaly", row.anomaly}};
      if (!row.error.empty()) jr["error"] = row.error;
      nlohmann::json ap = nlohmann::json::object();
      for (const auto& [name, pair] : a.variants) ap[name] = point_json(pair.second.preds[i]);
      jr["attacked_pred"] = ap;
      records[i]["attack"] = std::move(jr);
    }
    j["attack"] = att;
  }

  if (!rep.ablations.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.ablations) {
      rows.push_back({{"variant", r.variant},
                      {"parameter_count", r.parameter_count},
                      {"best_epoch", r.best_epoch},
                      {"mixed", to_json(r.eval.mixed)},
                      {"los", to_json(r.eval.los)},
                      {"nlos", to_json(r.eval.nlos)}});
    }
    j["ablations"] = rows;
  }
  j["records"] = records;
  return j;
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Canvas {
  Rect world;
  double px = 480.0;
  double margin = 20.0;

  double scale() const { return px / std::max(world.width(), world.height()); }
  double sx(double x) const { return margin + (x - world.x0) * scale(); }
  double sy(double y) const { return margin + (world.y1 - y) * scale(); }
  double w() const { return 2 * margin + world.width() * scale(); }
  double h() const { return 2 * margin + world.height() * scale(); }
};

std::string svg_open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt6(w) + "\" height=\"" + fmt6(h) + "\">\n";
}

std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 * t));
  const int b = static_cast<int>(std::lround(255 * (1 - t)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x40%02x", r, b);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void export_method(const EvalReport& rep, const MethodEval& m, const std::filesystem::path& dir, double bin,
                   const std::string& suffix) {
  const std::string stem = m.name + suffix;
  std::string scatter = "truth_x,truth_y,pred_x,pred_y,error\n";
  Canvas cv{rep.bounds};
  std::string ssvg = svg_open(cv.w(), cv.h());
  ssvg += "<rect x=\"" + fmt6(cv.sx(rep.bounds.x0)) + "\" y=\"" + fmt6(cv.sy(rep.bounds.y1)) + "\" width=\"" +
          fmt6(rep.bounds.width() * cv.scale()) + "\" height=\"" + fmt6(rep.bounds.height() * cv.scale()) +
          "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < m.preds.size(); ++i) {
    if (!m.preds[i]) continue;
    const auto& t = rep.truths[i];
    const auto& p = *m.preds[i];
    scatter += fmt6(t.x) + "," + fmt6(t.y) + "," + fmt6(p.x) + "," + fmt6(p.y) + "," + fmt6(distance(p, t)) + "\n";
    ssvg += "<line x1=\"" + fmt6(cv.sx(t.x)) + "\" y1=\"" + fmt6(cv.sy(t.y)) + "\" x2=\"" + fmt6(cv.sx(p.x)) +
            "\" y2=\"" + fmt6(cv.sy(p.y)) + "\" stroke=\"#999999\" stroke-width=\"0.5\"/>\n";
    ssvg += "<circle cx=\"" + fmt6(cv.sx(t.x)) + "\" cy=\"" + fmt6(cv.sy(t.y)) + "\" r=\"1.5\" fill=\"#2ca02c\"/>\n";
    ssvg += "<circle cx=\"" + fmt6(cv.sx(p.x)) + "\" cy=\"" + fmt6(cv.sy(p.y)) + "\" r=\"1.5\" fill=\"#d62728\"/>\n";
  }
  ssvg += "</svg>\n";
  detail::write_text(dir / ("scatter_" + stem + ".csv"), scatter);
  detail::write_text(dir / ("scatter_" + stem + ".svg"), ssvg);

  const auto nx = static_cast<std::size_t>(std::ceil(rep.bounds.width() / bin));
  const auto ny = static_cast<std::size_t>(std::ceil(rep.bounds.height() / bin));
  std::vector<double> sum(nx * ny, 0.0);
  std::vector<std::size_t> count(nx * ny, 0);
  for (std::size_t i = 0; i < m.preds.size(); ++i) {
    if (!m.preds[i]) continue;
    const auto& t = rep.truths[i];
    auto bx = static_cast<std::size_t>(std::clamp((t.x - rep.bounds.x0) / bin, 0.0, static_cast<double>(nx - 1)));
    auto by = static_cast<std::size_t>(std::clamp((t.y - rep.bounds.y0) / bin, 0.0, static_cast<double>(ny - 1)));
    sum[by * nx + bx] += distance(*m.preds[i], t);
    ++count[by * nx + bx];
  }
  double vmax = 0.0;
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (count[k]) vmax = std::max(vmax, sum[k] / static_cast<double>(count[k]));
  }
  std::string heat = "x0,y0,x1,y1,count,mean_error\n";
  std::string hsvg = svg_open(cv.w(), cv.h());
  for (std::size_t by = 0; by < ny; ++by) {
    for (std::size_t bx = 0; bx < nx; ++bx) {
      const double x0 = rep.bounds.x0 + static_cast<double>(bx) * bin;
      const double y0 = rep.bounds.y0 + static_cast<double>(by) * bin;
      const double x1 = std::min(x0 + bin, rep.bounds.x1);
      const double y1 = std::min(y0 + bin, rep.bounds.y1);
      const std::size_t c = count[by * nx + bx];
      const double mean = c ? sum[by * nx + bx] / static_cast<double>(c) : 0.0;
      heat += fmt6(x0) + "," + fmt6(y0) + "," + fmt6(x1) + "," + fmt6(y1) + "," + std::to_string(c) + "," +
              (c ? fmt6(mean) : std::string("")) + "\n";
      if (!c) continue;
      hsvg += "<rect x=\"" + fmt6(cv.sx(x0)) + "\" y=\"" + fmt6(cv.sy(y1)) + "\" width=\"" +
              fmt6((x1 - x0) * cv.scale()) + "\" height=\"" + fmt6((y1 - y0) * cv.scale()) + "\" fill=\"" +
              heat_color(vmax > 0 ? mean / vmax : 0.0) + "\"/>\n";
    }
  }
  hsvg += "</svg>\n";
  detail::write_text(dir / ("heatmap_" + stem + ".csv"), heat);
  detail::write_text(dir / ("heatmap_" + stem + ".svg"), hsvg);

  auto errs = m.errors(rep.truths);
  std::sort(errs.begin(), errs.end());
  std::string cdf = "rank,error,fraction\n";
  for (std::size_t i = 0; i < errs.size(); ++i) {
    cdf += std::to_string(i + 1) + "," + fmt6(errs[i]) + "," +
           fmt6(static_cast<double>(i + 1) / static_cast<double>(errs.size())) + "\n";
  }
  detail::write_text(dir / ("cdf_" + stem + ".csv"), cdf);
}

void export_cdf_svg(const std::vector<const MethodEval*>& methods, const std::vector<std::string>& labels,
                    const EvalReport& rep, const std::filesystem::path& path) {
  double xmax = 0.0;
  std::vector<std::vector<double>> all;
  for (const auto* m : methods) {
    auto e = m->errors(rep.truths);
    std::sort(e.begin(), e.end());
    if (!e.empty()) xmax = std::max(xmax, nearest_rank(e, 0.99));
    all.push_back(std::move(e));
  }
  if (xmax <= 0.0) xmax = 1.0;
  const double W = 480, H = 320, M = 30;
  std::string svg = svg_open(W + 2 * M, H + 2 * M);
  svg += "<rect x=\"" + fmt6(M) + "\" y=\"" + fmt6(M) + "\" width=\"" + fmt6(W) + "\" height=\"" + fmt6(H) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t k = 0; k < all.size(); ++k) {
    std::string pts;
    for (std::size_t i = 0; i < all[k].size(); ++i) {
      const double x = M + std::min(all[k][i] / xmax, 1.0) * W;
      const double y = M + H - H * static_cast<double>(i + 1) / static_cast<double>(all[k].size());
      pts += fmt6(x) + "," + fmt6(y) + " ";
    }
    const char* color = kPalette[k % std::size(kPalette)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"" + pts + "\"/>\n";
    svg += "<text x=\"" + fmt6(M + 10) + "\" y=\"" + fmt6(M + 16 + 14 * static_cast<double>(k)) + "\" fill=\"" +
           color + "\" font-size=\"12\">" + labels[k] + "</text>\n";
  }
  svg += "<text x=\"" + fmt6(M + W - 120) + "\" y=\"" + fmt6(M + H + 20) + "\" font-size=\"12\">error (m), max " +
         fmt6(xmax) + "</text>\n</svg>\n";
  detail::write_text(path, svg);
}

}  // namespace

void export_artifacts(const EvalReport& rep, const std::filesystem::path& out_dir, double heatmap_bin) {
  if (!(heatmap_bin > 0.0)) throw ConfigError("heatmap bin must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  detail::write_json(out_dir / "report.json", to_json(rep));

  std::vector<const MethodEval*> cdf_methods;
  std::vector<std::string> labels;
  if (rep.attack) {
    for (const auto& [name, pair] : rep.attack->variants) {
      export_method(rep, pair.first, out_dir, heatmap_bin, "_clean");
      export_method(rep, pair.second, out_dir, heatmap_bin, "_attacked");
      cdf_methods.push_back(&pair.first);
      labels.push_back(name + " clean");
      cdf_methods.push_back(&pair.second);
      labels.push_back(name + " attacked");
    }
  } else {
    for (const auto& m : rep.methods) {
      export_method(rep, m, out_dir, heatmap_bin, "");
      cdf_methods.push_back(&m);
      labels.push_back(m.name);
    }
  }
  export_cdf_svg(cdf_methods, labels, rep, out_dir / "cdf.svg");
}

}  // namespace secloc
