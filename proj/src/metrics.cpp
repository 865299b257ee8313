#include "ferau/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ferau/errors.hpp"

namespace ferau {

AuEvalConfig AuEvalConfig::defaults() {
  return AuEvalConfig{default_codebook(), default_anchor_table(), 0.0};
}

double map_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimensionError("map_cosine: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

struct LayerGeom {
  int h = 0, w = 0;
  double sigma = 0.0;
};

LayerGeom layer_geom(const ModelState& state, int l, const AuEvalConfig& cfg) {
  const auto res = state.config.stage_resolutions();
  if (l < 1 || l > static_cast<int>(res.size()))
    throw ParamError("metrics: layer index out of range");
  return {res[l - 1].first, res[l - 1].second,
          cfg.sigma > 0.0
              ? cfg.sigma
              : default_sigma(state.config.input_h, state.config.input_w)};
}

AUMap reference_map(const Sample& s, const ModelState& state,
                    const LayerGeom& geom, const AuEvalConfig& cfg) {
  AUMap full = build_au_map(s.landmarks, s.label, cfg.codebook, cfg.table,
                            geom.sigma, state.config.input_h,
                            state.config.input_w);
  return downsample_map(full, geom.h, geom.w);
}

}  // namespace

double accuracy(ModelState& state, const Dataset& dataset) {
  if (dataset.empty()) throw DataError("accuracy: empty dataset");
  int correct = 0;
  for (const Sample& s : dataset.samples) {
    ForwardResult fw = forward(state, image_to_tensor(s));
    if (argmax_lowest(fw.logits.data()) == s.label) ++correct;
  }
  return static_cast<double>(correct) / dataset.samples.size();
}

double att_cos(ModelState& state, const Dataset& dataset, int l,
               const AuEvalConfig& au_cfg) {
  if (dataset.empty()) throw DataError("att_cos: empty dataset");
  const LayerGeom geom = layer_geom(state, l, au_cfg);
  double total = 0.0;
  int counted = 0;
  for (const Sample& s : dataset.samples) {
    AUMap a = reference_map(s, state, geom, au_cfg);
    if (a.all_zero()) continue;  // no localization reference for this label
    ForwardResult fw = forward(state, image_to_tensor(s));
    Tensor t_l = attention_at_layer(fw.features, l);
    total += map_cosine(t_l.data(), a.values);
    ++counted;
  }
  if (counted == 0) throw DataError("att_cos: every reference map is zero");
  return total / counted;
}

double cam_cos(ModelState& state, const Dataset& dataset, CamMethod method,
               int l, const AuEvalConfig& au_cfg) {
  if (dataset.empty()) throw DataError("cam_cos: empty dataset");
  const LayerGeom geom = layer_geom(state, l, au_cfg);
  double total = 0.0;
  int counted = 0;
  for (const Sample& s : dataset.samples) {
    AUMap a = reference_map(s, state, geom, au_cfg);
    if (a.all_zero()) continue;
    CamMap map = extract_cam(method, state, image_to_tensor(s), s.label, l);
    total += map_cosine(map.values, a.values);
    ++counted;
  }
  if (counted == 0) throw DataError("cam_cos: every reference map is zero");
  return total / counted;
}

MetricsReport evaluate(ModelState& state, const Dataset& dataset,
                       const std::vector<CamMethod>& methods, int l,
                       const AuEvalConfig& au_cfg, bool with_au) {
  MetricsReport report;
  report.cl = accuracy(state, dataset);
  report.att_cos = att_cos(state, dataset, l, au_cfg);
  for (CamMethod m : methods)
    report.cam_cos[cam_method_name(m)] = cam_cos(state, dataset, m, l, au_cfg);
  report.layer = l;
  report.with_au = with_au;
  report.n_samples = static_cast<int>(dataset.samples.size());
  return report;
}

std::vector<GrayImage> per_class_average_maps(ModelState& state,
                                              const Dataset& dataset, int l,
                                              const std::string& kind,
                                              const AuEvalConfig& au_cfg) {
  if (dataset.empty()) throw DataError("per_class_average_maps: empty dataset");
  const LayerGeom geom = layer_geom(state, l, au_cfg);
  const int classes = dataset.classes();
  std::vector<GrayImage> sums(classes);
  std::vector<int> counts(classes, 0);
  for (GrayImage& g : sums) {
    g.h = geom.h;
    g.w = geom.w;
    g.values.assign(static_cast<size_t>(geom.h) * geom.w, 0.0);
  }
  const bool attention = kind == "attention";
  const CamMethod method =
      attention ? CamMethod::CAM : cam_method_from_name(kind);
  for (const Sample& s : dataset.samples) {
    std::vector<double> values;
    if (attention) {
      ForwardResult fw = forward(state, image_to_tensor(s));
      values = attention_at_layer(fw.features, l).data();
      double mx = 0.0;
      for (double v : values) mx = std::max(mx, v);
      if (mx > 0.0)
        for (double& v : values) v /= mx;
    } else {
      values = extract_cam(method, state, image_to_tensor(s), s.label, l).values;
    }
    auto& acc = sums[s.label].values;
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += values[i];
    ++counts[s.label];
  }
  std::vector<std::string> missing;
  for (int c = 0; c < classes; ++c)
    if (counts[c] == 0) missing.push_back(dataset.class_names[c]);
  if (!missing.empty()) {
    std::string names;
    for (const std::string& n : missing) names += (names.empty() ? "" : ", ") + n;
    throw DataError("per_class_average_maps: no samples for classes: " + names);
  }
  for (int c = 0; c < classes; ++c)
    for (double& v : sums[c].values) v /= counts[c];
  return sums;
}

std::vector<GrayImage> per_class_average_au_maps(ModelState& state,
                                                 const Dataset& dataset, int l,
                                                 const AuEvalConfig& au_cfg) {
  if (dataset.empty()) throw DataError("per_class_average_au_maps: empty dataset");
  const LayerGeom geom = layer_geom(state, l, au_cfg);
  const int classes = dataset.classes();
  std::vector<GrayImage> sums(classes);
  std::vector<int> counts(classes, 0);
  for (GrayImage& g : sums) {
    g.h = geom.h;
    g.w = geom.w;
    g.values.assign(static_cast<size_t>(geom.h) * geom.w, 0.0);
  }
  for (const Sample& s : dataset.samples) {
    AUMap a = reference_map(s, state, geom, au_cfg);
    auto& acc = sums[s.label].values;
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += a.values[i];
    ++counts[s.label];
  }
  for (int c = 0; c < classes; ++c)
    if (counts[c] > 0)
      for (double& v : sums[c].values) v /= counts[c];
  return sums;
}

void export_map_grid(const std::vector<GrayImage>& maps, int panel_size,
                     const std::string& path) {
  if (maps.empty()) throw DataError("export_map_grid: no maps");
  const int n = static_cast<int>(maps.size());
  const int gh = panel_size;
  const int gw = panel_size * n;
  std::vector<double> rgb(static_cast<size_t>(gh) * gw * 3, 0.0);
  for (int p = 0; p < n; ++p) {
    const GrayImage& m = maps[p];
    for (int r = 0; r < gh; ++r) {
      const int sr = r * m.h / gh;
      for (int c = 0; c < gw / n; ++c) {
        const int sc = c * m.w / panel_size;
        const double v = std::clamp(m.at(sr, sc), 0.0, 1.0);
        const size_t o =
            (static_cast<size_t>(r) * gw + p * panel_size + c) * 3;
        rgb[o + 0] = v;          // red heat ramp
        rgb[o + 1] = v * 0.25;
        rgb[o + 2] = 1.0 - v;
      }
    }
  }
  save_ppm(gh, gw, rgb, path);
}

void save_report(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "cl = %.6f\n", report.cl);
  out << buf;
  for (const auto& [method, value] : report.cam_cos) {
    std::snprintf(buf, sizeof(buf), "cam_cos[%s] = %.6f\n", method.c_str(),
                  value);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "att_cos = %.6f\n", report.att_cos);
  out << buf;
  out << "layer = " << report.layer << "\n";
  out << "with_au = " << (report.with_au ? "true" : "false") << "\n";
  out << "n_samples = " << report.n_samples << "\n";
}

void save_report_table(const std::vector<MetricsReport>& reports,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "method\twith_au\tcl\tcam_cos\tatt_cos\n";
  char buf[160];
  for (const MetricsReport& r : reports) {
    for (const auto& [method, value] : r.cam_cos) {
      std::snprintf(buf, sizeof(buf), "%s\t%d\t%.4f\t%.4f\t%.4f\n",
                    method.c_str(), r.with_au ? 1 : 0, r.cl, value, r.att_cos);
      out << buf;
    }
  }
}

}  // namespace ferau
