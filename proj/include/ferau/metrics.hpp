#ifndef FERAU_METRICS_HPP_
#define FERAU_METRICS_HPP_

#include <map>
#include <string>
#include <vector>

#include "ferau/cam.hpp"
#include "ferau/data_synth.hpp"
#include "ferau/trainer.hpp"

namespace ferau {

/// Geometry and tables needed to build the reference AU map of a sample.
struct AuEvalConfig {
  AUCodebook codebook;
  AUAnchorTable table;
  double sigma = 0.0;  // pixels; 0 = default for the image size

  static AuEvalConfig defaults();
};

struct MetricsReport {
  double cl = 0.0;                           // accuracy
  std::map<std::string, double> cam_cos;     // per CAM method
  double att_cos = 0.0;
  int layer = 0;
  bool with_au = false;
  int n_samples = 0;
};

/// Fraction of argmax(logits) == label (ties to the lowest class index).
double accuracy(ModelState& state, const Dataset& dataset);

/// Mean cosine between attention at layer l and the reference AU map,
/// zero-reference samples excluded.
double att_cos(ModelState& state, const Dataset& dataset, int l,
               const AuEvalConfig& au_cfg);

/// Mean cosine between the extractor's map for the ground-truth class and
/// the reference AU map. An all-zero candidate map scores 0.
double cam_cos(ModelState& state, const Dataset& dataset, CamMethod method,
               int l, const AuEvalConfig& au_cfg);

MetricsReport evaluate(ModelState& state, const Dataset& dataset,
                       const std::vector<CamMethod>& methods, int l,
                       const AuEvalConfig& au_cfg, bool with_au);

/// Per-class arithmetic mean of per-sample maps at layer l.
/// kind: "attention" or a CAM method name.
std::vector<GrayImage> per_class_average_maps(ModelState& state,
                                              const Dataset& dataset, int l,
                                              const std::string& kind,
                                              const AuEvalConfig& au_cfg);

/// Per-class average of the reference AU maps at layer-l resolution.
std::vector<GrayImage> per_class_average_au_maps(ModelState& state,
                                                 const Dataset& dataset, int l,
                                                 const AuEvalConfig& au_cfg);

/// One-row grid of per-class panels, upscaled nearest-neighbor, as P6.
void export_map_grid(const std::vector<GrayImage>& maps, int panel_size,
                     const std::string& path);

/// "key = value" report plus a delimited table row layout.
void save_report(const MetricsReport& report, const std::string& path);
void save_report_table(const std::vector<MetricsReport>& reports,
                       const std::string& path);

/// Plain cosine between two maps (zero maps score 0).
double map_cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ferau

#endif  // FERAU_METRICS_HPP_
