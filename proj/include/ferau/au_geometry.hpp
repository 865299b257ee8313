#ifndef FERAU_AU_GEOMETRY_HPP_
#define FERAU_AU_GEOMETRY_HPP_

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ferau/image_io.hpp"

namespace ferau {

inline constexpr int kNumLandmarks = 68;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// 68 facial keypoints in normalized [0,1]x[0,1] coordinates, 0-indexed.
/// Groups follow the usual convention: jaw 0-16, brows 17-26, nose 27-35,
/// eyes 36-47, mouth 48-67.
struct LandmarkSet {
  std::array<Point, kNumLandmarks> points;

  void validate() const;  // throws DataError when out of range
};

/// One anchor: a convex combination of landmark indices giving one point.
struct AnchorSpec {
  std::string side;  // "left", "right" or "center"
  std::vector<std::pair<int, double>> combo;  // (landmark index, weight)
};

/// AU identifier -> anchor specs (bilateral AUs carry two).
struct AUAnchorTable {
  std::map<std::string, std::vector<AnchorSpec>> anchors;

  void validate() const;
  bool has(const std::string& au) const { return anchors.count(au) > 0; }
};

/// Expression label -> ordered AU list. Neutral may map to an empty list.
struct AUCodebook {
  std::vector<std::string> class_names;  // evaluation/display order
  std::map<std::string, std::vector<std::string>> entries;  // lowercase keys

  bool has(const std::string& expression) const;
  const std::vector<std::string>& aus_for(const std::string& expression) const;
  /// Rejects codebook AUs without an anchor entry.
  void validate_against(const AUAnchorTable& table) const;
};

/// Nonnegative h x w spatial map, max value 1 when any AU is rendered.
struct AUMap {
  int h = 0;
  int w = 0;
  std::vector<double> values;

  double& at(int r, int c) { return values[static_cast<size_t>(r) * w + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * w + c]; }
  bool all_zero() const;
  GrayImage to_image() const { return GrayImage{h, w, values}; }
  static AUMap from_image(const GrayImage& img) { return AUMap{img.h, img.w, img.values}; }
};

/// Anchor points of one AU on a landmark set, clamped to the unit square.
std::vector<Point> au_positions(const LandmarkSet& landmarks,
                                const std::string& au,
                                const AUAnchorTable& table);

/// Max-composed isotropic Gaussians at the given normalized positions,
/// evaluated at pixel centers, renormalized so the global max is 1.
AUMap render_au_map(const std::vector<Point>& positions, double sigma, int h,
                    int w);

/// Discriminative AU map for one (landmarks, label) pair.
AUMap build_au_map(const LandmarkSet& landmarks, int label,
                   const AUCodebook& codebook, const AUAnchorTable& table,
                   double sigma, int h, int w);

/// Block- or area-weighted average pooling down to (h2, w2), then
/// renormalized to max 1 when the input was nonzero.
AUMap downsample_map(const AUMap& map, int h2, int w2);

// --- Defaults and file formats -----------------------------------------------

/// Default expression -> AU codebook for the six basic expressions
/// (standard FACS associations; replaceable via the codebook file).
AUCodebook default_codebook();

/// Default landmark-anchored AU position table (68-point, 0-indexed).
AUAnchorTable default_anchor_table();

/// Default rendering sigma in pixels for an h x w map.
double default_sigma(int h, int w);

// Plain-text formats. `#` starts a comment in both files.
//   codebook:  "anger: AU4,AU5,AU7,AU23"
//   anchors:   "AU4: side=left; combo=(19:0.5, 20:0.5)"
AUCodebook load_codebook(const std::string& path);
void save_codebook(const AUCodebook& codebook, const std::string& path);
AUAnchorTable load_anchor_table(const std::string& path);
void save_anchor_table(const AUAnchorTable& table, const std::string& path);

/// 68 lines of "x y" floats in [0,1].
LandmarkSet load_landmarks(const std::string& path);
void save_landmarks(const LandmarkSet& landmarks, const std::string& path);

}  // namespace ferau

#endif  // FERAU_AU_GEOMETRY_HPP_
