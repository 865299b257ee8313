#ifndef FERAU_DATA_SYNTH_HPP_
#define FERAU_DATA_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ferau/au_geometry.hpp"
#include "ferau/image_io.hpp"
#include "ferau/tensor.hpp"

namespace ferau {

struct SynthConfig {
  int samples_per_class = 72;
  int image_h = 64;
  int image_w = 64;
  double jitter = 0.01;     // landmark perturbation scale
  double noise = 0.02;      // pixel noise std
  double flip_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  static const std::vector<std::string>& class_names();  // Fig-1 order
};

struct Sample {
  GrayImage image;
  LandmarkSet landmarks;
  int label = 0;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  bool empty() const { return samples.empty(); }
  int classes() const { return static_cast<int>(class_names.size()); }
};

struct SplitDatasets {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Canonical 68-landmark face template in normalized coordinates.
LandmarkSet face_template();

/// Template deformed for one expression class (no jitter).
LandmarkSet deformed_landmarks(int label);

/// Normalized deformation sites of a class; each lies on a class-AU anchor.
std::vector<Point> class_deformation_centers(int label,
                                             const LandmarkSet& landmarks);

/// Horizontal mirror: exact involution (column reversal plus the left/right
/// landmark index permutation of the 68-point convention).
Sample flip_sample(const Sample& sample);

/// Renders a sample deterministically from (seed, class, index).
Sample render_sample(const SynthConfig& cfg, int label, int index_in_class,
                     int global_index);

/// Stratified 70/10/20 split, deterministic per seed.
SplitDatasets generate(const SynthConfig& cfg);

/// Directory layout: images/NNNNN.pgm, landmarks/NNNNN.txt, labels.tsv,
/// classes.txt, split.tsv.
void save_dataset(const SplitDatasets& data, const std::string& path);
SplitDatasets load_dataset(const std::string& path);

/// [1,h,w] tensor view of a sample image.
Tensor image_to_tensor(const Sample& sample);

}  // namespace ferau

#endif  // FERAU_DATA_SYNTH_HPP_
