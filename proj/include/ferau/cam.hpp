#ifndef FERAU_CAM_HPP_
#define FERAU_CAM_HPP_

#include <string>
#include <vector>

#include "ferau/image_io.hpp"
#include "ferau/model.hpp"

namespace ferau {

enum class CamMethod { CAM, GradCAM, GradCAMpp, LayerCAM };

std::string cam_method_name(CamMethod m);
CamMethod cam_method_from_name(const std::string& name);

/// Nonnegative class-activation map, max-normalized to 1 (all-zero allowed).
struct CamMap {
  int h = 0;
  int w = 0;
  std::vector<double> values;
  CamMethod method = CamMethod::CAM;
  int class_index = 0;
  int layer = 0;

  GrayImage to_image() const { return GrayImage{h, w, values}; }
};

/// Vanilla CAM: sum of head-weight-scaled channels, ReLU, max-normalize.
/// Requires a gap-linear head.
CamMap cam(const Tensor& features, const Tensor& head_weights, int y);

/// GradCAM: channel weights are the spatial mean of d logit_y / d F_k.
CamMap gradcam(ModelState& state, const Tensor& image, int y, int l);

/// GradCAM++: pixel-wise weights from the closed form over gradient powers
/// of the exponentiated score.
CamMap gradcam_pp(ModelState& state, const Tensor& image, int y, int l);

/// LayerCAM: ReLU(sum_k ReLU(grad_k) * F_k), max-normalized.
CamMap layercam(ModelState& state, const Tensor& image, int y, int l);

/// Dispatch helper over the four extractors.
CamMap extract_cam(CamMethod method, ModelState& state, const Tensor& image,
                   int y, int l);

}  // namespace ferau

#endif  // FERAU_CAM_HPP_
