#include "ferau/cam.hpp"

#include <algorithm>
#include <cmath>

#include "ferau/errors.hpp"

namespace ferau {

std::string cam_method_name(CamMethod m) {
  switch (m) {
    case CamMethod::CAM: return "cam";
    case CamMethod::GradCAM: return "gradcam";
    case CamMethod::GradCAMpp: return "gradcam++";
    case CamMethod::LayerCAM: return "layercam";
  }
  return "?";
}

CamMethod cam_method_from_name(const std::string& name) {
  if (name == "cam") return CamMethod::CAM;
  if (name == "gradcam") return CamMethod::GradCAM;
  if (name == "gradcam++" || name == "gradcampp") return CamMethod::GradCAMpp;
  if (name == "layercam") return CamMethod::LayerCAM;
  throw ParamError("unknown CAM method: " + name);
}

namespace {

void relu_normalize(std::vector<double>& v) {
  double mx = 0.0;
  for (double& x : v) {
    x = std::max(0.0, x);
    mx = std::max(mx, x);
  }
  if (mx > 0.0)
    for (double& x : v) x /= mx;
}

struct LayerGradients {
  std::vector<double> features;  // values of F_l, [n,h,w]
  std::vector<double> grads;     // d logit_y / d F_l
  double score = 0.0;            // logit_y
  int n = 0, h = 0, w = 0;
};

// Runs a fresh forward pass, backpropagates logit_y, and captures the
// features and gradients at stage l. Parameter gradients touched by the
// sweep are zeroed before returning so extraction stays side-effect free.
LayerGradients layer_gradients(ModelState& state, const Tensor& image, int y,
                               int l) {
  if (l < 1 || l > static_cast<int>(state.config.stages.size()))
    throw ParamError("cam: layer index out of range");
  if (y < 0 || y >= state.config.classes)
    throw ParamError("cam: class index out of range");
  ForwardResult fw = forward(state, image);
  Tensor score = index_scalar(fw.logits, y);
  score.backward();
  const Tensor& feat = fw.features[l - 1];
  LayerGradients out;
  out.features = feat.data();
  out.grads = feat.grad();
  out.score = score.value();
  out.n = feat.shape()[0];
  out.h = feat.shape()[1];
  out.w = feat.shape()[2];
  state.zero_all_grads();
  return out;
}

CamMap finish(std::vector<double> values, int h, int w, CamMethod method,
              int y, int l) {
  relu_normalize(values);
  CamMap map;
  map.h = h;
  map.w = w;
  map.values = std::move(values);
  map.method = method;
  map.class_index = y;
  map.layer = l;
  return map;
}

}  // namespace

CamMap cam(const Tensor& features, const Tensor& head_weights, int y) {
  if (features.shape().size() != 3)
    throw DimensionError("cam: features must be [n,h,w]");
  const int n = features.shape()[0];
  const int h = features.shape()[1];
  const int w = features.shape()[2];
  if (head_weights.shape().size() != 2 || head_weights.shape()[1] != n)
    throw DimensionError("cam: head weight columns must match feature channels");
  if (y < 0 || y >= head_weights.shape()[0])
    throw ParamError("cam: class index out of range");
  std::vector<double> out(static_cast<size_t>(h) * w, 0.0);
  const double* f = features.data().data();
  const double* wrow =
      head_weights.data().data() + static_cast<size_t>(y) * n;
  for (int k = 0; k < n; ++k) {
    const double* fk = f + static_cast<size_t>(k) * h * w;
    for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i)
      out[i] += wrow[k] * fk[i];
  }
  return finish(std::move(out), h, w, CamMethod::CAM, y, 0);
}

CamMap gradcam(ModelState& state, const Tensor& image, int y, int l) {
  LayerGradients lg = layer_gradients(state, image, y, l);
  const size_t hw = static_cast<size_t>(lg.h) * lg.w;
  std::vector<double> out(hw, 0.0);
  for (int k = 0; k < lg.n; ++k) {
    double alpha = 0.0;
    const double* gk = lg.grads.data() + k * hw;
    for (size_t i = 0; i < hw; ++i) alpha += gk[i];
    alpha /= static_cast<double>(hw);
    const double* fk = lg.features.data() + k * hw;
    for (size_t i = 0; i < hw; ++i) out[i] += alpha * fk[i];
  }
  return finish(std::move(out), lg.h, lg.w, CamMethod::GradCAM, y, l);
}

CamMap gradcam_pp(ModelState& state, const Tensor& image, int y, int l) {
  constexpr double kEps = 1e-12;
  LayerGradients lg = layer_gradients(state, image, y, l);
  const size_t hw = static_cast<size_t>(lg.h) * lg.w;
  // The closed form mixes gradient powers of different degree, so it is not
  // homogeneous in the gradient scale. Dividing by the max magnitude first
  // makes the normalized output invariant to positive rescaling of the
  // class score and keeps the g^3 term well-conditioned.
  double gmax = 0.0;
  for (double g : lg.grads) gmax = std::max(gmax, std::abs(g));
  if (gmax > 0.0)
    for (double& g : lg.grads) g /= gmax;
  std::vector<double> out(hw, 0.0);
  for (int k = 0; k < lg.n; ++k) {
    const double* gk = lg.grads.data() + k * hw;
    const double* fk = lg.features.data() + k * hw;
    double fsum = 0.0;
    for (size_t i = 0; i < hw; ++i) fsum += fk[i];
    double weight = 0.0;
    for (size_t i = 0; i < hw; ++i) {
      const double g = gk[i];
      const double g2 = g * g;
      const double denom = 2.0 * g2 + fsum * g2 * g;
      const double alpha = denom != 0.0 ? g2 / (denom + kEps) : 0.0;
      weight += alpha * std::max(0.0, g);
    }
    for (size_t i = 0; i < hw; ++i) out[i] += weight * fk[i];
  }
  return finish(std::move(out), lg.h, lg.w, CamMethod::GradCAMpp, y, l);
}

CamMap layercam(ModelState& state, const Tensor& image, int y, int l) {
  LayerGradients lg = layer_gradients(state, image, y, l);
  const size_t hw = static_cast<size_t>(lg.h) * lg.w;
  std::vector<double> out(hw, 0.0);
  for (int k = 0; k < lg.n; ++k) {
    const double* gk = lg.grads.data() + k * hw;
    const double* fk = lg.features.data() + k * hw;
    for (size_t i = 0; i < hw; ++i) out[i] += std::max(0.0, gk[i]) * fk[i];
  }
  return finish(std::move(out), lg.h, lg.w, CamMethod::LayerCAM, y, l);
}

CamMap extract_cam(CamMethod method, ModelState& state, const Tensor& image,
                   int y, int l) {
  switch (method) {
    case CamMethod::CAM: {
      if (state.config.head != HeadKind::GapLinear)
        throw ParamError("cam requires a gap-linear head");
      if (l < 1 || l > static_cast<int>(state.config.stages.size()))
        throw ParamError("cam: layer index out of range");
      ForwardResult fw = forward(state, image);
      CamMap map = cam(fw.features[l - 1].detach(),
                       state.parameters.at("head.weight"), y);
      map.layer = l;
      return map;
    }
    case CamMethod::GradCAM: return gradcam(state, image, y, l);
    case CamMethod::GradCAMpp: return gradcam_pp(state, image, y, l);
    case CamMethod::LayerCAM: return layercam(state, image, y, l);
  }
  throw ParamError("unknown CAM method enum value");
}

}  // namespace ferau
