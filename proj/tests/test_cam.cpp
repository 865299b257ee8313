#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include <cmath>

#include "ferau/cam.hpp"
#include "ferau/errors.hpp"
#include "ferau/metrics.hpp"
#include "ferau/rng.hpp"

using namespace ferau;

namespace {

ModelConfig tiny_config(std::uint64_t seed, HeadKind head = HeadKind::GapLinear) {
  ModelConfig cfg;
  cfg.input_h = 16;
  cfg.input_w = 16;
  cfg.stages = {{4, 1, false}, {6, 1, true}};
  cfg.head = head;
  cfg.classes = 3;
  cfg.attention_layer = 2;
  cfg.seed = seed;
  return cfg;
}

Tensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(static_cast<size_t>(h) * w);
  for (double& v : data) v = rng.uniform();
  return Tensor::from_data({1, h, w}, std::move(data));
}

void check_cam_invariants(const CamMap& map) {
  double mx = 0.0;
  for (double v : map.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-15);
    mx = std::max(mx, v);
  }
  if (mx > 0.0) CHECK(mx == doctest::Approx(1.0).epsilon(1e-12));
}

}  // namespace

TEST_CASE("vanilla cam on hand-set features") {
  SUBCASE("one channel with weight +1 is the normalized ReLU of the channel") {
    Tensor f = Tensor::from_data({1, 2, 2}, {2.0, -1.0, 0.5, 1.0});
    Tensor w = Tensor::from_data({2, 1}, {1.0, 0.0});
    CamMap map = cam(f, w, 0);
    CHECK(map.values == std::vector<double>{1.0, 0.0, 0.25, 0.5});
  }
  SUBCASE("zero weights give an all-zero map") {
    Tensor f = Tensor::from_data({1, 2, 2}, {2.0, 1.0, 0.5, 1.0});
    Tensor w = Tensor::zeros({2, 1});
    CamMap map = cam(f, w, 1);
    for (double v : map.values) CHECK(v == 0.0);
  }
  SUBCASE("two channels with weights (1, -1)") {
    // combination: [3-1, 1-2, 0-0, 2-4] = [2, -1, 0, -2]
    // ReLU then divide by max 2 -> [1, 0, 0, 0]
    Tensor f = Tensor::from_data({2, 2, 2}, {3, 1, 0, 2, 1, 2, 0, 4});
    Tensor w = Tensor::from_data({1, 2}, {1.0, -1.0});
    CamMap map = cam(f, w, 0);
    CHECK(map.values == std::vector<double>{1.0, 0.0, 0.0, 0.0});
  }
}

TEST_CASE("extractor invariants on random models") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    ModelState state = init_model(tiny_config(rng.next_u64()));
    Tensor image = random_image(16, 16, rng.next_u64());
    const int y = static_cast<int>(rng.below(3));
    for (CamMethod m : {CamMethod::CAM, CamMethod::GradCAM,
                        CamMethod::GradCAMpp, CamMethod::LayerCAM}) {
      CamMap map = extract_cam(m, state, image, y, 2);
      CHECK(map.h == 8);
      CHECK(map.w == 8);
      CHECK(map.method == m);
      CHECK(map.class_index == y);
      check_cam_invariants(map);
    }
  }
}

TEST_CASE("gradcam equals cam on gap-linear heads") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelState state = init_model(tiny_config(seed));
    Tensor image = random_image(16, 16, seed + 1000);
    for (int y = 0; y < 3; ++y) {
      CamMap via_grad = gradcam(state, image, y, 2);
      ForwardResult fw = forward(state, image);
      CamMap direct = cam(fw.features[1], state.parameters.at("head.weight"), y);
      // the zero-map cosine convention scores 0, so a pair of identical
      // all-zero maps (a fully negative weighted combination) counts as equal
      const bool both_zero =
          std::all_of(via_grad.values.begin(), via_grad.values.end(),
                      [](double v) { return v == 0.0; }) &&
          std::all_of(direct.values.begin(), direct.values.end(),
                      [](double v) { return v == 0.0; });
      const double cosine =
          both_zero ? 1.0 : map_cosine(via_grad.values, direct.values);
      CHECK(std::abs(cosine - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("cam requires a gap-linear head") {
  ModelState state = init_model(tiny_config(3, HeadKind::FlattenLinear));
  Tensor image = random_image(16, 16, 3);
  CHECK_THROWS_AS(extract_cam(CamMethod::CAM, state, image, 0, 2), ParamError);
  // gradient-based extractors still work on the flatten head
  check_cam_invariants(gradcam(state, image, 0, 2));
}

TEST_CASE("zero cases") {
  ModelState state = init_model(tiny_config(5));
  SUBCASE("zero image with zero biases yields zero maps") {
    Tensor zero = Tensor::zeros({1, 16, 16});
    for (CamMethod m : {CamMethod::GradCAM, CamMethod::GradCAMpp,
                        CamMethod::LayerCAM}) {
      CamMap map = extract_cam(m, state, zero, 0, 2);
      // features are all zero, so every weighted combination is zero
      for (double v : map.values) CHECK(v == 0.0);
    }
  }
  SUBCASE("severed gradient path gives a zero gradcam map") {
    // layer 1 feeds the head only through layer 2; zeroing every stage-2
    // kernel removes the path, so d logit / d F_1 vanishes
    ModelState cut = init_model(tiny_config(5));
    for (double& v : cut.parameters.at("stage2.conv1.weight").mutable_data())
      v = 0.0;
    CamMap map = gradcam(cut, random_image(16, 16, 5), 0, 1);
    for (double v : map.values) CHECK(v == 0.0);
  }
}

TEST_CASE("gradcam++ collapses to gradcam at 1x1 spatial size") {
  // With one spatial location and nonnegative gradients both methods reduce
  // to "some nonnegative multiple of the same channel combination", so the
  // single max-normalized pixel agrees exactly. (Mixed-sign gradients are
  // excluded: gradcam++ drops negative-gradient channels, gradcam keeps
  // them, and the two may then differ legitimately.)
  ModelConfig cfg;
  cfg.input_h = 4;
  cfg.input_w = 4;
  cfg.stages = {{4, 1, false}, {4, 1, true}, {4, 1, true}};
  cfg.classes = 3;
  cfg.attention_layer = 3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    ModelState state = init_model(cfg);
    auto& head = state.parameters.at("head.weight").mutable_data();
    for (int k = 0; k < 4; ++k) head[k] = std::abs(head[k]);
    Tensor image = random_image(4, 4, seed + 7);
    CamMap pp = gradcam_pp(state, image, 0, 3);
    CamMap gc = gradcam(state, image, 0, 3);
    REQUIRE(pp.values.size() == 1);
    CHECK(std::abs(pp.values[0] - gc.values[0]) < 1e-9);
  }
}

TEST_CASE("layercam matches gradcam under spatially-constant gradients") {
  // On a GAP head the gradient w.r.t. F_k is constant over space
  // (head_weight[y,k] / (h*w)), so LayerCAM's pixel-wise weighting equals
  // GradCAM's channel weighting up to the shared normalization whenever all
  // those constants are nonnegative.
  Rng rng(13);
  int verified = 0;
  for (std::uint64_t seed = 0; verified < 3 && seed < 50; ++seed) {
    ModelState state = init_model(tiny_config(seed));
    // force nonnegative head weights for the chosen class
    auto& w = state.parameters.at("head.weight").mutable_data();
    const int d = state.parameters.at("head.weight").shape()[1];
    for (int k = 0; k < d; ++k) w[k] = std::abs(w[k]);
    Tensor image = random_image(16, 16, seed);
    CamMap lc = layercam(state, image, 0, 2);
    CamMap gc = gradcam(state, image, 0, 2);
    REQUIRE(lc.values.size() == gc.values.size());
    for (size_t i = 0; i < lc.values.size(); ++i)
      CHECK(std::abs(lc.values[i] - gc.values[i]) < 1e-9);
    ++verified;
  }
  CHECK(verified == 3);
}

TEST_CASE("positive scaling of the class head weights leaves maps unchanged") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ModelState state = init_model(tiny_config(seed));
    Tensor image = random_image(16, 16, seed + 40);
    std::map<CamMethod, std::vector<double>> before;
    for (CamMethod m : {CamMethod::CAM, CamMethod::GradCAM,
                        CamMethod::GradCAMpp, CamMethod::LayerCAM})
      before[m] = extract_cam(m, state, image, 1, 2).values;

    auto& w = state.parameters.at("head.weight").mutable_data();
    const int d = state.parameters.at("head.weight").shape()[1];
    for (int k = 0; k < d; ++k) w[1 * d + k] *= 3.5;

    for (const auto& [m, old] : before) {
      CamMap map = extract_cam(m, state, image, 1, 2);
      REQUIRE(map.values.size() == old.size());
      for (size_t i = 0; i < old.size(); ++i)
        CHECK(std::abs(map.values[i] - old[i]) < 1e-9);
    }
  }
}

TEST_CASE("extraction is side-effect-free") {
  ModelState state = init_model(tiny_config(8));
  Tensor image = random_image(16, 16, 8);
  ForwardResult fw = forward(state, image);
  std::map<std::string, std::vector<double>> params_before;
  for (const auto& [name, t] : state.parameters) params_before[name] = t.data();
  std::vector<std::vector<double>> features_before;
  for (const Tensor& f : fw.features) features_before.push_back(f.data());

  for (CamMethod m : {CamMethod::CAM, CamMethod::GradCAM, CamMethod::GradCAMpp,
                      CamMethod::LayerCAM})
    extract_cam(m, state, image, 2, 2);

  for (const auto& [name, t] : state.parameters) {
    CHECK(t.data() == params_before.at(name));
    if (t.has_grad())
      for (double g : t.grad()) CHECK(g == 0.0);
  }
  for (size_t i = 0; i < fw.features.size(); ++i)
    CHECK(fw.features[i].data() == features_before[i]);
}

TEST_CASE("method name mapping") {
  CHECK(cam_method_name(CamMethod::CAM) == "cam");
  CHECK(cam_method_name(CamMethod::GradCAM) == "gradcam");
  CHECK(cam_method_name(CamMethod::GradCAMpp) == "gradcam++");
  CHECK(cam_method_name(CamMethod::LayerCAM) == "layercam");
  for (const std::string& name : {"cam", "gradcam", "gradcam++", "layercam"})
    CHECK(cam_method_name(cam_method_from_name(name)) == name);
  CHECK_THROWS_AS(cam_method_from_name("scorecam"), ParamError);
}
