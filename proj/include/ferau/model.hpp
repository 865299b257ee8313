#ifndef FERAU_MODEL_HPP_
#define FERAU_MODEL_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ferau/tensor.hpp"

namespace ferau {

struct StageConfig {
  int out_channels = 0;
  int conv_count = 1;
  bool pool = false;  // 2x2 stride-2 max pool at the start of the stage
};

enum class HeadKind { GapLinear, FlattenLinear };

struct ModelConfig {
  int input_h = 64;
  int input_w = 64;
  int input_channels = 1;
  std::vector<StageConfig> stages;
  HeadKind head = HeadKind::GapLinear;
  int classes = 6;
  int attention_layer = 5;  // 1-based stage index
  std::uint64_t seed = 0;

  void validate() const;
  /// Spatial resolution (h, w) of each stage's output.
  std::vector<std::pair<int, int>> stage_resolutions() const;
  /// 5 stages, channels 8,16,32,64,64; 64x64 input runs 64-32-16-8-4.
  static ModelConfig default_config(int classes = 6, std::uint64_t seed = 0);
};

/// Result of one forward pass: logits plus the post-activation feature
/// stack of every stage (still attached to the autodiff graph).
struct ForwardResult {
  Tensor logits;
  std::vector<Tensor> features;
};

struct ModelState {
  ModelConfig config;
  // Stable names: stageS.convC.{weight,bias}, head.{weight,bias}
  std::map<std::string, Tensor> parameters;
  ForwardResult last_forward;

  std::vector<Tensor*> parameter_list();
  void zero_all_grads();
};

/// Fan-in scaled uniform init, biases zero, deterministic per seed.
ModelState init_model(const ModelConfig& cfg);

ForwardResult forward(ModelState& state, const Tensor& image);

/// Channel mean of stage l's features (1-based l).
Tensor attention_at_layer(const std::vector<Tensor>& features, int l);

/// Self-describing checkpoint: config echo + named 64-bit LE parameter blobs.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace ferau

#endif  // FERAU_MODEL_HPP_
