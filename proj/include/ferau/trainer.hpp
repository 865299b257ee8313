#ifndef FERAU_TRAINER_HPP_
#define FERAU_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ferau/au_geometry.hpp"
#include "ferau/data_synth.hpp"
#include "ferau/model.hpp"

namespace ferau {

struct TrainConfig {
  double lambda = 1.0;   // weight of the attention alignment penalty
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 1;
  int batch_size = 16;
  int attention_layer = 5;
  double sigma = 0.0;    // AU render sigma in pixels; 0 = default for the size
  std::uint64_t seed = 0;
  bool shuffle = true;
  // When false, the loop never touches AU maps or the cosine term at all;
  // observationally identical to lambda = 0 up to the logged columns.
  bool alignment_enabled = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double mean_ce = 0.0;
  double mean_align = 0.0;   // mean (1 - R) over aligned train samples
  double mean_r_train = 0.0;
  double mean_r_val = 0.0;
  double acc_val = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

/// One training sample prepared for an update step.
struct TrainSample {
  Tensor image;
  int label = 0;
  AUMap au_map;  // at attention-layer resolution; may be all-zero
};

/// Eq-style joint objective: cross-entropy plus lambda * (1 - cosine).
/// An all-zero target map contributes exactly zero alignment.
Tensor joint_loss(const Tensor& logits, int y, const Tensor& t_l,
                  const AUMap& a, double lambda);

/// Per-batch byproducts of a train_step, for logging.
struct StepStats {
  double ce_sum = 0.0;
  double r_sum = 0.0;
  int n = 0;
  int n_aligned = 0;
};

/// One SGD-with-momentum update on the mean batch loss. Gradients are
/// zeroed afterwards. Returns the batch loss.
class Optimizer;
double train_step(ModelState& state, const std::vector<TrainSample>& batch,
                  const TrainConfig& cfg, Optimizer& opt,
                  StepStats* stats = nullptr);

/// Momentum buffers keyed to the parameter set of one model.
class Optimizer {
 public:
  explicit Optimizer(ModelState& state);
  void step(ModelState& state, double lr, double momentum);

 private:
  std::vector<std::vector<double>> velocity_;
};

/// Full training loop. AU maps are built on the fly from the training
/// split's landmarks and labels; the held-out split is read only to
/// measure accuracy and attention cosine.
TrainLog fit(ModelState& state, const Dataset& train_set,
             const Dataset& val_set, const TrainConfig& cfg,
             const AUCodebook& codebook, const AUAnchorTable& table,
             const std::function<void(int, const ModelState&)>&
                 epoch_callback = nullptr);

/// Line-delimited records: epoch ce align r_train r_val acc_val seconds.
void save_train_log(const TrainLog& log, const std::string& path);

}  // namespace ferau

#endif  // FERAU_TRAINER_HPP_
