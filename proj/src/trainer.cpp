#include "ferau/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ferau/errors.hpp"
#include "ferau/rng.hpp"

namespace ferau {

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("train config: lambda must be >= 0");
  if (lr <= 0.0) throw ConfigError("train config: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("train config: momentum must be in [0,1)");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (sigma < 0.0) throw ConfigError("train config: sigma must be >= 0");
}

Tensor joint_loss(const Tensor& logits, int y, const Tensor& t_l,
                  const AUMap& a, double lambda) {
  Tensor ce = softmax_cross_entropy(logits, y);
  if (lambda == 0.0 || a.all_zero()) return ce;
  if (t_l.shape() != std::vector<int>{a.h, a.w})
    throw DimensionError("joint_loss: attention and AU map resolutions differ");
  Tensor target = Tensor::from_data({a.h, a.w}, a.values, false);
  Tensor r = cosine_sim_map(t_l, target);
  // lambda * (1 - R)
  return add(ce, affine(r, -lambda, lambda));
}

Optimizer::Optimizer(ModelState& state) {
  for (Tensor* p : state.parameter_list())
    velocity_.emplace_back(p->size(), 0.0);
}

void Optimizer::step(ModelState& state, double lr, double momentum) {
  auto params = state.parameter_list();
  if (params.size() != velocity_.size())
    throw ContractError("optimizer bound to a different parameter set");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& g = params[i]->grad();
    auto& v = velocity_[i];
    auto& data = params[i]->mutable_data();
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      data[j] -= lr * v[j];
    }
  }
}

double train_step(ModelState& state, const std::vector<TrainSample>& batch,
                  const TrainConfig& cfg, Optimizer& opt, StepStats* stats) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const int b = static_cast<int>(batch.size());
  const bool align = cfg.alignment_enabled && cfg.lambda > 0.0;
  int aligned = 0;
  if (align)
    for (const TrainSample& s : batch)
      if (!s.au_map.all_zero()) ++aligned;
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const TrainSample& s = batch[i];
    ForwardResult fw = forward(state, s.image);
    Tensor ce = softmax_cross_entropy(fw.logits, s.label);
    Tensor contribution = affine(ce, 1.0 / b, 0.0);
    if (stats) {
      stats->ce_sum += ce.value();
      ++stats->n;
    }
    if (align && !s.au_map.all_zero()) {
      Tensor t_l = attention_at_layer(fw.features, cfg.attention_layer);
      if (t_l.shape() != std::vector<int>{s.au_map.h, s.au_map.w})
        throw DimensionError(
            "train_step: AU map resolution does not match attention layer");
      Tensor target =
          Tensor::from_data({s.au_map.h, s.au_map.w}, s.au_map.values, false);
      Tensor r = cosine_sim_map(t_l, target);
      if (stats) {
        stats->r_sum += r.value();
        ++stats->n_aligned;
      }
      contribution = add(
          contribution, affine(r, -cfg.lambda / aligned, cfg.lambda / aligned));
    }
    const double v = contribution.value();
    if (!std::isfinite(v))
      throw NumericError("non-finite loss at batch sample index " +
                         std::to_string(i));
    total += v;
    contribution.backward();
  }
  opt.step(state, cfg.lr, cfg.momentum);
  state.zero_all_grads();
  return total;
}

namespace {

struct LayerGeometry {
  int h = 0;
  int w = 0;
  double sigma = 0.0;
};

LayerGeometry layer_geometry(const ModelState& state, const TrainConfig& cfg) {
  const auto res = state.config.stage_resolutions();
  if (cfg.attention_layer < 1 ||
      cfg.attention_layer > static_cast<int>(res.size()))
    throw ConfigError("train config: attention_layer out of range");
  LayerGeometry g;
  g.h = res[cfg.attention_layer - 1].first;
  g.w = res[cfg.attention_layer - 1].second;
  g.sigma = cfg.sigma > 0.0
                ? cfg.sigma
                : default_sigma(state.config.input_h, state.config.input_w);
  return g;
}

AUMap sample_au_map(const Sample& s, const ModelState& state,
                    const LayerGeometry& geom, const AUCodebook& codebook,
                    const AUAnchorTable& table) {
  AUMap full = build_au_map(s.landmarks, s.label, codebook, table, geom.sigma,
                            state.config.input_h, state.config.input_w);
  return downsample_map(full, geom.h, geom.w);
}

void check_dataset(const Dataset& set, const ModelConfig& cfg,
                   const char* name) {
  if (set.empty())
    throw ConfigError(std::string("fit: ") + name + " set is empty");
  if (set.classes() != cfg.classes)
    throw ConfigError(std::string("fit: ") + name + " class count " +
                      std::to_string(set.classes()) +
                      " does not match model classes " +
                      std::to_string(cfg.classes));
  for (const Sample& s : set.samples) {
    if (s.image.h != cfg.input_h || s.image.w != cfg.input_w)
      throw ConfigError(std::string("fit: ") + name +
                        " image size does not match model input");
    if (s.label < 0 || s.label >= cfg.classes)
      throw ConfigError(std::string("fit: ") + name + " label out of range");
  }
}

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

TrainLog fit(ModelState& state, const Dataset& train_set,
             const Dataset& val_set, const TrainConfig& cfg,
             const AUCodebook& codebook, const AUAnchorTable& table,
             const std::function<void(int, const ModelState&)>&
                 epoch_callback) {
  cfg.validate();
  check_dataset(train_set, state.config, "train");
  check_dataset(val_set, state.config, "val");
  // lambda = 0 must behave exactly like the alignment-free path, including
  // never paying for AU map construction.
  const bool align_active = cfg.alignment_enabled && cfg.lambda > 0.0;
  if (align_active) codebook.validate_against(table);
  const LayerGeometry geom = layer_geometry(state, cfg);

  Optimizer opt(state);
  Rng shuffle_rng(cfg.seed);
  std::vector<int> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) {
      for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(shuffle_rng.below(i + 1));
        std::swap(order[i], order[j]);
      }
    }
    StepStats stats;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<TrainSample> batch;
      batch.reserve(end - start);
      for (size_t k = start; k < end; ++k) {
        const Sample& s = train_set.samples[order[k]];
        TrainSample ts;
        ts.image = image_to_tensor(s);
        ts.label = s.label;
        if (align_active)
          ts.au_map = sample_au_map(s, state, geom, codebook, table);
        batch.push_back(std::move(ts));
      }
      const double loss = train_step(state, batch, cfg, opt, &stats);
      if (!std::isfinite(loss))
        throw NumericError("non-finite batch loss in epoch " +
                           std::to_string(epoch));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_ce = stats.ce_sum / stats.n;
    rec.mean_r_train = stats.n_aligned > 0 ? stats.r_sum / stats.n_aligned : 0.0;
    rec.mean_align = stats.n_aligned > 0 ? 1.0 - rec.mean_r_train : 0.0;
    // Held-out measurement: accuracy always, attention cosine only when the
    // alignment machinery is in play.
    int correct = 0;
    double r_val_sum = 0.0;
    int r_val_n = 0;
    for (const Sample& s : val_set.samples) {
      ForwardResult fw = forward(state, image_to_tensor(s));
      if (argmax_lowest(fw.logits.data()) == s.label) ++correct;
      if (align_active) {
        AUMap a = sample_au_map(s, state, geom, codebook, table);
        if (!a.all_zero()) {
          Tensor t_l = attention_at_layer(fw.features, cfg.attention_layer);
          Tensor target = Tensor::from_data({a.h, a.w}, a.values, false);
          r_val_sum += cosine_sim_map(t_l.detach(), target).value();
          ++r_val_n;
        }
      }
    }
    state.zero_all_grads();
    rec.acc_val = static_cast<double>(correct) / val_set.samples.size();
    rec.mean_r_val = r_val_n > 0 ? r_val_sum / r_val_n : 0.0;
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    log.epochs.push_back(rec);
    if (epoch_callback) epoch_callback(epoch, state);
  }
  return log;
}

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "# epoch ce align r_train r_val acc_val seconds\n";
  char buf[200];
  for (const EpochRecord& r : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d %.9g %.9g %.9g %.9g %.9g %.3f\n",
                  r.epoch, r.mean_ce, r.mean_align, r.mean_r_train,
                  r.mean_r_val, r.acc_val, r.seconds);
    out << buf;
  }
}

}  // namespace ferau
