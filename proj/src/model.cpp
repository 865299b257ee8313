#include "ferau/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ferau/errors.hpp"
#include "ferau/rng.hpp"

namespace ferau {

void ModelConfig::validate() const {
  if (stages.empty()) throw ConfigError("model config: stages must be non-empty");
  if (classes < 2) throw ConfigError("model config: classes must be >= 2");
  if (attention_layer < 1 || attention_layer > static_cast<int>(stages.size()))
    throw ConfigError("model config: attention_layer must be in [1," +
                      std::to_string(stages.size()) + "]");
  if (input_h < 1 || input_w < 1 || input_channels < 1)
    throw ConfigError("model config: invalid input size");
  for (const StageConfig& s : stages) {
    if (s.out_channels < 1 || s.conv_count < 1)
      throw ConfigError("model config: invalid stage");
  }
  auto res = stage_resolutions();
  if (res.back().first < 1 || res.back().second < 1)
    throw ConfigError("model config: pooling collapses the input to nothing");
}

std::vector<std::pair<int, int>> ModelConfig::stage_resolutions() const {
  std::vector<std::pair<int, int>> res;
  int h = input_h, w = input_w;
  for (const StageConfig& s : stages) {
    if (s.pool) {
      h /= 2;
      w /= 2;
    }
    res.emplace_back(h, w);
  }
  return res;
}

ModelConfig ModelConfig::default_config(int classes, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.stages = {{8, 1, false}, {16, 1, true}, {32, 1, true},
                {64, 1, true}, {64, 1, true}};
  cfg.classes = classes;
  cfg.attention_layer = 5;
  cfg.seed = seed;
  return cfg;
}

std::vector<Tensor*> ModelState::parameter_list() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : parameters) out.push_back(&t);
  return out;
}

void ModelState::zero_all_grads() {
  for (auto& [name, t] : parameters) t.zero_grad();
}

namespace {

Tensor init_tensor(std::vector<int> shape, int fan_in, Rng& rng) {
  int n = 1;
  for (int d : shape) n *= d;
  // He-style fan-in scaling keeps activation variance steady across the
  // ReLU stages.
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

int head_input_dim(const ModelConfig& cfg) {
  auto res = cfg.stage_resolutions();
  const int c = cfg.stages.back().out_channels;
  if (cfg.head == HeadKind::GapLinear) return c;
  return c * res.back().first * res.back().second;
}

}  // namespace

ModelState init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState state;
  state.config = cfg;
  Rng rng(cfg.seed);
  int in_c = cfg.input_channels;
  for (size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageConfig& stage = cfg.stages[s];
    for (int c = 0; c < stage.conv_count; ++c) {
      const std::string base =
          "stage" + std::to_string(s + 1) + ".conv" + std::to_string(c + 1);
      const int cin = c == 0 ? in_c : stage.out_channels;
      state.parameters[base + ".weight"] =
          init_tensor({stage.out_channels, cin, 3, 3}, cin * 9, rng);
      state.parameters[base + ".bias"] =
          Tensor::zeros({stage.out_channels}, true);
    }
    in_c = stage.out_channels;
  }
  const int d = head_input_dim(cfg);
  state.parameters["head.weight"] = init_tensor({cfg.classes, d}, d, rng);
  state.parameters["head.bias"] = Tensor::zeros({cfg.classes}, true);
  return state;
}

ForwardResult forward(ModelState& state, const Tensor& image) {
  const ModelConfig& cfg = state.config;
  if (image.shape() !=
      std::vector<int>{cfg.input_channels, cfg.input_h, cfg.input_w})
    throw DimensionError("forward: image does not match configured input size");
  ForwardResult result;
  Tensor x = image;
  for (size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageConfig& stage = cfg.stages[s];
    if (stage.pool) x = maxpool2d(x, 2, 2);
    for (int c = 0; c < stage.conv_count; ++c) {
      const std::string base =
          "stage" + std::to_string(s + 1) + ".conv" + std::to_string(c + 1);
      x = relu(conv2d(x, state.parameters.at(base + ".weight"),
                      state.parameters.at(base + ".bias"), 1, 1));
    }
    result.features.push_back(x);
  }
  Tensor pooled = cfg.head == HeadKind::GapLinear ? global_avg_pool(x)
                                                  : flatten(x);
  result.logits = linear(pooled, state.parameters.at("head.weight"),
                         state.parameters.at("head.bias"));
  state.last_forward = result;
  return result;
}

Tensor attention_at_layer(const std::vector<Tensor>& features, int l) {
  if (l < 1 || l > static_cast<int>(features.size()))
    throw ParamError("attention_at_layer: layer index " + std::to_string(l) +
                     " out of range [1," + std::to_string(features.size()) +
                     "]");
  return channel_mean(features[l - 1]);
}

// --- Checkpoint --------------------------------------------------------------

namespace {

std::string head_name(HeadKind h) {
  return h == HeadKind::GapLinear ? "gap-linear" : "flatten-linear";
}

HeadKind head_from_name(const std::string& s) {
  if (s == "gap-linear") return HeadKind::GapLinear;
  if (s == "flatten-linear") return HeadKind::FlattenLinear;
  throw DataError("unknown head kind: " + s);
}

}  // namespace

std::string serialize_model_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "input = " << cfg.input_h << " " << cfg.input_w << " "
      << cfg.input_channels << "\n";
  out << "stages =";
  for (const StageConfig& s : cfg.stages)
    out << " " << s.out_channels << ":" << s.conv_count << ":"
        << (s.pool ? 1 : 0);
  out << "\n";
  out << "head = " << head_name(cfg.head) << "\n";
  out << "classes = " << cfg.classes << "\n";
  out << "attention_layer = " << cfg.attention_layer << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

ModelConfig parse_model_config_lines(std::istream& in) {
  ModelConfig cfg;
  cfg.stages.clear();
  std::string line;
  for (int i = 0; i < 6; ++i) {
    if (!std::getline(in, line)) throw DataError("truncated model config");
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("bad config line: " + line);
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    std::stringstream val(line.substr(eq + 1));
    if (key == "input") {
      val >> cfg.input_h >> cfg.input_w >> cfg.input_channels;
    } else if (key == "stages") {
      std::string tok;
      while (val >> tok) {
        StageConfig s;
        int pool = 0;
        if (std::sscanf(tok.c_str(), "%d:%d:%d", &s.out_channels,
                        &s.conv_count, &pool) != 3)
          throw DataError("bad stage spec: " + tok);
        s.pool = pool != 0;
        cfg.stages.push_back(s);
      }
    } else if (key == "head") {
      std::string h;
      val >> h;
      cfg.head = head_from_name(h);
    } else if (key == "classes") {
      val >> cfg.classes;
    } else if (key == "attention_layer") {
      val >> cfg.attention_layer;
    } else if (key == "seed") {
      val >> cfg.seed;
    } else {
      throw DataError("unknown model config key: " + key);
    }
  }
  return cfg;
}

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "FERAU_CKPT 1\n";
  out << serialize_model_config(state.config);
  out << "params = " << state.parameters.size() << "\n";
  for (const auto& [name, t] : state.parameters) {
    out << name << " " << t.shape().size();
    for (int d : t.shape()) out << " " << d;
    out << "\n";
    const auto& data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "FERAU_CKPT 1")
    throw DataError("not a version-1 checkpoint: " + path);
  ModelConfig cfg = parse_model_config_lines(in);
  cfg.validate();
  if (!std::getline(in, line) || line.rfind("params = ", 0) != 0)
    throw DataError("missing params count: " + path);
  const int count = std::stoi(line.substr(9));
  ModelState state;
  state.config = cfg;
  for (int i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw DataError("truncated checkpoint: " + path);
    std::stringstream header(line);
    std::string name;
    int rank = 0;
    header >> name >> rank;
    std::vector<int> shape(rank);
    int n = 1;
    for (int& d : shape) {
      header >> d;
      n *= d;
    }
    std::vector<double> data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
      throw DataError("truncated parameter blob '" + name + "': " + path);
    in.get();  // trailing newline
    state.parameters[name] =
        Tensor::from_data(std::move(shape), std::move(data), true);
  }
  return state;
}

}  // namespace ferau
