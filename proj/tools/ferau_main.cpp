// ferau: action-unit-guided interpretable expression classification.
// Single binary with subcommands; every run echoes its resolved config
// next to its outputs so it can be reproduced from that file alone.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ferau/cam.hpp"
#include "ferau/data_synth.hpp"
#include "ferau/errors.hpp"
#include "ferau/metrics.hpp"
#include "ferau/model.hpp"
#include "ferau/trainer.hpp"

namespace fs = std::filesystem;
using namespace ferau;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitUsage = 64;

void write_config_echo(CLI::App* cmd, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream echo((fs::path(out_dir) / "config_echo.txt").string());
  echo << cmd->config_to_str(true, false);
}

AuEvalConfig load_au_config(const std::string& codebook_path,
                            const std::string& anchors_path, double sigma) {
  AuEvalConfig cfg = AuEvalConfig::defaults();
  if (!codebook_path.empty()) cfg.codebook = load_codebook(codebook_path);
  if (!anchors_path.empty()) cfg.table = load_anchor_table(anchors_path);
  cfg.codebook.validate_against(cfg.table);
  cfg.sigma = sigma;
  return cfg;
}

const Dataset& pick_split(const SplitDatasets& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "val") return data.val;
  if (split == "test") return data.test;
  throw ConfigError("unknown split: " + split);
}

std::vector<CamMethod> parse_methods(const std::string& method) {
  if (method == "all")
    return {CamMethod::CAM, CamMethod::GradCAM, CamMethod::GradCAMpp,
            CamMethod::LayerCAM};
  return {cam_method_from_name(method)};
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  SynthConfig synth;
  bool force = false;
};

int run_gen_data(const GenDataArgs& args, CLI::App* cmd) {
  if (fs::exists(args.out) && !fs::is_empty(args.out) && !args.force)
    throw ConfigError("output directory exists and is not empty (use --force): " +
                      args.out);
  args.synth.validate();
  SplitDatasets data = generate(args.synth);
  save_dataset(data, args.out);
  write_config_echo(cmd, args.out);
  std::printf("wrote %zu train / %zu val / %zu test samples to %s\n",
              data.train.samples.size(), data.val.samples.size(),
              data.test.samples.size(), args.out.c_str());
  return kExitOk;
}

// --- build-aumaps -----------------------------------------------------------

struct BuildAuMapsArgs {
  std::string data;
  std::string out;
  std::string codebook;
  std::string anchors;
  double sigma = 0.0;
};

int run_build_aumaps(const BuildAuMapsArgs& args, CLI::App* cmd) {
  SplitDatasets data = load_dataset(args.data);
  AuEvalConfig au = load_au_config(args.codebook, args.anchors, args.sigma);
  fs::create_directories(args.out);
  int id = 0;
  for (const Sample& s : data.train.samples) {
    const double sigma =
        au.sigma > 0.0 ? au.sigma : default_sigma(s.image.h, s.image.w);
    AUMap map = build_au_map(s.landmarks, s.label, au.codebook, au.table,
                             sigma, s.image.h, s.image.w);
    char name[32];
    std::snprintf(name, sizeof(name), "%05d", id++);
    save_pgm(map.to_image(), (fs::path(args.out) / (std::string(name) + ".pgm")).string());
    save_raw_map(map.to_image(),
                 (fs::path(args.out) / (std::string(name) + ".txt")).string());
    if (map.all_zero())
      std::fprintf(stderr, "warning: zero AU map for sample %s (class %s)\n",
                   name, data.train.class_names[s.label].c_str());
  }
  write_config_echo(cmd, args.out);
  std::printf("wrote %d AU maps to %s\n", id, args.out.c_str());
  return kExitOk;
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string codebook;
  std::string anchors;
  TrainConfig train;
  int ckpt_every = 0;
};

int run_train(const TrainArgs& args, CLI::App* cmd) {
  SplitDatasets data = load_dataset(args.data);
  AuEvalConfig au =
      load_au_config(args.codebook, args.anchors, args.train.sigma);
  ModelConfig mcfg = ModelConfig::default_config(
      static_cast<int>(data.train.class_names.size()), args.train.seed);
  mcfg.attention_layer = args.train.attention_layer;
  ModelState state = init_model(mcfg);
  fs::create_directories(args.out);
  write_config_echo(cmd, args.out);
  auto callback = [&](int epoch, const ModelState& st) {
    if (args.ckpt_every > 0 && epoch % args.ckpt_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.ckpt", epoch);
      save_checkpoint(st, (fs::path(args.out) / name).string());
    }
  };
  TrainLog log =
      fit(state, data.train, data.val, args.train, au.codebook, au.table,
          callback);
  save_checkpoint(state, (fs::path(args.out) / "checkpoint.ckpt").string());
  save_train_log(log, (fs::path(args.out) / "train_log.txt").string());
  const EpochRecord& last = log.epochs.back();
  std::printf("final epoch %d: ce=%.4f align=%.4f acc_val=%.4f\n", last.epoch,
              last.mean_ce, last.mean_align, last.acc_val);
  return kExitOk;
}

// --- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string method = "all";
  std::string codebook;
  std::string anchors;
  std::string out;
  int layer = 0;  // 0 = model's configured attention layer
  double sigma = 0.0;
  bool with_au = false;
};

int run_eval(const EvalArgs& args, CLI::App* cmd) {
  ModelState state = load_checkpoint(args.checkpoint);
  SplitDatasets data = load_dataset(args.data);
  const Dataset& split = pick_split(data, args.split);
  if (split.classes() != state.config.classes)
    throw ConfigError("checkpoint classes (" +
                      std::to_string(state.config.classes) +
                      ") do not match dataset classes (" +
                      std::to_string(split.classes()) + ")");
  AuEvalConfig au = load_au_config(args.codebook, args.anchors, args.sigma);
  const int layer = args.layer > 0 ? args.layer : state.config.attention_layer;
  MetricsReport report = evaluate(state, split, parse_methods(args.method),
                                  layer, au, args.with_au);
  fs::create_directories(args.out);
  write_config_echo(cmd, args.out);
  save_report(report, (fs::path(args.out) / "report.txt").string());
  save_report_table({report}, (fs::path(args.out) / "table.tsv").string());
  std::printf("cl=%.4f att_cos=%.4f", report.cl, report.att_cos);
  for (const auto& [m, v] : report.cam_cos) std::printf(" %s=%.4f", m.c_str(), v);
  std::printf("\n");
  return kExitOk;
}

// --- export-maps ----------------------------------------------------------------

struct ExportMapsArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string kind = "attention";
  std::string codebook;
  std::string anchors;
  std::string out;
  int layer = 0;
  int panel = 64;
  int overlays = 8;
  double sigma = 0.0;
};

int run_export_maps(const ExportMapsArgs& args, CLI::App* cmd) {
  ModelState state = load_checkpoint(args.checkpoint);
  SplitDatasets data = load_dataset(args.data);
  const Dataset& split = pick_split(data, args.split);
  if (split.classes() != state.config.classes)
    throw ConfigError("checkpoint classes do not match dataset classes");
  AuEvalConfig au = load_au_config(args.codebook, args.anchors, args.sigma);
  const int layer = args.layer > 0 ? args.layer : state.config.attention_layer;
  fs::create_directories(args.out);
  write_config_echo(cmd, args.out);

  std::vector<std::string> kinds;
  if (args.kind == "all")
    kinds = {"attention", "cam", "gradcam", "gradcam++", "layercam"};
  else
    kinds = {args.kind};
  for (const std::string& kind : kinds) {
    auto maps = per_class_average_maps(state, split, layer, kind, au);
    const std::string safe = kind == "gradcam++" ? "gradcampp" : kind;
    export_map_grid(maps, args.panel,
                    (fs::path(args.out) / ("grid_" + safe + ".ppm")).string());
  }
  // Per-sample overlays of the first kind for visual inspection.
  const std::string kind = kinds.front();
  const int n_overlay =
      std::min<int>(args.overlays, static_cast<int>(split.samples.size()));
  for (int i = 0; i < n_overlay; ++i) {
    const Sample& s = split.samples[i];
    GrayImage heat;
    if (kind == "attention") {
      ForwardResult fw = forward(state, image_to_tensor(s));
      Tensor t_l = attention_at_layer(fw.features, layer);
      heat.h = t_l.shape()[0];
      heat.w = t_l.shape()[1];
      heat.values = t_l.data();
      double mx = 0.0;
      for (double v : heat.values) mx = std::max(mx, v);
      if (mx > 0.0)
        for (double& v : heat.values) v /= mx;
    } else {
      CamMap map = extract_cam(cam_method_from_name(kind), state,
                               image_to_tensor(s), s.label, layer);
      heat = map.to_image();
    }
    // upsample heat to image resolution (nearest)
    GrayImage up;
    up.h = s.image.h;
    up.w = s.image.w;
    up.values.resize(static_cast<size_t>(up.h) * up.w);
    for (int r = 0; r < up.h; ++r)
      for (int c = 0; c < up.w; ++c)
        up.at(r, c) = heat.at(r * heat.h / up.h, c * heat.w / up.w);
    char name[48];
    std::snprintf(name, sizeof(name), "overlay_%05d.ppm", i);
    save_heat_overlay(s.image, up, (fs::path(args.out) / name).string());
  }
  std::printf("exported %zu grid(s) and %d overlay(s) to %s\n", kinds.size(),
              n_overlay, args.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"action-unit-guided interpretable expression classifier"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen_cmd->set_config("--config");
  gen_cmd->add_option("--out", gen.out, "output dataset directory")->required();
  gen_cmd->add_option("--seed", gen.synth.seed, "generator seed");
  gen_cmd->add_option("--samples-per-class", gen.synth.samples_per_class,
                      "samples per expression class");
  gen_cmd->add_option("--height", gen.synth.image_h, "image height");
  gen_cmd->add_option("--width", gen.synth.image_w, "image width");
  gen_cmd->add_option("--jitter", gen.synth.jitter, "landmark jitter scale");
  gen_cmd->add_option("--noise", gen.synth.noise, "pixel noise std");
  gen_cmd->add_option("--flip-prob", gen.synth.flip_prob, "horizontal flip probability");
  gen_cmd->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  BuildAuMapsArgs aumaps;
  CLI::App* aumaps_cmd =
      app.add_subcommand("build-aumaps", "render AU maps for the training split");
  aumaps_cmd->set_config("--config");
  aumaps_cmd->add_option("--data", aumaps.data, "dataset directory")->required();
  aumaps_cmd->add_option("--out", aumaps.out, "output directory")->required();
  aumaps_cmd->add_option("--codebook", aumaps.codebook, "codebook file");
  aumaps_cmd->add_option("--anchors", aumaps.anchors, "anchor table file");
  aumaps_cmd->add_option("--sigma", aumaps.sigma, "render sigma in pixels");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train the classifier");
  train_cmd->set_config("--config");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--lambda", train.train.lambda, "alignment weight");
  train_cmd->add_option("--layer", train.train.attention_layer, "attention layer");
  train_cmd->add_option("--seed", train.train.seed, "training seed");
  train_cmd->add_option("--epochs", train.train.epochs, "epochs");
  train_cmd->add_option("--lr", train.train.lr, "learning rate");
  train_cmd->add_option("--momentum", train.train.momentum, "SGD momentum");
  train_cmd->add_option("--batch", train.train.batch_size, "batch size");
  train_cmd->add_option("--sigma", train.train.sigma, "AU render sigma in pixels");
  train_cmd->add_flag("!--no-shuffle", train.train.shuffle, "disable shuffling");
  train_cmd->add_option("--codebook", train.codebook, "codebook file");
  train_cmd->add_option("--anchors", train.anchors, "anchor table file");
  train_cmd->add_option("--ckpt-every", train.ckpt_every,
                        "write a checkpoint every N epochs");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->set_config("--config");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval.out, "output directory")->required();
  eval_cmd->add_option("--split", eval.split, "train|val|test");
  eval_cmd->add_option("--method", eval.method, "cam|gradcam|gradcam++|layercam|all");
  eval_cmd->add_option("--layer", eval.layer, "evaluation layer (0 = model default)");
  eval_cmd->add_option("--sigma", eval.sigma, "AU render sigma in pixels");
  eval_cmd->add_option("--codebook", eval.codebook, "codebook file");
  eval_cmd->add_option("--anchors", eval.anchors, "anchor table file");
  eval_cmd->add_flag("--with-au", eval.with_au,
                     "record that the checkpoint was trained with alignment");

  ExportMapsArgs exp;
  CLI::App* exp_cmd =
      app.add_subcommand("export-maps", "export per-class average map grids");
  exp_cmd->set_config("--config");
  exp_cmd->add_option("--checkpoint", exp.checkpoint, "checkpoint file")->required();
  exp_cmd->add_option("--data", exp.data, "dataset directory")->required();
  exp_cmd->add_option("--out", exp.out, "output directory")->required();
  exp_cmd->add_option("--split", exp.split, "train|val|test");
  exp_cmd->add_option("--kind", exp.kind,
                      "attention|cam|gradcam|gradcam++|layercam|all");
  exp_cmd->add_option("--layer", exp.layer, "layer (0 = model default)");
  exp_cmd->add_option("--panel", exp.panel, "panel size in pixels");
  exp_cmd->add_option("--overlays", exp.overlays, "number of per-sample overlays");
  exp_cmd->add_option("--sigma", exp.sigma, "AU render sigma in pixels");
  exp_cmd->add_option("--codebook", exp.codebook, "codebook file");
  exp_cmd->add_option("--anchors", exp.anchors, "anchor table file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_data(gen, gen_cmd);
    if (aumaps_cmd->parsed()) return run_build_aumaps(aumaps, aumaps_cmd);
    if (train_cmd->parsed()) return run_train(train, train_cmd);
    if (eval_cmd->parsed()) return run_eval(eval, eval_cmd);
    if (exp_cmd->parsed()) return run_export_maps(exp, exp_cmd);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
