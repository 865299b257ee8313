#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "ferau/data_synth.hpp"
#include "ferau/model.hpp"

using namespace ferau;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FERAU_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& child) const {
    return (path / child).string();
  }
};

bool trees_equal(const fs::path& a, const fs::path& b) {
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (rel.filename() == "config_echo.txt") continue;
    if (!fs::exists(b / rel)) return false;
    if (read(entry.path()) != read(b / rel)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("usage errors exit with 64") {
  CHECK(run("definitely-not-a-subcommand") == 64);
  CHECK(run("gen-data --no-such-flag") == 64);
  CHECK(run("") == 64);  // subcommand is required
}

TEST_CASE("gen-data") {
  TempDir dir("ferau_cli_gendata");

  SUBCASE("default run writes a loadable 6-class dataset") {
    CHECK(run("gen-data --out " + dir.str() +
              " --samples-per-class 5 --seed 3") == 0);
    SplitDatasets data = load_dataset(dir.str());
    CHECK(data.train.class_names.size() == 6);
    CHECK(data.train.samples.size() == 6 * 4);  // llround(0.7 * 5) = 4
    CHECK(fs::exists(dir.sub("config_echo.txt")));
  }
  SUBCASE("refuses to overwrite without --force") {
    REQUIRE(run("gen-data --out " + dir.str() +
                " --samples-per-class 2 --seed 1") == 0);
    CHECK(run("gen-data --out " + dir.str() +
              " --samples-per-class 2 --seed 1") == 2);
    CHECK(run("gen-data --out " + dir.str() +
              " --samples-per-class 2 --seed 1 --force") == 0);
  }
  SUBCASE("same seed twice produces identical trees") {
    TempDir other("ferau_cli_gendata_b");
    REQUIRE(run("gen-data --out " + dir.str() +
                " --samples-per-class 4 --seed 7") == 0);
    REQUIRE(run("gen-data --out " + other.str() +
                " --samples-per-class 4 --seed 7") == 0);
    CHECK(trees_equal(dir.path, other.path));
  }
  SUBCASE("invalid config value exits with 2") {
    CHECK(run("gen-data --out " + dir.str() + " --jitter 0.4") == 2);
  }
}

TEST_CASE("build-aumaps") {
  TempDir data("ferau_cli_aumap_data");
  TempDir maps("ferau_cli_aumap_out");
  REQUIRE(run("gen-data --out " + data.str() +
              " --samples-per-class 3 --seed 5") == 0);

  SUBCASE("one P5 and one raw map per train image") {
    CHECK(run("build-aumaps --data " + data.str() + " --out " + maps.str()) ==
          0);
    int pgm = 0, txt = 0;
    for (const auto& entry : fs::directory_iterator(maps.path)) {
      if (entry.path().extension() == ".pgm") ++pgm;
      if (entry.path().extension() == ".txt" &&
          entry.path().filename() != "config_echo.txt")
        ++txt;
    }
    CHECK(pgm == 6 * 2);  // llround(0.7 * 3) = 2 per class
    CHECK(txt == 6 * 2);
  }
  SUBCASE("missing dataset exits with 1") {
    CHECK(run("build-aumaps --data /nonexistent/nowhere --out " +
              maps.str()) == 1);
  }
}

TEST_CASE("train, eval, export-maps pipeline") {
  TempDir data("ferau_cli_train_data");
  // 10 per class keeps every split non-empty (7/1/2)
  REQUIRE(run("gen-data --out " + data.str() +
              " --samples-per-class 10 --seed 2") == 0);

  SUBCASE("distinct lambdas give distinct checkpoints; reruns are identical") {
    TempDir run0("ferau_cli_run0");
    TempDir run1("ferau_cli_run1");
    TempDir run0_again("ferau_cli_run0b");
    const std::string common = " --data " + data.str() +
                               " --epochs 1 --seed 4 --batch 8";
    REQUIRE(run("train --out " + run0.str() + common + " --lambda 0") == 0);
    REQUIRE(run("train --out " + run1.str() + common + " --lambda 1") == 0);
    REQUIRE(run("train --out " + run0_again.str() + common + " --lambda 0") ==
            0);

    auto read = [](const std::string& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    };
    CHECK(read(run0.sub("checkpoint.ckpt")) !=
          read(run1.sub("checkpoint.ckpt")));
    CHECK(read(run0.sub("checkpoint.ckpt")) ==
          read(run0_again.sub("checkpoint.ckpt")));
    // logs match except for the trailing wall-clock column
    auto strip_seconds = [](const std::string& text) {
      std::string out;
      size_t pos = 0;
      while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        const size_t last_space = line.find_last_of(' ');
        out += line.substr(0, last_space);
        out += '\n';
        pos = eol + 1;
      }
      return out;
    };
    CHECK(strip_seconds(read(run0.sub("train_log.txt"))) ==
          strip_seconds(read(run0_again.sub("train_log.txt"))));

    SUBCASE("eval fills the report and table") {
      TempDir eval_out("ferau_cli_eval");
      CHECK(run("eval --checkpoint " + run1.sub("checkpoint.ckpt") +
                " --data " + data.str() + " --out " + eval_out.str() +
                " --method all --with-au") == 0);
      std::string report = read(eval_out.sub("report.txt"));
      CHECK(report.find("cl = ") != std::string::npos);
      CHECK(report.find("cam_cos[gradcam]") != std::string::npos);
      CHECK(report.find("cam_cos[gradcam++]") != std::string::npos);
      std::string table = read(eval_out.sub("table.tsv"));
      CHECK(table.find("method\twith_au") != std::string::npos);
    }
    SUBCASE("export-maps writes the grids") {
      TempDir maps_out("ferau_cli_export");
      CHECK(run("export-maps --checkpoint " + run1.sub("checkpoint.ckpt") +
                " --data " + data.str() + " --out " + maps_out.str() +
                " --kind all --panel 16 --overlays 2") == 0);
      for (const std::string& kind :
           {"attention", "cam", "gradcam", "gradcampp", "layercam"})
        CHECK(fs::exists(maps_out.sub("grid_" + kind + ".ppm")));
      CHECK(fs::exists(maps_out.sub("overlay_00000.ppm")));
      CHECK(fs::exists(maps_out.sub("overlay_00001.ppm")));
    }
    SUBCASE("checkpoint against a mismatched dataset exits with 2") {
      // a dataset is still a dataset after dropping classes from classes.txt,
      // but the class count no longer matches the checkpoint
      TempDir eval_out("ferau_cli_eval_mismatch");
      ModelState state = load_checkpoint(run1.sub("checkpoint.ckpt"));
      ModelConfig cfg = state.config;
      cfg.classes = 4;
      cfg.seed = 1;
      ModelState smaller = init_model(cfg);
      const std::string small_ckpt = eval_out.sub("small.ckpt");
      fs::create_directories(eval_out.path);
      save_checkpoint(smaller, small_ckpt);
      CHECK(run("eval --checkpoint " + small_ckpt + " --data " + data.str() +
                " --out " + eval_out.str()) == 2);
    }
  }
}
