#include "ferau/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ferau/errors.hpp"
#include "ferau/rng.hpp"

namespace fs = std::filesystem;

namespace ferau {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Snap to a 2^-20 grid so that mirroring (x -> 1-x) is exact in doubles.
double quantize(double v) { return std::round(v * 1048576.0) / 1048576.0; }

double quantize_pixel(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Point mid(const LandmarkSet& lm, int a, int b) {
  return {0.5 * (lm.points[a].x + lm.points[b].x),
          0.5 * (lm.points[a].y + lm.points[b].y)};
}

}  // namespace

void SynthConfig::validate() const {
  if (samples_per_class < 1)
    throw ConfigError("synth config: samples_per_class must be >= 1");
  if (image_h < 32 || image_w < 32)
    throw ConfigError("synth config: image size must be >= 32");
  if (jitter < 0.0 || jitter > 0.05)
    throw ConfigError("synth config: jitter must be in [0, 0.05]");
  if (noise < 0.0) throw ConfigError("synth config: noise must be >= 0");
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw ConfigError("synth config: flip_prob must be in [0,1]");
}

const std::vector<std::string>& SynthConfig::class_names() {
  static const std::vector<std::string> names = {
      "anger", "disgust", "fear", "happiness", "sadness", "surprise"};
  return names;
}

LandmarkSet face_template() {
  LandmarkSet lm;
  auto set = [&](int i, double x, double y) { lm.points[i] = {x, y}; };
  // jaw 0-16: ellipse from left ear through chin to right ear
  for (int i = 0; i <= 16; ++i) {
    const double a = kPi * i / 16.0;
    set(i, 0.5 - 0.34 * std::cos(a), 0.50 + 0.42 * std::sin(a));
  }
  // brows 17-21 (left), 22-26 (right), mild arch
  for (int i = 0; i < 5; ++i) {
    const double t = i / 4.0;
    const double arch = 0.02 * std::sin(kPi * t);
    set(17 + i, 0.22 + 0.20 * t, 0.34 - arch);
    set(22 + i, 0.58 + 0.20 * t, 0.34 - 0.02 * std::sin(kPi * (1.0 - t)));
  }
  // nose bridge 27-30, nostril row 31-35
  set(27, 0.5, 0.40);
  set(28, 0.5, 0.46);
  set(29, 0.5, 0.52);
  set(30, 0.5, 0.57);
  for (int i = 0; i < 5; ++i) set(31 + i, 0.44 + 0.03 * i, 0.60);
  // eyes: left 36-41, right 42-47 (hexagons)
  set(36, 0.26, 0.42); set(37, 0.29, 0.40); set(38, 0.35, 0.40);
  set(39, 0.38, 0.42); set(40, 0.35, 0.44); set(41, 0.29, 0.44);
  set(42, 0.62, 0.42); set(43, 0.65, 0.40); set(44, 0.71, 0.40);
  set(45, 0.74, 0.42); set(46, 0.71, 0.44); set(47, 0.65, 0.44);
  // outer lip 48-59
  set(48, 0.37, 0.72);  set(49, 0.42, 0.69);  set(50, 0.46, 0.675);
  set(51, 0.50, 0.67);  set(52, 0.54, 0.675); set(53, 0.58, 0.69);
  set(54, 0.63, 0.72);  set(55, 0.58, 0.75);  set(56, 0.54, 0.765);
  set(57, 0.50, 0.77);  set(58, 0.46, 0.765); set(59, 0.42, 0.75);
  // inner lip 60-67
  set(60, 0.42, 0.72);  set(61, 0.46, 0.705); set(62, 0.50, 0.70);
  set(63, 0.54, 0.705); set(64, 0.58, 0.72);  set(65, 0.54, 0.735);
  set(66, 0.50, 0.74);  set(67, 0.46, 0.735);
  return lm;
}

LandmarkSet deformed_landmarks(int label) {
  if (label < 0 || label >= 6)
    throw ConfigError("deformed_landmarks: label out of range");
  LandmarkSet lm = face_template();
  auto dy = [&](std::initializer_list<int> idx, double d) {
    for (int i : idx) lm.points[i].y += d;
  };
  auto dx = [&](std::initializer_list<int> idx, double d) {
    for (int i : idx) lm.points[i].x += d;
  };
  switch (label) {
    case 0:  // anger: AU4 brows down, AU5/AU7 narrowed eyes, AU23 pressed lips
      dy({19, 20, 23, 24}, 0.030);
      dy({21, 22}, 0.020);
      dx({21}, 0.010);
      dx({22}, -0.010);
      dy({37, 38, 43, 44}, 0.012);
      dy({40, 41, 46, 47}, -0.008);
      dy({51}, 0.012);
      dy({57}, -0.012);
      dy({61, 62, 63}, 0.012);
      dy({65, 66, 67}, -0.012);
      break;
    case 1:  // disgust: AU9 nose wrinkle, AU15 corners down, AU16 lower lip
      dy({27, 28, 29, 30}, -0.020);
      dy({31, 32, 33, 34, 35}, -0.020);
      dy({49, 50, 51, 52, 53}, -0.012);
      dy({48, 54}, 0.020);
      dy({57, 66}, 0.015);
      break;
    case 2:  // fear: AU1/2/4 raised brows, AU5/7 wide eyes, AU20 stretch, AU26
      dy({21, 22}, -0.030);
      dy({17, 26}, -0.020);
      dy({19, 20, 23, 24}, -0.025);
      dy({37, 38, 43, 44}, -0.012);
      dy({40, 41, 46, 47}, 0.008);
      dx({48}, -0.020);
      dx({54}, 0.020);
      dy({8}, 0.025);
      dy({57}, 0.020);
      dy({65, 66, 67}, 0.015);
      break;
    case 3:  // happiness: AU12 corners up/out, AU6 cheeks (lids narrow)
      dx({48}, -0.015);
      dy({48}, -0.020);
      dx({54}, 0.015);
      dy({54}, -0.020);
      dy({40, 41, 46, 47}, -0.010);
      break;
    case 4:  // sadness: AU1 inner brows up, AU4 mid brows down, AU15 corners
      dy({21, 22}, -0.025);
      dy({19, 20, 23, 24}, 0.010);
      dy({48, 54}, 0.025);
      break;
    case 5:  // surprise: AU1/2 brows up, AU5 lids up, AU26 open mouth
      dy({17, 18, 19, 20, 21, 22, 23, 24, 25, 26}, -0.035);
      dy({37, 38, 43, 44}, -0.015);
      dy({40, 41, 46, 47}, 0.010);
      dy({57}, 0.035);
      dy({55, 56, 58, 59}, 0.030);
      dy({65, 66, 67}, 0.030);
      dy({8}, 0.030);
      dy({61, 62, 63}, -0.005);
      break;
  }
  return lm;
}

std::vector<Point> class_deformation_centers(int label,
                                             const LandmarkSet& lm) {
  std::vector<Point> c;
  auto one = [&](int i) { c.push_back(lm.points[i]); };
  auto two = [&](int a, int b) { c.push_back(mid(lm, a, b)); };
  switch (label) {
    case 0:  // anger
      two(19, 20); two(23, 24); two(37, 38); two(43, 44);
      two(40, 41); two(46, 47); two(51, 57);
      break;
    case 1:  // disgust
      two(28, 29); one(48); one(54); one(57);
      break;
    case 2:  // fear
      one(21); one(22); one(17); one(26); two(19, 20); two(23, 24);
      two(37, 38); two(43, 44); two(40, 41); two(46, 47);
      one(48); one(54); two(8, 57);
      break;
    case 3:  // happiness
      two(40, 5); two(47, 11); one(48); one(54);
      break;
    case 4:  // sadness
      one(21); one(22); two(19, 20); two(23, 24); one(48); one(54);
      break;
    case 5:  // surprise
      one(21); one(22); one(17); one(26); two(37, 38); two(43, 44);
      two(8, 57);
      break;
    default:
      throw ConfigError("class_deformation_centers: label out of range");
  }
  return c;
}

namespace {

// 68-point left/right index permutation (involution).
const std::array<int, kNumLandmarks>& flip_permutation() {
  static const std::array<int, kNumLandmarks> perm = [] {
    std::array<int, kNumLandmarks> p{};
    for (int i = 0; i < kNumLandmarks; ++i) p[i] = i;
    auto swap = [&](int a, int b) { p[a] = b; p[b] = a; };
    for (int i = 0; i < 8; ++i) swap(i, 16 - i);              // jaw
    for (int i = 0; i < 5; ++i) swap(17 + i, 26 - i);         // brows
    swap(31, 35); swap(32, 34);                               // nostrils
    swap(36, 45); swap(37, 44); swap(38, 43); swap(39, 42);   // eyes
    swap(40, 47); swap(41, 46);
    swap(48, 54); swap(49, 53); swap(50, 52);                 // outer lip
    swap(55, 59); swap(56, 58);
    swap(60, 64); swap(61, 63); swap(65, 67);                 // inner lip
    return p;
  }();
  return perm;
}

void draw_soft_segment(GrayImage& img, Point a, Point b, double pen_sigma,
                       double intensity) {
  const double ax = a.x * img.w, ay = a.y * img.h;
  const double bx = b.x * img.w, by = b.y * img.h;
  const int margin = static_cast<int>(std::ceil(3.0 * pen_sigma)) + 1;
  const int r0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by))) - margin);
  const int r1 = std::min(img.h - 1, static_cast<int>(std::ceil(std::max(ay, by))) + margin);
  const int c0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx))) - margin);
  const int c1 = std::min(img.w - 1, static_cast<int>(std::ceil(std::max(ax, bx))) + margin);
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  for (int r = r0; r <= r1; ++r) {
    const double py = r + 0.5;
    for (int c = c0; c <= c1; ++c) {
      const double px = c + 0.5;
      double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = px - (ax + t * vx);
      const double dy = py - (ay + t * vy);
      const double v =
          intensity * std::exp(-(dx * dx + dy * dy) / (2.0 * pen_sigma * pen_sigma));
      img.at(r, c) = std::max(img.at(r, c), v);
    }
  }
}

void draw_chain(GrayImage& img, const LandmarkSet& lm, int first, int last,
                bool closed, double pen_sigma, double intensity) {
  for (int i = first; i < last; ++i)
    draw_soft_segment(img, lm.points[i], lm.points[i + 1], pen_sigma, intensity);
  if (closed)
    draw_soft_segment(img, lm.points[last], lm.points[first], pen_sigma,
                      intensity);
}

void draw_blob(GrayImage& img, Point p, double blob_sigma, double intensity) {
  draw_soft_segment(img, p, p, blob_sigma, intensity);
}

GrayImage render_face(const LandmarkSet& lm, int h, int w, int label) {
  GrayImage img;
  img.h = h;
  img.w = w;
  img.values.assign(static_cast<size_t>(h) * w, 0.0);
  const double pen = 0.012 * std::min(h, w);
  draw_chain(img, lm, 0, 16, false, pen, 0.9);    // jaw
  draw_chain(img, lm, 17, 21, false, pen, 0.9);   // brows
  draw_chain(img, lm, 22, 26, false, pen, 0.9);
  draw_chain(img, lm, 27, 30, false, pen, 0.8);   // nose
  draw_chain(img, lm, 31, 35, false, pen, 0.8);
  draw_chain(img, lm, 36, 41, true, pen, 1.0);    // eyes
  draw_chain(img, lm, 42, 47, true, pen, 1.0);
  draw_chain(img, lm, 48, 59, true, pen, 1.0);    // lips
  draw_chain(img, lm, 60, 67, true, pen, 0.8);
  if (label == 3) {  // happiness carries visible cheek bulges at the AU6 sites
    draw_blob(img, mid(lm, 40, 5), 1.8 * pen, 0.7);
    draw_blob(img, mid(lm, 47, 11), 1.8 * pen, 0.7);
  }
  return img;
}

}  // namespace

Sample flip_sample(const Sample& sample) {
  Sample out;
  out.label = sample.label;
  out.image.h = sample.image.h;
  out.image.w = sample.image.w;
  out.image.values.resize(sample.image.values.size());
  for (int r = 0; r < sample.image.h; ++r)
    for (int c = 0; c < sample.image.w; ++c)
      out.image.at(r, c) = sample.image.at(r, sample.image.w - 1 - c);
  const auto& perm = flip_permutation();
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Point& p = sample.landmarks.points[perm[i]];
    out.landmarks.points[i] = {1.0 - p.x, p.y};
  }
  return out;
}

Sample render_sample(const SynthConfig& cfg, int label, int /*index_in_class*/,
                     int global_index) {
  Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(global_index)));
  LandmarkSet lm = deformed_landmarks(label);
  for (Point& p : lm.points) {
    p.x = quantize(std::clamp(p.x + rng.uniform(-cfg.jitter, cfg.jitter), 0.0, 1.0));
    p.y = quantize(std::clamp(p.y + rng.uniform(-cfg.jitter, cfg.jitter), 0.0, 1.0));
  }
  const bool flip = rng.uniform() < cfg.flip_prob;
  Sample sample;
  sample.label = label;
  sample.landmarks = lm;
  sample.image = render_face(lm, cfg.image_h, cfg.image_w, label);
  for (double& v : sample.image.values)
    v = quantize_pixel(v + cfg.noise * rng.normal());
  if (flip) sample = flip_sample(sample);
  return sample;
}

SplitDatasets generate(const SynthConfig& cfg) {
  cfg.validate();
  SplitDatasets out;
  for (Dataset* d : {&out.train, &out.val, &out.test})
    d->class_names = SynthConfig::class_names();
  const int n = cfg.samples_per_class;
  const int n_train = static_cast<int>(std::llround(0.7 * n));
  const int n_val = static_cast<int>(std::llround(0.1 * n));
  int global_index = 0;
  for (int label = 0; label < 6; ++label) {
    for (int i = 0; i < n; ++i, ++global_index) {
      Sample s = render_sample(cfg, label, i, global_index);
      if (i < n_train)
        out.train.samples.push_back(std::move(s));
      else if (i < n_train + n_val)
        out.val.samples.push_back(std::move(s));
      else
        out.test.samples.push_back(std::move(s));
    }
  }
  return out;
}

// --- Directory I/O -----------------------------------------------------------

namespace {

std::string sample_id(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", n);
  return buf;
}

}  // namespace

void save_dataset(const SplitDatasets& data, const std::string& path) {
  fs::create_directories(fs::path(path) / "images");
  fs::create_directories(fs::path(path) / "landmarks");
  const Dataset* splits[3] = {&data.train, &data.val, &data.test};
  const char* split_names[3] = {"train", "val", "test"};
  std::ofstream classes((fs::path(path) / "classes.txt").string());
  for (const std::string& name : data.train.class_names) classes << name << "\n";
  std::ofstream labels((fs::path(path) / "labels.tsv").string());
  std::ofstream split((fs::path(path) / "split.tsv").string());
  int id = 0;
  for (int s = 0; s < 3; ++s) {
    for (const Sample& sample : splits[s]->samples) {
      const std::string sid = sample_id(id++);
      save_pgm(sample.image, (fs::path(path) / "images" / (sid + ".pgm")).string());
      save_landmarks(sample.landmarks,
                     (fs::path(path) / "landmarks" / (sid + ".txt")).string());
      labels << sid << "\t" << data.train.class_names[sample.label] << "\n";
      split << sid << "\t" << split_names[s] << "\n";
    }
  }
  if (!labels || !split || !classes)
    throw DataError("write failed under: " + path);
}

SplitDatasets load_dataset(const std::string& path) {
  std::ifstream classes((fs::path(path) / "classes.txt").string());
  if (!classes) throw DataError("missing classes.txt under: " + path);
  std::vector<std::string> class_names;
  std::string line;
  while (std::getline(classes, line))
    if (!line.empty()) class_names.push_back(line);
  if (class_names.empty()) throw DataError("classes.txt is empty: " + path);

  std::map<std::string, int> label_by_id;
  {
    std::ifstream labels((fs::path(path) / "labels.tsv").string());
    if (!labels) throw DataError("missing labels.tsv under: " + path);
    int lineno = 0;
    while (std::getline(labels, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string id, cls;
      if (!(ss >> id >> cls))
        throw DataError(path + "/labels.tsv:" + std::to_string(lineno) +
                        ": expected 'id class'");
      auto it = std::find(class_names.begin(), class_names.end(), cls);
      if (it == class_names.end())
        throw DataError(path + "/labels.tsv:" + std::to_string(lineno) +
                        ": class '" + cls + "' not in classes.txt");
      label_by_id[id] = static_cast<int>(it - class_names.begin());
    }
  }

  SplitDatasets out;
  for (Dataset* d : {&out.train, &out.val, &out.test}) d->class_names = class_names;
  std::ifstream split((fs::path(path) / "split.tsv").string());
  if (!split) throw DataError("missing split.tsv under: " + path);
  int lineno = 0;
  while (std::getline(split, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, which;
    if (!(ss >> id >> which))
      throw DataError(path + "/split.tsv:" + std::to_string(lineno) +
                      ": expected 'id split'");
    auto lit = label_by_id.find(id);
    if (lit == label_by_id.end())
      throw DataError(path + "/split.tsv:" + std::to_string(lineno) +
                      ": id '" + id + "' has no label entry");
    Sample s;
    s.label = lit->second;
    s.image = load_pgm((fs::path(path) / "images" / (id + ".pgm")).string());
    s.landmarks =
        load_landmarks((fs::path(path) / "landmarks" / (id + ".txt")).string());
    if (which == "train")
      out.train.samples.push_back(std::move(s));
    else if (which == "val")
      out.val.samples.push_back(std::move(s));
    else if (which == "test")
      out.test.samples.push_back(std::move(s));
    else
      throw DataError(path + "/split.tsv:" + std::to_string(lineno) +
                      ": unknown split '" + which + "'");
  }
  return out;
}

Tensor image_to_tensor(const Sample& sample) {
  return Tensor::from_data({1, sample.image.h, sample.image.w},
                           sample.image.values, false);
}

}  // namespace ferau
