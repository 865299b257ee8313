#include "ferau/au_geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ferau/errors.hpp"

namespace ferau {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  size_t pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace

void LandmarkSet::validate() const {
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
      throw DataError("landmark " + std::to_string(i) +
                      " outside [0,1]x[0,1]");
  }
}

void AUAnchorTable::validate() const {
  for (const auto& [au, specs] : anchors) {
    if (specs.empty())
      throw ConfigError("anchor table entry " + au + " has no specs");
    for (const AnchorSpec& spec : specs) {
      if (spec.combo.empty())
        throw ConfigError("anchor spec for " + au + " has empty combo");
      double wsum = 0.0;
      for (const auto& [idx, weight] : spec.combo) {
        if (idx < 0 || idx >= kNumLandmarks)
          throw ConfigError("anchor spec for " + au + " references landmark " +
                            std::to_string(idx) + " outside [0,67]");
        wsum += weight;
      }
      if (std::abs(wsum - 1.0) > 1e-9)
        throw ConfigError("anchor spec weights for " + au +
                          " do not sum to 1");
    }
  }
}

bool AUCodebook::has(const std::string& expression) const {
  return entries.count(lower(expression)) > 0;
}

const std::vector<std::string>& AUCodebook::aus_for(
    const std::string& expression) const {
  auto it = entries.find(lower(expression));
  if (it == entries.end())
    throw ConfigError("codebook has no entry for expression '" + expression +
                      "'");
  return it->second;
}

void AUCodebook::validate_against(const AUAnchorTable& table) const {
  for (const auto& [expr, aus] : entries)
    for (const std::string& au : aus)
      if (!table.has(au))
        throw ConfigError("codebook AU " + au + " (expression '" + expr +
                          "') has no anchor table entry");
}

bool AUMap::all_zero() const {
  for (double v : values)
    if (v != 0.0) return false;
  return true;
}

std::vector<Point> au_positions(const LandmarkSet& landmarks,
                                const std::string& au,
                                const AUAnchorTable& table) {
  auto it = table.anchors.find(au);
  if (it == table.anchors.end())
    throw ConfigError("unknown AU identifier '" + au + "'");
  std::vector<Point> out;
  out.reserve(it->second.size());
  for (const AnchorSpec& spec : it->second) {
    Point p;
    for (const auto& [idx, weight] : spec.combo) {
      p.x += weight * landmarks.points[idx].x;
      p.y += weight * landmarks.points[idx].y;
    }
    p.x = std::clamp(p.x, 0.0, 1.0);
    p.y = std::clamp(p.y, 0.0, 1.0);
    out.push_back(p);
  }
  return out;
}

AUMap render_au_map(const std::vector<Point>& positions, double sigma, int h,
                    int w) {
  if (sigma <= 0.0) throw ParamError("render_au_map: sigma must be positive");
  if (h < 1 || w < 1) throw ParamError("render_au_map: size must be >= 1");
  AUMap map;
  map.h = h;
  map.w = w;
  map.values.assign(static_cast<size_t>(h) * w, 0.0);
  if (positions.empty()) return map;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int r = 0; r < h; ++r) {
    // pixel centers in pixel units; positions arrive normalized
    const double py = r + 0.5;
    for (int c = 0; c < w; ++c) {
      const double px = c + 0.5;
      double best = 0.0;
      for (const Point& p : positions) {
        const double dx = px - p.x * w;
        const double dy = py - p.y * h;
        const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
        best = std::max(best, v);
      }
      map.at(r, c) = best;
    }
  }
  double mx = 0.0;
  for (double v : map.values) mx = std::max(mx, v);
  if (mx > 0.0)
    for (double& v : map.values) v /= mx;
  return map;
}

AUMap build_au_map(const LandmarkSet& landmarks, int label,
                   const AUCodebook& codebook, const AUAnchorTable& table,
                   double sigma, int h, int w) {
  if (label < 0 || label >= static_cast<int>(codebook.class_names.size()))
    throw ConfigError("label " + std::to_string(label) +
                      " outside the codebook class range");
  const std::vector<std::string>& aus =
      codebook.aus_for(codebook.class_names[label]);
  std::vector<Point> positions;
  for (const std::string& au : aus) {
    std::vector<Point> pts = au_positions(landmarks, au, table);
    positions.insert(positions.end(), pts.begin(), pts.end());
  }
  return render_au_map(positions, sigma, h, w);
}

AUMap downsample_map(const AUMap& map, int h2, int w2) {
  if (h2 > map.h || w2 > map.w)
    throw ParamError("downsample_map: target larger than source");
  if (h2 < 1 || w2 < 1) throw ParamError("downsample_map: target must be >= 1");
  AUMap out;
  out.h = h2;
  out.w = w2;
  out.values.assign(static_cast<size_t>(h2) * w2, 0.0);
  // Area-weighted average; reduces to exact block pooling when divisible.
  const double sy = static_cast<double>(map.h) / h2;
  const double sx = static_cast<double>(map.w) / w2;
  for (int r = 0; r < h2; ++r) {
    const double y0 = r * sy, y1 = (r + 1) * sy;
    for (int c = 0; c < w2; ++c) {
      const double x0 = c * sx, x1 = (c + 1) * sx;
      double acc = 0.0;
      for (int ir = static_cast<int>(std::floor(y0)); ir < map.h && ir < y1;
           ++ir) {
        const double oy =
            std::min<double>(y1, ir + 1) - std::max<double>(y0, ir);
        if (oy <= 0.0) continue;
        for (int ic = static_cast<int>(std::floor(x0)); ic < map.w && ic < x1;
             ++ic) {
          const double ox =
              std::min<double>(x1, ic + 1) - std::max<double>(x0, ic);
          if (ox <= 0.0) continue;
          acc += oy * ox * map.at(ir, ic);
        }
      }
      out.at(r, c) = acc / (sy * sx);
    }
  }
  double mx = 0.0;
  for (double v : out.values) mx = std::max(mx, v);
  if (mx > 0.0)
    for (double& v : out.values) v /= mx;
  return out;
}

// --- Defaults ----------------------------------------------------------------

AUCodebook default_codebook() {
  AUCodebook cb;
  cb.class_names = {"anger", "disgust", "fear", "happiness", "sadness",
                    "surprise"};
  cb.entries["anger"] = {"AU4", "AU5", "AU7", "AU23"};
  cb.entries["disgust"] = {"AU9", "AU15", "AU16"};
  cb.entries["fear"] = {"AU1", "AU2", "AU4", "AU5", "AU7", "AU20", "AU26"};
  cb.entries["happiness"] = {"AU6", "AU12"};
  cb.entries["sadness"] = {"AU1", "AU4", "AU15"};
  cb.entries["surprise"] = {"AU1", "AU2", "AU5", "AU26"};
  return cb;
}

AUAnchorTable default_anchor_table() {
  AUAnchorTable t;
  auto bilateral = [&](const std::string& au,
                       std::vector<std::pair<int, double>> left,
                       std::vector<std::pair<int, double>> right) {
    t.anchors[au].push_back({"left", std::move(left)});
    t.anchors[au].push_back({"right", std::move(right)});
  };
  auto center = [&](const std::string& au,
                    std::vector<std::pair<int, double>> combo) {
    t.anchors[au].push_back({"center", std::move(combo)});
  };
  bilateral("AU1", {{21, 1.0}}, {{22, 1.0}});                   // inner brows
  bilateral("AU2", {{17, 1.0}}, {{26, 1.0}});                   // outer brows
  bilateral("AU4", {{19, 0.5}, {20, 0.5}}, {{23, 0.5}, {24, 0.5}});  // brow mid
  bilateral("AU5", {{37, 0.5}, {38, 0.5}}, {{43, 0.5}, {44, 0.5}});  // upper lids
  bilateral("AU6", {{40, 0.5}, {5, 0.5}}, {{47, 0.5}, {11, 0.5}});   // cheeks
  bilateral("AU7", {{40, 0.5}, {41, 0.5}}, {{46, 0.5}, {47, 0.5}});  // lower lids
  center("AU9", {{28, 0.5}, {29, 0.5}});                        // nose wrinkle
  bilateral("AU12", {{48, 1.0}}, {{54, 1.0}});                  // lip corners
  bilateral("AU15", {{48, 1.0}}, {{54, 1.0}});
  center("AU16", {{57, 1.0}});                                  // lower lip
  bilateral("AU20", {{48, 1.0}}, {{54, 1.0}});
  center("AU23", {{51, 0.5}, {57, 0.5}});                       // lip center
  center("AU26", {{8, 0.5}, {57, 0.5}});                        // jaw drop
  t.validate();
  return t;
}

double default_sigma(int h, int w) { return 0.08 * std::min(h, w); }

// --- File formats ------------------------------------------------------------

AUCodebook load_codebook(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open codebook: " + path);
  AUCodebook cb;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'expression: AU,...'");
    std::string expr = lower(trim(line.substr(0, colon)));
    if (expr.empty())
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": empty expression name");
    std::vector<std::string> aus;
    std::stringstream rest(line.substr(colon + 1));
    std::string token;
    while (std::getline(rest, token, ',')) {
      token = trim(token);
      if (!token.empty()) aus.push_back(token);
    }
    cb.class_names.push_back(expr);
    cb.entries[expr] = std::move(aus);
  }
  if (cb.entries.empty()) throw DataError("codebook is empty: " + path);
  return cb;
}

void save_codebook(const AUCodebook& codebook, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "# expression -> AU codebook (standard FACS associations; edit freely)\n";
  for (const std::string& name : codebook.class_names) {
    out << name << ": ";
    const auto& aus = codebook.entries.at(name);
    for (size_t i = 0; i < aus.size(); ++i)
      out << aus[i] << (i + 1 == aus.size() ? "" : ",");
    out << "\n";
  }
}

AUAnchorTable load_anchor_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open anchor table: " + path);
  AUAnchorTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw DataError(where + ": expected 'AUn: side=...; combo=(...)'");
    std::string au = trim(line.substr(0, colon));
    AnchorSpec spec;
    std::string rest = line.substr(colon + 1);
    size_t side_pos = rest.find("side=");
    size_t combo_pos = rest.find("combo=(");
    if (side_pos == std::string::npos || combo_pos == std::string::npos)
      throw DataError(where + ": missing side= or combo=(");
    size_t side_end = rest.find(';', side_pos);
    spec.side = trim(rest.substr(side_pos + 5, side_end - side_pos - 5));
    if (spec.side != "left" && spec.side != "right" && spec.side != "center")
      throw DataError(where + ": side must be left|right|center");
    size_t close = rest.find(')', combo_pos);
    if (close == std::string::npos) throw DataError(where + ": unclosed combo");
    std::stringstream combo(rest.substr(combo_pos + 7, close - combo_pos - 7));
    std::string term;
    while (std::getline(combo, term, ',')) {
      term = trim(term);
      size_t sep = term.find(':');
      if (sep == std::string::npos)
        throw DataError(where + ": combo term must be idx:weight");
      spec.combo.emplace_back(std::stoi(term.substr(0, sep)),
                              std::stod(term.substr(sep + 1)));
    }
    table.anchors[au].push_back(std::move(spec));
  }
  table.validate();
  return table;
}

void save_anchor_table(const AUAnchorTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "# AU -> landmark anchors, 0-indexed 68-point convention\n";
  char buf[40];
  for (const auto& [au, specs] : table.anchors) {
    for (const AnchorSpec& spec : specs) {
      out << au << ": side=" << spec.side << "; combo=(";
      for (size_t i = 0; i < spec.combo.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d:%.17g", spec.combo[i].first,
                      spec.combo[i].second);
        out << buf << (i + 1 == spec.combo.size() ? "" : ", ");
      }
      out << ")\n";
    }
  }
}

LandmarkSet load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmarks: " + path);
  LandmarkSet lm;
  std::string line;
  int count = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (count >= kNumLandmarks)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": more than 68 landmark lines");
    std::stringstream ss(line);
    if (!(ss >> lm.points[count].x >> lm.points[count].y))
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'x y'");
    ++count;
  }
  if (count != kNumLandmarks)
    throw DataError(path + ": expected 68 landmark lines, found " +
                    std::to_string(count));
  lm.validate();
  return lm;
}

void save_landmarks(const LandmarkSet& landmarks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  char buf[80];
  for (const Point& p : landmarks.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", p.x, p.y);
    out << buf;
  }
}

}  // namespace ferau
