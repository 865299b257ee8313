#include "ferau/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ferau/errors.hpp"

namespace ferau {

namespace {

unsigned char to_byte(double v) {
  double s = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<unsigned char>(s);
}

void skip_pnm_whitespace(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
}

}  // namespace

void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row(img.w);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) row[c] = to_byte(img.at(r, c));
    out.write(reinterpret_cast<const char*>(row.data()), img.w);
  }
  if (!out) throw DataError("write failed: " + path);
}

GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("not a P5 pgm: " + path);
  skip_pnm_whitespace(in);
  int w = 0, h = 0, maxval = 0;
  in >> w;
  skip_pnm_whitespace(in);
  in >> h;
  skip_pnm_whitespace(in);
  in >> maxval;
  if (!in || w < 1 || h < 1 || maxval != 255)
    throw DataError("bad pgm header: " + path);
  in.get();  // single whitespace after maxval
  GrayImage img;
  img.h = h;
  img.w = w;
  img.values.resize(static_cast<size_t>(h) * w);
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw DataError("truncated pgm payload: " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.values[i] = buf[i] / 255.0;
  return img;
}

void save_raw_map(const GrayImage& img, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << img.h << " " << img.w << "\n";
  char buf[40];
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", img.at(r, c));
      out << buf << (c + 1 == img.w ? '\n' : ' ');
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

GrayImage load_raw_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  GrayImage img;
  if (!(in >> img.h >> img.w) || img.h < 1 || img.w < 1)
    throw DataError("bad raw map header: " + path);
  img.values.resize(static_cast<size_t>(img.h) * img.w);
  for (auto& v : img.values)
    if (!(in >> v)) throw DataError("truncated raw map: " + path);
  return img;
}

void save_ppm(int h, int w, const std::vector<double>& rgb,
              const std::string& path) {
  if (static_cast<size_t>(h) * w * 3 != rgb.size())
    throw DimensionError("save_ppm: rgb buffer does not match h*w*3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(rgb.size());
  for (size_t i = 0; i < rgb.size(); ++i) bytes[i] = to_byte(rgb[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

void save_heat_overlay(const GrayImage& base, const GrayImage& heat,
                       const std::string& path) {
  if (base.h != heat.h || base.w != heat.w)
    throw DimensionError("save_heat_overlay: base and heat sizes differ");
  std::vector<double> rgb(static_cast<size_t>(base.h) * base.w * 3);
  for (size_t i = 0; i < base.values.size(); ++i) {
    const double g = std::clamp(base.values[i], 0.0, 1.0);
    const double t = std::clamp(heat.values[i], 0.0, 1.0);
    rgb[3 * i + 0] = g * (1.0 - t) + t;  // red ramps with heat
    rgb[3 * i + 1] = g * (1.0 - t);
    rgb[3 * i + 2] = g * (1.0 - t);
  }
  save_ppm(base.h, base.w, rgb, path);
}

}  // namespace ferau
