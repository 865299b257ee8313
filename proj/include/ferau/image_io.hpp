#ifndef FERAU_IMAGE_IO_HPP_
#define FERAU_IMAGE_IO_HPP_

#include <string>
#include <vector>

namespace ferau {

/// Grayscale image or map, row-major doubles in [0,1].
struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<double> values;

  double& at(int r, int c) { return values[static_cast<size_t>(r) * w + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * w + c]; }
};

/// 8-bit binary PGM (P5), values scaled by 255 and rounded.
void save_pgm(const GrayImage& img, const std::string& path);
GrayImage load_pgm(const std::string& path);

/// Lossless text dump: "h w" header then row-major doubles.
void save_raw_map(const GrayImage& img, const std::string& path);
GrayImage load_raw_map(const std::string& path);

/// 24-bit binary PPM (P6) from interleaved RGB rows in [0,1].
void save_ppm(int h, int w, const std::vector<double>& rgb,
              const std::string& path);

/// Overlay export: grayscale base with a red heat channel on top.
void save_heat_overlay(const GrayImage& base, const GrayImage& heat,
                       const std::string& path);

}  // namespace ferau

#endif  // FERAU_IMAGE_IO_HPP_
