#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cellgan/common.hpp"

namespace cellgan::img {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;  // RGB triplets, row-major

  static RgbImage filled(int w, int h, uint8_t r, uint8_t g, uint8_t b);
  uint8_t& at(int x, int y, int ch) { return px[((size_t)y * width + x) * 3 + ch]; }
  uint8_t at(int x, int y, int ch) const { return px[((size_t)y * width + x) * 3 + ch]; }
  size_t pixel_count() const { return (size_t)width * height; }
};

// 16-bit single-channel image; used for instance label masks.
struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> px;

  static Gray16Image zeros(int w, int h);
  uint16_t& at(int x, int y) { return px[(size_t)y * width + x]; }
  uint16_t at(int x, int y) const { return px[(size_t)y * width + x]; }
};

RgbImage read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const RgbImage& image);
Gray16Image read_png_gray16(const std::string& path);
void write_png_gray16(const std::string& path, const Gray16Image& image);

// Counter-clockwise rotation by 90 * times degrees; lossless on pixels.
RgbImage rotate90(const RgbImage& image, int times);

RgbImage resize_bilinear(const RgbImage& image, int new_w, int new_h);

// ITU-R 601 luma.
inline double luma601(uint8_t r, uint8_t g, uint8_t b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace cellgan::img
