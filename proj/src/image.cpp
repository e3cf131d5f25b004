#include "cellgan/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace cellgan::img {

RgbImage RgbImage::filled(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  RgbImage im;
  im.width = w;
  im.height = h;
  im.px.resize((size_t)w * h * 3);
  for (size_t i = 0; i < im.px.size(); i += 3) {
    im.px[i] = r;
    im.px[i + 1] = g;
    im.px[i + 2] = b;
  }
  return im;
}

Gray16Image Gray16Image::zeros(int w, int h) {
  Gray16Image im;
  im.width = w;
  im.height = h;
  im.px.assign((size_t)w * h, 0);
  return im;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

RgbImage read_png_rgb(const std::string& path) {
  FilePtr fp(fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: reader allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: failed to decode " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // normalize everything to 8-bit RGB
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  RgbImage im;
  im.width = (int)png_get_image_width(png, info);
  im.height = (int)png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != (size_t)im.width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: unexpected row layout in " + path);
  }
  im.px.resize((size_t)im.width * im.height * 3);
  std::vector<png_bytep> rows((size_t)im.height);
  for (int y = 0; y < im.height; ++y) rows[(size_t)y] = im.px.data() + (size_t)y * im.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

void write_png_rgb(const std::string& path, const RgbImage& image) {
  FilePtr fp(fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("png: cannot open for writing " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: writer allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: failed to encode " + path);
  }
  png_init_io(png, fp.get());
  // fixed encoder settings keep outputs byte-identical across runs
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, (png_uint_32)image.width, (png_uint_32)image.height, 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows((size_t)image.height);
  for (int y = 0; y < image.height; ++y)
    rows[(size_t)y] = const_cast<png_bytep>(image.px.data() + (size_t)y * image.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Gray16Image read_png_gray16(const std::string& path) {
  FilePtr fp(fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: reader allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: failed to decode " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY)
    throw DataError("png: expected grayscale mask in " + path);
  if (png_get_bit_depth(png, info) < 16) png_set_expand_16(png);
  png_set_swap(png);  // stored big-endian per the PNG spec
  png_read_update_info(png, info);

  Gray16Image im;
  im.width = (int)png_get_image_width(png, info);
  im.height = (int)png_get_image_height(png, info);
  im.px.resize((size_t)im.width * im.height);
  std::vector<png_bytep> rows((size_t)im.height);
  for (int y = 0; y < im.height; ++y)
    rows[(size_t)y] = reinterpret_cast<png_bytep>(im.px.data() + (size_t)y * im.width);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

void write_png_gray16(const std::string& path, const Gray16Image& image) {
  FilePtr fp(fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("png: cannot open for writing " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: writer allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: failed to encode " + path);
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, (png_uint_32)image.width, (png_uint_32)image.height, 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);
  std::vector<png_bytep> rows((size_t)image.height);
  for (int y = 0; y < image.height; ++y)
    rows[(size_t)y] =
        reinterpret_cast<png_bytep>(const_cast<uint16_t*>(image.px.data() + (size_t)y * image.width));
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage rotate90(const RgbImage& image, int times) {
  times = ((times % 4) + 4) % 4;
  if (times == 0) return image;
  RgbImage out;
  const int w = image.width, h = image.height;
  if (times == 2) {
    out.width = w;
    out.height = h;
    out.px.resize(image.px.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out.at(w - 1 - x, h - 1 - y, c) = image.at(x, y, c);
    return out;
  }
  out.width = h;
  out.height = w;
  out.px.resize(image.px.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        if (times == 1)
          out.at(y, w - 1 - x, c) = image.at(x, y, c);  // 90 degrees CCW
        else
          out.at(h - 1 - y, x, c) = image.at(x, y, c);  // 270 degrees CCW
      }
  return out;
}

RgbImage resize_bilinear(const RgbImage& image, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw DataError("resize: target size must be positive");
  RgbImage out;
  out.width = new_w;
  out.height = new_h;
  out.px.resize((size_t)new_w * new_h * 3);
  const double sx = (double)image.width / new_w;
  const double sy = (double)image.height / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = (int)std::floor(fy);
    const double wy = fy - y0;
    int y1 = y0 + 1;
    y0 = std::max(0, std::min(image.height - 1, y0));
    y1 = std::max(0, std::min(image.height - 1, y1));
    for (int x = 0; x < new_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = (int)std::floor(fx);
      const double wx = fx - x0;
      int x1 = x0 + 1;
      x0 = std::max(0, std::min(image.width - 1, x0));
      x1 = std::max(0, std::min(image.width - 1, x1));
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * image.at(x0, y0, c) + wx * image.at(x1, y0, c)) +
                         wy * ((1 - wx) * image.at(x0, y1, c) + wx * image.at(x1, y1, c));
        out.at(x, y, c) = (uint8_t)std::lround(std::min(255.0, std::max(0.0, v)));
      }
    }
  }
  return out;
}

}  // namespace cellgan::img
