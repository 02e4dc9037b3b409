#include "asgrasp/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace asgrasp {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, int width, int height, int color_type,
               const std::vector<png_bytep>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytep*>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct PngImage {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;  // interleaved
};

PngImage read_png(const std::string& path, int expected_channels) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open for reading: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);

  PngImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = static_cast<int>(png_get_channels(png, info));
  if (img.channels != expected_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png channel mismatch in " + path);
  }
  img.data.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.data.data() + static_cast<size_t>(y) * img.width * img.channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

void write_png_gray(const std::string& path, const ImageU8& img) {
  std::vector<png_bytep> rows(img.rows());
  for (int y = 0; y < img.rows(); ++y)
    rows[y] = const_cast<png_bytep>(img.data() + static_cast<size_t>(y) * img.cols());
  write_png(path, static_cast<int>(img.cols()), static_cast<int>(img.rows()),
            PNG_COLOR_TYPE_GRAY, rows);
}

ImageU8 read_png_gray(const std::string& path) {
  const PngImage img = read_png(path, 1);
  ImageU8 out(img.height, img.width);
  std::copy(img.data.begin(), img.data.end(), out.data());
  return out;
}

void write_png_rgb(const std::string& path, const ImageU8& r, const ImageU8& g, const ImageU8& b) {
  const int h = static_cast<int>(r.rows()), w = static_cast<int>(r.cols());
  std::vector<std::uint8_t> interleaved(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = (static_cast<size_t>(y) * w + x) * 3;
      interleaved[i] = r(y, x);
      interleaved[i + 1] = g(y, x);
      interleaved[i + 2] = b(y, x);
    }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = interleaved.data() + static_cast<size_t>(y) * w * 3;
  write_png(path, w, h, PNG_COLOR_TYPE_RGB, rows);
}

void read_png_rgb(const std::string& path, ImageU8& r, ImageU8& g, ImageU8& b) {
  const PngImage img = read_png(path, 3);
  r.resize(img.height, img.width);
  g.resize(img.height, img.width);
  b.resize(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
      r(y, x) = img.data[i];
      g(y, x) = img.data[i + 1];
      b(y, x) = img.data[i + 2];
    }
}

}  // namespace asgrasp
