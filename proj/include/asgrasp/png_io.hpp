#pragma once

#include "asgrasp/types.hpp"

#include <string>

namespace asgrasp {

void write_png_gray(const std::string& path, const ImageU8& img);
ImageU8 read_png_gray(const std::string& path);

void write_png_rgb(const std::string& path, const ImageU8& r, const ImageU8& g, const ImageU8& b);
void read_png_rgb(const std::string& path, ImageU8& r, ImageU8& g, ImageU8& b);

}  // namespace asgrasp
