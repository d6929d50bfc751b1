#pragma once

#include "difftex/geometry.hpp"
#include "difftex/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace difftex {

/// Reads any PNG as 8-bit RGB; channels become k/255.
inline Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw InputError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InputError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Image out(int(img.width), int(img.height));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Vec3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]) / 255.0;
  }
  return out;
}

inline std::uint8_t to_byte(double v) {
  return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Writes 8-bit RGB, rounding each channel to the nearest level.
inline void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> buf(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) buf[3 * i + ch] = to_byte(image[i][ch]);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(image.width);
  img.height = png_uint_32(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace difftex
