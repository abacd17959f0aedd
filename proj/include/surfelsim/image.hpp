#ifndef SURFELSIM_IMAGE_HPP
#define SURFELSIM_IMAGE_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "surfelsim/error.hpp"

namespace surfelsim {

using Rgb8 = std::array<std::uint8_t, 3>;

/// Row-major, interleaved multi-channel image.
template <typename T, int Channels>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * Channels, fill) {}

  bool empty() const { return width == 0 || height == 0; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  T& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * Channels + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * Channels + c];
  }

  bool operator==(const Image&) const = default;
};

using RgbImage = Image<std::uint8_t, 3>;
using GrayImage = Image<std::uint8_t, 1>;
using Gray16Image = Image<std::uint16_t, 1>;
using FloatImage = Image<float, 1>;

inline Rgb8 pixel_rgb(const RgbImage& img, int x, int y) {
  return {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
}

namespace detail {

template <typename T, int C>
Image<T, C> read_png_as(const std::filesystem::path& path, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw Error(ErrorKind::kFormat, "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  Image<T, C> out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::kFormat, "cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

template <typename T, int C>
void write_png_as(const std::filesystem::path& path, const Image<T, C>& img, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr)) {
    throw Error(ErrorKind::kFormat, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace detail

inline RgbImage read_png_rgb(const std::filesystem::path& path) {
  return detail::read_png_as<std::uint8_t, 3>(path, PNG_FORMAT_RGB);
}
inline GrayImage read_png_gray(const std::filesystem::path& path) {
  return detail::read_png_as<std::uint8_t, 1>(path, PNG_FORMAT_GRAY);
}
// 16-bit data goes through the "linear" formats, which libpng stores verbatim.
inline Gray16Image read_png_gray16(const std::filesystem::path& path) {
  return detail::read_png_as<std::uint16_t, 1>(path, PNG_FORMAT_LINEAR_Y);
}

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::write_png_as(path, img, PNG_FORMAT_RGB);
}
inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  detail::write_png_as(path, img, PNG_FORMAT_GRAY);
}
inline void write_png(const std::filesystem::path& path, const Gray16Image& img) {
  detail::write_png_as(path, img, PNG_FORMAT_LINEAR_Y);
}

}  // namespace surfelsim

#endif  // SURFELSIM_IMAGE_HPP
