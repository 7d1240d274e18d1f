#include "sslam/io/png_io.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <png.h>

namespace sslam {

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path,
                       const png_image& image) {
  throw std::runtime_error(what + " " + path + ": " + image.message);
}

}  // namespace

ImageRGB load_color_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail("failed to read", path, image);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    fail("failed to decode", path, image);
  }
  ImageRGB out(static_cast<int>(image.height), static_cast<int>(image.width));
  size_t k = 0;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out.r(y, x) = buffer[k++] / 255.0;
      out.g(y, x) = buffer[k++] / 255.0;
      out.b(y, x) = buffer[k++] / 255.0;
    }
  }
  return out;
}

void save_color_png(const std::string& path, const ImageRGB& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  size_t k = 0;
  const auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::min(std::max(v, 0.0), 1.0) * 255.0));
  };
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      buffer[k++] = to_byte(img.r(y, x));
      buffer[k++] = to_byte(img.g(y, x));
      buffer[k++] = to_byte(img.b(y, x));
    }
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    fail("failed to write", path, image);
  }
}

Eigen::ArrayXXd load_depth_png(const std::string& path, double unit) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail("failed to read", path, image);
  }
  image.format = PNG_FORMAT_LINEAR_Y;
  std::vector<std::uint16_t> buffer(PNG_IMAGE_SIZE(image) / 2);
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    fail("failed to decode", path, image);
  }
  Eigen::ArrayXXd out(static_cast<int>(image.height), static_cast<int>(image.width));
  size_t k = 0;
  for (int y = 0; y < out.rows(); ++y) {
    for (int x = 0; x < out.cols(); ++x) {
      out(y, x) = buffer[k++] * unit;
    }
  }
  return out;
}

void save_depth_png(const std::string& path, const Eigen::ArrayXXd& depth, double unit) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(depth.cols());
  image.height = static_cast<png_uint_32>(depth.rows());
  image.format = PNG_FORMAT_LINEAR_Y;
  std::vector<std::uint16_t> buffer(static_cast<size_t>(depth.size()));
  size_t k = 0;
  for (int y = 0; y < depth.rows(); ++y) {
    for (int x = 0; x < depth.cols(); ++x) {
      const double units = depth(y, x) > 0 ? std::round(depth(y, x) / unit) : 0.0;
      buffer[k++] = static_cast<std::uint16_t>(std::min(std::max(units, 0.0), 65535.0));
    }
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    fail("failed to write", path, image);
  }
}

void save_gray_png(const std::string& path, const Eigen::ArrayXXd& values) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(values.cols());
  image.height = static_cast<png_uint_32>(values.rows());
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(static_cast<size_t>(values.size()));
  size_t k = 0;
  for (int y = 0; y < values.rows(); ++y) {
    for (int x = 0; x < values.cols(); ++x) {
      const double v = std::min(std::max(values(y, x), 0.0), 1.0);
      buffer[k++] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    fail("failed to write", path, image);
  }
}

}  // namespace sslam
