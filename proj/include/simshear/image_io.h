#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "simshear/sensor_models.h"

namespace simshear {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit grayscale PNG; values are clamped to [0, 1] and rounded.
void write_png_gray(const std::filesystem::path& path, const ImageArray& values);
ImageArray read_png_gray(const std::filesystem::path& path);

/// Row-major interleaved RGB buffer.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255) : width(w), height(h), data(3 * w * h, fill) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::uint8_t* p = &data[3 * (static_cast<size_t>(y) * width + x)];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Value quantized the way write_png_gray stores it.
inline float quantize_8bit(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<float>(static_cast<int>(c * 255.0f + 0.5f)) / 255.0f;
}

}  // namespace simshear
