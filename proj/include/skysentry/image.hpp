#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace skysentry {

/// Non-owning, strided view of an 8-bit luminance raster.
struct GrayView {
  const std::uint8_t* data = nullptr;
  int width = 0;
  int height = 0;
  std::ptrdiff_t stride = 0;  // elements between rows

  std::uint8_t at(int x, int y) const { return data[y * stride + x]; }
  const std::uint8_t* row(int y) const { return data + y * stride; }

  /// Sub-rectangle; caller guarantees it lies inside this view.
  GrayView crop(int x, int y, int w, int h) const {
    return {data + y * stride + x, w, h, stride};
  }
};

/// Owning 8-bit raster, row-major, tightly packed.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  GrayView view() const { return {pixels.data(), width, height, width}; }

  /// Copies a view into a new image.
  static GrayImage from_view(const GrayView& v);
};

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, const GrayView& view);
GrayImage read_pgm(const std::string& path);

}  // namespace skysentry
