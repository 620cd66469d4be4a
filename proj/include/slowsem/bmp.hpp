#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace slowsem {

// 8-bit RGB raster, row-major, interleaved channels (row 0 is the top row).
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::uint8_t* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  bool operator==(const RgbImage&) const = default;
};

// Uncompressed 24-bit BMP. Throws IntegrityError on unreadable or unsupported files.
void write_bmp(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_bmp(const std::filesystem::path& path);

}  // namespace slowsem
