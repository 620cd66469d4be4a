#include "slowsem/bmp.hpp"

#include <array>
#include <fstream>

#include "slowsem/errors.hpp"

namespace slowsem {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
  return in[off] | (in[off + 1] << 8) | (in[off + 2] << 16) |
         (static_cast<std::uint32_t>(in[off + 3]) << 24);
}

std::uint16_t get_u16(const std::vector<std::uint8_t>& in, std::size_t off) {
  return static_cast<std::uint16_t>(in[off] | (in[off + 1] << 8));
}

}  // namespace

void write_bmp(const std::filesystem::path& path, const RgbImage& image) {
  const std::uint32_t row_bytes = (static_cast<std::uint32_t>(image.width) * 3 + 3) & ~3u;
  const std::uint32_t data_bytes = row_bytes * image.height;
  std::vector<std::uint8_t> out;
  out.reserve(54 + data_bytes);
  out.push_back('B');
  out.push_back('M');
  put_u32(out, 54 + data_bytes);
  put_u32(out, 0);
  put_u32(out, 54);
  put_u32(out, 40);
  put_u32(out, image.width);
  put_u32(out, image.height);
  put_u16(out, 1);
  put_u16(out, 24);
  put_u32(out, 0);
  put_u32(out, data_bytes);
  put_u32(out, 2835);
  put_u32(out, 2835);
  put_u32(out, 0);
  put_u32(out, 0);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.at(x, y);
      out.push_back(p[2]);
      out.push_back(p[1]);
      out.push_back(p[0]);
    }
    for (std::uint32_t pad = image.width * 3; pad < row_bytes; ++pad) out.push_back(0);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot write image " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

RgbImage read_bmp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("missing image file " + path.string());
  std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 54 || in[0] != 'B' || in[1] != 'M')
    throw IntegrityError("not a BMP file: " + path.string());
  const std::uint32_t offset = get_u32(in, 10);
  const auto width = static_cast<std::int32_t>(get_u32(in, 18));
  const auto raw_height = static_cast<std::int32_t>(get_u32(in, 22));
  if (get_u16(in, 28) != 24 || get_u32(in, 30) != 0)
    throw IntegrityError("unsupported BMP encoding (need uncompressed 24-bit): " + path.string());
  const bool top_down = raw_height < 0;
  const int height = top_down ? -raw_height : raw_height;
  if (width <= 0 || height <= 0) throw IntegrityError("bad BMP dimensions: " + path.string());
  const std::size_t row_bytes = (static_cast<std::size_t>(width) * 3 + 3) & ~std::size_t{3};
  if (in.size() < offset + row_bytes * height)
    throw IntegrityError("truncated BMP file: " + path.string());
  RgbImage image(width, height);
  for (int row = 0; row < height; ++row) {
    const int y = top_down ? row : height - 1 - row;
    const std::uint8_t* src = &in[offset + row * row_bytes];
    for (int x = 0; x < width; ++x) image.set(x, y, src[3 * x + 2], src[3 * x + 1], src[3 * x]);
  }
  return image;
}

}  // namespace slowsem
