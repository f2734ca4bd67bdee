#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace prunescope {

/// 8-bit interleaved image, row-major H x W x C.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Single-channel 16-bit map, row-major.
struct Map16 {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> values;

  std::uint16_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Netpbm binary formats: P6 (RGB, maxval 255) and P5 (gray, maxval 65535,
// big-endian samples). Both are written with a fixed header layout so that
// output bytes depend only on the content.
Image8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image8& image);
Map16 read_pgm16(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const Map16& map);

}  // namespace prunescope
