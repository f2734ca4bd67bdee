#include "prunescope/pnm.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "prunescope/errors.hpp"

namespace prunescope {
namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IngestionError("malformed netpbm header in " + path.string());
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > (1L << 24)) throw IngestionError("netpbm dimension too large in " + path.string());
    c = in.get();
  }
  // exactly one whitespace byte follows the last header field
  if (c == EOF || !std::isspace(c)) throw IngestionError("malformed netpbm header in " + path.string());
  return static_cast<int>(value);
}

std::ifstream open_in(const std::filesystem::path& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  char m[2] = {};
  in.read(m, 2);
  if (!in || m[0] != magic[0] || m[1] != magic[1]) {
    throw IngestionError(path.string() + ": expected netpbm " + magic);
  }
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

Image8 read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path, "P6");
  Image8 img;
  img.width = read_header_int(in, path);
  img.height = read_header_int(in, path);
  int maxval = read_header_int(in, path);
  if (maxval != 255) throw IngestionError(path.string() + ": only maxval 255 is supported");
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IngestionError(path.string() + ": truncated pixel data");
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 3) throw DomainError("PPM output requires 3 channels");
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Map16 read_pgm16(const std::filesystem::path& path) {
  auto in = open_in(path, "P5");
  Map16 map;
  map.width = read_header_int(in, path);
  map.height = read_header_int(in, path);
  int maxval = read_header_int(in, path);
  std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  map.values.resize(n);
  if (maxval < 256) {
    std::vector<std::uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!in) throw IngestionError(path.string() + ": truncated label data");
    for (std::size_t i = 0; i < n; ++i) map.values[i] = raw[i];
  } else {
    std::vector<std::uint8_t> raw(2 * n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IngestionError(path.string() + ": truncated label data");
    for (std::size_t i = 0; i < n; ++i) {
      map.values[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  }
  return map;
}

void write_pgm16(const std::filesystem::path& path, const Map16& map) {
  auto out = open_out(path);
  out << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  std::vector<std::uint8_t> raw(2 * map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    raw[2 * i] = static_cast<std::uint8_t>(map.values[i] >> 8);
    raw[2 * i + 1] = static_cast<std::uint8_t>(map.values[i] & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace prunescope
