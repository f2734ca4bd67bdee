#include "prunescope/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prunescope/errors.hpp"

namespace prunescope {
namespace {

constexpr char kMagic[4] = {'P', 'S', 'N', 'T'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IngestionError(origin_ + ": truncated archive");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
  const std::string& origin_;
};

}  // namespace

std::string encode_archive(const NamedTensorSet& tensors, const ArchiveManifest& manifest) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(manifest.format_version));
  nlohmann::ordered_json m;
  m["format_version"] = manifest.format_version;
  m["epoch"] = manifest.epoch;
  m["spec_hash"] = manifest.spec_hash;
  m["rng_state"] = manifest.rng_state;
  const std::string mj = m.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mj.size()));
  out += mj;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, entry] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(entry.role));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(entry.value.shape.size()));
    for (auto d : entry.value.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (float v : entry.value.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Archive decode_archive(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.take(4) != std::string_view(kMagic, 4)) throw IngestionError(origin + ": not a tensor archive");
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveFormatVersion) {
    throw SchemaError(origin + ": unsupported archive version " + std::to_string(version));
  }
  Archive archive;
  const auto mlen = r.get<std::uint32_t>();
  try {
    auto m = nlohmann::json::parse(r.take(mlen));
    archive.manifest.format_version = m.at("format_version").get<int>();
    archive.manifest.epoch = m.at("epoch").get<int>();
    archive.manifest.spec_hash = m.at("spec_hash").get<std::string>();
    archive.manifest.rng_state = m.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(origin + ": bad archive manifest: " + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name(r.take(r.get<std::uint32_t>()));
    const auto role = r.get<std::uint8_t>();
    if (role > static_cast<std::uint8_t>(TensorRole::NormRunningVar)) {
      throw SchemaError(origin + ": tensor '" + name + "' has unknown role");
    }
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(r.get<std::uint64_t>());
    Tensor value(shape);
    for (auto& v : value.data) v = std::bit_cast<float>(r.get<std::uint32_t>());
    archive.tensors.add(name, static_cast<TensorRole>(role), std::move(value));
  }
  if (!r.done()) throw IngestionError(origin + ": trailing bytes after archive");
  return archive;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_archive(const std::filesystem::path& path, const NamedTensorSet& tensors,
                   const ArchiveManifest& manifest) {
  write_file_atomic(path, encode_archive(tensors, manifest));
}

Archive read_archive(const std::filesystem::path& path) { return decode_archive(read_file(path), path.string()); }

}  // namespace prunescope
