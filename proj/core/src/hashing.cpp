#include "prunescope/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>

#include "prunescope/errors.hpp"

namespace prunescope {

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw Error("failed to initialise SHA-256 context");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(impl_->ctx); }

Sha256& Sha256::update(std::span<const std::uint8_t> bytes) {
  EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update(std::string_view text) {
  EVP_DigestUpdate(impl_->ctx, text.data(), text.size());
  return *this;
}

Sha256& Sha256::update_u64(std::uint64_t v) {
  std::array<std::uint8_t, 8> le{};
  for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return update(le);
}

std::string Sha256::hex_digest() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(impl_->ctx, digest.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr);
  return out;
}

std::string sha256_hex(std::string_view bytes) { return Sha256().update(bytes).hex_digest(); }

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex_digest();
}

std::string hash_tensors(const NamedTensorSet& tensors) {
  Sha256 h;
  for (const auto& [name, entry] : tensors) {
    h.update_u64(name.size()).update(name);
    h.update_u64(static_cast<std::uint64_t>(entry.role));
    h.update_u64(entry.value.shape.size());
    for (auto d : entry.value.shape) h.update_u64(static_cast<std::uint64_t>(d));
    // float32 little-endian; every supported target is little-endian (checked in archive.cpp)
    h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(entry.value.ptr()),
                                           entry.value.data.size() * sizeof(float)));
  }
  return h.hex_digest();
}

}  // namespace prunescope
