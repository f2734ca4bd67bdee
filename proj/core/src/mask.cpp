#include "prunescope/mask.hpp"

#include <json.hpp>

#include "prunescope/archive.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"

namespace fs = std::filesystem;

namespace prunescope {

PruningMask PruningMask::full(const NamedTensorSet& weights) {
  PruningMask mask;
  for (const auto& [name, entry] : weights) {
    if (!is_prunable(entry.role)) continue;
    mask.entries_.emplace(name, Entry{entry.value.shape, std::vector<std::uint8_t>(entry.value.data.size(), 1)});
  }
  return mask;
}

const PruningMask::Entry& PruningMask::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("mask has no tensor '" + name + "'");
  return it->second;
}

PruningMask::Entry& PruningMask::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("mask has no tensor '" + name + "'");
  return it->second;
}

void PruningMask::add(const std::string& name, Entry e) {
  if (static_cast<std::int64_t>(e.keep.size()) != element_count(e.shape)) {
    throw DomainError("mask entry '" + name + "' does not match its shape");
  }
  if (!entries_.emplace(name, std::move(e)).second) throw SchemaError("duplicate mask entry '" + name + "'");
}

std::int64_t PruningMask::kept() const {
  std::int64_t n = 0;
  for (const auto& [name, e] : entries_) {
    for (auto k : e.keep) n += k;
  }
  return n;
}

std::int64_t PruningMask::total() const {
  std::int64_t n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<std::int64_t>(e.keep.size());
  return n;
}

double PruningMask::fraction_remaining() const {
  const auto t = total();
  return t == 0 ? 1.0 : static_cast<double>(kept()) / static_cast<double>(t);
}

bool PruningMask::is_subset_of(const PruningMask& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, e] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end() || it->second.shape != e.shape) return false;
    for (std::size_t i = 0; i < e.keep.size(); ++i) {
      if (e.keep[i] && !it->second.keep[i]) return false;
    }
  }
  return true;
}

void PruningMask::apply(NamedTensorSet& tensors) const {
  for (const auto& [name, e] : entries_) {
    if (!tensors.contains(name)) continue;
    auto& t = tensors.at(name);
    if (t.shape != e.shape) throw SchemaError("mask shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < e.keep.size(); ++i) {
      if (!e.keep[i]) t.data[i] = 0.0f;
    }
  }
}

bool PruningMask::is_applied_to(const NamedTensorSet& tensors) const {
  for (const auto& [name, e] : entries_) {
    if (!tensors.contains(name)) continue;
    const auto& t = tensors.at(name);
    for (std::size_t i = 0; i < e.keep.size(); ++i) {
      if (!e.keep[i] && t.data[i] != 0.0f) return false;
    }
  }
  return true;
}

std::string PruningMask::hash() const {
  Sha256 h;
  h.update_u64(static_cast<std::uint64_t>(round_));
  for (const auto& [name, e] : entries_) {
    h.update_u64(name.size()).update(name);
    for (auto d : e.shape) h.update_u64(static_cast<std::uint64_t>(d));
    h.update(e.keep);
  }
  return h.hex_digest();
}

bool PruningMask::operator==(const PruningMask& other) const {
  if (round_ != other.round_ || entries_.size() != other.entries_.size()) return false;
  auto it = other.entries_.begin();
  for (const auto& [name, e] : entries_) {
    if (name != it->first || e.shape != it->second.shape || e.keep != it->second.keep) return false;
    ++it;
  }
  return true;
}

void write_mask(const fs::path& dir, const PruningMask& mask, const MaskProvenance& provenance) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json manifest;
  manifest["round"] = mask.round();
  manifest["fraction_remaining"] = mask.fraction_remaining();
  manifest["kept"] = mask.kept();
  manifest["total"] = mask.total();
  manifest["config_hash"] = provenance.config_hash;
  manifest["parent_mask_hash"] = provenance.parent_hash;
  manifest["mask_hash"] = mask.hash();
  auto& tensors = manifest["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, e] : mask.entries()) {
    std::string bits;
    bits.push_back(static_cast<char>(e.shape.size()));
    for (auto d : e.shape) {
      for (int i = 0; i < 8; ++i) bits.push_back(static_cast<char>((static_cast<std::uint64_t>(d) >> (8 * i)) & 0xFF));
    }
    std::vector<std::uint8_t> packed((e.keep.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < e.keep.size(); ++i) {
      if (e.keep[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    bits.append(reinterpret_cast<const char*>(packed.data()), packed.size());
    write_file_atomic(dir / (name + ".bits"), bits);
    tensors.push_back(name);
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

PruningMask read_mask(const fs::path& dir, MaskProvenance* provenance) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError((dir / "manifest.json").string() + ": " + e.what());
  }
  PruningMask mask;
  try {
    mask.set_round(manifest.at("round").get<int>());
    for (const auto& name : manifest.at("tensors")) {
      const auto path = dir / (name.get<std::string>() + ".bits");
      const std::string bits = read_file(path);
      if (bits.empty()) throw IngestionError(path.string() + ": empty bitset");
      const std::size_t rank = static_cast<unsigned char>(bits[0]);
      if (bits.size() < 1 + 8 * rank) throw IngestionError(path.string() + ": truncated bitset header");
      Shape shape(rank);
      for (std::size_t r = 0; r < rank; ++r) {
        std::uint64_t d = 0;
        for (int i = 0; i < 8; ++i) d |= static_cast<std::uint64_t>(static_cast<unsigned char>(bits[1 + 8 * r + i])) << (8 * i);
        shape[r] = static_cast<std::int64_t>(d);
      }
      const auto n = static_cast<std::size_t>(element_count(shape));
      const std::size_t offset = 1 + 8 * rank;
      if (bits.size() != offset + (n + 7) / 8) throw IngestionError(path.string() + ": bitset size mismatch");
      PruningMask::Entry e{shape, std::vector<std::uint8_t>(n)};
      for (std::size_t i = 0; i < n; ++i) {
        e.keep[i] = (static_cast<unsigned char>(bits[offset + i / 8]) >> (i % 8)) & 1u;
      }
      mask.add(name.get<std::string>(), std::move(e));
    }
    if (manifest.at("mask_hash").get<std::string>() != mask.hash()) {
      throw DataError(dir.string() + ": mask content does not match manifest hash");
    }
    if (provenance) {
      provenance->config_hash = manifest.at("config_hash").get<std::string>();
      provenance->parent_hash = manifest.at("parent_mask_hash").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError((dir / "manifest.json").string() + ": " + e.what());
  }
  return mask;
}

}  // namespace prunescope
