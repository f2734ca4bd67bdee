#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prunescope/tensor.hpp"

namespace prunescope {

/// Keep (1) / drop (0) flags over every prunable tensor of a model, plus the
/// pruning round that produced them.
class PruningMask {
 public:
  struct Entry {
    Shape shape;
    std::vector<std::uint8_t> keep;
  };

  PruningMask() = default;
  /// All-ones mask over the prunable tensors of `weights`, round 0.
  static PruningMask full(const NamedTensorSet& weights);

  int round() const { return round_; }
  void set_round(int r) { round_ = r; }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  bool covers(const std::string& name) const { return entries_.count(name) != 0; }
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);
  void add(const std::string& name, Entry e);

  std::int64_t kept() const;
  std::int64_t total() const;
  double fraction_remaining() const;

  /// Every kept position here is also kept in `other` (same tensors, same shapes).
  bool is_subset_of(const PruningMask& other) const;
  /// Zeroes dropped positions in every covered tensor present in `tensors`.
  void apply(NamedTensorSet& tensors) const;
  /// True when every dropped position holds exactly zero.
  bool is_applied_to(const NamedTensorSet& tensors) const;

  std::string hash() const;

  bool operator==(const PruningMask& other) const;

 private:
  int round_ = 0;
  std::map<std::string, Entry> entries_;
};

struct MaskProvenance {
  std::string config_hash;
  std::string parent_hash;
};

/// One `<tensor>.bits` file per tensor plus `manifest.json` with round,
/// fraction_remaining, config hash and parent-mask hash.
void write_mask(const std::filesystem::path& dir, const PruningMask& mask, const MaskProvenance& provenance);
PruningMask read_mask(const std::filesystem::path& dir, MaskProvenance* provenance = nullptr);

}  // namespace prunescope
