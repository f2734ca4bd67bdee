#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunescope/network.hpp"

namespace prunescope {

/// CIFAR-style residual network: 3x3 stem, stages of basic blocks (the first
/// block of every stage after the first halves the resolution), global average
/// pooling and a linear classifier.
struct ModelSpec {
  int in_channels = 3;
  int input_height = 16;
  int input_width = 16;
  std::vector<int> widths = {16, 32, 64};
  std::vector<int> blocks = {3, 3, 3};
  int num_classes = 5;
  /// Empty selects every block output of the final stage.
  std::vector<std::string> dissection_layers;

  /// Throws ConstructionError on inconsistent settings.
  void validate() const;
  std::vector<std::string> block_names() const;
  std::vector<std::string> resolved_dissection_layers() const;
  std::string canonical_json() const;
  std::string hash() const;
};

/// Stage s (1-based), block b (0-based) is named "stage<s>.block<b>".
std::string block_name(int stage, int block);

Network build_model(const ModelSpec& spec, std::uint64_t seed);

}  // namespace prunescope
