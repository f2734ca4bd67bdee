#include "prunescope/resnet.hpp"

#include <algorithm>

#include <json.hpp>

#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"

namespace prunescope {

std::string block_name(int stage, int block) {
  return "stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

void ModelSpec::validate() const {
  if (in_channels <= 0 || input_height <= 0 || input_width <= 0) {
    throw ConstructionError("model: input size must be positive");
  }
  if (widths.empty() || widths.size() != blocks.size()) {
    throw ConstructionError("model: widths and blocks must be non-empty and of equal length");
  }
  for (auto w : widths) {
    if (w <= 0) throw ConstructionError("model.widths: must be positive");
  }
  for (auto b : blocks) {
    if (b <= 0) throw ConstructionError("model.blocks: must be positive");
  }
  if (num_classes < 2) throw ConstructionError("model.num_classes: must be >= 2");
  int h = input_height, w = input_width;
  for (std::size_t s = 1; s < widths.size(); ++s) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  if (h < 1 || w < 1) throw ConstructionError("model: input too small for the number of stages");
  auto names = block_names();
  for (const auto& d : dissection_layers) {
    if (std::find(names.begin(), names.end(), d) == names.end()) {
      throw ConstructionError("model.dissection_layers: '" + d + "' is not a block of this architecture");
    }
  }
}

std::vector<std::string> ModelSpec::block_names() const {
  std::vector<std::string> names;
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    for (int b = 0; b < blocks[s]; ++b) names.push_back(block_name(static_cast<int>(s) + 1, b));
  }
  return names;
}

std::vector<std::string> ModelSpec::resolved_dissection_layers() const {
  if (!dissection_layers.empty()) return dissection_layers;
  std::vector<std::string> names;
  const int last = static_cast<int>(blocks.size());
  for (int b = 0; b < blocks.back(); ++b) names.push_back(block_name(last, b));
  return names;
}

std::string ModelSpec::canonical_json() const {
  nlohmann::ordered_json j;
  j["family"] = "resnet-basic";
  j["in_channels"] = in_channels;
  j["input_height"] = input_height;
  j["input_width"] = input_width;
  j["widths"] = widths;
  j["blocks"] = blocks;
  j["num_classes"] = num_classes;
  j["dissection_layers"] = resolved_dissection_layers();
  return j.dump();
}

std::string ModelSpec::hash() const { return sha256_hex(canonical_json()); }

Network build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<std::shared_ptr<const Layer>> layers;
  const int w0 = spec.widths.front();
  layers.push_back(std::make_shared<Conv2d>("stem.conv", spec.in_channels, w0, 3, 1, 1, false));
  layers.push_back(std::make_shared<BatchNorm2d>("stem.bn", w0));
  layers.push_back(std::make_shared<ReLU>("stem.relu"));
  int in = w0;
  for (std::size_t s = 0; s < spec.widths.size(); ++s) {
    for (int b = 0; b < spec.blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      layers.push_back(
          std::make_shared<BasicBlock>(block_name(static_cast<int>(s) + 1, b), in, spec.widths[s], stride));
      in = spec.widths[s];
    }
  }
  layers.push_back(std::make_shared<GlobalAvgPool>("pool"));
  layers.push_back(std::make_shared<Linear>("fc", in, spec.num_classes));

  Network net(std::move(layers), {spec.in_channels, spec.input_height, spec.input_width},
              spec.resolved_dissection_layers(), spec.canonical_json());
  net.initialize(seed);
  return net;
}

}  // namespace prunescope
