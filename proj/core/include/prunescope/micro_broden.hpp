#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "prunescope/concept_data.hpp"

namespace prunescope {

struct NamedColor {
  std::string name;
  std::array<std::uint8_t, 3> rgb;
};

/// The fixed 11-colour vocabulary used for colour concepts.
const std::vector<NamedColor>& basic_colors();

/// Position in basic_colors() of the nearest colour (squared RGB distance,
/// ties to the lower position).
std::size_t quantize_color(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Shapes the generator can paint; the shape index is the image's class.
const std::vector<std::string>& known_shapes();
const std::vector<std::string>& known_textures();

struct MicroBrodenSpec {
  int height = 16;
  int width = 16;
  std::vector<std::pair<std::string, int>> splits = {{"train", 1000}, {"val", 300}, {"dissect", 200}};
  std::vector<std::string> palette = {"black", "blue",   "brown", "green", "grey", "orange",
                                      "pink",  "purple", "red",   "white", "yellow"};
  /// Colours used for backgrounds; shapes are painted from the remaining
  /// palette colours. Empty: any palette colour may appear anywhere.
  std::vector<std::string> background = {"black", "brown", "grey", "white"};
  std::vector<std::string> shapes = {"square", "disk", "triangle", "cross", "ring"};
  std::vector<std::string> textures = {"plain", "striped", "checkered"};
  /// Shape bounding-box side range in pixels; {0, 0} scales with the image
  /// (0.35 to 0.6 of the shorter side, at least 5).
  std::vector<int> shape_size = {0, 0};
  int noise = 12;  // per-channel uniform perturbation bound, in 8-bit levels
  std::uint64_t seed = 7;

  /// Throws SchemaError naming the offending field.
  void validate() const;
};

/// Renders the dataset in memory. Colour label maps record the palette
/// colour painted at each pixel; object maps the painted shape; texture maps
/// the background pattern. Deterministic in the spec.
ConceptDataset render_micro_broden(const MicroBrodenSpec& spec);

/// render_micro_broden followed by write_concept_dataset.
ConceptDataset generate_micro_broden(const MicroBrodenSpec& spec, const std::filesystem::path& root);

}  // namespace prunescope
