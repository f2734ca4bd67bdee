#include "prunescope/micro_broden.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "prunescope/errors.hpp"

namespace prunescope {
namespace {

std::size_t find_named(const std::vector<std::string>& names, const std::string& n) {
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
}

// Uniform integer in [lo, hi] from raw engine output; std::uniform_int_distribution
// is implementation-defined, this is not.
int uniform(std::mt19937_64& rng, int lo, int hi) {
  auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

bool inside_shape(const std::string& shape, double dy, double dx, double size) {
  const double r = size / 2.0;
  const double d2 = dy * dy + dx * dx;
  if (shape == "square") return std::abs(dy) <= r - 0.5 && std::abs(dx) <= r - 0.5;
  if (shape == "disk") return d2 <= r * r;
  if (shape == "ring") {
    double inner = r - std::max(1.5, size / 4.0);
    return d2 <= r * r && d2 > inner * inner;
  }
  if (shape == "cross") {
    double arm = std::max(1.0, size / 6.0);
    return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
  }
  if (shape == "frame") {
    double inner = r - 0.5 - std::max(1.5, size / 4.0);
    bool outer = std::abs(dy) <= r - 0.5 && std::abs(dx) <= r - 0.5;
    return outer && !(std::abs(dy) <= inner && std::abs(dx) <= inner);
  }
  if (shape == "diamond") return std::abs(dy) + std::abs(dx) <= r;
  if (shape == "x") {
    double arm = std::max(1.0, size / 6.0) * 1.4142;
    return std::abs(dy) <= r && std::abs(dx) <= r && (std::abs(dx - dy) <= arm || std::abs(dx + dy) <= arm);
  }
  if (shape == "hbar") return std::abs(dy) <= std::max(1.0, size / 5.0) && std::abs(dx) <= r;
  if (shape == "vbar") return std::abs(dx) <= std::max(1.0, size / 5.0) && std::abs(dy) <= r;
  if (shape == "triangle") {
    // apex up; half-width grows linearly from the top row to the bottom row
    double t = (dy + r) / size;  // 0 at top, 1 at bottom
    if (t < 0.0 || t > 1.0) return false;
    return std::abs(dx) <= t * r + 0.25;
  }
  throw SchemaError("unknown shape '" + shape + "'");
}

}  // namespace

const std::vector<NamedColor>& basic_colors() {
  static const std::vector<NamedColor> kColors = {
      {"black", {0, 0, 0}},        {"blue", {30, 60, 220}},     {"brown", {130, 75, 30}},
      {"green", {40, 170, 50}},    {"grey", {128, 128, 128}},   {"orange", {250, 140, 20}},
      {"pink", {250, 160, 200}},   {"purple", {130, 40, 170}},  {"red", {210, 30, 30}},
      {"white", {255, 255, 255}},  {"yellow", {240, 230, 40}},
  };
  return kColors;
}

std::size_t quantize_color(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const auto& colors = basic_colors();
  std::size_t best = 0;
  int best_d = -1;
  for (std::size_t i = 0; i < colors.size(); ++i) {
    int dr = r - colors[i].rgb[0], dg = g - colors[i].rgb[1], db = b - colors[i].rgb[2];
    int d = dr * dr + dg * dg + db * db;
    if (best_d < 0 || d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

const std::vector<std::string>& known_shapes() {
  static const std::vector<std::string> kShapes = {"square", "disk", "triangle", "cross", "ring",
                                                     "frame", "diamond", "x", "hbar", "vbar"};
  return kShapes;
}

const std::vector<std::string>& known_textures() {
  static const std::vector<std::string> kTextures = {"plain", "striped", "checkered"};
  return kTextures;
}

void MicroBrodenSpec::validate() const {
  if (height < 8 || width < 8) throw SchemaError("micro_broden.image_size: both dimensions must be >= 8");
  if (splits.empty()) throw SchemaError("micro_broden.splits: at least one split required");
  int total = 0;
  std::set<std::string> split_names;
  for (const auto& [name, n] : splits) {
    if (name.empty() || !split_names.insert(name).second) {
      throw SchemaError("micro_broden.splits: split names must be unique and non-empty");
    }
    if (n < 0) throw SchemaError("micro_broden.splits." + name + ": negative image count");
    total += n;
  }
  if (total <= 0) throw SchemaError("micro_broden.splits: image count must be > 0");
  if (palette.empty()) throw SchemaError("micro_broden.palette: must be non-empty");
  std::set<std::string> seen;
  for (const auto& c : palette) {
    bool known = std::any_of(basic_colors().begin(), basic_colors().end(),
                             [&](const NamedColor& nc) { return nc.name == c; });
    if (!known) throw SchemaError("micro_broden.palette: unknown colour '" + c + "'");
    if (!seen.insert(c).second) throw SchemaError("micro_broden.palette: duplicate colour '" + c + "'");
  }
  if (shapes.empty()) throw SchemaError("micro_broden.shapes: must be non-empty");
  for (const auto& s : shapes) {
    if (find_named(known_shapes(), s) == known_shapes().size()) {
      throw SchemaError("micro_broden.shapes: unknown shape '" + s + "'");
    }
  }
  if (textures.empty()) throw SchemaError("micro_broden.textures: must be non-empty");
  bool two_tone = false;
  for (const auto& t : textures) {
    if (find_named(known_textures(), t) == known_textures().size()) {
      throw SchemaError("micro_broden.textures: unknown texture '" + t + "'");
    }
    two_tone = two_tone || t != "plain";
  }
  std::set<std::string> bg_seen;
  for (const auto& c : background) {
    if (find_named(palette, c) == palette.size()) {
      throw SchemaError("micro_broden.background: colour '" + c + "' is not in the palette");
    }
    if (!bg_seen.insert(c).second) throw SchemaError("micro_broden.background: duplicate colour '" + c + "'");
  }
  if (background.empty()) {
    std::size_t needed = two_tone ? 3 : 2;
    if (palette.size() < needed) {
      throw SchemaError("micro_broden.palette: needs at least " + std::to_string(needed) +
                        " colours for the configured textures");
    }
  } else {
    if (background.size() >= palette.size()) {
      throw SchemaError("micro_broden.background: at least one palette colour must remain for shapes");
    }
    if (two_tone && background.size() < 2) {
      throw SchemaError("micro_broden.background: striped and checkered textures need two background colours");
    }
  }
  if (shape_size.size() != 2) throw SchemaError("micro_broden.shape_size: expected [min, max]");
  if (shape_size != std::vector<int>{0, 0}) {
    if (shape_size[0] < 3 || shape_size[1] < shape_size[0] || shape_size[1] > std::min(height, width)) {
      throw SchemaError("micro_broden.shape_size: need 3 <= min <= max <= image side");
    }
  }
  if (noise < 0 || noise > 20) throw SchemaError("micro_broden.noise: must be in [0, 20]");
}

ConceptDataset render_micro_broden(const MicroBrodenSpec& spec) {
  spec.validate();

  // Concept ids: palette colours (in basic-colour order), then shapes, then textures.
  std::vector<Concept> concepts;
  std::vector<std::size_t> palette_basic;  // palette position -> basic colour position
  for (std::size_t b = 0; b < basic_colors().size(); ++b) {
    if (find_named(spec.palette, basic_colors()[b].name) < spec.palette.size()) palette_basic.push_back(b);
  }
  for (auto b : palette_basic) {
    concepts.push_back({static_cast<int>(concepts.size()) + 1, basic_colors()[b].name, Category::Color});
  }
  const int first_shape_id = static_cast<int>(concepts.size()) + 1;
  for (const auto& s : spec.shapes) concepts.push_back({static_cast<int>(concepts.size()) + 1, s, Category::Object});
  const int first_texture_id = static_cast<int>(concepts.size()) + 1;
  for (const auto& t : spec.textures) {
    concepts.push_back({static_cast<int>(concepts.size()) + 1, t, Category::Texture});
  }
  ConceptIndex index(std::move(concepts), {Category::Color, Category::Object, Category::Texture});

  const int h = spec.height, w = spec.width;
  const int npal = static_cast<int>(palette_basic.size());
  int min_size = std::max(5, static_cast<int>(std::lround(0.35 * std::min(h, w))));
  int max_size = std::max(min_size, static_cast<int>(std::lround(0.6 * std::min(h, w))));
  if (spec.shape_size[0] > 0) {
    min_size = spec.shape_size[0];
    max_size = spec.shape_size[1];
  }

  // Palette positions (index into palette_basic) usable for each role.
  std::vector<int> all_positions, bg_positions, fg_positions;
  for (int i = 0; i < npal; ++i) {
    const auto& name = basic_colors()[palette_basic[static_cast<std::size_t>(i)]].name;
    all_positions.push_back(i);
    if (find_named(spec.background, name) < spec.background.size()) {
      bg_positions.push_back(i);
    } else {
      fg_positions.push_back(i);
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<LabeledImage> images;
  int counter = 0;
  for (const auto& [split, count] : spec.splits) {
    for (int i = 0; i < count; ++i, ++counter) {
      LabeledImage li;
      li.image_id = "img_" + std::to_string(100000 + counter).substr(1);
      li.split = split;

      const int shape = uniform(rng, 0, static_cast<int>(spec.shapes.size()) - 1);
      const int texture = uniform(rng, 0, static_cast<int>(spec.textures.size()) - 1);
      const bool two_tone = spec.textures[texture] != "plain";
      // distinct palette positions: background, secondary background, foreground
      const auto& bg_pool = bg_positions.empty() ? all_positions : bg_positions;
      const int nbg = static_cast<int>(bg_pool.size());
      const int bg_pick = uniform(rng, 0, nbg - 1);
      const int bg = bg_pool[static_cast<std::size_t>(bg_pick)];
      int bg2 = bg;
      if (two_tone) {
        int pick2 = uniform(rng, 0, nbg - 2);
        if (pick2 >= bg_pick) ++pick2;
        bg2 = bg_pool[static_cast<std::size_t>(pick2)];
      }
      const auto& fg_pool = bg_positions.empty() ? all_positions : fg_positions;
      int fg;
      do {
        fg = fg_pool[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(fg_pool.size()) - 1))];
      } while (fg == bg || fg == bg2);
      const int size = uniform(rng, min_size, max_size);
      const int y0 = uniform(rng, 0, h - size);
      const int x0 = uniform(rng, 0, w - size);
      const int phase = uniform(rng, 0, 1);
      const bool vertical = uniform(rng, 0, 1) == 1;

      Map16 color{h, w, std::vector<std::uint16_t>(static_cast<std::size_t>(h) * w, 0)};
      Map16 object = color;
      Map16 tex = color;
      li.image = Image8{h, w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3)};
      const double cy = y0 + (size - 1) / 2.0;
      const double cx = x0 + (size - 1) / 2.0;

      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          int pal;
          if (inside_shape(spec.shapes[shape], y - cy, x - cx, size)) {
            pal = fg;
            object.values[p] = static_cast<std::uint16_t>(first_shape_id + shape);
          } else {
            bool second = false;
            const auto& t = spec.textures[texture];
            if (t == "striped") second = (((vertical ? x : y) / 2) + phase) % 2 == 1;
            if (t == "checkered") second = ((y / 2) + (x / 2) + phase) % 2 == 1;
            pal = second ? bg2 : bg;
            tex.values[p] = static_cast<std::uint16_t>(first_texture_id + texture);
          }
          color.values[p] = static_cast<std::uint16_t>(pal + 1);
          const auto& rgb = basic_colors()[palette_basic[static_cast<std::size_t>(pal)]].rgb;
          for (int c = 0; c < 3; ++c) {
            int v = rgb[c] + uniform(rng, -spec.noise, spec.noise);
            li.image.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
          }
        }
      }
      li.label_maps.emplace(Category::Color, std::move(color));
      li.label_maps.emplace(Category::Object, std::move(object));
      li.label_maps.emplace(Category::Texture, std::move(tex));
      li.class_label = shape;
      images.push_back(std::move(li));
    }
  }
  return ConceptDataset(std::move(index), std::move(images));
}

ConceptDataset generate_micro_broden(const MicroBrodenSpec& spec, const std::filesystem::path& root) {
  auto dataset = render_micro_broden(spec);
  write_concept_dataset(dataset, root);
  return dataset;
}

}  // namespace prunescope
