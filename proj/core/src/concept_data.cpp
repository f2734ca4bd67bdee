#include "prunescope/concept_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>

#include "prunescope/csv.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"

namespace fs = std::filesystem;

namespace prunescope {
namespace {

constexpr std::array<std::pair<Category, const char*>, 6> kCategoryNames = {{
    {Category::Color, "color"},
    {Category::Texture, "texture"},
    {Category::Material, "material"},
    {Category::Part, "part"},
    {Category::Object, "object"},
    {Category::Scene, "scene"},
}};

int parse_int(std::string_view text, const std::string& where) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw SchemaError(where + ": expected integer, got '" + std::string(text) + "'");
  }
  return value;
}

// Label-map geometry relative to the image: equal size or a single integer
// downscale factor shared by both axes.
void check_label_geometry(int ih, int iw, int sh, int sw, const std::string& where) {
  if (sh <= 0 || sw <= 0 || ih <= 0 || iw <= 0) throw SchemaError(where + ": non-positive dimensions");
  if (ih % sh != 0 || iw % sw != 0 || ih / sh != iw / sw) {
    throw SchemaError(where + ": label map " + std::to_string(sh) + "x" + std::to_string(sw) +
                      " is not an integer downscale of image " + std::to_string(ih) + "x" + std::to_string(iw));
  }
}

struct IndexRow {
  std::string image_path;
  std::string split;
  int ih, iw, sh, sw;
  std::vector<std::pair<Category, std::string>> label_paths;
};

struct ParsedIndex {
  ConceptIndex index;
  std::vector<IndexRow> rows;
};

ParsedIndex parse_index(const fs::path& root) {
  auto concepts_path = root / "concepts.csv";
  auto index_path = root / "index.csv";
  if (!fs::exists(concepts_path)) throw IngestionError("missing file: " + concepts_path.string());
  if (!fs::exists(index_path)) throw IngestionError("missing file: " + index_path.string());

  auto ctab = read_csv(concepts_path);
  int cid = ctab.column("concept_id"), cname = ctab.column("name"), ccat = ctab.column("category");
  if (cid < 0 || cname < 0 || ccat < 0) {
    throw SchemaError(concepts_path.string() + ": header must contain concept_id,name,category");
  }

  auto itab = read_csv(index_path);
  static constexpr std::array<const char*, 6> kFixed = {"image", "split", "ih", "iw", "sh", "sw"};
  if (itab.header.size() < kFixed.size()) throw SchemaError(index_path.string() + ": too few columns");
  for (std::size_t i = 0; i < kFixed.size(); ++i) {
    if (itab.header[i] != kFixed[i]) {
      throw SchemaError(index_path.string() + ": column " + std::to_string(i) + " must be '" + kFixed[i] + "'");
    }
  }
  std::vector<Category> categories;
  for (std::size_t i = kFixed.size(); i < itab.header.size(); ++i) {
    categories.push_back(parse_category(itab.header[i]));
  }

  std::vector<Concept> concepts;
  for (const auto& row : ctab.rows) {
    concepts.push_back({parse_int(row[cid], concepts_path.string()), row[cname], parse_category(row[ccat])});
  }
  ParsedIndex parsed{ConceptIndex(std::move(concepts), categories), {}};

  std::size_t lineno = 1;
  for (const auto& row : itab.rows) {
    ++lineno;
    std::string where = index_path.string() + ":" + std::to_string(lineno);
    IndexRow r{row[0], row[1], parse_int(row[2], where), parse_int(row[3], where),
               parse_int(row[4], where), parse_int(row[5], where), {}};
    check_label_geometry(r.ih, r.iw, r.sh, r.sw, where);
    if (!fs::exists(root / r.image_path)) throw IngestionError("missing file: " + (root / r.image_path).string());
    for (std::size_t c = 0; c < categories.size(); ++c) {
      const auto& rel = row[kFixed.size() + c];
      if (rel.empty()) continue;
      if (!fs::exists(root / rel)) throw IngestionError("missing file: " + (root / rel).string());
      r.label_paths.emplace_back(categories[c], rel);
    }
    parsed.rows.push_back(std::move(r));
  }
  return parsed;
}

std::string image_id_from_path(const std::string& rel) { return fs::path(rel).stem().string(); }

}  // namespace

const char* category_name(Category category) {
  for (const auto& [c, name] : kCategoryNames) {
    if (c == category) return name;
  }
  return "unknown";
}

Category parse_category(std::string_view name) {
  for (const auto& [c, n] : kCategoryNames) {
    if (name == n) return c;
  }
  throw SchemaError("unknown concept category '" + std::string(name) + "'");
}

ConceptIndex::ConceptIndex(std::vector<Concept> concepts, std::vector<Category> categories)
    : concepts_(std::move(concepts)), categories_(std::move(categories)) {
  std::set<Category> seen_categories;
  for (auto c : categories_) {
    if (!seen_categories.insert(c).second) {
      throw SchemaError(std::string("category listed twice: ") + category_name(c));
    }
  }
  std::sort(concepts_.begin(), concepts_.end(), [](const Concept& a, const Concept& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const auto& c = concepts_[i];
    if (i > 0 && concepts_[i - 1].id == c.id) throw SchemaError("duplicate concept_id " + std::to_string(c.id));
    if (c.id != static_cast<int>(i) + 1) {
      throw SchemaError("concept ids must be dense from 1; found " + std::to_string(c.id) + " at position " +
                        std::to_string(i + 1));
    }
    if (!seen_categories.count(c.category)) {
      throw SchemaError("concept '" + c.name + "' uses category '" + category_name(c.category) +
                        "' which is not in the category list");
    }
  }
}

bool ConceptIndex::has_category(Category c) const {
  return std::find(categories_.begin(), categories_.end(), c) != categories_.end();
}

const Concept& ConceptIndex::concept_by_id(int id) const {
  if (id < 1 || id > static_cast<int>(concepts_.size())) {
    throw LookupError("unknown concept_id " + std::to_string(id));
  }
  return concepts_[static_cast<std::size_t>(id - 1)];
}

std::optional<int> ConceptIndex::find(std::string_view name) const {
  for (const auto& c : concepts_) {
    if (c.name == name) return c.id;
  }
  return std::nullopt;
}

std::vector<int> ConceptIndex::concepts_in(Category cat) const {
  std::vector<int> ids;
  for (const auto& c : concepts_) {
    if (c.category == cat) ids.push_back(c.id);
  }
  return ids;
}

ConceptDataset::ConceptDataset(ConceptIndex index, std::vector<LabeledImage> images)
    : index_(std::move(index)), images_(std::move(images)) {
  for (std::size_t i = 0; i < images_.size(); ++i) {
    const auto& img = images_[i];
    if (!by_id_.emplace(img.image_id, i).second) throw SchemaError("duplicate image id '" + img.image_id + "'");
    if (img.image.height <= 0 || img.image.width <= 0 || img.image.channels <= 0 ||
        img.image.pixels.size() !=
            static_cast<std::size_t>(img.image.height) * img.image.width * img.image.channels) {
      throw SchemaError("image '" + img.image_id + "' has inconsistent pixel buffer");
    }
    for (const auto& [cat, map] : img.label_maps) {
      std::string where = "image '" + img.image_id + "' " + category_name(cat) + " labels";
      if (!index_.has_category(cat)) throw SchemaError(where + ": category not in index");
      check_label_geometry(img.image.height, img.image.width, map.height, map.width, where);
      if (map.values.size() != static_cast<std::size_t>(map.height) * map.width) {
        throw SchemaError(where + ": inconsistent buffer");
      }
      for (auto v : map.values) {
        if (v == kUnlabeled) continue;
        if (v > index_.size() || index_.concept_by_id(v).category != cat) {
          throw SchemaError(where + ": concept id " + std::to_string(v) + " is not registered under this category");
        }
      }
    }
  }
}

const LabeledImage& ConceptDataset::image(std::string_view image_id) const { return images_[position(image_id)]; }

std::size_t ConceptDataset::position(std::string_view image_id) const {
  auto it = by_id_.find(image_id);
  if (it == by_id_.end()) throw LookupError("unknown image '" + std::string(image_id) + "'");
  return it->second;
}

std::vector<std::size_t> ConceptDataset::split_positions(std::string_view split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (split.empty() || images_[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::uint8_t> ConceptDataset::resolve_label_mask(std::string_view image_id, int concept_id) const {
  return resolve_label_mask(position(image_id), concept_id);
}

std::vector<std::uint8_t> ConceptDataset::resolve_label_mask(std::size_t pos, int concept_id) const {
  const auto& concept_entry = index_.concept_by_id(concept_id);
  const auto& img = images_.at(pos);
  const int h = img.image.height, w = img.image.width;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
  auto it = img.label_maps.find(concept_entry.category);
  if (it == img.label_maps.end()) return mask;
  const auto& map = it->second;
  const int factor = h / map.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      mask[static_cast<std::size_t>(y) * w + x] = map.at(y / factor, x / factor) == concept_id ? 1 : 0;
    }
  }
  return mask;
}

std::string ConceptDataset::content_hash() const {
  Sha256 h;
  for (const auto& c : index_.concepts()) {
    h.update_u64(static_cast<std::uint64_t>(c.id)).update(c.name).update(category_name(c.category));
  }
  for (auto cat : index_.categories()) h.update(category_name(cat));
  for (const auto& img : images_) {
    h.update(img.image_id).update("|").update(img.split).update("|");
    h.update_u64(static_cast<std::uint64_t>(img.class_label + 1));
    h.update_u64(static_cast<std::uint64_t>(img.image.height)).update_u64(static_cast<std::uint64_t>(img.image.width));
    h.update(img.image.pixels);
    for (const auto& [cat, map] : img.label_maps) {
      h.update(category_name(cat));
      h.update_u64(static_cast<std::uint64_t>(map.height)).update_u64(static_cast<std::uint64_t>(map.width));
      h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(map.values.data()),
                                             map.values.size() * sizeof(std::uint16_t)));
    }
  }
  return h.hex_digest();
}

ConceptIndex load_concept_index(const fs::path& root) { return parse_index(root).index; }

ConceptDataset load_concept_dataset(const fs::path& root) {
  auto parsed = parse_index(root);
  std::map<std::string, int> classes;
  if (fs::exists(root / "classes.csv")) {
    auto tab = read_csv(root / "classes.csv");
    int ci = tab.column("image"), cc = tab.column("class");
    if (ci < 0 || cc < 0) throw SchemaError((root / "classes.csv").string() + ": header must be image,class");
    for (const auto& row : tab.rows) classes[row[ci]] = parse_int(row[cc], (root / "classes.csv").string());
  }

  std::vector<LabeledImage> images;
  images.reserve(parsed.rows.size());
  for (const auto& row : parsed.rows) {
    LabeledImage li;
    li.image_id = image_id_from_path(row.image_path);
    li.split = row.split;
    li.image = read_ppm(root / row.image_path);
    if (li.image.height != row.ih || li.image.width != row.iw) {
      throw SchemaError((root / row.image_path).string() + ": size does not match index ih/iw");
    }
    for (const auto& [cat, rel] : row.label_paths) {
      auto map = read_pgm16(root / rel);
      if (map.height != row.sh || map.width != row.sw) {
        throw SchemaError((root / rel).string() + ": size does not match index sh/sw");
      }
      li.label_maps.emplace(cat, std::move(map));
    }
    if (auto it = classes.find(row.image_path); it != classes.end()) li.class_label = it->second;
    images.push_back(std::move(li));
  }
  return ConceptDataset(std::move(parsed.index), std::move(images));
}

void write_concept_dataset(const ConceptDataset& dataset, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create " + (root / "images").string() + ": " + ec.message());
  const auto& categories = dataset.index().categories();
  for (auto cat : categories) {
    fs::create_directories(root / "labels" / category_name(cat), ec);
    if (ec) throw IoError("cannot create label directory under " + root.string() + ": " + ec.message());
  }

  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
  };

  auto concepts = open(root / "concepts.csv");
  concepts << "concept_id,name,category\n";
  for (const auto& c : dataset.index().concepts()) {
    concepts << c.id << ',' << c.name << ',' << category_name(c.category) << '\n';
  }

  auto index = open(root / "index.csv");
  index << "image,split,ih,iw,sh,sw";
  for (auto cat : categories) index << ',' << category_name(cat);
  index << '\n';

  bool any_class = false;
  for (const auto& img : dataset.images()) any_class = any_class || img.class_label >= 0;
  std::ofstream classes;
  if (any_class) {
    classes = open(root / "classes.csv");
    classes << "image,class\n";
  }

  for (const auto& img : dataset.images()) {
    std::string image_rel = "images/" + img.image_id + ".ppm";
    write_ppm(root / image_rel, img.image);
    int sh = img.image.height, sw = img.image.width;
    if (!img.label_maps.empty()) {
      sh = img.label_maps.begin()->second.height;
      sw = img.label_maps.begin()->second.width;
    }
    index << image_rel << ',' << img.split << ',' << img.image.height << ',' << img.image.width << ',' << sh << ','
          << sw;
    for (auto cat : categories) {
      index << ',';
      auto it = img.label_maps.find(cat);
      if (it == img.label_maps.end()) continue;
      if (it->second.height != sh || it->second.width != sw) {
        throw SchemaError("image '" + img.image_id + "': all label maps of one image must share a resolution");
      }
      std::string rel = std::string("labels/") + category_name(cat) + "/" + img.image_id + ".pgm";
      write_pgm16(root / rel, it->second);
      index << rel;
    }
    index << '\n';
    if (any_class && img.class_label >= 0) classes << image_rel << ',' << img.class_label << '\n';
  }
  if (!index || !concepts) throw IoError("failed writing dataset index under " + root.string());
}

}  // namespace prunescope
