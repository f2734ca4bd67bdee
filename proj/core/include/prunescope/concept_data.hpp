#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prunescope/pnm.hpp"

namespace prunescope {

enum class Category : std::uint8_t { Color, Texture, Material, Part, Object, Scene };

const char* category_name(Category category);
/// Throws SchemaError for names outside the six Broden categories.
Category parse_category(std::string_view name);

/// Concept id 0 is reserved for "unlabeled" and never appears in an index.
inline constexpr int kUnlabeled = 0;

struct Concept {
  int id = 0;
  std::string name;
  Category category = Category::Color;
};

class ConceptIndex {
 public:
  ConceptIndex() = default;
  /// Validates: ids unique and dense from 1, every concept's category listed.
  ConceptIndex(std::vector<Concept> concepts, std::vector<Category> categories);

  const std::vector<Concept>& concepts() const { return concepts_; }
  const std::vector<Category>& categories() const { return categories_; }
  std::size_t size() const { return concepts_.size(); }
  bool has_category(Category c) const;

  const Concept& concept_by_id(int id) const;
  std::optional<int> find(std::string_view name) const;
  std::vector<int> concepts_in(Category c) const;

 private:
  std::vector<Concept> concepts_;  // sorted by id; concepts_[i].id == i + 1
  std::vector<Category> categories_;
};

/// One row of the dataset: pixels plus one label map per labeled category.
struct LabeledImage {
  std::string image_id;
  std::string split;
  Image8 image;
  std::map<Category, Map16> label_maps;
  int class_label = -1;  // -1: no classification label
};

/// Immutable after construction.
class ConceptDataset {
 public:
  ConceptDataset(ConceptIndex index, std::vector<LabeledImage> images);

  const ConceptIndex& index() const { return index_; }
  const std::vector<LabeledImage>& images() const { return images_; }
  std::size_t size() const { return images_.size(); }

  const LabeledImage& image(std::string_view image_id) const;
  std::size_t position(std::string_view image_id) const;
  /// Positions of images in `split`; an empty split name selects all images.
  std::vector<std::size_t> split_positions(std::string_view split) const;

  /// Binary H x W mask at image resolution; label maps stored at a lower
  /// resolution are expanded by nearest neighbour.
  std::vector<std::uint8_t> resolve_label_mask(std::string_view image_id, int concept_id) const;
  std::vector<std::uint8_t> resolve_label_mask(std::size_t position, int concept_id) const;

  std::string content_hash() const;

 private:
  ConceptIndex index_;
  std::vector<LabeledImage> images_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// Reads and validates `concepts.csv` and `index.csv` under root, checking
/// that every referenced image and label file exists.
ConceptIndex load_concept_index(const std::filesystem::path& root);

/// Full load: index, pixels, label maps and (when present) `classes.csv`.
ConceptDataset load_concept_dataset(const std::filesystem::path& root);

/// Writes the dataset in the on-disk layout read by load_concept_dataset.
void write_concept_dataset(const ConceptDataset& dataset, const std::filesystem::path& root);

}  // namespace prunescope
