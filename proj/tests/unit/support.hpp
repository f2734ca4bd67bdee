#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "prunescope/concept_data.hpp"
#include "prunescope/tensor.hpp"

namespace prunescope::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("prunescope_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string fixtures_dir() {
  const char* env = std::getenv("PRUNESCOPE_FIXTURES");
  return env ? env : PRUNESCOPE_FIXTURES_DIR;
}

inline std::string configs_dir() {
  const char* env = std::getenv("PRUNESCOPE_CONFIGS");
  return env ? env : PRUNESCOPE_CONFIGS_DIR;
}

// Random dataset of tiny images: one colour map (concepts 1..colors) and one
// object map (concepts colors+1..colors+objects), each image independently
// missing either map with some probability.
inline ConceptDataset random_toy_dataset(std::mt19937_64& rng, int images, int h, int w, int colors, int objects,
                                         double missing = 0.2) {
  std::vector<Concept> concepts;
  for (int i = 0; i < colors; ++i) concepts.push_back({i + 1, "c" + std::to_string(i), Category::Color});
  for (int i = 0; i < objects; ++i) concepts.push_back({colors + i + 1, "o" + std::to_string(i), Category::Object});
  ConceptIndex index(concepts, {Category::Color, Category::Object});
  std::vector<LabeledImage> out;
  for (int n = 0; n < images; ++n) {
    LabeledImage li;
    li.image_id = "toy" + std::to_string(n);
    li.split = "dissect";
    li.image = Image8{h, w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3)};
    for (auto& p : li.image.pixels) p = static_cast<std::uint8_t>(rng() % 256);
    auto random_map = [&](int first, int count) {
      Map16 m{h, w, std::vector<std::uint16_t>(static_cast<std::size_t>(h) * w)};
      for (auto& v : m.values) v = (rng() % 3 == 0) ? 0 : static_cast<std::uint16_t>(first + rng() % count);
      return m;
    };
    if (static_cast<double>(rng() % 1000) / 1000.0 >= missing) li.label_maps.emplace(Category::Color, random_map(1, colors));
    if (static_cast<double>(rng() % 1000) / 1000.0 >= missing) {
      li.label_maps.emplace(Category::Object, random_map(colors + 1, objects));
    }
    out.push_back(std::move(li));
  }
  return ConceptDataset(std::move(index), std::move(out));
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, float scale = 1.0f) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = scale * (static_cast<float>(rng() % 2001) / 1000.0f - 1.0f);
  return t;
}

}  // namespace prunescope::testing
