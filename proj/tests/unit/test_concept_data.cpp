#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "prunescope/concept_data.hpp"
#include "prunescope/csv.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/micro_broden.hpp"
#include "prunescope/pnm.hpp"
#include "support.hpp"

using namespace prunescope;
using prunescope::testing::TempDir;

namespace {

MicroBrodenSpec small_spec() {
  MicroBrodenSpec s;
  s.splits = {{"train", 12}, {"dissect", 8}};
  return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

// 3 colours + 2 objects, one 4x4 image whose label maps are stored at 2x2.
void write_hand_index(const std::filesystem::path& root) {
  write_text(root / "concepts.csv",
             "concept_id,name,category\n1,red,color\n2,green,color\n3,blue,color\n4,dog,object\n5,cat,object\n");
  write_text(root / "index.csv", "image,split,ih,iw,sh,sw,color,object\nimages/a.ppm,train,4,4,2,2,labels/color/a.pgm,labels/object/a.pgm\n");
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "labels/color");
  std::filesystem::create_directories(root / "labels/object");
  write_ppm(root / "images/a.ppm", Image8{4, 4, 3, std::vector<std::uint8_t>(48, 10)});
  write_pgm16(root / "labels/color/a.pgm", Map16{2, 2, {1, 1, 3, 0}});
  write_pgm16(root / "labels/object/a.pgm", Map16{2, 2, {4, 4, 4, 4}});
}

}  // namespace

TEST(ConceptIndex, HandIndexCountsConceptsAndCategories) {
  TempDir dir;
  write_hand_index(dir.path());
  auto index = load_concept_index(dir.path());
  EXPECT_EQ(index.size(), 5u);
  EXPECT_EQ(index.categories().size(), 2u);
  EXPECT_EQ(index.concepts_in(Category::Color).size(), 3u);
  EXPECT_EQ(index.concept_by_id(4).name, "dog");
}

TEST(ConceptIndex, MissingLabelFileIsNamed) {
  TempDir dir;
  write_hand_index(dir.path());
  std::filesystem::remove(dir / "labels/object/a.pgm");
  try {
    load_concept_index(dir.path());
    FAIL() << "expected an ingestion error";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("labels/object/a.pgm"), std::string::npos) << e.what();
  }
}

TEST(ConceptIndex, DuplicateIdIsSchemaError) {
  TempDir dir;
  write_hand_index(dir.path());
  write_text(dir / "concepts.csv", "concept_id,name,category\n1,red,color\n1,green,color\n");
  EXPECT_THROW(load_concept_index(dir.path()), SchemaError);
}

TEST(ConceptIndex, RejectsSparseIdsAndUnknownCategory) {
  EXPECT_THROW(ConceptIndex({{1, "a", Category::Color}, {3, "b", Category::Color}}, {Category::Color}), SchemaError);
  EXPECT_THROW(ConceptIndex({{1, "a", Category::Scene}}, {Category::Color}), SchemaError);
  EXPECT_THROW(parse_category("flavour"), SchemaError);
}

TEST(ResolveLabelMask, NearestNeighbourUpscale) {
  TempDir dir;
  write_hand_index(dir.path());
  auto ds = load_concept_dataset(dir.path());
  auto red = ds.resolve_label_mask("a", 1);
  const std::vector<std::uint8_t> expect_red = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(red, expect_red);
  auto blue = ds.resolve_label_mask("a", 3);
  const std::vector<std::uint8_t> expect_blue = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0};
  EXPECT_EQ(blue, expect_blue);
}

TEST(ResolveLabelMask, FullAbsentAndUnknownConcept) {
  TempDir dir;
  write_hand_index(dir.path());
  auto ds = load_concept_dataset(dir.path());
  auto dog = ds.resolve_label_mask("a", 4);
  EXPECT_TRUE(std::all_of(dog.begin(), dog.end(), [](auto v) { return v == 1; }));
  auto cat = ds.resolve_label_mask("a", 5);
  EXPECT_TRUE(std::all_of(cat.begin(), cat.end(), [](auto v) { return v == 0; }));
  EXPECT_THROW(ds.resolve_label_mask("a", 99), LookupError);
}

TEST(ConceptDataset, RejectsLabelOutsideCategory) {
  TempDir dir;
  write_hand_index(dir.path());
  write_pgm16(dir / "labels/color/a.pgm", Map16{2, 2, {1, 4, 0, 0}});  // 4 is an object
  EXPECT_THROW(load_concept_dataset(dir.path()), SchemaError);
}

TEST(MicroBroden, SameSeedGivesIdenticalDirectories) {
  TempDir a, b;
  auto spec = small_spec();
  generate_micro_broden(spec, a.path());
  generate_micro_broden(spec, b.path());
  std::set<std::string> files_a, files_b;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (e.is_regular_file()) files_a.insert(e.path().lexically_relative(a.path()).string());
  }
  for (const auto& e : std::filesystem::recursive_directory_iterator(b.path())) {
    if (e.is_regular_file()) files_b.insert(e.path().lexically_relative(b.path()).string());
  }
  ASSERT_EQ(files_a, files_b);
  for (const auto& f : files_a) {
    std::ifstream fa(a / f, std::ios::binary), fb(b / f, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb) << f;
  }
}

TEST(MicroBroden, PaletteSizeDeterminesColourConcepts) {
  auto spec = small_spec();
  spec.palette = {"red", "green", "blue", "white"};
  spec.background = {"white", "green"};
  auto ds = render_micro_broden(spec);
  EXPECT_EQ(ds.index().concepts_in(Category::Color).size(), 4u);
}

TEST(MicroBroden, SpecValidation) {
  auto spec = small_spec();
  spec.splits = {{"train", 0}};
  EXPECT_THROW(spec.validate(), SchemaError);
  spec = small_spec();
  spec.palette.clear();
  EXPECT_THROW(spec.validate(), SchemaError);
  spec = small_spec();
  spec.background = {"magenta"};
  EXPECT_THROW(spec.validate(), SchemaError);
}

TEST(MicroBroden, ColourLabelsMatchRequantizedPixels) {
  // The generator records the colour it painted; re-quantizing the saved
  // pixels must recover it wherever the noise keeps a pixel nearest its colour.
  auto spec = small_spec();
  auto ds = render_micro_broden(spec);
  const auto& colors = basic_colors();
  std::int64_t checked = 0;
  for (const auto& img : ds.images()) {
    const auto& map = img.label_maps.at(Category::Color);
    for (int y = 0; y < img.image.height; ++y) {
      for (int x = 0; x < img.image.width; ++x) {
        const int id = map.at(y, x);
        ASSERT_GT(id, 0);
        const auto& name = ds.index().concept_by_id(id).name;
        const auto q = quantize_color(img.image.at(y, x, 0), img.image.at(y, x, 1), img.image.at(y, x, 2));
        EXPECT_EQ(colors[q].name, name);
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 20 * 16 * 16);
}

TEST(MicroBroden, RoundTripReproducesGroundTruthMasks) {
  TempDir dir;
  auto spec = small_spec();
  auto generated = generate_micro_broden(spec, dir.path());
  auto loaded = load_concept_dataset(dir.path());
  ASSERT_EQ(loaded.size(), generated.size());
  EXPECT_EQ(loaded.content_hash(), generated.content_hash());
  for (std::size_t p = 0; p < generated.size(); ++p) {
    EXPECT_EQ(loaded.images()[p].class_label, generated.images()[p].class_label);
    for (const auto& c : generated.index().concepts()) {
      ASSERT_EQ(loaded.resolve_label_mask(p, c.id), generated.resolve_label_mask(p, c.id));
    }
  }
}

TEST(MicroBroden, MasksWithinCategoryAreDisjointAndInCategory) {
  auto ds = render_micro_broden(small_spec());
  for (std::size_t p = 0; p < ds.size(); ++p) {
    for (auto cat : ds.index().categories()) {
      std::vector<int> cover(256, 0);
      for (int id : ds.index().concepts_in(cat)) {
        auto m = ds.resolve_label_mask(p, id);
        for (std::size_t i = 0; i < m.size(); ++i) cover[i] += m[i];
      }
      for (int c : cover) EXPECT_LE(c, 1);
    }
    for (const auto& [cat, map] : ds.images()[p].label_maps) {
      for (auto v : map.values) {
        if (v != kUnlabeled) EXPECT_EQ(ds.index().concept_by_id(v).category, cat);
      }
    }
  }
}

TEST(MicroBroden, ShapesUseForegroundColoursOnly) {
  auto spec = small_spec();
  auto ds = render_micro_broden(spec);
  for (const auto& img : ds.images()) {
    const auto& color = img.label_maps.at(Category::Color);
    const auto& object = img.label_maps.at(Category::Object);
    for (std::size_t i = 0; i < color.values.size(); ++i) {
      const auto& name = ds.index().concept_by_id(color.values[i]).name;
      const bool is_bg = std::find(spec.background.begin(), spec.background.end(), name) != spec.background.end();
      EXPECT_EQ(is_bg, object.values[i] == kUnlabeled);
    }
  }
}

TEST(MicroBroden, EveryKnownShapePaintsPixels) {
  auto spec = small_spec();
  spec.splits = {{"train", 60}};
  spec.shapes = known_shapes();
  spec.shape_size = {7, 10};
  auto ds = render_micro_broden(spec);
  EXPECT_EQ(ds.index().concepts_in(Category::Object).size(), known_shapes().size());
  std::set<int> classes;
  for (const auto& img : ds.images()) {
    classes.insert(img.class_label);
    const auto& object = img.label_maps.at(Category::Object);
    const auto painted = std::count_if(object.values.begin(), object.values.end(), [](auto v) { return v != kUnlabeled; });
    EXPECT_GE(painted, 5) << known_shapes()[img.class_label];
    EXPECT_LE(painted, 100) << known_shapes()[img.class_label];
  }
  EXPECT_EQ(classes.size(), known_shapes().size());
}

TEST(MicroBroden, ShapeSizeValidation) {
  auto spec = small_spec();
  spec.shape_size = {9, 7};
  EXPECT_THROW(spec.validate(), SchemaError);
  spec.shape_size = {2, 7};
  EXPECT_THROW(spec.validate(), SchemaError);
  spec.shape_size = {7, 17};
  EXPECT_THROW(spec.validate(), SchemaError);
  spec.shape_size = {7};
  EXPECT_THROW(spec.validate(), SchemaError);
  spec.shape_size = {16, 16};
  EXPECT_NO_THROW(spec.validate());
}

TEST(Csv, FieldCountMismatchIsSchemaError) {
  TempDir dir;
  write_text(dir / "x.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(read_csv(dir / "x.csv"), SchemaError);
  EXPECT_THROW(read_csv(dir / "missing.csv"), IngestionError);
}

TEST(Pnm, RoundTrip) {
  TempDir dir;
  Image8 img{3, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
  write_ppm(dir / "i.ppm", img);
  auto back = read_ppm(dir / "i.ppm");
  EXPECT_EQ(back.pixels, img.pixels);
  Map16 map{2, 2, {0, 1, 300, 65535}};
  write_pgm16(dir / "m.pgm", map);
  EXPECT_EQ(read_pgm16(dir / "m.pgm").values, map.values);
}
