#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "prunescope/errors.hpp"
#include "prunescope/metrics.hpp"
#include "prunescope/plot.hpp"
#include "support.hpp"

using namespace prunescope;
using prunescope::testing::TempDir;

namespace {

ConceptIndex small_index() {
  return ConceptIndex({{1, "red", Category::Color},
                       {2, "blue", Category::Color},
                       {3, "striped", Category::Texture},
                       {4, "disk", Category::Object},
                       {5, "ring", Category::Object}},
                      {Category::Color, Category::Texture, Category::Object});
}

UnitDissection unit(const std::string& layer, int k, std::optional<int> concept_id, double iou) {
  UnitDissection u;
  u.layer = layer;
  u.unit = k;
  u.best_concept = concept_id;
  u.best_iou = iou;
  u.interpretable = concept_id.has_value() && iou > 0.05;
  return u;
}

DissectionReport report_of(std::vector<UnitDissection> units) {
  DissectionReport r;
  r.layers = {"L"};
  r.units = std::move(units);
  return r;
}

DissectionReport random_report(std::mt19937_64& rng, int n) {
  std::vector<UnitDissection> units;
  for (int k = 0; k < n; ++k) {
    const bool has = rng() % 5 != 0;
    units.push_back(unit(k % 2 ? "A" : "B", k, has ? std::optional<int>(1 + static_cast<int>(rng() % 5)) : std::nullopt,
                         static_cast<double>(rng() % 100) / 500.0));
  }
  return report_of(std::move(units));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Summarize, WorkedExample) {
  auto r = report_of({unit("L", 0, 1, 0.20), unit("L", 1, 1, 0.06), unit("L", 2, std::nullopt, 0.03)});
  auto s = summarize(r, small_index(), 0.9);
  EXPECT_EQ(s.total_units, 3);
  EXPECT_EQ(s.interpretable_units, 2);
  EXPECT_EQ(s.unique_concepts, 1);
  EXPECT_EQ(s.category_counts.at(Category::Color), 1);
  EXPECT_EQ(s.category_counts.at(Category::Texture), 0);
  EXPECT_EQ(s.category_counts.at(Category::Object), 0);
  EXPECT_EQ(s.accuracy, 0.9);
}

TEST(Summarize, EmptyReportIsAllZero) {
  auto s = summarize(DissectionReport{}, small_index(), 0.0);
  EXPECT_EQ(s.total_units, 0);
  EXPECT_EQ(s.interpretable_units, 0);
  EXPECT_EQ(s.unique_concepts, 0);
  for (const auto& [cat, n] : s.category_counts) EXPECT_EQ(n, 0) << category_name(cat);
}

TEST(Summarize, MatchesRecountOnRandomReports) {
  std::mt19937_64 rng(8);
  const auto index = small_index();
  for (int trial = 0; trial < 100; ++trial) {
    auto r = random_report(rng, trial == 0 ? 64 : 1 + static_cast<int>(rng() % 200));
    auto s = summarize(r, index, 0.5);
    std::int64_t interp = 0;
    std::set<int> concepts;
    for (const auto& u : r.units) {
      if (u.interpretable) {
        ++interp;
        concepts.insert(*u.best_concept);
      }
    }
    std::map<Category, std::int64_t> by_cat;
    for (int c : concepts) ++by_cat[index.concept_by_id(c).category];
    EXPECT_EQ(s.interpretable_units, interp);
    EXPECT_EQ(s.unique_concepts, static_cast<std::int64_t>(concepts.size()));
    for (Category c : index.categories()) EXPECT_EQ(s.category_counts.at(c), by_cat[c]);
  }
}

TEST(Consistency, IdentityAndReorderingInvariance) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 80);
    auto a = random_report(rng, n);
    EXPECT_EQ(consistency_retained(a, a), 1.0);
    EXPECT_EQ(consistency_same_concept(a, a), 1.0);
    EXPECT_EQ(consistency_retained(a, a, RetainedDenominator::Pruned), 1.0);

    auto b = random_report(rng, n);
    // same identities as a, different labels
    for (int k = 0; k < n; ++k) b.units[k].layer = a.units[k].layer;
    const double ret = consistency_retained(a, b), same = consistency_same_concept(a, b);
    EXPECT_GE(ret, 0.0);
    EXPECT_LE(ret, 1.0);
    EXPECT_GE(same, 0.0);
    EXPECT_LE(same, 1.0);
    auto a2 = a, b2 = b;
    std::shuffle(a2.units.begin(), a2.units.end(), rng);
    std::shuffle(b2.units.begin(), b2.units.end(), rng);
    EXPECT_EQ(consistency_retained(a2, b2), ret);
    EXPECT_EQ(consistency_same_concept(a2, b2), same);
  }
}

// Six units. Original interpretable: u0 u1 u2 u3. Pruned interpretable: u1 u2 u3 u5.
// Shared: u1 u2 u3, of which u1 and u2 keep their concept.
class SixUnits : public ::testing::Test {
 protected:
  DissectionReport original = report_of({unit("L", 0, 1, 0.2), unit("L", 1, 2, 0.2), unit("L", 2, 3, 0.2),
                                         unit("L", 3, 4, 0.2), unit("L", 4, 5, 0.01), unit("L", 5, 1, 0.04)});
  DissectionReport pruned = report_of({unit("L", 0, 1, 0.02), unit("L", 1, 2, 0.1), unit("L", 2, 3, 0.3),
                                       unit("L", 3, 5, 0.2), unit("L", 4, std::nullopt, 0.0), unit("L", 5, 2, 0.3)});
};

TEST_F(SixUnits, RetainedUsesOriginalInterpretableUnits) {
  EXPECT_EQ(consistency_retained(original, pruned), 3.0 / 4.0);
  EXPECT_EQ(consistency_retained(original, pruned, RetainedDenominator::Pruned), 3.0 / 4.0);
  // drop u5 from the pruned network's interpretable set: the two readings differ
  pruned.units[5].interpretable = false;
  EXPECT_EQ(consistency_retained(original, pruned), 3.0 / 4.0);
  EXPECT_EQ(consistency_retained(original, pruned, RetainedDenominator::Pruned), 1.0);
  pruned.units[0].interpretable = true;
  EXPECT_EQ(consistency_retained(original, pruned), 1.0);
  EXPECT_EQ(consistency_retained(original, pruned, RetainedDenominator::Pruned), 4.0 / 4.0);
}

TEST_F(SixUnits, SameConceptCountsOnlySharedUnits) {
  EXPECT_EQ(consistency_same_concept(original, pruned), 2.0 / 3.0);
  auto c = compare_reports(original, pruned, 0.512, 3);
  EXPECT_EQ(c.original_interpretable, (std::vector<std::string>{"L#0", "L#1", "L#2", "L#3"}));
  EXPECT_EQ(c.pruned_interpretable, (std::vector<std::string>{"L#1", "L#2", "L#3", "L#5"}));
  EXPECT_EQ(c.shared_interpretable, (std::vector<std::string>{"L#1", "L#2", "L#3"}));
  EXPECT_EQ(c.same_concept_fraction, 2.0 / 3.0);
  EXPECT_EQ(c.round, 3);
}

TEST_F(SixUnits, DegenerateAndExtremeCases) {
  auto none = pruned;
  for (auto& u : none.units) u.interpretable = false;
  EXPECT_EQ(consistency_retained(original, none), 0.0);
  auto c = compare_reports(original, none, 0.1, 10);
  EXPECT_TRUE(c.same_concept_degenerate);
  EXPECT_EQ(c.same_concept_fraction, 1.0);

  auto swapped = original;
  for (auto& u : swapped.units) u.best_concept = *u.best_concept % 5 + 1;
  EXPECT_EQ(consistency_same_concept(original, swapped), 0.0);

  auto empty = none;
  auto d = compare_reports(empty, empty, 1.0, 0);
  EXPECT_TRUE(d.retained_degenerate);
  EXPECT_EQ(d.retained_fraction, 1.0);
}

TEST_F(SixUnits, MismatchedUnitSetsAreRejected) {
  auto shorter = pruned;
  shorter.units.pop_back();
  EXPECT_THROW(consistency_retained(original, shorter), ComparisonError);
  auto renamed = pruned;
  renamed.units[2].layer = "M";
  EXPECT_THROW(consistency_same_concept(original, renamed), ComparisonError);
  auto duplicated = pruned;
  duplicated.units[1].unit = 0;
  EXPECT_THROW(compare_reports(original, duplicated, 1.0, 0), ComparisonError);
}

TEST(Curves, CsvRoundTripsBitExactly) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto index = small_index();
  std::vector<InterpretabilitySummary> summaries;
  std::vector<ConsistencyReport> consistency;
  for (int r = 0; r <= 14; ++r) {
    auto s = summarize(random_report(rng, 40), index, u01(rng), std::pow(0.8, r), r);
    summaries.push_back(s);
    if (r > 0) {
      ConsistencyReport c;
      c.round = r;
      c.fraction_remaining = s.fraction_remaining;
      c.retained_fraction = u01(rng);
      c.same_concept_fraction = u01(rng) / 3.0;
      consistency.push_back(c);
    }
  }
  TempDir dir;
  emit_curves(summaries, consistency, index.categories(), dir.path());
  auto back = parse_interpretability_csv(dir / "interpretability.csv");
  ASSERT_EQ(back.size(), summaries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].fraction_remaining, summaries[i].fraction_remaining);
    EXPECT_EQ(back[i].accuracy, summaries[i].accuracy);
    EXPECT_EQ(back[i].round, summaries[i].round);
    EXPECT_EQ(back[i].interpretable_units, summaries[i].interpretable_units);
    EXPECT_EQ(back[i].unique_concepts, summaries[i].unique_concepts);
    EXPECT_EQ(back[i].category_counts, summaries[i].category_counts);
  }
  auto cback = parse_consistency_csv(dir / "consistency.csv");
  ASSERT_EQ(cback.size(), consistency.size());
  for (std::size_t i = 0; i < cback.size(); ++i) {
    EXPECT_EQ(cback[i].retained_fraction, consistency[i].retained_fraction);
    EXPECT_EQ(cback[i].same_concept_fraction, consistency[i].same_concept_fraction);
    EXPECT_EQ(cback[i].fraction_remaining, consistency[i].fraction_remaining);
  }
  // header plus one line per row
  auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  EXPECT_EQ(lines(slurp(dir / "interpretability.csv")), 1 + 15);
  EXPECT_EQ(lines(slurp(dir / "consistency.csv")), 1 + 14);
  for (const char* f : {"fig1_accuracy.svg", "fig2_interpretable_units.svg", "fig2_unique_concepts.svg",
                        "fig3_categories.svg", "fig4_consistency.svg"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
}

TEST(Curves, SingleSummaryRenders) {
  TempDir dir;
  InterpretabilitySummary s;
  s.accuracy = 0.5;
  emit_curves({s}, {}, {Category::Color}, dir.path());
  const auto svg = slurp(dir / "fig1_accuracy.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
}

TEST(Curves, Errors) {
  TempDir dir;
  EXPECT_THROW(emit_curves({}, {}, {}, dir.path()), DomainError);
  {
    std::ofstream blocker(dir / "file");
    blocker << "x";
  }
  EXPECT_THROW(emit_curves({InterpretabilitySummary{}}, {}, {}, dir / "file" / "sub"), IoError);
}

TEST(Chart, LogAxisPlacesLargerFractionsLeft) {
  ChartSpec spec;
  spec.title = "t";
  auto svg = render_chart(spec, {Series{"a", {1.0, 0.1}, {0.0, 1.0}}});
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}
