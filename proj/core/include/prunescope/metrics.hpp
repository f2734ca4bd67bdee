#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prunescope/concept_data.hpp"
#include "prunescope/dissector.hpp"

namespace prunescope {

struct InterpretabilitySummary {
  double fraction_remaining = 1.0;
  int round = 0;
  double accuracy = 0.0;
  std::int64_t total_units = 0;
  std::int64_t interpretable_units = 0;
  std::int64_t unique_concepts = 0;
  /// Unique concepts per category, counted over interpretable units' best concepts.
  std::map<Category, std::int64_t> category_counts;
};

/// Counts over `report`; concepts are resolved through `index` for categories.
InterpretabilitySummary summarize(const DissectionReport& report, const ConceptIndex& index, double accuracy,
                                  double fraction_remaining = 1.0, int round = 0);

/// Which network's interpretable units form the denominator of the retained
/// fraction. Original: |interp(orig) & interp(pruned)| / |interp(orig)|.
/// Pruned: the same intersection over |interp(pruned)|.
enum class RetainedDenominator { Original, Pruned };

struct ConsistencyReport {
  double fraction_remaining = 1.0;
  int round = 0;
  double retained_fraction = 1.0;
  double same_concept_fraction = 1.0;
  /// Units interpretable in the original, in the pruned network, and in both.
  std::vector<std::string> original_interpretable;
  std::vector<std::string> pruned_interpretable;
  std::vector<std::string> shared_interpretable;
  /// True when a fraction came from an empty denominator (defined as 1).
  bool retained_degenerate = false;
  bool same_concept_degenerate = false;
};

/// Unit identity across networks: "<layer>#<channel>".
std::string unit_key(const UnitDissection& unit);

/// Throws ComparisonError unless both reports cover the same unit identities.
double consistency_retained(const DissectionReport& original, const DissectionReport& pruned,
                            RetainedDenominator denominator = RetainedDenominator::Original);
double consistency_same_concept(const DissectionReport& original, const DissectionReport& pruned);

ConsistencyReport compare_reports(const DissectionReport& original, const DissectionReport& pruned,
                                  double fraction_remaining, int round,
                                  RetainedDenominator denominator = RetainedDenominator::Original);

/// interpretability.csv: fraction_remaining,round,accuracy,interpretable_units,
/// unique_concepts,<one column per category of the index>.
std::string interpretability_csv(const std::vector<InterpretabilitySummary>& summaries,
                                 const std::vector<Category>& categories);
/// consistency.csv: fraction_remaining,round,retained_fraction,same_concept_fraction.
std::string consistency_csv(const std::vector<ConsistencyReport>& reports);

std::vector<InterpretabilitySummary> parse_interpretability_csv(const std::filesystem::path& path);
std::vector<ConsistencyReport> parse_consistency_csv(const std::filesystem::path& path);

/// Writes both CSV tables and the figure files into `out_dir`.
/// Throws DomainError without summaries and IoError if the directory is unwritable.
void emit_curves(const std::vector<InterpretabilitySummary>& summaries,
                 const std::vector<ConsistencyReport>& consistency, const std::vector<Category>& categories,
                 const std::filesystem::path& out_dir);

}  // namespace prunescope
