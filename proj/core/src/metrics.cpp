#include "prunescope/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_map>

#include "prunescope/archive.hpp"
#include "prunescope/csv.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/plot.hpp"
#include "prunescope/progress.hpp"

namespace prunescope {

InterpretabilitySummary summarize(const DissectionReport& report, const ConceptIndex& index, double accuracy,
                                  double fraction_remaining, int round) {
  InterpretabilitySummary s;
  s.fraction_remaining = fraction_remaining;
  s.round = round;
  s.accuracy = accuracy;
  s.total_units = static_cast<std::int64_t>(report.units.size());
  for (auto c : index.categories()) s.category_counts[c] = 0;
  std::set<int> concepts;
  for (const auto& u : report.units) {
    if (!u.interpretable) continue;
    ++s.interpretable_units;
    if (u.best_concept) concepts.insert(*u.best_concept);
  }
  s.unique_concepts = static_cast<std::int64_t>(concepts.size());
  for (int id : concepts) ++s.category_counts[index.concept_by_id(id).category];
  return s;
}

std::string unit_key(const UnitDissection& unit) { return unit.layer + "#" + std::to_string(unit.unit); }

namespace {

using UnitTable = std::unordered_map<std::string, const UnitDissection*>;

UnitTable index_units(const DissectionReport& report, const char* which) {
  UnitTable table;
  for (const auto& u : report.units) {
    if (!table.emplace(unit_key(u), &u).second) {
      throw ComparisonError(std::string(which) + " report lists unit " + unit_key(u) + " twice");
    }
  }
  return table;
}

struct Pairing {
  std::vector<std::string> original, pruned, shared;
  std::int64_t same_concept = 0;
};

Pairing pair_units(const DissectionReport& original, const DissectionReport& pruned) {
  auto a = index_units(original, "original");
  auto b = index_units(pruned, "pruned");
  if (a.size() != b.size()) {
    throw ComparisonError("reports cover different unit sets (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + " units)");
  }
  Pairing p;
  for (const auto& [key, ua] : a) {
    auto it = b.find(key);
    if (it == b.end()) throw ComparisonError("unit " + key + " missing from the pruned report");
    const auto* ub = it->second;
    if (ua->interpretable) p.original.push_back(key);
    if (ub->interpretable) p.pruned.push_back(key);
    if (ua->interpretable && ub->interpretable) {
      p.shared.push_back(key);
      if (ua->best_concept == ub->best_concept) ++p.same_concept;
    }
  }
  std::sort(p.original.begin(), p.original.end());
  std::sort(p.pruned.begin(), p.pruned.end());
  std::sort(p.shared.begin(), p.shared.end());
  return p;
}

double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double consistency_retained(const DissectionReport& original, const DissectionReport& pruned,
                            RetainedDenominator denominator) {
  auto p = pair_units(original, pruned);
  const auto den = denominator == RetainedDenominator::Original ? p.original.size() : p.pruned.size();
  return ratio_or_one(p.shared.size(), den);
}

double consistency_same_concept(const DissectionReport& original, const DissectionReport& pruned) {
  auto p = pair_units(original, pruned);
  return ratio_or_one(static_cast<std::size_t>(p.same_concept), p.shared.size());
}

ConsistencyReport compare_reports(const DissectionReport& original, const DissectionReport& pruned,
                                  double fraction_remaining, int round, RetainedDenominator denominator) {
  auto p = pair_units(original, pruned);
  ConsistencyReport r;
  r.fraction_remaining = fraction_remaining;
  r.round = round;
  const auto den = denominator == RetainedDenominator::Original ? p.original.size() : p.pruned.size();
  r.retained_fraction = ratio_or_one(p.shared.size(), den);
  r.retained_degenerate = den == 0;
  r.same_concept_fraction = ratio_or_one(static_cast<std::size_t>(p.same_concept), p.shared.size());
  r.same_concept_degenerate = p.shared.empty();
  r.original_interpretable = std::move(p.original);
  r.pruned_interpretable = std::move(p.pruned);
  r.shared_interpretable = std::move(p.shared);
  return r;
}

// ---------------------------------------------------------------- CSV

std::string interpretability_csv(const std::vector<InterpretabilitySummary>& summaries,
                                 const std::vector<Category>& categories) {
  std::string out = "fraction_remaining,round,accuracy,interpretable_units,unique_concepts";
  for (auto c : categories) out += std::string(",") + category_name(c);
  out += '\n';
  for (const auto& s : summaries) {
    out += format_double(s.fraction_remaining) + "," + std::to_string(s.round) + "," + format_double(s.accuracy) +
           "," + std::to_string(s.interpretable_units) + "," + std::to_string(s.unique_concepts);
    for (auto c : categories) {
      auto it = s.category_counts.find(c);
      out += "," + std::to_string(it == s.category_counts.end() ? 0 : it->second);
    }
    out += '\n';
  }
  return out;
}

std::string consistency_csv(const std::vector<ConsistencyReport>& reports) {
  std::string out = "fraction_remaining,round,retained_fraction,same_concept_fraction\n";
  for (const auto& r : reports) {
    out += format_double(r.fraction_remaining) + "," + std::to_string(r.round) + "," +
           format_double(r.retained_fraction) + "," + format_double(r.same_concept_fraction) + "\n";
  }
  return out;
}

namespace {

template <typename T>
T parse_number(const std::string& field, const std::filesystem::path& path) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw SchemaError(path.string() + ": not a number: '" + field + "'");
  }
  return value;
}

int require_column(const CsvTable& t, std::string_view name, const std::filesystem::path& path) {
  int c = t.column(name);
  if (c < 0) throw SchemaError(path.string() + ": missing column '" + std::string(name) + "'");
  return c;
}

}  // namespace

std::vector<InterpretabilitySummary> parse_interpretability_csv(const std::filesystem::path& path) {
  auto t = read_csv(path);
  const int f = require_column(t, "fraction_remaining", path), r = require_column(t, "round", path),
            a = require_column(t, "accuracy", path), iu = require_column(t, "interpretable_units", path),
            uc = require_column(t, "unique_concepts", path);
  std::vector<InterpretabilitySummary> out;
  for (const auto& row : t.rows) {
    InterpretabilitySummary s;
    s.fraction_remaining = parse_number<double>(row[f], path);
    s.round = parse_number<int>(row[r], path);
    s.accuracy = parse_number<double>(row[a], path);
    s.interpretable_units = parse_number<std::int64_t>(row[iu], path);
    s.unique_concepts = parse_number<std::int64_t>(row[uc], path);
    for (std::size_t c = static_cast<std::size_t>(uc) + 1; c < t.header.size(); ++c) {
      s.category_counts[parse_category(t.header[c])] = parse_number<std::int64_t>(row[c], path);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ConsistencyReport> parse_consistency_csv(const std::filesystem::path& path) {
  auto t = read_csv(path);
  const int f = require_column(t, "fraction_remaining", path), r = require_column(t, "round", path),
            k = require_column(t, "retained_fraction", path), s = require_column(t, "same_concept_fraction", path);
  std::vector<ConsistencyReport> out;
  for (const auto& row : t.rows) {
    ConsistencyReport c;
    c.fraction_remaining = parse_number<double>(row[f], path);
    c.round = parse_number<int>(row[r], path);
    c.retained_fraction = parse_number<double>(row[k], path);
    c.same_concept_fraction = parse_number<double>(row[s], path);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------- figures

void emit_curves(const std::vector<InterpretabilitySummary>& summaries,
                 const std::vector<ConsistencyReport>& consistency, const std::vector<Category>& categories,
                 const std::filesystem::path& out_dir) {
  if (summaries.empty()) throw DomainError("emit_curves needs at least one summary");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }
  try {
    write_file_atomic(out_dir / "interpretability.csv", interpretability_csv(summaries, categories));
    write_file_atomic(out_dir / "consistency.csv", consistency_csv(consistency));
    write_figures({TrialCurves{"trial", summaries, consistency}}, categories, out_dir);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("cannot write curves to " + out_dir.string() + ": " + e.what());
  }
}

}  // namespace prunescope
