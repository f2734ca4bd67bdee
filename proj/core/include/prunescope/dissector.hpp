#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prunescope/concept_data.hpp"
#include "prunescope/mask.hpp"
#include "prunescope/network.hpp"

namespace prunescope {

struct DissectionConfig {
  /// Empty selects the network's registered dissection layers.
  std::vector<std::string> layers;
  /// Images used both for threshold profiling and IoU; empty means all.
  std::string split = "dissect";
  /// T_k is chosen so that a fraction (1 - quantile) of activations exceeds it.
  double quantile = 0.995;
  /// A unit is interpretable when its best IoU is strictly greater than this.
  double iou_threshold = 0.05;
  std::size_t reservoir_cap = 1'000'000;
  std::uint64_t seed = 0;
  int batch_size = 64;
  bool keep_iou_table = false;

  void validate() const;
};

struct UnitThreshold {
  int unit = 0;
  double threshold = 0.0;
  std::size_t sample_size = 0;
};

/// Fixed-capacity uniform sample of a stream (Algorithm R, seeded).
class ReservoirSampler {
 public:
  ReservoirSampler(std::size_t capacity, std::uint64_t seed);
  void add(float value);
  void add(std::span<const float> values);
  const std::vector<float>& sample() const { return sample_; }
  std::uint64_t seen() const { return seen_; }

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::mt19937_64 rng_;
  std::vector<float> sample_;
};

/// Order-statistic quantile: the element of rank floor(q * n) (0-based, clamped
/// to n - 1) of the sorted sample. Guarantees
///   #{a > T} <= (1 - q) n   and   #{a >= T} >= (1 - q) n.
double quantile_threshold(std::vector<float> sample, double q);

/// Per-unit thresholds over every spatial location of `layer` for the
/// configured split.
std::vector<UnitThreshold> compute_thresholds(const Network& net, const ConceptDataset& dataset,
                                              const std::string& layer, const DissectionConfig& config);

/// Bilinear interpolation on a corner-aligned grid: output corners coincide
/// with input corners.
std::vector<float> upsample_activation(std::span<const float> map, int height, int width, int target_height,
                                       int target_width);

/// mask[p] = map[p] > threshold.
std::vector<std::uint8_t> segment(std::span<const float> map, double threshold);

/// One unit's activation map per image, in the order of `positions`.
struct UnitActivations {
  int height = 0;
  int width = 0;
  std::vector<std::vector<float>> maps;
};

/// Sum over images of |seg & label| divided by the sum of |seg | label|, where
/// only images carrying a label map for the concept's category take part.
/// Zero when the union is empty.
double dataset_iou(const UnitActivations& activations, const UnitThreshold& threshold, const ConceptDataset& dataset,
                   std::span<const std::size_t> positions, int concept_id);

struct UnitDissection {
  std::string layer;
  int unit = 0;
  double threshold = 0.0;
  std::optional<int> best_concept;
  double best_iou = 0.0;
  bool interpretable = false;
  std::vector<double> iou;  // by concept id - 1; empty unless keep_iou_table
};

struct DissectionReport {
  std::vector<std::string> layers;
  std::vector<UnitDissection> units;
  std::string model_hash;
  std::string mask_hash;
  std::string dataset_hash;
  double iou_threshold = 0.05;
  double quantile = 0.995;

  std::size_t interpretable_count() const;
};

/// Dissects every unit of the configured layers. The mask, when given, is
/// applied to a copy of the network first.
DissectionReport dissect_network(const Network& net, const PruningMask* mask, const ConceptDataset& dataset,
                                 const DissectionConfig& config);

/// JSON report: header with hashes and thresholds, then one record per unit.
std::string report_to_json(const DissectionReport& report, const ConceptIndex& index);
DissectionReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& path, const DissectionReport& report, const ConceptIndex& index);
DissectionReport read_report(const std::filesystem::path& path);
/// `unit,concept_id,iou` where unit is the position in report.units.
void write_iou_table(const std::filesystem::path& path, const DissectionReport& report);

}  // namespace prunescope
