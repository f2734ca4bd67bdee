#include "prunescope/dissector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "prunescope/archive.hpp"
#include "prunescope/classification.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"
#include "prunescope/progress.hpp"

namespace prunescope {

void DissectionConfig::validate() const {
  if (!(quantile > 0.0 && quantile < 1.0)) throw DomainError("dissection.quantile: must lie in (0, 1)");
  if (!(iou_threshold >= 0.0 && iou_threshold < 1.0)) throw DomainError("dissection.iou_threshold: must lie in [0, 1)");
  if (reservoir_cap == 0) throw DomainError("dissection.reservoir_cap: must be > 0");
  if (batch_size <= 0) throw DomainError("dissection.batch_size: must be > 0");
}

// ---------------------------------------------------------------- thresholds

ReservoirSampler::ReservoirSampler(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  sample_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReservoirSampler::add(float value) {
  ++seen_;
  if (sample_.size() < capacity_) {
    sample_.push_back(value);
    return;
  }
  const std::uint64_t j = rng_() % seen_;
  if (j < capacity_) sample_[j] = value;
}

void ReservoirSampler::add(std::span<const float> values) {
  for (float v : values) add(v);
}

double quantile_threshold(std::vector<float> sample, double q) {
  if (sample.empty()) throw DomainError("quantile of an empty sample");
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile must lie in (0, 1)");
  const auto n = sample.size();
  auto rank = static_cast<std::size_t>(std::floor(q * static_cast<double>(n)));
  rank = std::min(rank, n - 1);
  std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(rank), sample.end());
  return sample[rank];
}

namespace {

// Activations of several layers for a set of images: layer -> (N, K, h, w).
std::map<std::string, Tensor> collect_activations(const Network& net, const ConceptDataset& dataset,
                                                  std::span<const std::size_t> positions,
                                                  const std::vector<std::string>& layers, int batch_size) {
  std::map<std::string, Tensor> out;
  for (const auto& layer : layers) {
    Shape s = net.layer_output_shape(layer);
    if (s.size() != 3) throw LookupError("layer '" + layer + "' does not produce spatial activation maps");
    out.emplace(layer, Tensor({static_cast<std::int64_t>(positions.size()), s[0], s[1], s[2]}));
  }
  for (std::size_t begin = 0; begin < positions.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(positions.size(), begin + static_cast<std::size_t>(batch_size));
    Tensor batch = images_to_tensor(dataset, positions.subspan(begin, end - begin));
    ActivationSink sink = [&](const std::string& name, const Tensor& t) {
      auto it = out.find(name);
      if (it == out.end()) return;
      const std::size_t per = static_cast<std::size_t>(element_count(t.shape) / t.shape[0]);
      std::copy(t.data.begin(), t.data.end(), it->second.data.begin() + static_cast<std::ptrdiff_t>(begin * per));
    };
    net.forward(batch, Mode::Eval, nullptr, &sink);
  }
  for (const auto& [layer, t] : out) {
    for (float v : t.data) {
      if (!std::isfinite(v)) throw DataError("non-finite activation in layer '" + layer + "'");
    }
  }
  return out;
}

std::vector<UnitThreshold> thresholds_from(const Tensor& acts, const DissectionConfig& config, std::uint64_t salt) {
  const auto n = acts.dim(0), k = acts.dim(1), plane = acts.dim(2) * acts.dim(3);
  std::vector<UnitThreshold> out(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < k; ++u) {
    ReservoirSampler sampler(config.reservoir_cap, config.seed ^ (salt * 0x9E3779B97F4A7C15ULL) ^ static_cast<std::uint64_t>(u));
    for (std::int64_t i = 0; i < n; ++i) {
      sampler.add(std::span<const float>(acts.ptr() + (i * k + u) * plane, static_cast<std::size_t>(plane)));
    }
    out[static_cast<std::size_t>(u)] = {static_cast<int>(u), quantile_threshold(sampler.sample(), config.quantile),
                                        sampler.sample().size()};
  }
  return out;
}

std::uint64_t layer_salt(const std::string& layer) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : layer) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// Per-unit counts over the dataset: intersections by concept id, and
// segmented-pixel totals by category restricted to images labeled in it.
struct UnitCounts {
  std::vector<std::int64_t> intersection;  // index = concept id
  std::map<Category, std::int64_t> segmented;
  std::int64_t segmented_any = 0;
};

struct LabelTotals {
  std::vector<std::int64_t> by_concept;  // index = concept id
};

LabelTotals label_totals(const ConceptDataset& dataset, std::span<const std::size_t> positions) {
  LabelTotals t{std::vector<std::int64_t>(dataset.index().size() + 1, 0)};
  for (auto p : positions) {
    const auto& img = dataset.images()[p];
    const int h = img.image.height, w = img.image.width;
    for (const auto& [cat, map] : img.label_maps) {
      const int factor = h / map.height;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) ++t.by_concept[map.at(y / factor, x / factor)];
      }
    }
  }
  t.by_concept[kUnlabeled] = 0;
  return t;
}

template <typename MapFor>
UnitCounts count_unit(const ConceptDataset& dataset, std::span<const std::size_t> positions, int ah, int aw,
                      double threshold, MapFor&& map_for) {
  UnitCounts c{std::vector<std::int64_t>(dataset.index().size() + 1, 0), {}, 0};
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& img = dataset.images()[positions[i]];
    const int h = img.image.height, w = img.image.width;
    auto up = upsample_activation(map_for(i), ah, aw, h, w);
    std::int64_t seg_count = 0;
    for (float v : up) seg_count += v > threshold ? 1 : 0;
    c.segmented_any += seg_count;
    for (const auto& [cat, map] : img.label_maps) {
      c.segmented[cat] += seg_count;
      if (seg_count == 0) continue;
      const int factor = h / map.height;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (up[static_cast<std::size_t>(y) * w + x] > threshold) ++c.intersection[map.at(y / factor, x / factor)];
        }
      }
    }
  }
  return c;
}

double iou_from(const UnitCounts& c, const LabelTotals& t, int concept_id, Category cat) {
  auto it = c.segmented.find(cat);
  const std::int64_t seg = it == c.segmented.end() ? 0 : it->second;
  const std::int64_t inter = c.intersection[static_cast<std::size_t>(concept_id)];
  const std::int64_t uni = seg + t.by_concept[static_cast<std::size_t>(concept_id)] - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::vector<UnitThreshold> compute_thresholds(const Network& net, const ConceptDataset& dataset,
                                              const std::string& layer, const DissectionConfig& config) {
  config.validate();
  auto positions = dataset.split_positions(config.split);
  if (positions.empty()) throw DomainError("no images in split '" + config.split + "'");
  auto acts = collect_activations(net, dataset, positions, {layer}, config.batch_size);
  return thresholds_from(acts.at(layer), config, layer_salt(layer));
}

// ---------------------------------------------------------------- segmentation

std::vector<float> upsample_activation(std::span<const float> map, int height, int width, int target_height,
                                       int target_width) {
  if (height <= 0 || width <= 0) throw DomainError("cannot upsample an empty activation map");
  if (map.size() != static_cast<std::size_t>(height) * width) throw DomainError("activation map size mismatch");
  if (target_height < height || target_width < width) {
    throw DomainError("upsampling target must be at least the source size");
  }
  std::vector<float> out(static_cast<std::size_t>(target_height) * target_width);
  auto coord = [](int i, int src, int dst) {
    return dst == 1 ? 0.0 : static_cast<double>(i) * (src - 1) / (dst - 1);
  };
  for (int y = 0; y < target_height; ++y) {
    const double sy = coord(y, height, target_height);
    const int y0 = std::min(static_cast<int>(sy), height - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < target_width; ++x) {
      const double sx = coord(x, width, target_width);
      const int x0 = std::min(static_cast<int>(sx), width - 1);
      const int x1 = std::min(x0 + 1, width - 1);
      const double fx = sx - x0;
      const double top = (1.0 - fx) * map[static_cast<std::size_t>(y0) * width + x0] +
                         fx * map[static_cast<std::size_t>(y0) * width + x1];
      const double bottom = (1.0 - fx) * map[static_cast<std::size_t>(y1) * width + x0] +
                            fx * map[static_cast<std::size_t>(y1) * width + x1];
      out[static_cast<std::size_t>(y) * target_width + x] = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

std::vector<std::uint8_t> segment(std::span<const float> map, double threshold) {
  std::vector<std::uint8_t> mask(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) mask[i] = map[i] > threshold ? 1 : 0;
  return mask;
}

double dataset_iou(const UnitActivations& activations, const UnitThreshold& threshold, const ConceptDataset& dataset,
                   std::span<const std::size_t> positions, int concept_id) {
  const auto& concept_entry = dataset.index().concept_by_id(concept_id);
  if (activations.maps.size() != positions.size()) throw DomainError("one activation map per image is required");
  auto totals = label_totals(dataset, positions);
  auto counts = count_unit(dataset, positions, activations.height, activations.width, threshold.threshold,
                           [&](std::size_t i) { return std::span<const float>(activations.maps[i]); });
  return iou_from(counts, totals, concept_id, concept_entry.category);
}

// ---------------------------------------------------------------- network

std::size_t DissectionReport::interpretable_count() const {
  return static_cast<std::size_t>(std::count_if(units.begin(), units.end(), [](const auto& u) { return u.interpretable; }));
}

DissectionReport dissect_network(const Network& net, const PruningMask* mask, const ConceptDataset& dataset,
                                 const DissectionConfig& config) {
  config.validate();
  Network masked = net;
  if (mask) mask->apply(masked.state());
  const auto layers = config.layers.empty() ? net.dissection_layers() : config.layers;
  auto positions = dataset.split_positions(config.split);
  if (positions.empty()) throw DomainError("no images in split '" + config.split + "'");

  DissectionReport report;
  report.layers = layers;
  report.model_hash = hash_tensors(masked.state());
  report.mask_hash = mask ? mask->hash() : "none";
  report.dataset_hash = dataset.content_hash();
  report.iou_threshold = config.iou_threshold;
  report.quantile = config.quantile;

  auto acts = collect_activations(masked, dataset, positions, layers, config.batch_size);
  auto totals = label_totals(dataset, positions);
  const auto& concepts = dataset.index().concepts();

  for (const auto& layer : layers) {
    const Tensor& t = acts.at(layer);
    const int k = static_cast<int>(t.dim(1)), ah = static_cast<int>(t.dim(2)), aw = static_cast<int>(t.dim(3));
    const std::size_t plane = static_cast<std::size_t>(ah) * aw;
    auto thresholds = thresholds_from(t, config, layer_salt(layer));
    std::vector<UnitDissection> units(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(dynamic)
    for (int u = 0; u < k; ++u) {
      const double thr = thresholds[static_cast<std::size_t>(u)].threshold;
      auto counts = count_unit(dataset, positions, ah, aw, thr, [&](std::size_t i) {
        return std::span<const float>(t.ptr() + (i * static_cast<std::size_t>(k) + static_cast<std::size_t>(u)) * plane, plane);
      });
      UnitDissection ud;
      ud.layer = layer;
      ud.unit = u;
      ud.threshold = thr;
      if (config.keep_iou_table) ud.iou.assign(concepts.size(), 0.0);
      if (counts.segmented_any > 0) {
        for (const auto& c : concepts) {
          const double iou = iou_from(counts, totals, c.id, c.category);
          if (config.keep_iou_table) ud.iou[static_cast<std::size_t>(c.id - 1)] = iou;
          if (!ud.best_concept || iou > ud.best_iou) {
            ud.best_concept = c.id;
            ud.best_iou = iou;
          }
        }
      }
      ud.interpretable = ud.best_iou > config.iou_threshold;
      units[static_cast<std::size_t>(u)] = std::move(ud);
    }
    for (auto& u : units) report.units.push_back(std::move(u));
    log_progress({{"stage", "dissect"}, {"layer", layer}, {"units", std::to_string(k)},
                  {"interpretable", std::to_string(std::count_if(report.units.end() - k, report.units.end(),
                                                                 [](const auto& x) { return x.interpretable; }))}});
  }
  return report;
}

// ---------------------------------------------------------------- persistence

std::string report_to_json(const DissectionReport& report, const ConceptIndex& index) {
  nlohmann::ordered_json j;
  auto& header = j["header"];
  header["model_hash"] = report.model_hash;
  header["mask_hash"] = report.mask_hash;
  header["dataset_hash"] = report.dataset_hash;
  header["layers"] = report.layers;
  header["iou_threshold"] = report.iou_threshold;
  header["quantile"] = report.quantile;
  auto thresholds = nlohmann::ordered_json::array();
  auto units = nlohmann::ordered_json::array();
  for (const auto& u : report.units) {
    thresholds.push_back({{"layer", u.layer}, {"unit", u.unit}, {"threshold", u.threshold}});
    nlohmann::ordered_json rec;
    rec["unit"] = u.unit;
    rec["layer"] = u.layer;
    rec["threshold"] = u.threshold;
    if (u.best_concept) {
      const auto& c = index.concept_by_id(*u.best_concept);
      rec["best_concept"] = c.id;
      rec["best_concept_name"] = c.name;
      rec["category"] = category_name(c.category);
    } else {
      rec["best_concept"] = nullptr;
      rec["best_concept_name"] = nullptr;
      rec["category"] = nullptr;
    }
    rec["best_iou"] = u.best_iou;
    rec["interpretable"] = u.interpretable;
    units.push_back(std::move(rec));
  }
  header["thresholds"] = std::move(thresholds);
  j["units"] = std::move(units);
  return j.dump(2) + "\n";
}

DissectionReport report_from_json(const std::string& text) {
  DissectionReport r;
  try {
    auto j = nlohmann::json::parse(text);
    const auto& h = j.at("header");
    r.model_hash = h.at("model_hash").get<std::string>();
    r.mask_hash = h.at("mask_hash").get<std::string>();
    r.dataset_hash = h.at("dataset_hash").get<std::string>();
    r.layers = h.at("layers").get<std::vector<std::string>>();
    r.iou_threshold = h.at("iou_threshold").get<double>();
    r.quantile = h.at("quantile").get<double>();
    for (const auto& rec : j.at("units")) {
      UnitDissection u;
      u.unit = rec.at("unit").get<int>();
      u.layer = rec.at("layer").get<std::string>();
      u.threshold = rec.at("threshold").get<double>();
      if (!rec.at("best_concept").is_null()) u.best_concept = rec.at("best_concept").get<int>();
      u.best_iou = rec.at("best_iou").get<double>();
      u.interpretable = rec.at("interpretable").get<bool>();
      r.units.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed dissection report: ") + e.what());
  }
  return r;
}

void write_report(const std::filesystem::path& path, const DissectionReport& report, const ConceptIndex& index) {
  write_file_atomic(path, report_to_json(report, index));
}

DissectionReport read_report(const std::filesystem::path& path) { return report_from_json(read_file(path)); }

void write_iou_table(const std::filesystem::path& path, const DissectionReport& report) {
  std::string out = "unit,concept_id,iou\n";
  for (std::size_t i = 0; i < report.units.size(); ++i) {
    const auto& iou = report.units[i].iou;
    for (std::size_t c = 0; c < iou.size(); ++c) {
      out += std::to_string(i) + "," + std::to_string(c + 1) + "," + format_double(iou[c]) + "\n";
    }
  }
  write_file_atomic(path, out);
}

}  // namespace prunescope
