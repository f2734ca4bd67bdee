#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "prunescope/concept_data.hpp"
#include "prunescope/network.hpp"

namespace prunescope {

/// Images as an (N, C, H, W) tensor scaled to [0, 1] plus integer class labels.
struct ClassificationSet {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Tensor gather(std::span<const std::size_t> rows) const;
};

/// Rows of a batch-major tensor, in the given order.
Tensor gather_rows(const Tensor& batch, std::span<const std::size_t> rows);

Tensor images_to_tensor(const ConceptDataset& dataset, std::span<const std::size_t> positions);

/// Images of `split` that carry a class label. Throws DataError if any lacks one.
ClassificationSet make_classification_set(const ConceptDataset& dataset, std::string_view split);

/// Arg-max class per example (ties resolve to the lowest class index).
std::vector<int> predict(const Network& net, const Tensor& images, int batch_size = 128);

/// Top-1 accuracy: correct arg-max predictions over total.
double evaluate_accuracy(const Network& net, const ClassificationSet& data, int batch_size = 128);

}  // namespace prunescope
