#include "prunescope/classification.hpp"

#include <algorithm>
#include <numeric>

#include "prunescope/errors.hpp"

namespace prunescope {

Tensor gather_rows(const Tensor& images, std::span<const std::size_t> rows) {
  Shape shape = images.shape;
  shape[0] = static_cast<std::int64_t>(rows.size());
  Tensor out(shape);
  const std::size_t per = static_cast<std::size_t>(element_count(images.shape) / images.shape[0]);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

Tensor ClassificationSet::gather(std::span<const std::size_t> rows) const { return gather_rows(images, rows); }

Tensor images_to_tensor(const ConceptDataset& dataset, std::span<const std::size_t> positions) {
  if (positions.empty()) return Tensor({0, 3, 1, 1});
  const auto& first = dataset.images().at(positions[0]).image;
  const int c = first.channels, h = first.height, w = first.width;
  Tensor out({static_cast<std::int64_t>(positions.size()), c, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& img = dataset.images().at(positions[i]).image;
    if (img.channels != c || img.height != h || img.width != w) {
      throw DataError("image '" + dataset.images()[positions[i]].image_id + "' differs in size from the batch");
    }
    float* dst = out.ptr() + i * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      for (int ch = 0; ch < c; ++ch) dst[ch * plane + p] = img.pixels[p * c + ch] / 255.0f;
    }
  }
  return out;
}

ClassificationSet make_classification_set(const ConceptDataset& dataset, std::string_view split) {
  auto positions = dataset.split_positions(split);
  ClassificationSet set;
  for (auto p : positions) {
    const auto& img = dataset.images()[p];
    if (img.class_label < 0) throw DataError("image '" + img.image_id + "' has no class label");
    set.labels.push_back(img.class_label);
  }
  set.images = images_to_tensor(dataset, positions);
  return set;
}

std::vector<int> predict(const Network& net, const Tensor& images, int batch_size) {
  const auto n = static_cast<std::size_t>(images.dim(0));
  std::vector<int> preds;
  preds.reserve(n);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    Tensor logits = net.forward(gather_rows(images, rows), Mode::Eval);
    const auto k = logits.dim(1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const float* row = logits.ptr() + i * k;
      preds.push_back(static_cast<int>(std::max_element(row, row + k) - row));
    }
  }
  return preds;
}

double evaluate_accuracy(const Network& net, const ClassificationSet& data, int batch_size) {
  if (data.size() == 0) throw DomainError("accuracy of an empty evaluation set is undefined");
  for (int label : data.labels) {
    if (label < 0 || label >= net.num_classes()) {
      throw DomainError("class label " + std::to_string(label) + " outside the model's " +
                        std::to_string(net.num_classes()) + " classes");
    }
  }
  auto preds = predict(net, data.images, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace prunescope
