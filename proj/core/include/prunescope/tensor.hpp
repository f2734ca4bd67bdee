#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace prunescope {

using Shape = std::vector<std::int64_t>;

std::int64_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  std::span<float> span() { return data; }
  std::span<const float> span() const { return data; }
};

/// Same shape and same bytes (distinguishes -0.0f from 0.0f, compares NaN payloads).
bool bit_equal(const Tensor& a, const Tensor& b);

enum class TensorRole : std::uint8_t {
  ConvWeight = 0,
  LinearWeight = 1,
  Bias = 2,
  NormScale = 3,
  NormShift = 4,
  NormRunningMean = 5,
  NormRunningVar = 6,
};

const char* role_name(TensorRole role);
bool is_prunable(TensorRole role);
bool is_trainable(TensorRole role);

struct NamedTensor {
  TensorRole role;
  Tensor value;
};

/// Name -> tensor map holding everything a model needs to be restored:
/// weights, biases, and normalization parameters and statistics.
/// Iteration order is lexicographic by name.
class NamedTensorSet {
 public:
  using Map = std::map<std::string, NamedTensor>;

  void add(const std::string& name, TensorRole role, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  TensorRole role(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  /// Number of trainable scalars (running statistics excluded).
  std::int64_t parameter_count() const;

  /// Copy with identical names, roles and shapes, filled with zeros.
  NamedTensorSet zeros_like() const;
  /// Zero-filled copy restricted to trainable entries.
  NamedTensorSet trainable_zeros_like() const;

 private:
  Map entries_;
};

bool bit_equal(const NamedTensorSet& a, const NamedTensorSet& b);

}  // namespace prunescope
