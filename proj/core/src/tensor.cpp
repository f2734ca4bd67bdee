#include "prunescope/tensor.hpp"

#include <cstring>

#include "prunescope/errors.hpp"

namespace prunescope {

std::int64_t element_count(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DomainError("negative dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, float fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(element_count(shape)), fill);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

const char* role_name(TensorRole role) {
  switch (role) {
    case TensorRole::ConvWeight: return "conv_weight";
    case TensorRole::LinearWeight: return "linear_weight";
    case TensorRole::Bias: return "bias";
    case TensorRole::NormScale: return "norm_scale";
    case TensorRole::NormShift: return "norm_shift";
    case TensorRole::NormRunningMean: return "norm_running_mean";
    case TensorRole::NormRunningVar: return "norm_running_var";
  }
  return "unknown";
}

bool is_prunable(TensorRole role) {
  return role == TensorRole::ConvWeight || role == TensorRole::LinearWeight;
}

bool is_trainable(TensorRole role) {
  return role != TensorRole::NormRunningMean && role != TensorRole::NormRunningVar;
}

void NamedTensorSet::add(const std::string& name, TensorRole role, Tensor value) {
  if (value.size() != element_count(value.shape)) {
    throw DomainError("tensor '" + name + "' data does not match shape " + shape_string(value.shape));
  }
  auto [it, inserted] = entries_.emplace(name, NamedTensor{role, std::move(value)});
  if (!inserted) throw SchemaError("duplicate tensor name '" + name + "'");
}

Tensor& NamedTensorSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown tensor '" + name + "'");
  return it->second.value;
}

const Tensor& NamedTensorSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown tensor '" + name + "'");
  return it->second.value;
}

TensorRole NamedTensorSet::role(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown tensor '" + name + "'");
  return it->second.role;
}

std::int64_t NamedTensorSet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, entry] : entries_) {
    if (is_trainable(entry.role)) n += entry.value.size();
  }
  return n;
}

NamedTensorSet NamedTensorSet::zeros_like() const {
  NamedTensorSet out;
  for (const auto& [name, entry] : entries_) out.add(name, entry.role, Tensor(entry.value.shape));
  return out;
}

NamedTensorSet NamedTensorSet::trainable_zeros_like() const {
  NamedTensorSet out;
  for (const auto& [name, entry] : entries_) {
    if (is_trainable(entry.role)) out.add(name, entry.role, Tensor(entry.value.shape));
  }
  return out;
}

bool bit_equal(const NamedTensorSet& a, const NamedTensorSet& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.role != ib->second.role) return false;
    if (!bit_equal(ia->second.value, ib->second.value)) return false;
  }
  return true;
}

}  // namespace prunescope
