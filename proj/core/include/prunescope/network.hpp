#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "prunescope/layers.hpp"
#include "prunescope/tensor.hpp"

namespace prunescope {

/// Called with every top-level layer output during a forward pass.
using ActivationSink = std::function<void(const std::string& layer, const Tensor& output)>;

struct Tape {
  std::vector<TapeNode> nodes;
};

/// A sequential stack of named layers plus the tensors they read.
/// The layer stack is immutable and shared between copies; copying a Network
/// copies its weights.
class Network {
 public:
  Network(std::vector<std::shared_ptr<const Layer>> layers, Shape input_shape,
          std::vector<std::string> dissection_layers, std::string architecture);

  /// Declares and initializes every tensor from `seed`. Replaces any existing state.
  void initialize(std::uint64_t seed);

  NamedTensorSet& state() { return state_; }
  const NamedTensorSet& state() const { return state_; }
  /// Replaces the state; names, roles and shapes must match the current one.
  void load_state(const NamedTensorSet& state);

  const Shape& input_shape() const { return input_shape_; }
  int num_classes() const;
  const std::vector<std::string>& dissection_layers() const { return dissection_layers_; }
  std::vector<std::string> layer_names() const;
  bool has_layer(const std::string& name) const;
  /// Per-example output shape of a top-level layer, e.g. (C, H, W).
  Shape layer_output_shape(const std::string& name) const;

  /// Canonical description of the layer stack; equal descriptions imply
  /// identical tensor layouts.
  const std::string& architecture() const { return architecture_; }
  std::string architecture_hash() const;
  std::int64_t parameter_count() const { return state_.parameter_count(); }

  /// Batch input (N, C, H, W) -> logits (N, classes). `tape` must be given in
  /// training mode. Never modifies the network.
  Tensor forward(const Tensor& batch, Mode mode = Mode::Eval, Tape* tape = nullptr,
                 const ActivationSink* sink = nullptr) const;
  /// Accumulates dL/dparam into `grads` (which must hold the trainable tensors).
  void backward(const Tape& tape, const Tensor& grad_logits, NamedTensorSet& grads) const;
  void update_running_stats(const Tape& tape, float momentum);

 private:
  std::shared_ptr<const std::vector<std::shared_ptr<const Layer>>> layers_;
  Shape input_shape_;
  std::vector<Shape> output_shapes_;
  std::vector<std::string> dissection_layers_;
  std::string architecture_;
  NamedTensorSet state_;
};

/// Unit activations of one layer for one input image.
struct ActivationMap {
  std::string layer;
  int units = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;  // units x height x width

  std::span<const float> unit(int k) const {
    return std::span<const float>(values).subspan(static_cast<std::size_t>(k) * height * width,
                                                  static_cast<std::size_t>(height) * width);
  }
};

/// Eval-mode forward pass recording `layer`'s output; one map per image.
std::vector<ActivationMap> capture_activations(const Network& net, const Tensor& batch, const std::string& layer);

}  // namespace prunescope
