#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "prunescope/tensor.hpp"

namespace prunescope {

enum class Mode { Train, Eval };

/// Per-layer record of a training-mode forward pass, consumed by backward.
struct TapeNode {
  std::vector<Tensor> saved;
  std::vector<TapeNode> children;
};

/// A stateless transformation; parameters live in the NamedTensorSet passed
/// to every call, keyed by "<layer name>.<parameter>".
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }

  /// Output shape (C, H, W) for an input of shape (C, H, W).
  virtual Shape output_shape(const Shape& input) const = 0;
  /// Registers and initializes this layer's tensors.
  virtual void declare(NamedTensorSet& state, std::mt19937_64& rng) const = 0;

  virtual Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const = 0;
  /// Accumulates parameter gradients into `grads` and returns dL/dx.
  virtual Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                          NamedTensorSet& grads) const = 0;
  virtual void update_running_stats(const TapeNode& /*tape*/, NamedTensorSet& /*state*/,
                                    float /*momentum*/) const {}

 protected:
  std::string param(const char* suffix) const { return name_ + "." + suffix; }

 private:
  std::string name_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias);

  Shape output_shape(const Shape& input) const override;
  void declare(NamedTensorSet& state, std::mt19937_64& rng) const override;
  Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const override;
  Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                  NamedTensorSet& grads) const override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  bool bias_;
};

class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, float eps = 1e-5f);

  Shape output_shape(const Shape& input) const override { return input; }
  void declare(NamedTensorSet& state, std::mt19937_64& rng) const override;
  Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const override;
  Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                  NamedTensorSet& grads) const override;
  void update_running_stats(const TapeNode& tape, NamedTensorSet& state, float momentum) const override;

 private:
  int channels_;
  float eps_;
};

class ReLU final : public Layer {
 public:
  using Layer::Layer;
  Shape output_shape(const Shape& input) const override { return input; }
  void declare(NamedTensorSet&, std::mt19937_64&) const override {}
  Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const override;
  Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                  NamedTensorSet& grads) const override;
};

class GlobalAvgPool final : public Layer {
 public:
  using Layer::Layer;
  Shape output_shape(const Shape& input) const override { return {input.at(0)}; }
  void declare(NamedTensorSet&, std::mt19937_64&) const override {}
  Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const override;
  Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                  NamedTensorSet& grads) const override;
};

class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features);
  Shape output_shape(const Shape& input) const override;
  void declare(NamedTensorSet& state, std::mt19937_64& rng) const override;
  Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const override;
  Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                  NamedTensorSet& grads) const override;

 private:
  int in_, out_;
};

/// Residual basic block: relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)),
/// with a 1x1 convolution + batch norm shortcut when stride or width changes.
class BasicBlock final : public Layer {
 public:
  BasicBlock(std::string name, int in_channels, int out_channels, int stride);

  Shape output_shape(const Shape& input) const override;
  void declare(NamedTensorSet& state, std::mt19937_64& rng) const override;
  Tensor forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const override;
  Tensor backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                  NamedTensorSet& grads) const override;
  void update_running_stats(const TapeNode& tape, NamedTensorSet& state, float momentum) const override;

  bool has_projection() const { return proj_conv_ != nullptr; }

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  std::unique_ptr<Conv2d> proj_conv_;
  std::unique_ptr<BatchNorm2d> proj_bn_;
};

}  // namespace prunescope
