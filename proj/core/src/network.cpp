#include "prunescope/network.hpp"

#include <algorithm>
#include <set>

#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"

namespace prunescope {

Network::Network(std::vector<std::shared_ptr<const Layer>> layers, Shape input_shape,
                 std::vector<std::string> dissection_layers, std::string architecture)
    : layers_(std::make_shared<const std::vector<std::shared_ptr<const Layer>>>(std::move(layers))),
      input_shape_(std::move(input_shape)),
      dissection_layers_(std::move(dissection_layers)),
      architecture_(std::move(architecture)) {
  if (layers_->empty()) throw ConstructionError("network has no layers");
  std::set<std::string> names;
  Shape shape = input_shape_;
  for (const auto& layer : *layers_) {
    if (!names.insert(layer->name()).second) throw ConstructionError("duplicate layer name '" + layer->name() + "'");
    try {
      shape = layer->output_shape(shape);
    } catch (const DomainError& e) {
      throw ConstructionError(e.what());
    }
    output_shapes_.push_back(shape);
  }
  if (output_shapes_.back().size() != 1) throw ConstructionError("network must end in a flat logits layer");
  for (const auto& d : dissection_layers_) {
    if (!names.count(d)) throw ConstructionError("dissection layer '" + d + "' does not exist");
    if (layer_output_shape(d).size() != 3) throw ConstructionError("dissection layer '" + d + "' is not convolutional");
  }
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NamedTensorSet fresh;
  for (const auto& layer : *layers_) layer->declare(fresh, rng);
  state_ = std::move(fresh);
}

void Network::load_state(const NamedTensorSet& state) {
  if (state.size() != state_.size()) throw SchemaError("state has " + std::to_string(state.size()) +
                                                       " tensors, network expects " + std::to_string(state_.size()));
  auto it = state_.begin();
  for (const auto& [name, entry] : state) {
    if (name != it->first || entry.role != it->second.role || entry.value.shape != it->second.value.shape) {
      throw SchemaError("state tensor '" + name + "' does not match network tensor '" + it->first + "'");
    }
    ++it;
  }
  state_ = state;
}

int Network::num_classes() const { return static_cast<int>(output_shapes_.back().at(0)); }

std::vector<std::string> Network::layer_names() const {
  std::vector<std::string> out;
  for (const auto& l : *layers_) out.push_back(l->name());
  return out;
}

bool Network::has_layer(const std::string& name) const {
  return std::any_of(layers_->begin(), layers_->end(), [&](const auto& l) { return l->name() == name; });
}

Shape Network::layer_output_shape(const std::string& name) const {
  for (std::size_t i = 0; i < layers_->size(); ++i) {
    if ((*layers_)[i]->name() == name) return output_shapes_[i];
  }
  throw LookupError("unknown layer '" + name + "'");
}

std::string Network::architecture_hash() const { return sha256_hex(architecture_); }

Tensor Network::forward(const Tensor& batch, Mode mode, Tape* tape, const ActivationSink* sink) const {
  if (batch.shape.size() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape.begin() + 1)) {
    throw DomainError("input batch " + shape_string(batch.shape) + " does not match network input " +
                      shape_string(input_shape_));
  }
  if (mode == Mode::Train && !tape) throw DomainError("training-mode forward requires a tape");
  if (tape) tape->nodes.assign(layers_->size(), TapeNode{});
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_->size(); ++i) {
    x = (*layers_)[i]->forward(x, state_, mode, tape ? &tape->nodes[i] : nullptr);
    if (sink && *sink) (*sink)((*layers_)[i]->name(), x);
  }
  return x;
}

void Network::backward(const Tape& tape, const Tensor& grad_logits, NamedTensorSet& grads) const {
  Tensor g = grad_logits;
  for (std::size_t i = layers_->size(); i-- > 0;) {
    g = (*layers_)[i]->backward(g, state_, tape.nodes.at(i), grads);
  }
}

void Network::update_running_stats(const Tape& tape, float momentum) {
  for (std::size_t i = 0; i < layers_->size(); ++i) {
    (*layers_)[i]->update_running_stats(tape.nodes.at(i), state_, momentum);
  }
}

std::vector<ActivationMap> capture_activations(const Network& net, const Tensor& batch, const std::string& layer) {
  const Shape shape = net.layer_output_shape(layer);  // throws LookupError
  if (shape.size() != 3) throw LookupError("layer '" + layer + "' does not produce spatial activation maps");
  std::vector<ActivationMap> maps;
  ActivationSink sink = [&](const std::string& name, const Tensor& out) {
    if (name != layer) return;
    const auto n = out.dim(0);
    const std::size_t per = static_cast<std::size_t>(element_count(shape));
    for (std::int64_t i = 0; i < n; ++i) {
      ActivationMap m{layer, static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2]), {}};
      m.values.assign(out.data.begin() + static_cast<std::ptrdiff_t>(i * per),
                      out.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
      maps.push_back(std::move(m));
    }
  };
  net.forward(batch, Mode::Eval, nullptr, &sink);
  return maps;
}

}  // namespace prunescope
