#pragma once

#include <memory>

#include "prunescope/network.hpp"

namespace prunescope::testing {

// 1x1 convolution "detector" over RGB input followed by pooling and a linear
// head. Unit 0 responds to blue (B - (R + G) / 2), unit 1 is identically zero.
inline Network planted_blue_detector(int height, int width, bool zero_layer = false) {
  std::vector<std::shared_ptr<const Layer>> layers = {
      std::make_shared<Conv2d>("detector", 3, 2, 1, 1, 0, true),
      std::make_shared<GlobalAvgPool>("pool"),
      std::make_shared<Linear>("fc", 2, 2),
  };
  Network net(std::move(layers), {3, height, width}, {"detector"}, "planted_blue_detector");
  net.initialize(0);
  auto& w = net.state().at("detector.weight");
  auto& b = net.state().at("detector.bias");
  std::fill(w.data.begin(), w.data.end(), 0.0f);
  std::fill(b.data.begin(), b.data.end(), 0.0f);
  if (!zero_layer) {
    w.data[0] = -0.5f;  // R
    w.data[1] = -0.5f;  // G
    w.data[2] = 1.0f;   // B
  }
  return net;
}

}  // namespace prunescope::testing
