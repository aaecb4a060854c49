#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pan/tensor.hpp"

namespace pan {

/// A labeled clip held in memory as 8-bit planar RGB frames ([3][H][W] per
/// frame). Frames convert to [0,1] float tensors on demand.
struct ClipData {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // frames * 3 * height * width, planar per frame
  int label = -1;
  std::string path;

  std::size_t frame_bytes() const { return 3 * height * width; }

  template <class T>
  Tensor<T> frame(std::size_t t) const {
    if (t >= frames) {
      throw std::out_of_range("ClipData: frame " + std::to_string(t) + " of " + std::to_string(frames));
    }
    Tensor<T> out({3, height, width});
    const std::uint8_t* src = rgb.data() + t * frame_bytes();
    const T inv = T{1} / T{255};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]) * inv;
    return out;
  }
};

}  // namespace pan
