#pragma once

#include <vector>

#include "pan/tensor.hpp"

namespace pan {

/// Per-pixel displacement field (pixels/frame).
struct FlowField {
  TensorF u;  // horizontal
  TensorF v;  // vertical
};

/// Luminance conversion for the flow baseline: 0.299 R + 0.587 G + 0.114 B.
TensorF rgb_to_gray(const TensorF& frame);

/// Classic Horn-Schunck: Jacobi sweeps with central-difference image
/// gradients and the 4-neighbor flow average. lambda is the smoothness
/// weight in the update denominator. When `residuals` is given it receives
/// the mean squared flow change of each sweep.
FlowField horn_schunck(const TensorF& f1, const TensorF& f2, float lambda, int iters,
                       std::vector<float>* residuals = nullptr);

/// sqrt(u^2 + v^2) per pixel, as [1,H,W].
TensorF flow_magnitude(const FlowField& flow);

}  // namespace pan
