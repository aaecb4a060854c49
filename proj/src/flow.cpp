#include "pan/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace pan {

TensorF rgb_to_gray(const TensorF& frame) {
  require_rank(frame, 3, "rgb_to_gray");
  if (frame.dim(0) != 3) {
    throw std::invalid_argument("rgb_to_gray: expected 3 channels, got " +
                                TensorF::shape_str(frame.shape));
  }
  const std::size_t h = frame.dim(1), w = frame.dim(2), hw = h * w;
  TensorF gray({h, w});
  const float* r = frame.ptr();
  const float* g = r + hw;
  const float* b = g + hw;
  for (std::size_t i = 0; i < hw; ++i) gray[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  return gray;
}

FlowField horn_schunck(const TensorF& f1, const TensorF& f2, float lambda, int iters,
                       std::vector<float>* residuals) {
  require_rank(f1, 2, "horn_schunck");
  require_same_shape(f1, f2, "horn_schunck");
  if (iters < 1) throw std::invalid_argument("horn_schunck: iters must be >= 1");
  if (lambda <= 0.f) throw std::invalid_argument("horn_schunck: lambda must be > 0");

  const std::size_t h = f1.dim(0), w = f1.dim(1), hw = h * w;
  // Gradients from the frame average (central differences, clamped borders),
  // temporal gradient from the frame difference. Solved in double like the
  // usual reference implementations; the field is returned as float.
  std::vector<double> ix(hw), iy(hw), it(hw);
  auto avg_at = [&](std::size_t y, std::size_t x) {
    const std::size_t i = y * w + x;
    return 0.5 * (static_cast<double>(f1[i]) + static_cast<double>(f2[i]));
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xm = x > 0 ? x - 1 : 0, xp = x + 1 < w ? x + 1 : w - 1;
      const std::size_t ym = y > 0 ? y - 1 : 0, yp = y + 1 < h ? y + 1 : h - 1;
      const std::size_t i = y * w + x;
      ix[i] = 0.5 * (avg_at(y, xp) - avg_at(y, xm));
      iy[i] = 0.5 * (avg_at(yp, x) - avg_at(ym, x));
      it[i] = static_cast<double>(f2[i]) - static_cast<double>(f1[i]);
    }
  }

  std::vector<double> u(hw, 0.0), v(hw, 0.0), un(hw), vn(hw);
  if (residuals) residuals->clear();
  for (int sweep = 0; sweep < iters; ++sweep) {
    double change = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        double ubar = 0.0, vbar = 0.0;
        if (y > 0) { ubar += u[i - w]; vbar += v[i - w]; }
        if (y + 1 < h) { ubar += u[i + w]; vbar += v[i + w]; }
        if (x > 0) { ubar += u[i - 1]; vbar += v[i - 1]; }
        if (x + 1 < w) { ubar += u[i + 1]; vbar += v[i + 1]; }
        ubar *= 0.25;
        vbar *= 0.25;
        const double num = ix[i] * ubar + iy[i] * vbar + it[i];
        const double den = static_cast<double>(lambda) + ix[i] * ix[i] + iy[i] * iy[i];
        const double a = num / den;
        un[i] = ubar - ix[i] * a;
        vn[i] = vbar - iy[i] * a;
        const double du = un[i] - u[i], dv = vn[i] - v[i];
        change += du * du + dv * dv;
      }
    }
    std::swap(u, un);
    std::swap(v, vn);
    if (residuals) residuals->push_back(static_cast<float>(change / static_cast<double>(hw)));
  }

  FlowField flow{TensorF({h, w}), TensorF({h, w})};
  for (std::size_t i = 0; i < hw; ++i) {
    flow.u[i] = static_cast<float>(u[i]);
    flow.v[i] = static_cast<float>(v[i]);
  }
  return flow;
}

TensorF flow_magnitude(const FlowField& flow) {
  require_same_shape(flow.u, flow.v, "flow_magnitude");
  const std::size_t h = flow.u.dim(0), w = flow.u.dim(1);
  TensorF mag({1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    mag[i] = std::sqrt(flow.u[i] * flow.u[i] + flow.v[i] * flow.v[i]);
  }
  return mag;
}

}  // namespace pan
