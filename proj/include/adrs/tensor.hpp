#ifndef ADRS_TENSOR_HPP_
#define ADRS_TENSOR_HPP_

#include <cstddef>
#include <vector>

namespace adrs {

/// Dense channels x height x width single-precision cube. Feature maps,
/// network inputs and gradients all use this layout.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float* channel(int c) { return data.data() + c * plane(); }
  const float* channel(int c) const { return data.data() + c * plane(); }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Tensor&) const = default;
};

/// Descriptor field D, normality features N_i / N'_i, and fused cube T.
using FeatureCube = Tensor;

}  // namespace adrs

#endif  // ADRS_TENSOR_HPP_
