#pragma once

// Dense single-precision array. Images and activation maps are NHWC, dense
// activations are (batch, features); samples are always the leading axis.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dwc {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(std::span<const std::size_t> shape) noexcept;
std::string shape_string(std::span<const std::size_t> shape);

struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);
  // Throws Errc::ShapeMismatch when data.size() != product(s).
  Tensor(Shape s, std::vector<float> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }

  // Leading axis and the element count of one slice along it.
  std::size_t batch() const noexcept { return shape.empty() ? 0 : shape.front(); }
  std::size_t sample_size() const noexcept;
  Shape sample_shape() const;

  std::span<const float> sample(std::size_t b) const;
  std::span<float> sample(std::size_t b);

  // Copy of samples [begin, end) as a new batch.
  Tensor slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Concatenate along the leading axis; all parts must share the sample shape.
Tensor concat(std::span<const Tensor> parts);

}  // namespace dwc
