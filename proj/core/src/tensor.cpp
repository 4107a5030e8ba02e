#include "dwc/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "dwc/error.hpp"

namespace dwc {

std::size_t shape_product(std::span<const std::size_t> shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape s, float fill) : shape(std::move(s)), data(shape_product(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_product(shape)) {
    fail(Errc::ShapeMismatch, "tensor of shape " + shape_string(shape) + " given " +
                                  std::to_string(data.size()) + " values");
  }
}

std::size_t Tensor::sample_size() const noexcept {
  if (shape.empty()) return 0;
  return shape_product(std::span(shape).subspan(1));
}

Shape Tensor::sample_shape() const {
  if (shape.empty()) return {};
  return Shape(shape.begin() + 1, shape.end());
}

std::span<const float> Tensor::sample(std::size_t b) const {
  if (b >= batch()) fail(Errc::IndexOutOfRange, "sample " + std::to_string(b) + " of " + shape_string(shape));
  const std::size_t n = sample_size();
  return std::span<const float>(data).subspan(b * n, n);
}

std::span<float> Tensor::sample(std::size_t b) {
  if (b >= batch()) fail(Errc::IndexOutOfRange, "sample " + std::to_string(b) + " of " + shape_string(shape));
  const std::size_t n = sample_size();
  return std::span<float>(data).subspan(b * n, n);
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > batch()) {
    fail(Errc::IndexOutOfRange, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") of " + shape_string(shape));
  }
  Shape s = shape;
  s[0] = end - begin;
  const std::size_t n = sample_size();
  return Tensor(std::move(s), std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                                 data.begin() + static_cast<std::ptrdiff_t>(end * n)));
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const Shape per = parts.front().sample_shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.sample_shape() != per) fail(Errc::ShapeMismatch, "concat: sample shapes differ");
    total += p.batch();
  }
  Shape s{total};
  s.insert(s.end(), per.begin(), per.end());
  Tensor out(std::move(s));
  auto it = out.data.begin();
  for (const auto& p : parts) it = std::copy(p.data.begin(), p.data.end(), it);
  return out;
}

}  // namespace dwc
