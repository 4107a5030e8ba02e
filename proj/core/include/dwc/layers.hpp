#pragma once

// Layer vocabulary of the inference engine and the standalone kernels behind it.
// Channels are always the last axis: (batch, features) for dense activations,
// (batch, height, width, channels) for feature maps.

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dwc/correction.hpp"
#include "dwc/otcore.hpp"
#include "dwc/tensor.hpp"

namespace dwc {

enum class Padding { Same, Valid };

struct Dense {
  Tensor weight;  // (out, in)
  std::vector<float> bias;
};

struct Conv2d {
  Tensor kernel;  // (kh, kw, in_channels, out_channels)
  std::vector<float> bias;  // empty or out_channels
  std::size_t stride = 1;
  Padding padding = Padding::Same;
};

struct Relu {};

struct BatchNorm {
  std::vector<float> gamma, beta, mean, var;
  float eps = 1e-5f;
};

struct GroupNorm {
  std::size_t groups = 1;
  std::vector<float> gamma, beta;
  float eps = 1e-5f;
};

// Filter response normalization with its thresholded linear unit.
struct Frn {
  std::vector<float> gamma, beta, tau;
  float eps = 1e-6f;
};

struct MaxPool {
  std::size_t size = 2;
  std::size_t stride = 2;
};

struct GlobalAvgPool {};

// Adds the output of an earlier layer. A larger source map is subsampled by
// the spatial ratio and a narrower one is zero-padded symmetrically in
// channels (the parameter-free ResNet shortcut).
struct ResidualAdd {
  std::string source;
};

struct Flatten {};

struct Correction {
  TargetDistribution target;
  CorrectionConfig config;
};

using LayerOp = std::variant<Dense, Conv2d, Relu, BatchNorm, GroupNorm, Frn, MaxPool,
                             GlobalAvgPool, ResidualAdd, Flatten, Correction>;

struct Layer {
  std::string name;  // unique; doubles as the tap name of the layer's output
  LayerOp op;
};

std::string_view kind_name(const LayerOp& op) noexcept;

// Kernels. All take a batched tensor and return a new one.
Tensor dense(const Tensor& x, const Dense& p);
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, Padding padding);
Tensor conv2d(const Tensor& x, const Conv2d& p);
Tensor relu(const Tensor& x);
// Throws NonPositiveVariance when a var entry is <= 0 or eps < 0.
Tensor batchnorm_infer(const Tensor& x, std::span<const float> gamma, std::span<const float> beta,
                       std::span<const float> mean, std::span<const float> var, float eps);
// Throws GroupMismatch when groups does not divide the channel count.
Tensor groupnorm(const Tensor& x, std::size_t groups, std::span<const float> gamma,
                 std::span<const float> beta, float eps);
Tensor frn(const Tensor& x, std::span<const float> gamma, std::span<const float> beta,
           std::span<const float> tau, float eps);
Tensor maxpool(const Tensor& x, std::size_t size, std::size_t stride);
Tensor global_avg_pool(const Tensor& x);
Tensor flatten(const Tensor& x);
Tensor residual_add(const Tensor& x, const Tensor& shortcut);
Tensor apply_correction(const Tensor& x, const Correction& c);

// Per-sample output shape of `op` given its per-sample input shape. Throws
// ShapeMismatch (or GroupMismatch) when parameters disagree with the input.
// ResidualAdd needs the source shape, passed in `shortcut`.
Shape infer_shape(const LayerOp& op, const Shape& in, const Shape* shortcut = nullptr);

}  // namespace dwc
