#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dwc/correction.hpp"
#include "dwc/layers.hpp"
#include "dwc/otcore.hpp"
#include "dwc/tensor.hpp"

namespace dwc {

struct Model {
  Shape input_shape;  // per sample, without the batch axis
  std::vector<Layer> layers;

  // Checks unique names, residual sources, shape compatibility of every
  // layer, positive batchnorm variances and group divisibility. Throws the
  // matching Errc.
  void validate() const;

  // Per-sample output shape of every layer, in order.
  std::vector<Shape> layer_shapes() const;
  Shape output_shape() const;

  std::optional<std::size_t> find(std::string_view name) const;
};

struct ForwardResult {
  Tensor logits;
  std::map<std::string, Tensor> tapped;
};

// Runs the model on a batch shaped (batch, input_shape...). Tap names are
// layer names; each tapped tensor is that layer's output. Throws
// ShapeMismatch and UnknownTap.
ForwardResult forward(const Model& model, const Tensor& input,
                      std::span<const std::string> taps = {});

enum class Placement {
  AfterRelu,  // the output of a ReLU; zeros preserved
  AfterConv,  // the pre-activation output of a dense/conv layer or its normalization
};

std::string_view to_string(Placement p) noexcept;
Placement parse_placement(std::string_view s);

// Layer names eligible as correction sites for a placement, in model order.
std::vector<std::string> placement_sites(const Model& model, Placement placement);

// Returns a copy of `model` with a correction layer named "<site>/correction"
// inserted after every site in `targets`. Residual shortcuts that referenced
// a site are redirected to its correction so both branches see the corrected
// map. AfterConv forces preserve_zeros off. Throws UnknownLayer when a key is
// not an eligible site and SizeMismatch when target.n differs from the site's
// flattened size.
Model attach_correction(const Model& model, const std::map<std::string, TargetDistribution>& targets,
                        const CorrectionConfig& cfg, Placement placement);

}  // namespace dwc
