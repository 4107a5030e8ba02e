#include "dwc/model.hpp"

#include <set>
#include <unordered_map>
#include <variant>

#include "dwc/error.hpp"

namespace dwc {

namespace {

const ResidualAdd* as_residual(const Layer& l) { return std::get_if<ResidualAdd>(&l.op); }

void validate_params(const Layer& l) {
  if (const auto* bn = std::get_if<BatchNorm>(&l.op)) {
    for (std::size_t k = 0; k < bn->var.size(); ++k) {
      if (!(bn->var[k] > 0.0f)) {
        fail(Errc::NonPositiveVariance, "layer '" + l.name + "': running variance of channel " +
                                            std::to_string(k) + " is not positive");
      }
    }
  }
  if (const auto* c = std::get_if<Correction>(&l.op)) c->target.validate();
}

}  // namespace

std::vector<Shape> Model::layer_shapes() const {
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  std::unordered_map<std::string_view, std::size_t> index;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const Shape* shortcut = nullptr;
    if (const auto* r = as_residual(l)) {
      auto it = index.find(r->source);
      if (it == index.end()) {
        fail(Errc::UnknownLayer, "layer '" + l.name + "': residual source '" + r->source +
                                     "' is not an earlier layer");
      }
      shortcut = &shapes[it->second];
    }
    try {
      cur = infer_shape(l.op, cur, shortcut);
    } catch (const Error& e) {
      fail(e.code(), "layer '" + l.name + "': " + e.what());
    }
    shapes.push_back(cur);
    index.emplace(l.name, i);
  }
  return shapes;
}

Shape Model::output_shape() const {
  auto shapes = layer_shapes();
  return shapes.empty() ? input_shape : shapes.back();
}

void Model::validate() const {
  if (input_shape.empty()) fail(Errc::ShapeMismatch, "model has no input shape");
  std::set<std::string_view> names;
  for (const Layer& l : layers) {
    if (l.name.empty()) fail(Errc::InvalidConfig, "layer with empty name");
    if (!names.insert(l.name).second) fail(Errc::InvalidConfig, "duplicate layer name '" + l.name + "'");
    validate_params(l);
  }
  layer_shapes();
}

std::optional<std::size_t> Model::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  return std::nullopt;
}

ForwardResult forward(const Model& model, const Tensor& input, std::span<const std::string> taps) {
  if (input.rank() != model.input_shape.size() + 1 || input.sample_shape() != model.input_shape) {
    fail(Errc::ShapeMismatch, "forward: input " + shape_string(input.shape) + " does not match model input " +
                                  shape_string(model.input_shape));
  }
  std::set<std::string_view> wanted;
  for (const auto& t : taps) {
    if (!model.find(t)) fail(Errc::UnknownTap, "forward: no layer named '" + t + "'");
    wanted.insert(t);
  }
  std::set<std::string_view> keep;
  for (const Layer& l : model.layers) {
    if (const auto* r = as_residual(l)) keep.insert(r->source);
  }

  ForwardResult result;
  std::unordered_map<std::string_view, Tensor> saved;
  Tensor cur = input;
  for (const Layer& l : model.layers) {
    try {
      cur = std::visit(
          [&](const auto& p) -> Tensor {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Dense>) {
              return dense(cur, p);
            } else if constexpr (std::is_same_v<T, Conv2d>) {
              return conv2d(cur, p);
            } else if constexpr (std::is_same_v<T, Relu>) {
              return relu(cur);
            } else if constexpr (std::is_same_v<T, BatchNorm>) {
              return batchnorm_infer(cur, p.gamma, p.beta, p.mean, p.var, p.eps);
            } else if constexpr (std::is_same_v<T, GroupNorm>) {
              return groupnorm(cur, p.groups, p.gamma, p.beta, p.eps);
            } else if constexpr (std::is_same_v<T, Frn>) {
              return frn(cur, p.gamma, p.beta, p.tau, p.eps);
            } else if constexpr (std::is_same_v<T, MaxPool>) {
              return maxpool(cur, p.size, p.stride);
            } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
              return global_avg_pool(cur);
            } else if constexpr (std::is_same_v<T, ResidualAdd>) {
              auto it = saved.find(p.source);
              if (it == saved.end()) fail(Errc::UnknownLayer, "residual source '" + p.source + "' not computed yet");
              return residual_add(cur, it->second);
            } else if constexpr (std::is_same_v<T, Flatten>) {
              return flatten(cur);
            } else {
              return apply_correction(cur, p);
            }
          },
          l.op);
    } catch (const Error& e) {
      fail(e.code(), "layer '" + l.name + "': " + e.what());
    }
    if (keep.contains(l.name)) saved[l.name] = cur;
    if (wanted.contains(l.name)) result.tapped[l.name] = cur;
  }
  result.logits = std::move(cur);
  return result;
}

std::string_view to_string(Placement p) noexcept {
  return p == Placement::AfterRelu ? "after_relu" : "after_conv";
}

Placement parse_placement(std::string_view s) {
  if (s == "after_relu") return Placement::AfterRelu;
  if (s == "after_conv") return Placement::AfterConv;
  fail(Errc::InvalidConfig, "unknown placement '" + std::string(s) + "' (after_relu | after_conv)");
}

namespace {

bool is_site(const Model& model, std::size_t i, Placement placement) {
  const LayerOp& op = model.layers[i].op;
  if (placement == Placement::AfterRelu) return std::holds_alternative<Relu>(op);
  const bool linear = std::holds_alternative<Dense>(op) || std::holds_alternative<Conv2d>(op);
  const bool norm = std::holds_alternative<BatchNorm>(op) || std::holds_alternative<GroupNorm>(op);
  if (!linear && !norm) return false;
  // a linear layer followed directly by its normalization is represented by
  // the normalization output; the final classifier is never a site
  const bool followed_by_norm =
      i + 1 < model.layers.size() && (std::holds_alternative<BatchNorm>(model.layers[i + 1].op) ||
                                      std::holds_alternative<GroupNorm>(model.layers[i + 1].op));
  if (linear && followed_by_norm) return false;
  return i + 1 < model.layers.size();
}

}  // namespace

std::vector<std::string> placement_sites(const Model& model, Placement placement) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (is_site(model, i, placement)) out.push_back(model.layers[i].name);
  }
  return out;
}

Model attach_correction(const Model& model, const std::map<std::string, TargetDistribution>& targets,
                        const CorrectionConfig& cfg, Placement placement) {
  if (targets.empty()) return model;
  const CorrectionConfig effective =
      placement == Placement::AfterConv ? cfg.with_preserve_zeros(false) : cfg;
  const auto shapes = model.layer_shapes();

  std::map<std::string, std::string> renamed;
  for (const auto& [site, target] : targets) {
    const auto idx = model.find(site);
    if (!idx || !is_site(model, *idx, placement)) {
      fail(Errc::UnknownLayer, "attach_correction: '" + site + "' is not a " +
                                   std::string(to_string(placement)) + " site");
    }
    const std::size_t n = shape_product(shapes[*idx]);
    if (target.n() != n) {
      fail(Errc::SizeMismatch, "attach_correction: site '" + site + "' has " + std::to_string(n) +
                                   " values, target has " + std::to_string(target.n()));
    }
    target.validate();
    renamed[site] = site + "/correction";
  }

  Model out;
  out.input_shape = model.input_shape;
  out.layers.reserve(model.layers.size() + targets.size());
  for (const Layer& l : model.layers) {
    Layer copy = l;
    if (auto* r = std::get_if<ResidualAdd>(&copy.op)) {
      auto it = renamed.find(r->source);
      if (it != renamed.end()) r->source = it->second;
    }
    out.layers.push_back(std::move(copy));
    auto it = targets.find(l.name);
    if (it != targets.end()) {
      out.layers.push_back(Layer{renamed[l.name], Correction{it->second, effective}});
    }
  }
  return out;
}

}  // namespace dwc
