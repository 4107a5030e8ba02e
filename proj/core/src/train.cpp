#include "dwc/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dwc/error.hpp"
#include "dwc/rng.hpp"

namespace dwc {

std::string_view to_string(NormKind k) noexcept { return k == NormKind::BatchNorm ? "bn" : "none"; }

NormKind parse_norm(std::string_view s) {
  if (s == "bn" || s == "batchnorm") return NormKind::BatchNorm;
  if (s == "none") return NormKind::None;
  fail(Errc::InvalidConfig, "unknown norm '" + std::string(s) + "' (bn | none)");
}

std::vector<std::span<double>> MlpParams::trainable() {
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < layers(); ++l) {
    out.emplace_back(weight[l]);
    out.emplace_back(bias[l]);
    if (norm == NormKind::BatchNorm && l + 1 < layers()) {
      out.emplace_back(gamma[l]);
      out.emplace_back(beta[l]);
    }
  }
  return out;
}

std::vector<std::span<const double>> MlpParams::trainable() const {
  auto spans = const_cast<MlpParams*>(this)->trainable();
  return {spans.begin(), spans.end()};
}

MlpParams init_mlp(std::span<const std::size_t> sizes, NormKind norm, std::uint64_t seed) {
  if (sizes.size() < 2) fail(Errc::InvalidConfig, "an MLP needs input and output sizes");
  for (const auto s : sizes) {
    if (s == 0) fail(Errc::InvalidConfig, "MLP layer sizes must be positive");
  }
  MlpParams p;
  p.sizes.assign(sizes.begin(), sizes.end());
  p.norm = norm;
  CounterRng rng(mix({seed, 0x1417ULL}));
  const std::size_t L = sizes.size() - 1;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-limit, limit);
    p.weight.push_back(std::move(w));
    p.bias.emplace_back(out, 0.0);
    if (norm == NormKind::BatchNorm && l + 1 < L) {
      p.gamma.emplace_back(out, 1.0);
      p.beta.emplace_back(out, 0.0);
      p.running_mean.emplace_back(out, 0.0);
      p.running_var.emplace_back(out, 1.0);
    }
  }
  return p;
}

namespace {

struct LayerCache {
  std::vector<double> input;  // batch x in
  std::vector<double> xhat;   // normalized pre-activation (bn only)
  std::vector<double> inv_std;
  std::vector<double> pre_relu;  // batch x out
  std::vector<double> mean, var;
};

// z = x W^T + b
void affine(const std::vector<double>& x, std::size_t batch, const std::vector<double>& w,
            const std::vector<double>& b, std::size_t in, std::size_t out, std::vector<double>& z) {
  z.assign(batch * out, 0.0);
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = x.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w.data() + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      z[r * out + o] = acc;
    }
  }
}

double loss_impl(const MlpParams& p, std::span<const double> x, std::span<const int> labels,
                 MlpParams* grad, double bn_eps, std::vector<LayerCache>* stats_out) {
  const std::size_t L = p.layers();
  const std::size_t batch = labels.size();
  if (batch == 0) fail(Errc::Empty, "mlp_loss: empty batch");
  if (x.size() != batch * p.sizes[0]) fail(Errc::ShapeMismatch, "mlp_loss: input size does not match batch");
  const std::size_t classes = p.sizes.back();
  for (const int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) fail(Errc::IndexOutOfRange, "mlp_loss: label out of range");
  }
  const bool bn = p.norm == NormKind::BatchNorm;

  std::vector<LayerCache> cache(L);
  std::vector<double> h(x.begin(), x.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = p.sizes[l], out = p.sizes[l + 1];
    affine(h, batch, p.weight[l], p.bias[l], in, out, z);
    LayerCache& c = cache[l];
    c.input = std::move(h);
    if (l + 1 == L) {
      h = std::move(z);
      break;
    }
    if (bn) {
      c.mean.assign(out, 0.0);
      c.var.assign(out, 0.0);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t o = 0; o < out; ++o) c.mean[o] += z[r * out + o];
      }
      for (auto& m : c.mean) m /= static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
          const double d = z[r * out + o] - c.mean[o];
          c.var[o] += d * d;
        }
      }
      c.inv_std.resize(out);
      for (std::size_t o = 0; o < out; ++o) {
        c.var[o] /= static_cast<double>(batch);
        c.inv_std[o] = 1.0 / std::sqrt(c.var[o] + bn_eps);
      }
      c.xhat.resize(batch * out);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
          const double xh = (z[r * out + o] - c.mean[o]) * c.inv_std[o];
          c.xhat[r * out + o] = xh;
          z[r * out + o] = p.gamma[l][o] * xh + p.beta[l][o];
        }
      }
    }
    c.pre_relu = z;
    for (auto& v : z) v = v > 0.0 ? v : 0.0;
    h = std::move(z);
  }

  // h holds the logits; softmax cross-entropy
  std::vector<double> d(batch * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* zr = h.data() + r * classes;
    const double mx = *std::max_element(zr, zr + classes);
    double s = 0.0;
    for (std::size_t k = 0; k < classes; ++k) s += std::exp(zr[k] - mx);
    const double log_s = std::log(s) + mx;
    const auto y = static_cast<std::size_t>(labels[r]);
    loss += log_s - zr[y];
    for (std::size_t k = 0; k < classes; ++k) {
      d[r * classes + k] = (std::exp(zr[k] - log_s) - (k == y ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  loss /= static_cast<double>(batch);

  if (stats_out) *stats_out = cache;
  if (!grad) return loss;

  *grad = p;
  for (auto& s : grad->trainable()) std::fill(s.begin(), s.end(), 0.0);
  std::vector<double> da = std::move(d);
  for (std::size_t li = L; li-- > 0;) {
    const std::size_t in = p.sizes[li], out = p.sizes[li + 1];
    const LayerCache& c = cache[li];
    std::vector<double> dz = std::move(da);
    if (li + 1 < L) {
      for (std::size_t k = 0; k < dz.size(); ++k) dz[k] = c.pre_relu[k] > 0.0 ? dz[k] : 0.0;
      if (bn) {
        auto& gg = grad->gamma[li];
        auto& gb = grad->beta[li];
        std::vector<double> mean_dxh(out, 0.0), mean_dxh_xh(out, 0.0);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t o = 0; o < out; ++o) {
            const double dy = dz[r * out + o];
            const double xh = c.xhat[r * out + o];
            gg[o] += dy * xh;
            gb[o] += dy;
            const double dxh = dy * p.gamma[li][o];
            dz[r * out + o] = dxh;
            mean_dxh[o] += dxh;
            mean_dxh_xh[o] += dxh * xh;
          }
        }
        for (std::size_t o = 0; o < out; ++o) {
          mean_dxh[o] /= static_cast<double>(batch);
          mean_dxh_xh[o] /= static_cast<double>(batch);
        }
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t o = 0; o < out; ++o) {
            const std::size_t k = r * out + o;
            dz[k] = (dz[k] - mean_dxh[o] - c.xhat[k] * mean_dxh_xh[o]) * c.inv_std[o];
          }
        }
      }
    }
    auto& gw = grad->weight[li];
    auto& gbias = grad->bias[li];
    for (std::size_t r = 0; r < batch; ++r) {
      const double* xr = c.input.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dz[r * out + o];
        gbias[o] += g;
        if (g == 0.0) continue;
        double* row = gw.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += g * xr[i];
      }
    }
    if (li == 0) break;
    da.assign(batch * in, 0.0);
    for (std::size_t r = 0; r < batch; ++r) {
      double* dr = da.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dz[r * out + o];
        if (g == 0.0) continue;
        const double* wo = p.weight[li].data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dr[i] += g * wo[i];
      }
    }
  }
  return loss;
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

double mlp_loss(const MlpParams& p, std::span<const double> x, std::span<const int> labels, MlpParams* grad) {
  return loss_impl(p, x, labels, grad, 1e-5, nullptr);
}

Model to_model(const MlpParams& p, const Shape& input_shape, float bn_eps) {
  if (shape_product(input_shape) != p.sizes.front()) {
    fail(Errc::ShapeMismatch, "to_model: input shape " + shape_string(input_shape) + " does not have " +
                                  std::to_string(p.sizes.front()) + " features");
  }
  Model m;
  m.input_shape = input_shape;
  if (input_shape.size() != 1) m.layers.push_back({"flatten", Flatten{}});
  const std::size_t L = p.layers();
  for (std::size_t l = 0; l < L; ++l) {
    const std::string idx = std::to_string(l);
    Dense d{Tensor({p.sizes[l + 1], p.sizes[l]}, to_float(p.weight[l])), to_float(p.bias[l])};
    if (l + 1 == L) {
      m.layers.push_back({"logits", std::move(d)});
      break;
    }
    m.layers.push_back({"dense" + idx, std::move(d)});
    if (p.norm == NormKind::BatchNorm) {
      BatchNorm bn{to_float(p.gamma[l]), to_float(p.beta[l]), to_float(p.running_mean[l]),
                   to_float(p.running_var[l]), bn_eps};
      // a unit that never varied would carry variance 0; keep it strictly positive
      for (float& v : bn.var) v = std::max(v, std::numeric_limits<float>::min());
      m.layers.push_back({"bn" + idx, std::move(bn)});
    }
    m.layers.push_back({"relu" + idx, Relu{}});
  }
  return m;
}

double accuracy(const Model& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch) {
    const std::size_t e = std::min(data.size(), b + batch);
    const Tensor logits = forward(model, data.images.slice(b, e)).logits;
    const std::size_t k = logits.sample_size();
    for (std::size_t r = 0; r < e - b; ++r) {
      const float* row = logits.data.data() + r * k;
      const auto pred = static_cast<int>(std::max_element(row, row + k) - row);
      if (pred == data.labels[b + r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_mlp(const Dataset& train, const Dataset* validation, const MlpSpec& spec,
                      const TrainHyper& hyper) {
  if (train.size() == 0) fail(Errc::Empty, "train_mlp: empty training set");
  train.validate();
  if (hyper.epochs < 0 || hyper.batch_size == 0 || !(hyper.lr > 0.0)) {
    fail(Errc::InvalidConfig, "train_mlp: epochs >= 0, batch_size >= 1 and lr > 0 required");
  }
  const Shape input_shape = train.sample_shape();
  const std::size_t features = shape_product(input_shape);
  std::vector<std::size_t> sizes{features};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(static_cast<std::size_t>(train.classes));

  TrainResult result;
  MlpParams p = init_mlp(sizes, spec.norm, hyper.seed);
  auto velocity = p;
  for (auto& s : velocity.trainable()) std::fill(s.begin(), s.end(), 0.0);

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::vector<double> xb;
  std::vector<int> yb;
  MlpParams grad;
  std::vector<LayerCache> stats;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double lr = hyper.lr;
    for (const int e : hyper.decay_epochs) {
      if (epoch >= e) lr *= hyper.decay_factor;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(mix({hyper.seed, 0x5BF1ULL, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += hyper.batch_size) {
      const std::size_t e = std::min(n, b + hyper.batch_size);
      // a singleton batch has zero variance under batchnorm; skip it
      if (spec.norm == NormKind::BatchNorm && e - b < 2) continue;
      xb.resize((e - b) * features);
      yb.resize(e - b);
      for (std::size_t r = b; r < e; ++r) {
        const auto src = train.images.sample(order[r]);
        std::copy(src.begin(), src.end(), xb.begin() + static_cast<std::ptrdiff_t>((r - b) * features));
        yb[r - b] = train.labels[order[r]];
      }
      const double loss = loss_impl(p, xb, yb, &grad, hyper.bn_eps, &stats);
      if (!std::isfinite(loss)) {
        fail(Errc::DivergenceDetected, "train_mlp: loss became " + std::to_string(loss) + " at epoch " +
                                           std::to_string(epoch) + ", batch " +
                                           std::to_string(b / hyper.batch_size) + " (lr " +
                                           std::to_string(lr) + ")");
      }
      epoch_loss += loss;
      ++batches;

      if (hyper.weight_decay > 0.0) {
        for (std::size_t l = 0; l < p.layers(); ++l) {
          for (std::size_t i = 0; i < p.weight[l].size(); ++i) {
            grad.weight[l][i] += hyper.weight_decay * p.weight[l][i];
          }
        }
      }
      auto params = p.trainable();
      auto grads = grad.trainable();
      auto vels = velocity.trainable();
      for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].size(); ++i) {
          vels[k][i] = hyper.momentum * vels[k][i] + grads[k][i];
          params[k][i] -= lr * vels[k][i];
        }
      }
      if (spec.norm == NormKind::BatchNorm) {
        const double m = hyper.bn_momentum;
        for (std::size_t l = 0; l + 1 < p.layers(); ++l) {
          for (std::size_t o = 0; o < p.running_mean[l].size(); ++o) {
            p.running_mean[l][o] = (1.0 - m) * p.running_mean[l][o] + m * stats[l].mean[o];
            p.running_var[l][o] = (1.0 - m) * p.running_var[l][o] + m * stats[l].var[o];
          }
        }
      }
    }
    result.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }

  result.model = to_model(p, input_shape, static_cast<float>(hyper.bn_eps));
  result.params = std::move(p);
  result.train_accuracy = accuracy(result.model, train);
  if (validation != nullptr && validation->size() > 0) {
    result.validation_accuracy = accuracy(result.model, *validation);
  }
  return result;
}

}  // namespace dwc
