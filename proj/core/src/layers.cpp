#include "dwc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dwc/error.hpp"

namespace dwc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::size_t channels_of(const Shape& s) { return s.empty() ? 0 : s.back(); }

void require_rank(const Tensor& x, std::size_t rank, const char* what) {
  if (x.rank() != rank) {
    fail(Errc::ShapeMismatch, std::string(what) + ": expected rank " + std::to_string(rank) +
                                  ", got " + shape_string(x.shape));
  }
}

void require_channels(std::span<const float> v, std::size_t c, const char* what, const char* name) {
  if (v.size() != c) {
    fail(Errc::ShapeMismatch, std::string(what) + ": " + name + " has " + std::to_string(v.size()) +
                                  " entries for " + std::to_string(c) + " channels");
  }
}

struct ConvGeometry {
  std::size_t out_h, out_w, pad_top, pad_left;
};

ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                           std::size_t stride, Padding padding) {
  if (stride < 1) fail(Errc::ShapeMismatch, "conv2d: stride must be >= 1");
  ConvGeometry g{};
  if (padding == Padding::Same) {
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    const std::size_t need_h = (g.out_h - 1) * stride + kh;
    const std::size_t need_w = (g.out_w - 1) * stride + kw;
    g.pad_top = need_h > h ? (need_h - h) / 2 : 0;
    g.pad_left = need_w > w ? (need_w - w) / 2 : 0;
  } else {
    if (h < kh || w < kw) fail(Errc::ShapeMismatch, "conv2d: kernel larger than valid input");
    g.out_h = (h - kh) / stride + 1;
    g.out_w = (w - kw) / stride + 1;
  }
  return g;
}

}  // namespace

std::string_view kind_name(const LayerOp& op) noexcept {
  return std::visit(overloaded{
                        [](const Dense&) { return std::string_view("dense"); },
                        [](const Conv2d&) { return std::string_view("conv2d"); },
                        [](const Relu&) { return std::string_view("relu"); },
                        [](const BatchNorm&) { return std::string_view("batchnorm"); },
                        [](const GroupNorm&) { return std::string_view("groupnorm"); },
                        [](const Frn&) { return std::string_view("frn"); },
                        [](const MaxPool&) { return std::string_view("maxpool"); },
                        [](const GlobalAvgPool&) { return std::string_view("global_avg_pool"); },
                        [](const ResidualAdd&) { return std::string_view("residual_add"); },
                        [](const Flatten&) { return std::string_view("flatten"); },
                        [](const Correction&) { return std::string_view("correction"); },
                    },
                    op);
}

Tensor dense(const Tensor& x, const Dense& p) {
  require_rank(x, 2, "dense");
  if (p.weight.rank() != 2) fail(Errc::ShapeMismatch, "dense: weight must be (out, in)");
  const std::size_t out = p.weight.shape[0];
  const std::size_t in = p.weight.shape[1];
  if (x.shape[1] != in) {
    fail(Errc::ShapeMismatch, "dense: input has " + std::to_string(x.shape[1]) +
                                  " features, weight expects " + std::to_string(in));
  }
  if (!p.bias.empty() && p.bias.size() != out) fail(Errc::ShapeMismatch, "dense: bias length");

  const std::size_t batch = x.shape[0];
  Tensor y({batch, out});
  const float* w = p.weight.data.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xb = x.data.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const float* wo = w + o * in;
      double acc = p.bias.empty() ? 0.0 : static_cast<double>(p.bias[o]);
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(wo[i]) * xb[i];
      y.data[b * out + o] = static_cast<float>(acc);
    }
  }
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, Padding padding) {
  require_rank(x, 4, "conv2d");
  if (kernel.rank() != 4) fail(Errc::ShapeMismatch, "conv2d: kernel must be (kh, kw, cin, cout)");
  const std::size_t batch = x.shape[0], h = x.shape[1], w = x.shape[2], cin = x.shape[3];
  const std::size_t kh = kernel.shape[0], kw = kernel.shape[1], cout = kernel.shape[3];
  if (kernel.shape[2] != cin) {
    fail(Errc::ShapeMismatch, "conv2d: input has " + std::to_string(cin) +
                                  " channels, kernel expects " + std::to_string(kernel.shape[2]));
  }
  const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, padding);

  Tensor y({batch, g.out_h, g.out_w, cout});
  std::vector<double> acc(cout);
  const float* k = kernel.data.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const float* px = x.data.data() +
                              ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
            const float* pk = k + (ky * kw + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double xv = px[ci];
              const float* row = pk + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) acc[co] += xv * row[co];
            }
          }
        }
        float* py = y.data.data() + ((b * g.out_h + oy) * g.out_w + ox) * cout;
        for (std::size_t co = 0; co < cout; ++co) py[co] = static_cast<float>(acc[co]);
      }
    }
  }
  return y;
}

Tensor conv2d(const Tensor& x, const Conv2d& p) {
  Tensor y = conv2d(x, p.kernel, p.stride, p.padding);
  if (!p.bias.empty()) {
    const std::size_t c = channels_of(y.shape);
    if (p.bias.size() != c) fail(Errc::ShapeMismatch, "conv2d: bias length");
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += p.bias[i % c];
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor batchnorm_infer(const Tensor& x, std::span<const float> gamma, std::span<const float> beta,
                       std::span<const float> mean, std::span<const float> var, float eps) {
  if (x.rank() < 2) fail(Errc::ShapeMismatch, "batchnorm: input needs a channel axis");
  const std::size_t c = channels_of(x.shape);
  require_channels(gamma, c, "batchnorm", "gamma");
  require_channels(beta, c, "batchnorm", "beta");
  require_channels(mean, c, "batchnorm", "mean");
  require_channels(var, c, "batchnorm", "var");
  if (!(eps >= 0.0f)) fail(Errc::NonPositiveVariance, "batchnorm: eps must be >= 0");
  std::vector<double> scale(c), shift(c);
  for (std::size_t k = 0; k < c; ++k) {
    if (!(var[k] > 0.0f)) {
      fail(Errc::NonPositiveVariance, "batchnorm: running variance of channel " + std::to_string(k) +
                                          " is " + std::to_string(var[k]));
    }
    scale[k] = static_cast<double>(gamma[k]) / std::sqrt(static_cast<double>(var[k]) + eps);
    shift[k] = static_cast<double>(beta[k]) - scale[k] * mean[k];
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t k = i % c;
    y.data[i] = static_cast<float>(scale[k] * x.data[i] + shift[k]);
  }
  return y;
}

Tensor groupnorm(const Tensor& x, std::size_t groups, std::span<const float> gamma,
                 std::span<const float> beta, float eps) {
  if (x.rank() < 2) fail(Errc::ShapeMismatch, "groupnorm: input needs a channel axis");
  const std::size_t c = channels_of(x.shape);
  if (groups == 0 || c % groups != 0) {
    fail(Errc::GroupMismatch, "groupnorm: " + std::to_string(groups) + " groups do not divide " +
                                  std::to_string(c) + " channels");
  }
  require_channels(gamma, c, "groupnorm", "gamma");
  require_channels(beta, c, "groupnorm", "beta");
  if (!(eps > 0.0f)) fail(Errc::InvalidConfig, "groupnorm: eps must be > 0");

  const std::size_t per_group = c / groups;
  const std::size_t batch = x.batch();
  const std::size_t spatial = x.sample_size() / c;
  Tensor y = x;
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xb = x.data.data() + b * spatial * c;
    float* yb = y.data.data() + b * spatial * c;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t c0 = g * per_group;
      double sum = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) {
        for (std::size_t k = c0; k < c0 + per_group; ++k) sum += xb[s * c + k];
      }
      const double count = static_cast<double>(spatial * per_group);
      const double mu = sum / count;
      double sq = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) {
        for (std::size_t k = c0; k < c0 + per_group; ++k) {
          const double d = xb[s * c + k] - mu;
          sq += d * d;
        }
      }
      const double inv = 1.0 / std::sqrt(sq / count + eps);
      for (std::size_t s = 0; s < spatial; ++s) {
        for (std::size_t k = c0; k < c0 + per_group; ++k) {
          yb[s * c + k] = static_cast<float>(gamma[k] * (xb[s * c + k] - mu) * inv + beta[k]);
        }
      }
    }
  }
  return y;
}

Tensor frn(const Tensor& x, std::span<const float> gamma, std::span<const float> beta,
           std::span<const float> tau, float eps) {
  if (x.rank() < 2) fail(Errc::ShapeMismatch, "frn: input needs a channel axis");
  const std::size_t c = channels_of(x.shape);
  require_channels(gamma, c, "frn", "gamma");
  require_channels(beta, c, "frn", "beta");
  require_channels(tau, c, "frn", "tau");
  if (!(eps > 0.0f)) fail(Errc::InvalidConfig, "frn: eps must be > 0");

  const std::size_t batch = x.batch();
  const std::size_t spatial = x.sample_size() / c;
  Tensor y = x;
  std::vector<double> nu2(c);
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xb = x.data.data() + b * spatial * c;
    float* yb = y.data.data() + b * spatial * c;
    std::fill(nu2.begin(), nu2.end(), 0.0);
    for (std::size_t s = 0; s < spatial; ++s) {
      for (std::size_t k = 0; k < c; ++k) nu2[k] += static_cast<double>(xb[s * c + k]) * xb[s * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) nu2[k] = 1.0 / std::sqrt(nu2[k] / static_cast<double>(spatial) + eps);
    for (std::size_t s = 0; s < spatial; ++s) {
      for (std::size_t k = 0; k < c; ++k) {
        const double v = gamma[k] * xb[s * c + k] * nu2[k] + beta[k];
        yb[s * c + k] = static_cast<float>(std::max(v, static_cast<double>(tau[k])));
      }
    }
  }
  return y;
}

Tensor maxpool(const Tensor& x, std::size_t size, std::size_t stride) {
  require_rank(x, 4, "maxpool");
  if (size < 1 || stride < 1) fail(Errc::ShapeMismatch, "maxpool: size and stride must be >= 1");
  const std::size_t batch = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3];
  if (h < size || w < size) fail(Errc::ShapeMismatch, "maxpool: window larger than input");
  const std::size_t oh = (h - size) / stride + 1, ow = (w - size) / stride + 1;
  Tensor y({batch, oh, ow, c}, -std::numeric_limits<float>::infinity());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float* py = y.data.data() + ((b * oh + oy) * ow + ox) * c;
        for (std::size_t ky = 0; ky < size; ++ky) {
          for (std::size_t kx = 0; kx < size; ++kx) {
            const float* px = x.data.data() + ((b * h + oy * stride + ky) * w + ox * stride + kx) * c;
            for (std::size_t k = 0; k < c; ++k) py[k] = std::max(py[k], px[k]);
          }
        }
      }
    }
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t batch = x.shape[0], c = x.shape[3];
  const std::size_t spatial = x.shape[1] * x.shape[2];
  Tensor y({batch, c});
  std::vector<double> acc(c);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* xb = x.data.data() + b * spatial * c;
    for (std::size_t s = 0; s < spatial; ++s) {
      for (std::size_t k = 0; k < c; ++k) acc[k] += xb[s * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) y.data[b * c + k] = static_cast<float>(acc[k] / static_cast<double>(spatial));
  }
  return y;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) fail(Errc::ShapeMismatch, "flatten: scalar input");
  return Tensor({x.batch(), x.sample_size()}, x.data);
}

Tensor residual_add(const Tensor& x, const Tensor& shortcut) {
  const Shape out = infer_shape(ResidualAdd{}, x.sample_shape(), nullptr);
  const Shape src = shortcut.sample_shape();
  infer_shape(ResidualAdd{}, out, &src);
  if (shortcut.batch() != x.batch()) fail(Errc::ShapeMismatch, "residual_add: batch sizes differ");

  Tensor y = x;
  const std::size_t batch = x.batch();
  const std::size_t c = channels_of(out), cs = channels_of(src);
  const std::size_t pad = (c - cs) / 2;
  if (out.size() == 1) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < cs; ++k) y.data[b * c + pad + k] += shortcut.data[b * cs + k];
    }
    return y;
  }
  const std::size_t h = out[0], w = out[1], hs = src[0], ws = src[1];
  const std::size_t ry = (hs + h - 1) / h, rx = (ws + w - 1) / w;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      for (std::size_t ix = 0; ix < w; ++ix) {
        float* py = y.data.data() + ((b * h + iy) * w + ix) * c + pad;
        const float* ps = shortcut.data.data() + ((b * hs + iy * ry) * ws + ix * rx) * cs;
        for (std::size_t k = 0; k < cs; ++k) py[k] += ps[k];
      }
    }
  }
  return y;
}

Tensor apply_correction(const Tensor& x, const Correction& c) {
  if (x.sample_size() != c.target.n()) {
    fail(Errc::SizeMismatch, "correction: activation size " + std::to_string(x.sample_size()) +
                                 " but target '" + c.target.layer_id + "' has n=" +
                                 std::to_string(c.target.n()));
  }
  Tensor y = x;
  CorrectionWorkspace work;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    correct_into<float>(x.sample(b), c.target, c.config, work, y.sample(b));
  }
  return y;
}

Shape infer_shape(const LayerOp& op, const Shape& in, const Shape* shortcut) {
  auto mismatch = [&](const std::string& what) -> Shape {
    fail(Errc::ShapeMismatch, std::string(kind_name(op)) + ": " + what + ", input " + shape_string(in));
  };
  return std::visit(
      overloaded{
          [&](const Dense& p) -> Shape {
            if (in.size() != 1) return mismatch("expects a flat input");
            if (p.weight.rank() != 2 || p.weight.shape[1] != in[0]) return mismatch("weight shape " + shape_string(p.weight.shape));
            if (!p.bias.empty() && p.bias.size() != p.weight.shape[0]) return mismatch("bias length");
            return {p.weight.shape[0]};
          },
          [&](const Conv2d& p) -> Shape {
            if (in.size() != 3) return mismatch("expects (h, w, c)");
            if (p.kernel.rank() != 4 || p.kernel.shape[2] != in[2]) return mismatch("kernel shape " + shape_string(p.kernel.shape));
            if (!p.bias.empty() && p.bias.size() != p.kernel.shape[3]) return mismatch("bias length");
            const ConvGeometry g = conv_geometry(in[0], in[1], p.kernel.shape[0], p.kernel.shape[1], p.stride, p.padding);
            return {g.out_h, g.out_w, p.kernel.shape[3]};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const BatchNorm& p) -> Shape {
            if (in.empty()) return mismatch("needs a channel axis");
            const std::size_t c = in.back();
            if (p.gamma.size() != c || p.beta.size() != c || p.mean.size() != c || p.var.size() != c) {
              return mismatch("parameter length");
            }
            return in;
          },
          [&](const GroupNorm& p) -> Shape {
            if (in.empty()) return mismatch("needs a channel axis");
            const std::size_t c = in.back();
            if (p.groups == 0 || c % p.groups != 0) {
              fail(Errc::GroupMismatch, "groupnorm: " + std::to_string(p.groups) + " groups do not divide " + std::to_string(c));
            }
            if (p.gamma.size() != c || p.beta.size() != c) return mismatch("parameter length");
            return in;
          },
          [&](const Frn& p) -> Shape {
            if (in.empty()) return mismatch("needs a channel axis");
            const std::size_t c = in.back();
            if (p.gamma.size() != c || p.beta.size() != c || p.tau.size() != c) return mismatch("parameter length");
            return in;
          },
          [&](const MaxPool& p) -> Shape {
            if (in.size() != 3) return mismatch("expects (h, w, c)");
            if (p.size < 1 || p.stride < 1 || in[0] < p.size || in[1] < p.size) return mismatch("window");
            return {(in[0] - p.size) / p.stride + 1, (in[1] - p.size) / p.stride + 1, in[2]};
          },
          [&](const GlobalAvgPool&) -> Shape {
            if (in.size() != 3) return mismatch("expects (h, w, c)");
            return {in[2]};
          },
          [&](const ResidualAdd&) -> Shape {
            if (in.size() != 1 && in.size() != 3) return mismatch("expects (c) or (h, w, c)");
            if (shortcut == nullptr) return in;
            const Shape& s = *shortcut;
            if (s.size() != in.size()) return mismatch("shortcut rank differs, shortcut " + shape_string(s));
            if (s.back() > in.back()) return mismatch("shortcut has more channels");
            if (in.size() == 3) {
              for (std::size_t d = 0; d < 2; ++d) {
                if (in[d] == 0 || s[d] < in[d]) return mismatch("shortcut smaller than output");
                const std::size_t r = (s[d] + in[d] - 1) / in[d];
                if ((s[d] + r - 1) / r != in[d]) return mismatch("shortcut size is not a stride multiple");
              }
            }
            return in;
          },
          [&](const Flatten&) -> Shape { return {shape_product(in)}; },
          [&](const Correction& p) -> Shape {
            if (shape_product(in) != p.target.n()) {
              fail(Errc::SizeMismatch, "correction: site has " + std::to_string(shape_product(in)) +
                                           " values, target '" + p.target.layer_id + "' has " +
                                           std::to_string(p.target.n()));
            }
            return in;
          },
      },
      op);
}

}  // namespace dwc
