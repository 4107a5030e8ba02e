#include "dwc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "dwc/error.hpp"
#include "dwc/rng.hpp"
#include "dwc/store.hpp"

namespace dwc {

void Dataset::validate() const {
  if (images.rank() != 4) fail(Errc::ShapeMismatch, "dataset images must be (count, h, w, c)");
  if (images.batch() != labels.size()) {
    fail(Errc::CountMismatch, "dataset has " + std::to_string(images.batch()) + " images and " +
                                  std::to_string(labels.size()) + " labels");
  }
  for (const int y : labels) {
    if (y < 0 || y >= classes) fail(Errc::CountMismatch, "label " + std::to_string(y) + " outside [0, classes)");
  }
  for (const float v : images.data) {
    if (!(v >= 0.0f && v <= 1.0f)) fail(Errc::OutOfRangeInput, "dataset pixel outside [0, 1]");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.classes = classes;
  out.name = name;
  Shape s = images.shape;
  s[0] = indices.size();
  out.images = Tensor(std::move(s));
  const std::size_t n = images.sample_size();
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = images.sample(indices[k]);
    std::copy(src.begin(), src.end(), out.images.data.begin() + static_cast<std::ptrdiff_t>(k * n));
    out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  count = std::min(count, size());
  Dataset out;
  out.classes = classes;
  out.name = name;
  out.images = images.slice(0, count);
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

Dataset Dataset::every(std::size_t k) const {
  if (k == 0) fail(Errc::InvalidConfig, "subsample step must be >= 1");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < size(); i += k) idx.push_back(i);
  return subset(idx);
}

namespace {

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::round(c * 255.0)) / 255.0f;
}

// Segment endpoints on a unit-wide, two-unit-tall glyph box.
struct Segment {
  double x0, y0, x1, y1;
};
constexpr std::array<Segment, 7> kSegments = {{
    {0, 0, 1, 0},  // a top
    {1, 0, 1, 1},  // b upper right
    {1, 1, 1, 2},  // c lower right
    {0, 2, 1, 2},  // d bottom
    {0, 1, 0, 2},  // e lower left
    {0, 0, 0, 1},  // f upper left
    {0, 1, 1, 1},  // g middle
}};
constexpr std::array<const char*, 10> kGlyphs = {"abcdef", "bc",     "abged", "abgcd", "fgbc",
                                                 "afgcd",  "afgedc", "abc",   "abcdefg", "abcdfg"};

void render_digit(int digit, CounterRng& rng, std::size_t side, float* out) {
  const double hs = static_cast<double>(side);
  const double scale = hs / 16.0 * 0.75;
  const double width = rng.uniform(5.0, 7.5) * scale;
  const double height = rng.uniform(9.0, 11.5) * scale;
  const double slant = rng.uniform(-0.25, 0.25);
  const double cx = hs / 2.0 + rng.uniform(-2.0, 2.0);
  const double cy = hs / 2.0 + rng.uniform(-2.0, 2.0);
  const double thickness = rng.uniform(0.5, 1.5);
  const double intensity = rng.uniform(0.7, 1.0);

  std::vector<double> img(side * side, 0.0);
  for (const char* s = kGlyphs[static_cast<std::size_t>(digit)]; *s; ++s) {
    const Segment& seg = kSegments[static_cast<std::size_t>(*s - 'a')];
    double px[2], py[2];
    const double us[2] = {seg.x0, seg.x1}, vs[2] = {seg.y0, seg.y1};
    for (int e = 0; e < 2; ++e) {
      py[e] = cy + (vs[e] - 1.0) * height / 2.0 + 0.9 * rng.normal();
      px[e] = cx + (us[e] - 0.5) * width - slant * (vs[e] - 1.0) * height / 2.0 + 0.9 * rng.normal();
    }
    const double dx = px[1] - px[0], dy = py[1] - py[0];
    const double len2 = std::max(dx * dx + dy * dy, 1e-12);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double qx = static_cast<double>(x) + 0.5, qy = static_cast<double>(y) + 0.5;
        const double t = std::clamp(((qx - px[0]) * dx + (qy - py[0]) * dy) / len2, 0.0, 1.0);
        const double d = std::hypot(qx - (px[0] + t * dx), qy - (py[0] + t * dy));
        double& p = img[y * side + x];
        p = std::max(p, std::clamp(thickness + 0.5 - d, 0.0, 1.0));
      }
    }
  }
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = quantize(img[i] * intensity);
}

constexpr std::uint64_t kDigitsStream = 0xD161'75ULL;
constexpr std::uint64_t kBlobsStream = 0xB10B'5ULL;
constexpr std::size_t kBlobDim = 16;

}  // namespace

Dataset synthetic_digits(std::size_t count, std::uint64_t seed, std::size_t side) {
  if (side < 8) fail(Errc::InvalidConfig, "synthetic digits need side >= 8");
  Dataset d;
  d.classes = 10;
  d.name = "synthetic-digits";
  d.images = Tensor({count, side, side, 1});
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(mix({kDigitsStream, seed, i}));
    d.labels[i] = static_cast<int>(rng.below(10));
    render_digit(d.labels[i], rng, side, d.images.data.data() + i * side * side);
  }
  return d;
}

Dataset synthetic_blobs(std::size_t count, std::uint64_t seed, int classes) {
  if (classes < 2) fail(Errc::InvalidConfig, "synthetic blobs need at least 2 classes");
  std::vector<double> centres(static_cast<std::size_t>(classes) * kBlobDim);
  CounterRng crng(mix({kBlobsStream, static_cast<std::uint64_t>(classes)}));
  for (double& c : centres) c = crng.uniform(0.2, 0.8);

  Dataset d;
  d.classes = classes;
  d.name = "synthetic-blobs";
  d.images = Tensor({count, 4, 4, 1});
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(mix({kBlobsStream, seed, i}));
    const auto y = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(classes)));
    d.labels[i] = static_cast<int>(y);
    for (std::size_t k = 0; k < kBlobDim; ++k) {
      d.images.data[i * kBlobDim + k] = quantize(centres[y * kBlobDim + k] + 0.06 * rng.normal());
    }
  }
  return d;
}

Dataset load_data(const DataRequest& req) {
  const bool train = req.split == Split::Train;
  const std::uint64_t split_seed = mix({req.seed, train ? 0u : 1u});
  const std::size_t synth_count = req.count ? req.count : (train ? 6000 : 2000);
  if (req.source == "synthetic-digits") return synthetic_digits(synth_count, split_seed);
  if (req.source == "synthetic-blobs") return synthetic_blobs(synth_count, split_seed);

  Dataset d;
  if (req.source == "mnist") {
    const auto dir = req.data_dir;
    const auto images = dir / (train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte");
    const auto labels = dir / (train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte");
    d = read_idx(images, labels);
    d.name = "mnist";
  } else if (req.source.ends_with(".dwd")) {
    d = load_dataset(req.source);
  } else {
    fail(Errc::InvalidConfig, "unknown data source '" + req.source +
                                  "' (synthetic-digits | synthetic-blobs | mnist | <file>.dwd)");
  }
  return req.count ? d.head(req.count) : d;
}

}  // namespace dwc
