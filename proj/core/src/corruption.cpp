#include "dwc/corruption.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dwc/error.hpp"
#include "dwc/rng.hpp"
#include "dwc/store.hpp"

namespace dwc {

using nlohmann::json;

namespace {

constexpr std::size_t idx(CorruptionKind k) { return static_cast<std::size_t>(k); }

const char* parameter_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianNoise: return "sigma";
    case CorruptionKind::ShotNoise: return "photons";
    case CorruptionKind::ImpulseNoise: return "rate";
    case CorruptionKind::Brightness: return "shift";
    case CorruptionKind::Contrast: return "factor";
    case CorruptionKind::FogHaze: return "intensity";
    case CorruptionKind::MotionBlur: return "length";
    case CorruptionKind::Pixelate: return "factor";
    case CorruptionKind::Identity: return "";
  }
  return "";
}

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct Image {
  std::size_t h, w, c;
  std::size_t at(std::size_t y, std::size_t x, std::size_t k) const { return (y * w + x) * c + k; }
};

// fine field of a coarse 5x5 grid, bilinear, corners aligned with the image
std::vector<double> haze_field(CounterRng& rng, std::size_t h, std::size_t w) {
  constexpr std::size_t G = 5;
  double grid[G][G];
  for (auto& row : grid) {
    for (double& g : row) g = rng.uniform();
  }
  std::vector<double> f(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double gy = h > 1 ? static_cast<double>(y) * (G - 1) / static_cast<double>(h - 1) : 0.0;
    const auto y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), G - 2);
    const double ty = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double gx = w > 1 ? static_cast<double>(x) * (G - 1) / static_cast<double>(w - 1) : 0.0;
      const auto x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), G - 2);
      const double tx = gx - static_cast<double>(x0);
      const double top = (1 - tx) * grid[y0][x0] + tx * grid[y0][x0 + 1];
      const double bot = (1 - tx) * grid[y0 + 1][x0] + tx * grid[y0 + 1][x0 + 1];
      f[y * w + x] = (1 - ty) * top + ty * bot;
    }
  }
  return f;
}

}  // namespace

std::string_view to_string(CorruptionKind k) noexcept {
  switch (k) {
    case CorruptionKind::Identity: return "identity";
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::ShotNoise: return "shot_noise";
    case CorruptionKind::ImpulseNoise: return "impulse_noise";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::FogHaze: return "fog_haze";
    case CorruptionKind::MotionBlur: return "motion_blur";
    case CorruptionKind::Pixelate: return "pixelate";
  }
  return "unknown";
}

CorruptionKind parse_kind(std::string_view name) {
  for (const auto k : kAllCorruptions) {
    if (to_string(k) == name) return k;
  }
  fail(Errc::UnknownKind, "unknown corruption '" + std::string(name) + "'");
}

bool is_noise(CorruptionKind k) noexcept {
  return k == CorruptionKind::GaussianNoise || k == CorruptionKind::ShotNoise ||
         k == CorruptionKind::ImpulseNoise;
}

SeverityTable SeverityTable::defaults() {
  SeverityTable t;
  t.values_[idx(CorruptionKind::GaussianNoise)] = {0.08, 0.12, 0.18, 0.26, 0.38};
  t.values_[idx(CorruptionKind::ShotNoise)] = {40, 20, 10, 5, 2.5};
  t.values_[idx(CorruptionKind::ImpulseNoise)] = {0.03, 0.06, 0.09, 0.17, 0.27};
  t.values_[idx(CorruptionKind::Brightness)] = {0.1, 0.2, 0.3, 0.4, 0.5};
  t.values_[idx(CorruptionKind::Contrast)] = {0.4, 0.3, 0.2, 0.1, 0.05};
  t.values_[idx(CorruptionKind::FogHaze)] = {0.1, 0.2, 0.3, 0.4, 0.5};
  t.values_[idx(CorruptionKind::MotionBlur)] = {3, 5, 7, 9, 11};
  t.values_[idx(CorruptionKind::Pixelate)] = {0.9, 0.8, 0.7, 0.6, 0.5};
  return t;
}

SeverityTable SeverityTable::from_json(std::string_view text) {
  SeverityTable t;
  try {
    const json j = json::parse(text);
    t.version_ = j.at("version").get<int>();
    if (t.version_ != 1) fail(Errc::InvalidConfig, "severity config version " + std::to_string(t.version_) + " is not supported");
    const json& kinds = j.at("kinds");
    for (const auto k : kAllCorruptions) {
      if (k == CorruptionKind::Identity) continue;
      const std::string name(to_string(k));
      if (!kinds.contains(name)) fail(Errc::InvalidConfig, "severity config lacks '" + name + "'");
      const auto v = kinds.at(name).at("values").get<std::vector<double>>();
      if (v.size() != 5) fail(Errc::InvalidConfig, "severity config '" + name + "' needs 5 values");
      for (const double x : v) {
        if (!std::isfinite(x) || x < 0.0) fail(Errc::InvalidConfig, "severity config '" + name + "' has an invalid value");
      }
      std::copy(v.begin(), v.end(), t.values_[idx(k)].begin());
    }
    for (const auto& [name, _] : kinds.items()) {
      parse_kind(name);
    }
  } catch (const json::exception& e) {
    fail(Errc::InvalidConfig, std::string("severity config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::UnknownKind) fail(Errc::InvalidConfig, std::string("severity config: ") + e.what());
    throw;
  }
  return t;
}

SeverityTable SeverityTable::from_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

double SeverityTable::value(CorruptionKind k, int severity) const {
  if (severity < 1 || severity > 5) fail(Errc::UnknownKind, "severity " + std::to_string(severity) + " outside 1..5");
  return values_[idx(k)][static_cast<std::size_t>(severity - 1)];
}

std::string SeverityTable::to_json() const {
  json kinds = json::object();
  for (const auto k : kAllCorruptions) {
    if (k == CorruptionKind::Identity) continue;
    kinds[std::string(to_string(k))] = {{"parameter", parameter_name(k)}, {"values", values_[idx(k)]}};
  }
  return json{{"version", version_}, {"kinds", kinds}}.dump();
}

std::string SeverityTable::hash() const { return sha256_hex(to_json()); }

Tensor apply(const Tensor& image, const CorruptionSpec& spec, const SeverityTable& table, std::uint64_t index) {
  if (image.rank() != 3) fail(Errc::ShapeMismatch, "corruption expects an (h, w, c) image, got " + shape_string(image.shape));
  for (const float v : image.data) {
    if (!(v >= 0.0f && v <= 1.0f)) fail(Errc::OutOfRangeInput, "corruption input outside [0, 1]");
  }
  if (spec.kind == CorruptionKind::Identity) return image;
  const double p = table.value(spec.kind, spec.severity);
  const Image g{image.shape[0], image.shape[1], image.shape[2]};
  CounterRng rng(mix({spec.seed, index, static_cast<std::uint64_t>(spec.kind),
                      static_cast<std::uint64_t>(spec.severity)}));
  Tensor out = image;
  auto& y = out.data;
  const auto& x = image.data;

  switch (spec.kind) {
    case CorruptionKind::GaussianNoise:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = clip01(x[i] + p * rng.normal());
      break;
    case CorruptionKind::ShotNoise:
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = clip01(static_cast<double>(rng.poisson(x[i] * p)) / p);
      }
      break;
    case CorruptionKind::ImpulseNoise:
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double u = rng.uniform();
        const double salt = rng.uniform();
        if (u < p) y[i] = salt < 0.5 ? 1.0f : 0.0f;
      }
      break;
    case CorruptionKind::Brightness:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = clip01(x[i] + p);
      break;
    case CorruptionKind::Contrast: {
      double mean = 0.0;
      for (const float v : x) mean += v;
      mean /= static_cast<double>(x.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = clip01((x[i] - mean) * p + mean);
      break;
    }
    case CorruptionKind::FogHaze: {
      const auto f = haze_field(rng, g.h, g.w);
      for (std::size_t r = 0; r < g.h; ++r) {
        for (std::size_t q = 0; q < g.w; ++q) {
          for (std::size_t k = 0; k < g.c; ++k) y[g.at(r, q, k)] = clip01(x[g.at(r, q, k)] + p * f[r * g.w + q]);
        }
      }
      break;
    }
    case CorruptionKind::MotionBlur: {
      // horizontal box of odd length, edges clamped
      const auto half = static_cast<std::ptrdiff_t>(std::lround(p)) / 2;
      const auto len = static_cast<double>(2 * half + 1);
      const auto w = static_cast<std::ptrdiff_t>(g.w);
      for (std::size_t r = 0; r < g.h; ++r) {
        for (std::ptrdiff_t q = 0; q < w; ++q) {
          for (std::size_t k = 0; k < g.c; ++k) {
            double s = 0.0;
            for (std::ptrdiff_t d = -half; d <= half; ++d) {
              const auto qq = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(q + d, 0, w - 1));
              s += x[g.at(r, qq, k)];
            }
            y[g.at(r, static_cast<std::size_t>(q), k)] = clip01(s / len);
          }
        }
      }
      break;
    }
    case CorruptionKind::Pixelate: {
      const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(g.h) * p)));
      const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(g.w) * p)));
      std::vector<double> sum(ch * cw * g.c, 0.0);
      std::vector<std::size_t> count(ch * cw, 0);
      for (std::size_t r = 0; r < g.h; ++r) {
        const std::size_t cr = r * ch / g.h;
        for (std::size_t q = 0; q < g.w; ++q) {
          const std::size_t cq = q * cw / g.w;
          ++count[cr * cw + cq];
          for (std::size_t k = 0; k < g.c; ++k) sum[(cr * cw + cq) * g.c + k] += x[g.at(r, q, k)];
        }
      }
      for (std::size_t r = 0; r < g.h; ++r) {
        const std::size_t cr = r * ch / g.h;
        for (std::size_t q = 0; q < g.w; ++q) {
          const std::size_t cq = q * cw / g.w;
          const auto n = static_cast<double>(count[cr * cw + cq]);
          for (std::size_t k = 0; k < g.c; ++k) y[g.at(r, q, k)] = clip01(sum[(cr * cw + cq) * g.c + k] / n);
        }
      }
      break;
    }
    case CorruptionKind::Identity:
      break;
  }
  return out;
}

std::vector<CorruptionSpec> parse_suite(std::string_view text, std::uint64_t seed) {
  std::vector<CorruptionSpec> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  auto to_int = [](std::string_view s) {
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail(Errc::InvalidConfig, "bad severity '" + std::string(s) + "'");
    return v;
  };
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    const CorruptionKind kind = parse_kind(item.substr(0, colon));
    if (kind == CorruptionKind::Identity) {
      out.push_back({kind, 1, seed});
      continue;
    }
    int lo = 1, hi = 5;
    if (colon != std::string::npos) {
      const std::string range = item.substr(colon + 1);
      const auto dash = range.find('-');
      lo = to_int(range.substr(0, dash));
      hi = dash == std::string::npos ? lo : to_int(range.substr(dash + 1));
    }
    if (lo < 1 || hi > 5 || lo > hi) fail(Errc::InvalidConfig, "severity range in '" + item + "' must lie in 1..5");
    for (int s = lo; s <= hi; ++s) out.push_back({kind, s, seed});
  }
  return out;
}

CorruptedSuite::CorruptedSuite(const Dataset& data, std::vector<CorruptionSpec> specs, SeverityTable table)
    : data_(&data), specs_(std::move(specs)), table_(std::move(table)) {
  for (const auto& s : specs_) {
    if (s.kind != CorruptionKind::Identity) table_.value(s.kind, s.severity);
  }
}

CorruptedSuite::Item CorruptedSuite::at(std::size_t k) const {
  if (k >= size()) fail(Errc::IndexOutOfRange, "suite item " + std::to_string(k) + " of " + std::to_string(size()));
  const std::size_t n = data_->size();
  Item item;
  item.spec = specs_[k / n];
  item.sample = k % n;
  item.label = data_->labels[item.sample];
  const auto px = data_->images.sample(item.sample);
  item.image = apply(Tensor(data_->sample_shape(), std::vector<float>(px.begin(), px.end())), item.spec, table_,
                     item.sample);
  return item;
}

Tensor CorruptedSuite::batch(const CorruptionSpec& spec, std::size_t begin, std::size_t end) const {
  Tensor out = data_->images.slice(begin, end);
  const Shape per = data_->sample_shape();
  for (std::size_t i = begin; i < end; ++i) {
    auto dst = out.sample(i - begin);
    const Tensor img(per, std::vector<float>(dst.begin(), dst.end()));
    const Tensor c = apply(img, spec, table_, i);
    std::copy(c.data.begin(), c.data.end(), dst.begin());
  }
  return out;
}

}  // namespace dwc
