#pragma once

#include <functional>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "dwc/error.hpp"
#include "dwc/model.hpp"
#include "dwc/tensor.hpp"

namespace fixtures {

inline dwc::Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const dwc::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dwc::Error thrown";
  return dwc::Errc::Malformed;
}

inline dwc::Tensor random_tensor(std::mt19937_64& rng, dwc::Shape shape, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  dwc::Tensor t(std::move(shape));
  for (float& v : t.data) v = u(rng);
  return t;
}

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

// Dense 6 -> 5 (bn) -> relu -> 4 -> relu -> 3, with deterministic parameters.
inline dwc::Model small_mlp(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  dwc::Model m;
  m.input_shape = {6};
  m.layers.push_back({"dense0", dwc::Dense{random_tensor(rng, {5, 6}), random_floats(rng, 5, -0.1f, 0.1f)}});
  m.layers.push_back({"bn0", dwc::BatchNorm{random_floats(rng, 5, 0.5f, 1.5f), random_floats(rng, 5, -0.2f, 0.2f),
                                            random_floats(rng, 5, -0.1f, 0.1f), random_floats(rng, 5, 0.5f, 2.0f)}});
  m.layers.push_back({"relu0", dwc::Relu{}});
  m.layers.push_back({"dense1", dwc::Dense{random_tensor(rng, {4, 5}), random_floats(rng, 4, -0.1f, 0.1f)}});
  m.layers.push_back({"relu1", dwc::Relu{}});
  m.layers.push_back({"logits", dwc::Dense{random_tensor(rng, {3, 4}), random_floats(rng, 3, -0.1f, 0.1f)}});
  return m;
}

// 8x8x2 input, conv 3x3 -> 4ch (bn, relu), conv stride 2 -> 6ch (gn), relu,
// residual from relu0, frn, pool, gap, dense -> 3.
inline dwc::Model small_cnn(std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  dwc::Model m;
  m.input_shape = {8, 8, 2};
  m.layers.push_back({"conv0", dwc::Conv2d{random_tensor(rng, {3, 3, 2, 4}), random_floats(rng, 4, -0.1f, 0.1f), 1,
                                           dwc::Padding::Same}});
  m.layers.push_back({"bn0", dwc::BatchNorm{random_floats(rng, 4, 0.5f, 1.5f), random_floats(rng, 4, -0.2f, 0.2f),
                                            random_floats(rng, 4, -0.1f, 0.1f), random_floats(rng, 4, 0.5f, 2.0f)}});
  m.layers.push_back({"relu0", dwc::Relu{}});
  m.layers.push_back({"conv1", dwc::Conv2d{random_tensor(rng, {3, 3, 4, 6}), {}, 2, dwc::Padding::Same}});
  m.layers.push_back({"gn1", dwc::GroupNorm{2, random_floats(rng, 6, 0.5f, 1.5f), random_floats(rng, 6, -0.2f, 0.2f)}});
  m.layers.push_back({"relu1", dwc::Relu{}});
  m.layers.push_back({"add1", dwc::ResidualAdd{"relu0"}});
  m.layers.push_back({"frn1", dwc::Frn{random_floats(rng, 6, 0.5f, 1.5f), random_floats(rng, 6, -0.2f, 0.2f),
                                       random_floats(rng, 6, -0.3f, 0.0f)}});
  m.layers.push_back({"pool1", dwc::MaxPool{2, 2}});
  m.layers.push_back({"gap", dwc::GlobalAvgPool{}});
  m.layers.push_back({"logits", dwc::Dense{random_tensor(rng, {3, 6}), random_floats(rng, 3, -0.1f, 0.1f)}});
  return m;
}

}  // namespace fixtures
