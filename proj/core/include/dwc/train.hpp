#pragma once

// Minibatch SGD for dense ReLU networks with optional batchnorm. Training math
// runs in double precision; the result is exported as an inference Model.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dwc/dataset.hpp"
#include "dwc/model.hpp"

namespace dwc {

enum class NormKind { None, BatchNorm };

std::string_view to_string(NormKind k) noexcept;
NormKind parse_norm(std::string_view s);  // "none" | "bn"

struct MlpSpec {
  std::vector<std::size_t> hidden;
  NormKind norm = NormKind::BatchNorm;
};

struct TrainHyper {
  double lr = 0.1;
  double momentum = 0.9;
  int epochs = 10;
  std::vector<int> decay_epochs;  // lr is multiplied by decay_factor at each listed epoch
  double decay_factor = 0.1;
  std::size_t batch_size = 64;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  double bn_momentum = 0.1;  // running = (1 - m) running + m batch
  double bn_eps = 1e-5;
};

struct MlpParams {
  std::vector<std::size_t> sizes;  // input, hidden..., classes
  NormKind norm = NormKind::None;
  std::vector<std::vector<double>> weight;  // layer l is (sizes[l+1], sizes[l]), row-major
  std::vector<std::vector<double>> bias;
  // One entry per hidden layer when norm == BatchNorm, otherwise empty.
  std::vector<std::vector<double>> gamma, beta, running_mean, running_var;

  std::size_t layers() const noexcept { return weight.size(); }
  // Every trainable array, in a fixed order; gradients use the same order.
  std::vector<std::span<double>> trainable();
  std::vector<std::span<const double>> trainable() const;
};

// He-uniform weights (limit sqrt(6 / fan_in)), zero biases, unit gamma.
MlpParams init_mlp(std::span<const std::size_t> sizes, NormKind norm, std::uint64_t seed);

// Mean softmax cross-entropy of a batch (x is batch x sizes[0], row-major),
// using batch statistics for batchnorm. When grad is non-null it is shaped
// like p and receives dL/dparam; running statistics are not touched.
double mlp_loss(const MlpParams& p, std::span<const double> x, std::span<const int> labels,
                MlpParams* grad = nullptr);

// Layers: [flatten] dense0 [bn0] relu0 ... logits. Running statistics become
// the batchnorm parameters.
Model to_model(const MlpParams& p, const Shape& input_shape, float bn_eps = 1e-5f);

double accuracy(const Model& model, const Dataset& data, std::size_t batch = 256);

struct TrainResult {
  Model model;
  MlpParams params;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;  // 0 when no validation set was given
  std::vector<double> epoch_loss;
};

// Deterministic for a fixed seed. Throws DivergenceDetected when the loss
// stops being finite.
TrainResult train_mlp(const Dataset& train, const Dataset* validation, const MlpSpec& spec,
                      const TrainHyper& hyper);

}  // namespace dwc
