#include <benchmark/benchmark.h>

#include <vector>

#include "dwc/dataset.hpp"
#include "dwc/model.hpp"
#include "dwc/targets.hpp"
#include "dwc/train.hpp"

namespace {

struct Fixture {
  dwc::Dataset data = dwc::synthetic_digits(256, 3);
  dwc::Model plain;
  dwc::Model corrected;

  Fixture() {
    const std::vector<std::size_t> sizes{784, 128, 64, 10};
    plain = dwc::to_model(dwc::init_mlp(sizes, dwc::NormKind::BatchNorm, 1), data.sample_shape());
    const auto sites = dwc::placement_sites(plain, dwc::Placement::AfterConv);
    const auto targets = dwc::build_targets(plain, data, sites);
    corrected = dwc::attach_correction(plain, targets, dwc::CorrectionConfig(), dwc::Placement::AfterConv);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void forward_batch(benchmark::State& state, const dwc::Model& model) {
  const auto batch = fixture().data.subset(std::vector<std::size_t>(static_cast<std::size_t>(state.range(0)), 0));
  for (auto _ : state) {
    auto r = dwc::forward(model, batch.images);
    benchmark::DoNotOptimize(r.logits.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ForwardUncorrected(benchmark::State& state) { forward_batch(state, fixture().plain); }
void BM_ForwardCorrected(benchmark::State& state) { forward_batch(state, fixture().corrected); }

}  // namespace

BENCHMARK(BM_ForwardUncorrected)->Arg(1)->Arg(64);
BENCHMARK(BM_ForwardCorrected)->Arg(1)->Arg(64);

BENCHMARK_MAIN();
