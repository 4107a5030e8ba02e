#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dwc::cli {

struct DataFlags {
  std::string source = "synthetic-digits";
  std::string split;  // empty = the command's natural split
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string data_dir;  // empty = $DWC_DATA_DIR, then "."
};

struct StepFlags {
  double lambda1 = 0.75;
  double lambda2 = 0.25;
  int n_iter = 2;
  bool keep_zeros = true;
};

struct TrainArgs {
  DataFlags data;
  std::string arch = "mlp:128,64";
  std::string norm = "bn";
  int epochs = 10;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t batch = 64;
  double weight_decay = 0.0;
  std::vector<int> decay_epochs;
  std::uint64_t seed = 1;
  std::string out;
};

struct BuildTargetsArgs {
  DataFlags data;
  std::string model;
  std::string placement = "after_relu";
  std::vector<std::string> sites;
  std::size_t subsample = 1;
  std::size_t batch = 256;
  unsigned threads = 1;
  std::string out;
};

struct EvalArgs {
  DataFlags data;
  std::string model;
  std::string targets;
  std::string suite = "identity,gaussian_noise,shot_noise,impulse_noise,fog_haze";
  std::uint64_t suite_seed = 0;
  StepFlags step;
  std::string severity_config;
  std::string baseline;
  bool allow_mismatch = false;
  bool no_timing = false;
  std::size_t batch = 200;
  unsigned threads = 1;
  std::string out;
};

struct SweepArgs {
  EvalArgs eval;
  std::vector<std::string> grid;  // "l1:l2:n" triples
  std::vector<double> lambda1s, lambda2s;
  std::vector<int> n_iters;
};

struct DiagnoseArgs {
  DataFlags data;
  std::string model;
  std::string targets;
  std::string layer;
  StepFlags step;
  std::size_t samples = 4;
  std::size_t queries = 1;
  bool allow_mismatch = false;
  std::string out_dir = "diagnostics";
};

struct BenchArgs {
  std::vector<std::size_t> sizes;
  StepFlags step;
  int trials = 3;
  double min_seconds = 0.1;
  std::uint64_t seed = 1;
  std::string model;
  std::string targets;
  DataFlags data;
  std::size_t overhead_batch = 100;
  std::string out;
};

struct MceArgs {
  std::string report;
  std::string baseline;
};

int run_train(const TrainArgs& a);
int run_build_targets(const BuildTargetsArgs& a);
int run_evaluate(const EvalArgs& a);
int run_sweep(const SweepArgs& a);
int run_diagnose(const DiagnoseArgs& a);
int run_bench(const BenchArgs& a);
int run_mce(const MceArgs& a);

}  // namespace dwc::cli
