#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>

#include <CLI/CLI.hpp>

#include "commands.hpp"
#include "dwc/error.hpp"
#include "dwc/version.hpp"

namespace {

using namespace dwc;
using namespace dwc::cli;

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumeric = 4;

int exit_code(Errc code) {
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::UnknownKind:
    case Errc::UnknownLayer:
    case Errc::UnknownTap:
    case Errc::EmptySuite:
    case Errc::DuplicateGridPoint:
      return kUsage;
    case Errc::NonFinite:
    case Errc::DivergenceDetected:
    case Errc::NonPositiveVariance:
      return kNumeric;
    default:
      return kData;
  }
}

void add_data(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--data", d.source, "synthetic-digits | synthetic-blobs | mnist | path/to/set.dwd")
      ->capture_default_str();
  cmd->add_option("--split", d.split, "train | test (default depends on the command)");
  cmd->add_option("--count", d.count, "number of samples, 0 = source default");
  cmd->add_option("--data-seed", d.seed, "seed of synthetic sources")->capture_default_str();
  cmd->add_option("--data-dir", d.data_dir, "directory with MNIST IDX files (default $DWC_DATA_DIR)");
}

void add_steps(CLI::App* cmd, StepFlags& s) {
  cmd->add_option("--lambda1", s.lambda1, "prior step size")->capture_default_str();
  cmd->add_option("--lambda2", s.lambda2, "likelihood step size")->capture_default_str();
  cmd->add_option("--n-iter", s.n_iter, "correction iterations")->capture_default_str();
  cmd->add_flag("!--no-preserve-zeros", s.keep_zeros, "let zero activations move (after_relu only)");
}

void add_eval(CLI::App* cmd, EvalArgs& e, bool steps) {
  add_data(cmd, e.data);
  cmd->add_option("--model", e.model, "model archive (.dwm)")->required();
  cmd->add_option("--targets", e.targets, "targets archive (.dwt)")->required();
  cmd->add_option("--suite", e.suite, "corruptions, e.g. identity,impulse_noise:5,fog_haze:1-5")
      ->capture_default_str();
  cmd->add_option("--suite-seed", e.suite_seed, "seed of the corruption draws")->capture_default_str();
  if (steps) add_steps(cmd, e.step);
  cmd->add_option("--severity-config", e.severity_config, "severity table JSON (default: built-in v1)");
  cmd->add_flag("--allow-mismatch", e.allow_mismatch, "accept targets built for another model");
  cmd->add_option("--batch", e.batch, "evaluation batch size")->capture_default_str();
  cmd->add_option("--threads", e.threads, "worker threads")->capture_default_str();
  cmd->add_option("--out", e.out, "output CSV (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time activation distribution correction"};
  app.set_version_flag("--version", std::string(dwc::version()));
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train an MLP and write a model archive");
  add_data(c_train, train.data);
  c_train->add_option("--arch", train.arch, "mlp:<width>,<width>,...")->capture_default_str();
  c_train->add_option("--norm", train.norm, "bn | none")->capture_default_str();
  c_train->add_option("--epochs", train.epochs)->capture_default_str();
  c_train->add_option("--lr", train.lr)->capture_default_str();
  c_train->add_option("--momentum", train.momentum)->capture_default_str();
  c_train->add_option("--batch", train.batch)->capture_default_str();
  c_train->add_option("--weight-decay", train.weight_decay)->capture_default_str();
  c_train->add_option("--decay-epochs", train.decay_epochs, "epochs at which lr is scaled by 0.1")->delimiter(',');
  c_train->add_option("--seed", train.seed)->capture_default_str();
  c_train->add_option("--out", train.out, "model archive to write")->required();

  BuildTargetsArgs bt;
  auto* c_bt = app.add_subcommand("build-targets", "collect barycenter targets from clean data");
  add_data(c_bt, bt.data);
  c_bt->add_option("--model", bt.model)->required();
  c_bt->add_option("--placement", bt.placement, "after_relu | after_conv")->capture_default_str();
  c_bt->add_option("--sites", bt.sites, "layer names (default: every site of the placement)")->delimiter(',');
  c_bt->add_option("--subsample", bt.subsample, "use every k-th sample")->capture_default_str();
  c_bt->add_option("--batch", bt.batch)->capture_default_str();
  c_bt->add_option("--threads", bt.threads)->capture_default_str();
  c_bt->add_option("--out", bt.out, "targets archive to write")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "accuracy on a corruption suite with and without correction");
  add_eval(c_ev, ev, true);
  c_ev->add_option("--baseline", ev.baseline, "kind,severity,error CSV for mCE");
  c_ev->add_flag("--no-timing", ev.no_timing, "leave wallclock columns at 0");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "evaluate a grid of step sizes and iteration counts");
  add_eval(c_sw, sw.eval, false);
  c_sw->add_option("--grid", sw.grid, "l1:l2:n_iter points")->delimiter(',');
  c_sw->add_option("--lambda1s", sw.lambda1s, "crossed with --lambda2s and --n-iters")->delimiter(',');
  c_sw->add_option("--lambda2s", sw.lambda2s)->delimiter(',');
  c_sw->add_option("--n-iters", sw.n_iters)->delimiter(',');

  DiagnoseArgs dg;
  auto* c_dg = app.add_subcommand("diagnose", "variance profiles, before/after dumps, dissimilar pairs");
  add_data(c_dg, dg.data);
  c_dg->add_option("--model", dg.model)->required();
  c_dg->add_option("--targets", dg.targets)->required();
  c_dg->add_option("--layer", dg.layer, "site for the before/after dump (default: first target)");
  add_steps(c_dg, dg.step);
  c_dg->add_option("--samples", dg.samples)->capture_default_str();
  c_dg->add_option("--queries", dg.queries)->capture_default_str();
  c_dg->add_flag("--allow-mismatch", dg.allow_mismatch);
  c_dg->add_option("--out-dir", dg.out_dir)->capture_default_str();

  BenchArgs bn;
  auto* c_bn = app.add_subcommand("bench", "time one correction across layer sizes");
  c_bn->add_option("--sizes", bn.sizes, "layer sizes (default 2^10 .. 2^20)")->delimiter(',');
  add_steps(c_bn, bn.step);
  c_bn->add_option("--trials", bn.trials)->capture_default_str();
  c_bn->add_option("--min-seconds", bn.min_seconds, "minimum wallclock per trial")->capture_default_str();
  c_bn->add_option("--seed", bn.seed)->capture_default_str();
  c_bn->add_option("--model", bn.model, "also time forward passes of this model");
  c_bn->add_option("--targets", bn.targets);
  add_data(c_bn, bn.data);
  c_bn->add_option("--overhead-batch", bn.overhead_batch)->capture_default_str();
  c_bn->add_option("--out", bn.out, "output CSV (default stdout)");

  MceArgs mc;
  auto* c_mc = app.add_subcommand("mce", "mean corruption error of a report against a baseline");
  c_mc->add_option("--report", mc.report)->required();
  c_mc->add_option("--baseline", mc.baseline)->required();

  std::function<int()> run;
  c_train->callback([&] { run = [&] { return run_train(train); }; });
  c_bt->callback([&] { run = [&] { return run_build_targets(bt); }; });
  c_ev->callback([&] { run = [&] { return run_evaluate(ev); }; });
  c_sw->callback([&] {
    sw.eval.step = StepFlags{};
    run = [&] { return run_sweep(sw); };
  });
  c_dg->callback([&] { run = [&] { return run_diagnose(dg); }; });
  c_bn->callback([&] { run = [&] { return run_bench(bn); }; });
  c_mc->callback([&] { run = [&] { return run_mce(mc); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "dwc: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "dwc: " << e.what() << "\n";
    return kData;
  }
}
