#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dinglab/config.hpp"
#include "dinglab/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> workers;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", opts.seed, "override the seeds list with one seed");
  sub->add_option("--out", opts.out_dir, "output directory");
  sub->add_option("--workers", opts.workers, "concurrent chains workers");
}

int dispatch(int (*fn)(const ding::Config&, const ding::CliOverrides&),
             const CommonOpts& opts) {
  try {
    const auto cfg = ding::Config::parse_file(opts.config_path);
    ding::CliOverrides ov;
    ov.seed = opts.seed;
    ov.out_dir = opts.out_dir;
    ov.workers = opts.workers;
    return fn(cfg, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dinglab: posterior-sampling experiments over analytic priors"};
  app.require_subcommand(1);

  CommonOpts run_opts, bias_opts, ablation_opts, validate_opts;
  auto* run = app.add_subcommand(
      "run", "run the configured methods and write metrics CSV + manifest");
  add_common(run, run_opts);
  auto* bias = app.add_subcommand(
      "bias-scan", "scan the DPS/decoupled moment gaps over eta");
  add_common(bias, bias_opts);
  auto* ablation = app.add_subcommand(
      "ablation", "compare eta schedules on the configured task");
  add_common(ablation, ablation_opts);
  auto* validate =
      app.add_subcommand("validate", "lint the schedule and config");
  add_common(validate, validate_opts);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return dispatch(ding::cmd_run, run_opts);
  if (bias->parsed()) return dispatch(ding::cmd_bias_scan, bias_opts);
  if (ablation->parsed()) return dispatch(ding::cmd_ablation, ablation_opts);
  if (validate->parsed()) return dispatch(ding::cmd_validate, validate_opts);
  return 1;
}
