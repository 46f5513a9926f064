#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dinglab/config.hpp"
#include "dinglab/guidance.hpp"
#include "dinglab/metrics.hpp"
#include "dinglab/prior.hpp"
#include "dinglab/schedule.hpp"
#include "dinglab/task.hpp"

namespace ding {

inline constexpr const char* kToolVersion = "0.1.0";

// Reserved stream indices for derive_rng(seed, stream); chain c of a job uses
// stream c directly.
inline constexpr std::uint64_t kPosteriorStream = 1ULL << 28;
inline constexpr std::uint64_t kProjectionStream = 1ULL << 29;
inline constexpr std::uint64_t kXStarStream = 1ULL << 30;
inline constexpr std::uint64_t kPriorStream = 1ULL << 31;

// Bit-exact CSV header shared by `run` and `ablation` outputs.
inline constexpr const char* kCsvHeader =
    "method,seed,K,nfe,sigma_y,eta_kind,sw,mean_err,cov_err,cpsnr,runtime_ms";

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> workers;
};

struct ExperimentSetup {
  NoiseSchedule ns;
  EtaSchedule es;
  TimeGrid grid;
  std::unique_ptr<AnalyticPrior> prior;
  InpaintingTask task;
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds;
  int n_samples = 2000;
  int n_projections = 128;
  int workers = 1;
  bool timing = false;
  bool trace = false;
  bool image_dump = false;
  int mask_width = 0;   // set when the task came from a pixel mask
  int mask_height = 0;
  std::string out_dir = "out";
};

// Builders shared by the CLI subcommands and tests.
std::unique_ptr<AnalyticPrior> make_prior(const Config& cfg);
InpaintingTask make_task(const Config& cfg, const AnalyticPrior& prior,
                         int* mask_width = nullptr,
                         int* mask_height = nullptr);
ExperimentSetup make_setup(const Config& cfg, const CliOverrides& ov = {});

double format_roundtrip(double v);  // parse(print17(v)), for tests
std::string format_g17(double v);

int cmd_run(const Config& cfg, const CliOverrides& ov = {});
int cmd_bias_scan(const Config& cfg, const CliOverrides& ov = {});
int cmd_ablation(const Config& cfg, const CliOverrides& ov = {});
int cmd_validate(const Config& cfg, const CliOverrides& ov = {});

}  // namespace ding
