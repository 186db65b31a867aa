// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/engine.hpp"

namespace unlearn {

/// $UNLEARNLAB_OUT when set and non-empty, otherwise "runs".
std::filesystem::path default_output_root();

/// File names inside one run directory.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.txt"; }
  std::filesystem::path metrics() const { return dir / "metrics.csv"; }
  std::filesystem::path timing() const { return dir / "timing.csv"; }
  std::filesystem::path checkpoint() const { return dir / "final.ckpt"; }
  std::filesystem::path periodic(std::uint64_t iteration) const;
};

struct PretrainRequest {
  RunConfig config;
  std::optional<std::uint64_t> seed;  // overrides pretrain.seed
  std::filesystem::path out_dir;      // empty: <root>/teacher_seed<seed>
};

struct PretrainOutcome {
  RunPaths paths;
  double final_loss = 0.0;
};

/// Trains the teacher; writes config.txt, pretrain.csv (step,loss) and final.ckpt.
PretrainOutcome cmd_pretrain(const PretrainRequest& request, std::ostream& log);

struct UnlearnRequest {
  std::optional<RunConfig> config;  // required unless resuming
  std::optional<Method> method;
  std::filesystem::path teacher;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> images;
  std::optional<std::uint64_t> steps;
  std::filesystem::path resume;
  std::filesystem::path out_dir;  // empty: <root>/unlearn_<method>_seed<seed>
  std::function<void(const TrainState&, const StepReport&)> on_step;  // optional observer
};

struct UnlearnOutcome {
  RunPaths paths;
  RunConfig config;
  MetricsRecord final_record;
};

/// pecker/sfd: distills from the teacher checkpoint with the engine, writing
/// metrics every eval interval, periodic checkpoints and final.ckpt.
/// retrain: trains a score network on the retain data for pretrain.steps
/// (--steps overrides that count) and evaluates it with the ancestral sampler.
/// A resume takes its config from the checkpoint echo; steps, images and the
/// output directory may still be overridden.
UnlearnOutcome cmd_unlearn(const UnlearnRequest& request, std::ostream& log);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::optional<RunConfig> dataset_config;  // data.* and classes.* override the echo
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_file;  // empty: eval.txt next to the checkpoint
};

struct EvalOutcome {
  EvalSummary summary;
  EvalOptions options;
  std::string sampler;  // "generator" or "ancestral"
  std::string text;     // the key=value report
};

EvalOutcome cmd_eval(const EvalRequest& request, std::ostream& out);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};
/// "key=v1,v2,..."; throws ConfigError for unknown keys or an empty value list.
GridAxis parse_grid_axis(std::string_view spec);

struct SweepRequest {
  RunConfig base;
  std::vector<GridAxis> grid;
  std::filesystem::path teacher;  // empty: pretrain once per distinct teacher config
  std::filesystem::path out_dir;  // empty: <root>/sweep
  std::size_t jobs = 0;           // 0: hardware concurrency
};

struct SweepOutcome {
  std::vector<RunPaths> runs;
  std::filesystem::path aggregate;
};

/// One run_### directory per grid combination (row-major, last axis fastest)
/// and aggregate.csv with the grid values and each run's final metrics row.
SweepOutcome cmd_sweep(const SweepRequest& request, std::ostream& log);

}  // namespace unlearn
