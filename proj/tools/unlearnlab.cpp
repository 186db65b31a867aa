// SPDX-License-Identifier: Apache-2.0
// unlearnlab: pretrain / unlearn / eval / sweep front end.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unlearn/config.hpp"
#include "unlearn/harness.hpp"

namespace {

template <typename T>
std::optional<T> flag(const CLI::Option* opt, const T& value) {
  return opt->count() ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace unlearn;
  CLI::App app{"Class-conditional diffusion unlearning on 2D mixtures"};
  app.require_subcommand(1);

  std::string config_path, teacher, resume, out, method, checkpoint, dataset_config;
  std::uint64_t seed = 0, images = 0, steps = 0;
  std::size_t n = 0, jobs = 0;
  std::vector<std::string> grid;

  auto* pretrain = app.add_subcommand("pretrain", "Train the teacher score network");
  pretrain->add_option("--config", config_path, "Config file")->required();
  auto* pre_seed = pretrain->add_option("--seed", seed, "Override pretrain.seed");
  pretrain->add_option("--out", out, "Output directory");

  auto* unl = app.add_subcommand("unlearn", "Run pecker, sfd or the retrain oracle");
  auto* unl_config = unl->add_option("--config", config_path, "Config file");
  auto* unl_method = unl->add_option("--method", method, "pecker, sfd or retrain")
                         ->check(CLI::IsMember({"pecker", "sfd", "retrain"}));
  unl->add_option("--teacher", teacher, "Teacher checkpoint");
  auto* unl_seed = unl->add_option("--seed", seed, "Override train.seed");
  auto* unl_images = unl->add_option("--images", images, "Stop once this many images were seen");
  auto* unl_steps = unl->add_option("--steps", steps, "Step budget");
  unl->add_option("--resume", resume, "Resume from a checkpoint");
  unl->add_option("--out", out, "Output directory");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--config", dataset_config, "Config whose data.* and classes.* keys select the dataset");
  auto* ev_n = ev->add_option("--n", n, "Samples per class");
  auto* ev_seed = ev->add_option("--seed", seed, "Override eval.seed");
  ev->add_option("--out", out, "Summary file");

  auto* sweep = app.add_subcommand("sweep", "Grid of unlearning runs");
  sweep->add_option("--config", config_path, "Base config file")->required();
  sweep->add_option("--grid", grid, "key=v1,v2,... (repeatable)");
  sweep->add_option("--teacher", teacher, "Shared teacher checkpoint");
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--jobs", jobs, "Parallel runs (0: hardware concurrency)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (pretrain->parsed()) {
      cmd_pretrain(PretrainRequest{load_config(config_path), flag(pre_seed, seed), out}, std::cout);
    } else if (unl->parsed()) {
      UnlearnRequest req;
      if (unl_config->count()) req.config = load_config(config_path);
      if (unl_method->count()) req.method = parse_method(method);
      req.teacher = teacher;
      req.seed = flag(unl_seed, seed);
      req.images = flag(unl_images, images);
      req.steps = flag(unl_steps, steps);
      req.resume = resume;
      req.out_dir = out;
      cmd_unlearn(req, std::cout);
    } else if (ev->parsed()) {
      EvalRequest req;
      req.checkpoint = checkpoint;
      if (!dataset_config.empty()) req.dataset_config = load_config(dataset_config);
      req.n = flag(ev_n, n);
      req.seed = flag(ev_seed, seed);
      req.out_file = out;
      cmd_eval(req, std::cout);
    } else if (sweep->parsed()) {
      SweepRequest req;
      req.base = load_config(config_path);
      for (const std::string& g : grid) req.grid.push_back(parse_grid_axis(g));
      req.teacher = teacher;
      req.out_dir = out;
      req.jobs = jobs;
      const SweepOutcome o = cmd_sweep(req, std::cout);
      std::cout << "aggregate: " << o.aggregate.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "unlearnlab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
