// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unlearn/adam.hpp"
#include "unlearn/model.hpp"
#include "unlearn/objectives.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/saliency.hpp"
#include "unlearn/schedule.hpp"
#include "unlearn/synthlab.hpp"

namespace unlearn {

enum class Method { Pecker, Sfd, Retrain };
enum class UpdateOrder { RetainFirst, ForgetFirst };

const char* method_name(Method m);
Method parse_method(std::string_view name);

/// Complete description of one experiment. Text form lives in config.hpp.
struct RunConfig {
  struct Schedule {
    int T = 100;
    double beta_lo = 1e-4;
    double beta_hi = 0.2;
    int t_min = 2;
    int t_max = 100;
    int t_init = 100;
    double sigma_init = 1.0;
  } sched;

  struct Network {
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t class_embed = 8;
    std::size_t time_embed = 8;
    std::uint64_t init_seed = 11;
  } net;

  struct Data {
    int K = 4;
    MixtureLayout layout = MixtureLayout::Ring;
    double spread = 2.0;
    double cov_scale = 0.01;
    std::size_t per_class = 2000;
    std::uint64_t seed = 1;
  } data;

  struct Classes {
    int forget = 0;
    int cover = 1;
  } classes;

  LossCoefficients loss;
  WeightContext weights;

  struct Optim {
    double lr_psi = 1e-3;
    double lr_theta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  } opt;

  struct Mask {
    MaskPolicy policy = MaskPolicy::quantile(0.5);
    std::uint64_t refresh = 1;
    std::size_t batch = 256;
  } mask;

  struct Train {
    Method method = Method::Pecker;
    UpdateOrder order = UpdateOrder::RetainFirst;
    std::size_t batch_retain = 128;
    std::size_t batch_forget = 128;
    std::uint64_t steps = 1000;
    std::uint64_t images = 0;  // 0: no image budget
    std::uint64_t seed = 42;
    std::uint64_t eval_interval = 100;
    std::uint64_t checkpoint_interval = 0;  // 0: final checkpoint only
  } train;

  struct Pretrain {
    std::uint64_t steps = 3000;
    std::size_t batch = 256;
    double lr = 2e-3;
    std::uint64_t seed = 3;
  } pretrain;

  struct Eval {
    std::size_t n = 2000;
    std::size_t precision_n = 500;
    std::size_t k = 3;
    std::uint64_t seed = 7;
  } eval;

  NoiseSchedule schedule() const;
  NetworkSpec network() const;
  ClassRoles roles() const { return ClassRoles{data.K, classes.forget, classes.cover}; }
  EvalOptions eval_options() const { return EvalOptions{eval.n, eval.precision_n, eval.k, eval.seed}; }
  MixtureDataset dataset() const;
  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  std::uint64_t images_per_step() const { return train.batch_retain + train.batch_forget; }
};

struct PretrainResult {
  ModelHandle model;
  std::vector<double> losses;  // one per step
};

/// Noise-prediction training of a fresh score network on all samples of `dataset`.
PretrainResult pretrain_teacher(const MixtureDataset& dataset, const RunConfig& config);

/// Loop state of the unlearning iteration. `phi` is never modified.
struct TrainState {
  std::uint64_t iteration = 0;
  std::uint64_t images_seen = 0;
  ModelHandle theta;
  ModelHandle psi;
  ModelHandle phi;
  AdamState opt_psi;
  AdamState opt_theta_retain;
  AdamState opt_theta_forget;
  SaliencyMask mask;
  Rng rng;
};

/// theta <- phi, psi <- phi, fresh optimizer states, rng seeded from train.seed.
/// SFD starts with its all-ones mask in place.
TrainState init_state(const ModelHandle& teacher, const RunConfig& config);

struct StepReport {
  double loss_psi = 0.0;
  double loss_theta = 0.0;
  double loss_distill = 0.0;
  double loss_forget = 0.0;
  double mask_density = 0.0;
  double mask_threshold = 0.0;
  double mask_overlap = 1.0;  // Jaccard overlap with the previous mask
  bool mask_refreshed = false;
  std::size_t forget_modified = 0;  // parameters changed by the forget-term step
  std::size_t retain_modified = 0;
};

/// One iteration: sample, fake-score update, then the class-differentiated
/// generator update (full retain-term step, masked forget-term step).
/// Receives no dataset: the unlearning path is data-free.
StepReport unlearn_step(TrainState& state, const RunConfig& config);

/// Seed of the RNG stream that draws the saliency forget batch of `iteration`.
std::uint64_t saliency_seed(std::uint64_t train_seed, std::uint64_t iteration);

/// True once the step or image budget is exhausted.
bool budget_reached(const TrainState& state, const RunConfig& config);

struct RunHooks {
  /// Metrics for the current generator; unset means no evaluation.
  std::function<EvalSummary(const ModelHandle& generator)> evaluate;
  std::function<void(const MetricsRecord&)> on_metrics;
  std::function<void(const TrainState&)> on_checkpoint;
  std::function<void(const TrainState&, const StepReport&)> on_step;
};

/// Loops unlearn_step until the budget; emits metrics at step 0 (fresh states
/// only), every eval interval and at the end.
void run_unlearning(TrainState& state, const RunConfig& config, const RunHooks& hooks);

/// Retrain oracle: a fresh score network trained without the forget class.
/// This is the only method that reads the dataset.
PretrainResult run_retrain(const MixtureDataset& dataset, const RunConfig& config);

}  // namespace unlearn
