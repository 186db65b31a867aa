// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "unlearn/param_vector.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/schedule.hpp"
#include "unlearn/tape.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

/// Forget/cover/retain partition of the label set [0, K).
struct ClassRoles {
  int num_classes = 0;
  int forget = 0;
  int cover = 1;

  std::vector<int> retain() const;
  bool is_retain(int c) const { return c >= 0 && c < num_classes && c != forget; }
  /// Throws std::invalid_argument unless forget != cover and both are in range.
  void validate() const;
};

struct NetworkSpec {
  std::size_t data_dim = 2;
  int num_classes = 4;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t class_embed = 8;
  std::size_t time_embed = 8;
  int horizon = 100;  // t is fed to the network as t / horizon

  std::size_t input_width() const { return data_dim + class_embed + time_embed; }
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class ModelRole { Teacher, FakeScore, Generator };

const char* role_name(ModelRole role);
ModelRole parse_role(std::string_view name);

struct ModelHandle {
  NetworkSpec spec;
  ParamVector params;
  ModelRole role = ModelRole::Teacher;
};

/// Empty parameter layout for `spec`: class_embed, time.w, time.b, then
/// layer<i>.w / layer<i>.b per hidden layer, then out.w / out.b.
ParamVector make_layout(const NetworkSpec& spec);

/// Fresh model with N(0, 1/fan_in) weights, N(0, 1) embeddings, zero biases.
ModelHandle make_model(const NetworkSpec& spec, ModelRole role, Rng& rng);

/// Deep copy of `source` under a new role (the initialization theta <- phi).
ModelHandle init_from(const ModelHandle& source, ModelRole role);
/// Overwrites `target` parameters with those of `source`; specs must match.
void assign_from(ModelHandle& target, const ModelHandle& source);

/// Records the clean-sample estimate x0_hat(z, c, t) for a batch on `tape`.
/// `labels` and `steps` hold one entry per row of z.
Var denoise_on(Tape& tape, Tape::BindingId binding, const NetworkSpec& spec, Var z, std::span<const int> labels,
               std::span<const int> steps);

/// Records the one-step generator x = net(sigma_init * n, c, t_init).
Var generate_on(Tape& tape, Tape::BindingId binding, const NetworkSpec& spec, const Tensor& noise,
                std::span<const int> labels, const NoiseSchedule& sched);

/// x0_hat for a teacher or fake-score model.
Tensor predict_mean(const ModelHandle& model, const Tensor& z, std::span<const int> labels,
                    std::span<const int> steps);
Tensor predict_mean(const ModelHandle& model, const Tensor& z, int label, int t);

/// One-step samples from a generator model.
Tensor generate(const ModelHandle& model, const Tensor& noise, std::span<const int> labels,
                const NoiseSchedule& sched);
Tensor generate(const ModelHandle& model, const Tensor& noise, int label, const NoiseSchedule& sched);

/// Network evaluation without role checks (a generator evaluated as a denoiser).
Tensor evaluate_network(const ModelHandle& model, const Tensor& z, std::span<const int> labels,
                        std::span<const int> steps);

}  // namespace unlearn
