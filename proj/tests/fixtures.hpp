// SPDX-License-Identifier: Apache-2.0
// Shared builders for unit tests.
#pragma once

#include <vector>

#include "unlearn/engine.hpp"
#include "unlearn/model.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/synthlab.hpp"

namespace fixtures {

using namespace unlearn;

inline NetworkSpec small_spec(int classes = 3, int horizon = 20) {
  NetworkSpec s;
  s.num_classes = classes;
  s.hidden = {5, 4};
  s.class_embed = 3;
  s.time_embed = 2;
  s.horizon = horizon;
  return s;
}

/// Model with every parameter (biases included) drawn N(0, scale^2).
inline ModelHandle random_model(const NetworkSpec& spec, ModelRole role, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  ModelHandle m = make_model(spec, role, rng);
  for (double& v : m.params.values()) v = scale * rng.normal();
  return m;
}

inline Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, int classes) {
  std::vector<int> out(n);
  for (int& c : out) c = static_cast<int>(rng.uniform_int(0, classes - 1));
  return out;
}

/// Small schedule (T = 20) with the default window.
inline NoiseSchedule small_schedule() {
  NoiseSchedule s = build_schedule(ScheduleKind::Linear, 20, 1e-3, 0.3);
  with_window(s, 2, 20, 20, 1.0);
  return s;
}

/// Single Gaussian N(mean, 0.01 I) as a one-class dataset.
inline MixtureDataset one_class(const std::vector<double>& mean, std::size_t n, std::uint64_t seed) {
  MixtureDataset d;
  d.num_classes = 1;
  d.dim = mean.size();
  d.means = {mean};
  d.covariances = {{0.01, 0.0, 0.0, 0.01}};
  d.samples = Tensor::matrix(n, d.dim);
  d.labels.assign(n, 0);
  d.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d.dim; ++j) d.samples.at(i, j) = mean[j] + 0.1 * rng.normal();
  }
  return d;
}

inline RunConfig one_class_config(std::uint64_t steps) {
  RunConfig cfg;
  cfg.data.K = 1;
  cfg.pretrain.steps = steps;
  return cfg;
}

/// Teacher pretrained for 2000 steps on N((1, -1), 0.01 I), computed once.
inline const PretrainResult& one_class_teacher() {
  static const PretrainResult r = pretrain_teacher(one_class({1.0, -1.0}, 2000, 21), one_class_config(2000));
  return r;
}

}  // namespace fixtures
