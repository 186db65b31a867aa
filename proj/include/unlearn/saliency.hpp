// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unlearn/model.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/schedule.hpp"

namespace unlearn {

struct SaliencyScore {
  std::vector<double> values;  // aligned with the generator ParamVector
  std::uint64_t source_step = 0;
  std::size_t batch_size = 0;
};

/// Pseudo-samples for the forget class with the noise draws that score them.
struct ForgetBatch {
  Tensor x;
  std::vector<int> labels;
  std::vector<int> steps;
  Tensor eps;
};

/// Generates `n` forget-class samples from the generator and draws the
/// (t, eps) pairs used by the noise-prediction loss, t uniform in [1, T].
ForgetBatch make_forget_batch(const ModelHandle& generator, int forget_class, std::size_t n,
                              const NoiseSchedule& sched, Rng& rng);

/// Gradient of the noise-prediction MSE over the generator's parameters on a
/// forget batch, with the generator used as a denoiser. Parameters are read only.
SaliencyScore compute_saliency(const ModelHandle& generator, const ForgetBatch& batch, const NoiseSchedule& sched,
                               std::uint64_t source_step = 0);

enum class MaskPolicyKind { Absolute, Quantile };

struct MaskPolicy {
  MaskPolicyKind kind = MaskPolicyKind::Quantile;
  double gamma = 0.0;  // absolute threshold on |g_s|
  double q = 0.5;      // target density for the quantile policy

  static MaskPolicy absolute(double gamma) { return {MaskPolicyKind::Absolute, gamma, 0.0}; }
  static MaskPolicy quantile(double q) { return {MaskPolicyKind::Quantile, 0.0, q}; }
};

struct SaliencyMask {
  std::vector<std::uint8_t> bits;
  MaskPolicy policy;
  double threshold = 0.0;  // effective gamma: bits[i] = |g_s[i]| >= threshold
  double density = 0.0;
  bool degenerate = false;  // quantile policy on an all-zero score

  std::size_t count() const;
  static SaliencyMask all_ones(std::size_t n);
};

/// Binary mask 1(|g_s| >= gamma). Under the quantile policy gamma is the
/// ceil(q * n)-th largest |g_s| so that the density is q when scores are
/// distinct; an all-zero score yields an all-ones mask flagged degenerate.
SaliencyMask build_mask(const SaliencyScore& score, const MaskPolicy& policy);

/// grad ⊙ mask, with masked-out positions exactly 0.0.
std::vector<double> masked_apply(std::span<const double> grad, const SaliencyMask& mask);

/// |A ∩ B| / |A ∪ B| over set bits; 1 when both are empty.
double mask_overlap(const SaliencyMask& a, const SaliencyMask& b);

}  // namespace unlearn
