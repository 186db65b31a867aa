// SPDX-License-Identifier: Apache-2.0
#include "unlearn/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <stdexcept>

#include "unlearn/objectives.hpp"

namespace unlearn {

ForgetBatch make_forget_batch(const ModelHandle& generator, int forget_class, std::size_t n,
                              const NoiseSchedule& sched, Rng& rng) {
  if (n == 0) throw std::invalid_argument("make_forget_batch: empty batch");
  const std::size_t dim = generator.spec.data_dim;
  Tensor noise = Tensor::matrix(n, dim);
  for (double& v : noise.values()) v = rng.normal();
  ForgetBatch b;
  b.labels.assign(n, forget_class);
  b.x = generate(generator, noise, b.labels, sched);
  b.steps.resize(n);
  for (int& t : b.steps) t = static_cast<int>(rng.uniform_int(1, sched.T));
  b.eps = Tensor::matrix(n, dim);
  for (double& v : b.eps.values()) v = rng.normal();
  return b;
}

SaliencyScore compute_saliency(const ModelHandle& generator, const ForgetBatch& batch, const NoiseSchedule& sched,
                               std::uint64_t source_step) {
  if (batch.labels.empty()) throw std::invalid_argument("compute_saliency: empty forget batch");
  LossResult r = mse_noise_loss(generator, batch.x, batch.labels, batch.steps, batch.eps, sched);
  return SaliencyScore{std::move(r.grad), source_step, batch.labels.size()};
}

std::size_t SaliencyMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

SaliencyMask SaliencyMask::all_ones(std::size_t n) {
  SaliencyMask m;
  m.bits.assign(n, 1);
  m.policy = MaskPolicy::quantile(1.0);
  m.threshold = 0.0;
  m.density = 1.0;
  return m;
}

SaliencyMask build_mask(const SaliencyScore& score, const MaskPolicy& policy) {
  const std::size_t n = score.values.size();
  SaliencyMask m;
  m.policy = policy;
  if (n == 0) return m;

  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(score.values[i]);

  double gamma = 0.0;
  if (policy.kind == MaskPolicyKind::Absolute) {
    if (!(policy.gamma >= 0.0)) throw std::invalid_argument("build_mask: gamma must be >= 0");
    gamma = policy.gamma;
  } else {
    if (!(policy.q > 0.0 && policy.q <= 1.0)) throw std::invalid_argument("build_mask: q must lie in (0, 1]");
    const bool all_zero = std::all_of(mags.begin(), mags.end(), [](double v) { return v == 0.0; });
    if (all_zero) {
      std::cerr << "warning: saliency score is identically zero; using an all-ones mask\n";
      m = SaliencyMask::all_ones(n);
      m.policy = policy;
      m.degenerate = true;
      return m;
    }
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(policy.q * static_cast<double>(n))));
    std::vector<double> sorted = mags;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1), sorted.end(),
                     std::greater<>());
    gamma = sorted[keep - 1];
  }

  m.bits.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = mags[i] >= gamma ? 1 : 0;
  m.threshold = gamma;
  m.density = static_cast<double>(m.count()) / static_cast<double>(n);
  return m;
}

std::vector<double> masked_apply(std::span<const double> grad, const SaliencyMask& mask) {
  if (grad.size() != mask.bits.size()) {
    throw std::invalid_argument("masked_apply: gradient length " + std::to_string(grad.size()) +
                                " != mask length " + std::to_string(mask.bits.size()));
  }
  std::vector<double> out(grad.size(), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (mask.bits[i]) out[i] = grad[i];
  }
  return out;
}

double mask_overlap(const SaliencyMask& a, const SaliencyMask& b) {
  if (a.bits.size() != b.bits.size()) throw std::invalid_argument("mask_overlap: length mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace unlearn
