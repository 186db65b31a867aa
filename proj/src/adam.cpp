// SPDX-License-Identifier: Apache-2.0
#include "unlearn/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unlearn {

namespace {

void check_inputs(const ParamVector& params, std::span<const double> grad, const AdamState& state) {
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size() ||
      state.counts.size() != params.size()) {
    throw std::invalid_argument("adam: gradient/moment length does not match parameter count " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw std::domain_error("adam: non-finite gradient at element " + std::to_string(i));
    }
  }
}

}  // namespace

void adam_step_masked(ParamVector& params, std::span<const double> grad, std::span<const std::uint8_t> mask,
                      AdamState& state) {
  check_inputs(params, grad, state);
  if (!mask.empty() && mask.size() != params.size()) {
    throw std::invalid_argument("adam: mask length does not match parameter count");
  }
  const AdamConfig& c = state.config;
  auto values = params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double g = grad[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const auto k = static_cast<double>(++state.counts[i]);
    const double m_hat = state.m[i] / (1.0 - std::pow(c.beta1, k));
    const double v_hat = state.v[i] / (1.0 - std::pow(c.beta2, k));
    values[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
  ++state.step;
}

void adam_step(ParamVector& params, std::span<const double> grad, AdamState& state) {
  adam_step_masked(params, grad, {}, state);
}

}  // namespace unlearn
