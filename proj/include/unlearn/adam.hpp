// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unlearn/param_vector.hpp"

namespace unlearn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam moments for one ParamVector.
///
/// `counts` holds a per-element update count used for bias correction, so a
/// masked step can leave unselected elements (value, moments and count)
/// untouched. For unmasked steps every count equals `step`.
struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::vector<std::uint64_t> counts;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::size_t n) : config(cfg), m(n, 0.0), v(n, 0.0), counts(n, 0) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update of every element. Throws std::domain_error on a
/// non-finite gradient element (nothing is modified in that case).
void adam_step(ParamVector& params, std::span<const double> grad, AdamState& state);

/// Adam update restricted to elements with mask[i] != 0. Elements with
/// mask[i] == 0 keep their value, moments and count bit-exactly.
void adam_step_masked(ParamVector& params, std::span<const double> grad, std::span<const std::uint8_t> mask,
                      AdamState& state);

}  // namespace unlearn
