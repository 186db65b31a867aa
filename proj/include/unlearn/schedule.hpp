// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "unlearn/tensor.hpp"

namespace unlearn {

enum class ScheduleKind { Linear };

/// Discrete variance-preserving schedule over steps t = 1..T.
///
/// `a(t) = sqrt(1 - beta_t)` is the per-step scale, `alpha(t)` the cumulative
/// product of `a` up to t, and `sigma(t) = sqrt(1 - alpha(t)^2)`. Every
/// conversion in this library uses the cumulative `alpha`.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;   // index t-1
  std::vector<double> scales;  // a_t
  std::vector<double> alphas;  // cumulative alpha_t
  std::vector<double> sigmas;
  int t_min = 1;
  int t_max = 1;
  int t_init = 1;
  double sigma_init = 1.0;

  double beta(int t) const { return betas.at(check(t)); }
  double a(int t) const { return scales.at(check(t)); }
  double alpha(int t) const { return alphas.at(check(t)); }
  double sigma(int t) const { return sigmas.at(check(t)); }

 private:
  std::size_t check(int t) const;
};

/// Linear beta ramp in [beta_lo, beta_hi] over T steps. The sampling window
/// defaults to t_min = min(2, T), t_max = t_init = T; use `with_window` to
/// change it.
NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_lo, double beta_hi);

/// Sets the training window; requires 1 <= t_min < t_init <= t_max <= T
/// (t_min == t_init is accepted only when T == 1).
void with_window(NoiseSchedule& sched, int t_min, int t_max, int t_init, double sigma_init);

struct CorruptedSample {
  Tensor z;
  int t = 0;
  Tensor epsilon;
  Tensor x0;
};

CorruptedSample corrupt(const Tensor& x0, int t, const Tensor& epsilon, const NoiseSchedule& sched);

/// (alpha_t x_hat - z_t) / sigma_t^2
Tensor score_from_mean(const Tensor& x_hat, const Tensor& z, int t, const NoiseSchedule& sched);
/// (z_t + sigma_t^2 s) / alpha_t
Tensor mean_from_score(const Tensor& score, const Tensor& z, int t, const NoiseSchedule& sched);
/// (z_t - alpha_t x_hat) / sigma_t
Tensor eps_from_mean(const Tensor& x_hat, const Tensor& z, int t, const NoiseSchedule& sched);

}  // namespace unlearn
