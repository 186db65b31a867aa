// SPDX-License-Identifier: Apache-2.0
#include "unlearn/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace unlearn {

std::size_t NoiseSchedule::check(int t) const {
  if (t < 1 || t > T) {
    throw std::out_of_range("schedule: step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_lo, double beta_hi) {
  if (kind != ScheduleKind::Linear) throw std::invalid_argument("schedule: unsupported kind");
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_lo >= 0.0 && beta_lo <= beta_hi && beta_hi < 1.0)) {
    throw std::invalid_argument("schedule: rates must satisfy 0 <= beta_lo <= beta_hi < 1");
  }
  if (T > 1 && beta_hi == 0.0) {
    throw std::invalid_argument("schedule: all-zero rates give a constant alpha over T > 1 steps");
  }

  NoiseSchedule s;
  s.T = T;
  double cum = 1.0;  // running product of (1 - beta), i.e. alpha^2
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    const double beta = beta_lo + (beta_hi - beta_lo) * frac;
    cum *= 1.0 - beta;
    s.betas.push_back(beta);
    s.scales.push_back(std::sqrt(1.0 - beta));
    s.alphas.push_back(std::sqrt(cum));
    s.sigmas.push_back(std::sqrt(1.0 - cum));
  }
  s.t_min = std::min(2, T);
  s.t_max = T;
  s.t_init = T;
  s.sigma_init = 1.0;
  return s;
}

void with_window(NoiseSchedule& sched, int t_min, int t_max, int t_init, double sigma_init) {
  const bool ordered = 1 <= t_min && t_init <= t_max && t_max <= sched.T &&
                       (t_min < t_init || (sched.T == 1 && t_min == t_init));
  if (!ordered) {
    throw std::invalid_argument("schedule: window must satisfy 1 <= t_min < t_init <= t_max <= T (got t_min=" +
                                std::to_string(t_min) + ", t_init=" + std::to_string(t_init) +
                                ", t_max=" + std::to_string(t_max) + ", T=" + std::to_string(sched.T) + ")");
  }
  if (!(sigma_init > 0.0) || !std::isfinite(sigma_init)) throw std::invalid_argument("schedule: sigma_init must be > 0");
  sched.t_min = t_min;
  sched.t_max = t_max;
  sched.t_init = t_init;
  sched.sigma_init = sigma_init;
}

CorruptedSample corrupt(const Tensor& x0, int t, const Tensor& epsilon, const NoiseSchedule& sched) {
  if (!x0.same_shape(epsilon)) {
    throw std::invalid_argument("corrupt: x0 " + x0.shape_string() + " vs epsilon " + epsilon.shape_string());
  }
  const double a = sched.alpha(t), s = sched.sigma(t);
  Tensor z = x0;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x0[i] + s * epsilon[i];
  return CorruptedSample{std::move(z), t, epsilon, x0};
}

Tensor score_from_mean(const Tensor& x_hat, const Tensor& z, int t, const NoiseSchedule& sched) {
  if (!x_hat.same_shape(z)) throw std::invalid_argument("score_from_mean: shape mismatch");
  const double a = sched.alpha(t), s = sched.sigma(t);
  if (s == 0.0) throw std::domain_error("score_from_mean: score undefined at sigma_t = 0");
  const double s2 = s * s;
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a * x_hat[i] - z[i]) / s2;
  return out;
}

Tensor mean_from_score(const Tensor& score, const Tensor& z, int t, const NoiseSchedule& sched) {
  if (!score.same_shape(z)) throw std::invalid_argument("mean_from_score: shape mismatch");
  const double a = sched.alpha(t), s = sched.sigma(t);
  if (a == 0.0) throw std::domain_error("mean_from_score: alpha_t = 0");
  const double s2 = s * s;
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z[i] + s2 * score[i]) / a;
  return out;
}

Tensor eps_from_mean(const Tensor& x_hat, const Tensor& z, int t, const NoiseSchedule& sched) {
  if (!x_hat.same_shape(z)) throw std::invalid_argument("eps_from_mean: shape mismatch");
  const double a = sched.alpha(t), s = sched.sigma(t);
  if (s == 0.0) throw std::domain_error("eps_from_mean: sigma_t = 0");
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z[i] - a * x_hat[i]) / s;
  return out;
}

}  // namespace unlearn
