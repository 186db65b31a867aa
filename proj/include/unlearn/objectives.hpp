// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "unlearn/model.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/schedule.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

struct LossCoefficients {
  double lambda_psi = 1.0;
  double mu_psi = 1.0;
  double lambda_theta = 1.0;
  double mu_theta = 1.0;
  double xi = 1.0;

  void validate() const;
};

/// Weight applied to the retain branch of the fake-score loss.
enum class RetainWeight { Uniform, Omega };

struct WeightContext {
  RetainWeight retain_weight = RetainWeight::Uniform;
  double floor = 1e-8;  // lower bound on the L1 denominator of omega
};

/// Random inputs for one batch of generator samples: x = g(sigma_init n, label)
/// followed by corruption z = alpha_t x + sigma_t eps at a per-row step t.
struct GeneratorDraws {
  Tensor noise;
  std::vector<int> labels;
  std::vector<int> steps;
  Tensor eps;

  std::size_t size() const { return labels.size(); }
};

/// Draws for `n` rows with steps uniform in [sched.t_min, sched.t_max].
GeneratorDraws sample_generator_draws(std::size_t n, std::size_t dim, std::span<const int> labels,
                                      const NoiseSchedule& sched, Rng& rng);

/// Surrogate-loss weight (sigma_t^4 / alpha_t^2) * C / max(|x_teacher_hat - x|_1, floor).
/// C is the length of `x`. Always used as a constant in gradients.
double omega(int t, std::span<const double> x_teacher_hat, std::span<const double> x, const NoiseSchedule& sched,
             double floor = 1e-8);

struct FakeScoreResult {
  double loss = 0.0;
  double retain_term = 0.0;
  double forget_term = 0.0;
  std::vector<double> grad_psi;
  std::vector<double> grad_theta;  // generator outputs are stop-gradient targets: always zero
};

/// lambda_psi * gamma(s) |x_psi(z_r, c_r, s) - x_r|^2 + mu_psi * omega_t |x_psi(z_f, c_f, t) - x_f|^2,
/// each branch averaged over its rows. x_r and x_f are generated from `theta`
/// under stop-gradient; omega uses the teacher estimate x_phi(z_f, c_f, t).
FakeScoreResult fake_score_loss(const ModelHandle& psi, const ModelHandle& theta, const ModelHandle& phi,
                                const GeneratorDraws& retain, const GeneratorDraws& forget,
                                const LossCoefficients& coeffs, const WeightContext& weights,
                                const NoiseSchedule& sched);

struct SfdResult {
  double loss = 0.0;
  std::vector<double> grad_theta;
  std::vector<double> grad_psi;
  std::vector<double> grad_phi;
};

/// Score-distillation surrogate averaged over rows:
///   (1 - xi) w |Q|^2 + w Q^T (x_psi(z, c_ddagger, t) - x),  Q = x_phi(z, c_dagger, t) - x_psi(z, c_ddagger, t),
/// with w = omega_t * alpha_t^2 / sigma_t^4 held constant. x = g_theta(sigma_init n, draws.labels).
/// Gradients reach theta through x and through z via both score networks,
/// whose parameters are frozen: grad_psi and grad_phi are exactly zero.
SfdResult sfd_loss(const ModelHandle& theta, const ModelHandle& psi, const ModelHandle& phi,
                   std::span<const int> c_dagger, std::span<const int> c_ddagger, double xi,
                   const GeneratorDraws& draws, const WeightContext& weights, const NoiseSchedule& sched);

struct GeneratorLossResult {
  double loss = 0.0;
  double distill_loss = 0.0;  // unweighted sfd term for (c_r, c_r)
  double forget_loss = 0.0;   // unweighted sfd term for (c_0, c_f)
  std::vector<double> grad_total;
  std::vector<double> grad_distill;  // lambda_theta * d(distill)/d(theta)
  std::vector<double> grad_forget;   // mu_theta * d(forget)/d(theta)
  std::vector<double> grad_psi;
  std::vector<double> grad_phi;
};

/// lambda_theta * sfd(c_r, c_r) on retain draws + mu_theta * sfd(c_0, c_f) on
/// forget draws (forget draws must carry label c_f).
GeneratorLossResult generator_loss(const ModelHandle& theta, const ModelHandle& psi, const ModelHandle& phi,
                                   const ClassRoles& roles, const LossCoefficients& coeffs,
                                   const WeightContext& weights, const NoiseSchedule& sched,
                                   const GeneratorDraws& retain, const GeneratorDraws& forget);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean over rows of |eps - eps_hat(z_t, c, t)|^2 where eps_hat is the
/// model's clean estimate converted to a noise estimate.
LossResult mse_noise_loss(const ModelHandle& model, const Tensor& x, std::span<const int> labels,
                          std::span<const int> steps, const Tensor& eps, const NoiseSchedule& sched);
/// Same, with steps uniform in [1, T] and fresh standard-normal eps.
LossResult mse_noise_loss(const ModelHandle& model, const Tensor& x, std::span<const int> labels,
                          const NoiseSchedule& sched, Rng& rng);

}  // namespace unlearn
