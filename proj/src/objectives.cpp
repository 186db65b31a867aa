// SPDX-License-Identifier: Apache-2.0
#include "unlearn/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace unlearn {

namespace {

void require_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw std::runtime_error(std::string(what) + ": non-finite loss");
}

/// Constant tensor with row r filled with factors[r].
Tensor row_broadcast(std::span<const double> factors, std::size_t cols) {
  Tensor t = Tensor::matrix(factors.size(), cols);
  for (std::size_t r = 0; r < factors.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) = factors[r];
  }
  return t;
}

Var scale_rows(Tape& tape, Var a, std::span<const double> factors) {
  return tape.mul(a, tape.input(row_broadcast(factors, tape.value(a).cols())));
}

Var scale(Tape& tape, Var a, double factor) {
  const Tensor& v = tape.value(a);
  return tape.mul(a, tape.input(Tensor::matrix(v.rows(), v.cols(), factor)));
}

Var subtract(Tape& tape, Var a, Var b) { return tape.add(a, scale(tape, b, -1.0)); }

/// sum_r factors[r] * sum_c (a ⊙ b)[r, c]
Var weighted_inner(Tape& tape, Var a, Var b, std::span<const double> factors) {
  return tape.sum(scale_rows(tape, tape.mul(a, b), factors));
}

/// z = alpha_t x + sigma_t eps built on the tape so gradients reach x.
Var corrupt_on(Tape& tape, Var x, std::span<const int> steps, const Tensor& eps, const NoiseSchedule& sched) {
  const std::size_t rows = steps.size();
  std::vector<double> alphas(rows);
  Tensor noise = eps;
  for (std::size_t r = 0; r < rows; ++r) {
    alphas[r] = sched.alpha(steps[r]);
    const double s = sched.sigma(steps[r]);
    for (double& v : noise.row_span(r)) v *= s;
  }
  return tape.add(scale_rows(tape, x, alphas), tape.input(std::move(noise)));
}

Tensor corrupt_rows(const Tensor& x, std::span<const int> steps, const Tensor& eps, const NoiseSchedule& sched) {
  Tensor z = x;
  for (std::size_t r = 0; r < steps.size(); ++r) {
    const double a = sched.alpha(steps[r]), s = sched.sigma(steps[r]);
    auto zr = z.row_span(r);
    auto er = eps.row_span(r);
    for (std::size_t c = 0; c < zr.size(); ++c) zr[c] = a * zr[c] + s * er[c];
  }
  return z;
}

void check_draws(const GeneratorDraws& d, std::size_t dim, const char* what) {
  const std::size_t n = d.labels.size();
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
  if (d.steps.size() != n || d.noise.rows() != n || d.eps.rows() != n || d.noise.cols() != dim ||
      d.eps.cols() != dim) {
    throw std::invalid_argument(std::string(what) + ": inconsistent draw shapes");
  }
}

}  // namespace

void LossCoefficients::validate() const {
  for (double c : {lambda_psi, mu_psi, lambda_theta, mu_theta, xi}) {
    if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument("loss coefficients must be finite and >= 0");
  }
}

GeneratorDraws sample_generator_draws(std::size_t n, std::size_t dim, std::span<const int> labels,
                                      const NoiseSchedule& sched, Rng& rng) {
  if (labels.size() != n) throw std::invalid_argument("sample_generator_draws: need one label per row");
  GeneratorDraws d;
  d.labels.assign(labels.begin(), labels.end());
  d.noise = Tensor::matrix(n, dim);
  for (double& v : d.noise.values()) v = rng.normal();
  d.steps.resize(n);
  for (int& t : d.steps) t = static_cast<int>(rng.uniform_int(sched.t_min, sched.t_max));
  d.eps = Tensor::matrix(n, dim);
  for (double& v : d.eps.values()) v = rng.normal();
  return d;
}

double omega(int t, std::span<const double> x_teacher_hat, std::span<const double> x, const NoiseSchedule& sched,
             double floor) {
  if (x_teacher_hat.size() != x.size()) throw std::invalid_argument("omega: shape mismatch");
  double l1 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) l1 += std::abs(x_teacher_hat[i] - x[i]);
  const double a = sched.alpha(t), s = sched.sigma(t);
  const double s2 = s * s;
  return (s2 * s2 / (a * a)) * static_cast<double>(x.size()) / std::max(l1, floor);
}

FakeScoreResult fake_score_loss(const ModelHandle& psi, const ModelHandle& theta, const ModelHandle& phi,
                                const GeneratorDraws& retain, const GeneratorDraws& forget,
                                const LossCoefficients& coeffs, const WeightContext& weights,
                                const NoiseSchedule& sched) {
  const std::size_t dim = psi.spec.data_dim;
  check_draws(retain, dim, "fake_score_loss");
  check_draws(forget, dim, "fake_score_loss");

  Tape tape;
  const auto psi_b = tape.bind(psi.params, ParamMode::Trainable);
  const auto theta_b = tape.bind(theta.params, ParamMode::Trainable);

  auto branch = [&](const GeneratorDraws& d, double coeff, bool use_omega) -> Var {
    Var x = tape.stop_gradient(generate_on(tape, theta_b, theta.spec, d.noise, d.labels, sched));
    const Tensor z = corrupt_rows(tape.value(x), d.steps, d.eps, sched);
    Var pred = denoise_on(tape, psi_b, psi.spec, tape.input(z), d.labels, d.steps);

    const std::size_t n = d.size();
    std::vector<double> w(n, coeff / static_cast<double>(n));
    if (use_omega) {
      const Tensor x_phi = evaluate_network(phi, z, d.labels, d.steps);
      for (std::size_t r = 0; r < n; ++r) {
        w[r] *= omega(d.steps[r], x_phi.row_span(r), tape.value(x).row_span(r), sched, weights.floor);
      }
    }
    Var diff = subtract(tape, pred, x);
    return weighted_inner(tape, diff, diff, w);
  };

  Var retain_term = branch(retain, coeffs.lambda_psi, weights.retain_weight == RetainWeight::Omega);
  Var forget_term = branch(forget, coeffs.mu_psi, true);
  Var total = tape.add(retain_term, forget_term);

  FakeScoreResult out;
  out.loss = tape.value(total)[0];
  out.retain_term = tape.value(retain_term)[0];
  out.forget_term = tape.value(forget_term)[0];
  require_finite(out.loss, "fake_score_loss");
  Gradients g = tape.backward(total);
  out.grad_psi = g.take(psi_b);
  out.grad_theta = g.take(theta_b);
  return out;
}

SfdResult sfd_loss(const ModelHandle& theta, const ModelHandle& psi, const ModelHandle& phi,
                   std::span<const int> c_dagger, std::span<const int> c_ddagger, double xi,
                   const GeneratorDraws& draws, const WeightContext& weights, const NoiseSchedule& sched) {
  const std::size_t dim = theta.spec.data_dim;
  check_draws(draws, dim, "sfd_loss");
  const std::size_t n = draws.size();
  if (c_dagger.size() != n || c_ddagger.size() != n) throw std::invalid_argument("sfd_loss: need one label per row");
  if (!(xi >= 0.0)) throw std::invalid_argument("sfd_loss: xi must be >= 0");

  Tape tape;
  const auto theta_b = tape.bind(theta.params, ParamMode::Trainable);
  // Both score networks are frozen: no gradient reaches their parameters, but
  // adjoints still flow through them into z and on to theta.
  const auto psi_b = tape.bind(psi.params, ParamMode::Frozen);
  const auto phi_b = tape.bind(phi.params, ParamMode::Frozen);

  Var x = generate_on(tape, theta_b, theta.spec, draws.noise, draws.labels, sched);
  Var z = corrupt_on(tape, x, draws.steps, draws.eps, sched);
  Var x_phi = denoise_on(tape, phi_b, phi.spec, z, c_dagger, draws.steps);
  Var x_psi = denoise_on(tape, psi_b, psi.spec, z, c_ddagger, draws.steps);

  // omega_t * alpha_t^2 / sigma_t^4, per row, as plain numbers.
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int t = draws.steps[r];
    const double a = sched.alpha(t), s = sched.sigma(t);
    w[r] = omega(t, tape.value(x_phi).row_span(r), tape.value(x).row_span(r), sched, weights.floor) * (a * a) /
           (s * s * s * s) / static_cast<double>(n);
  }
  std::vector<double> w_sq(n);
  for (std::size_t r = 0; r < n; ++r) w_sq[r] = (1.0 - xi) * w[r];

  Var q = subtract(tape, x_phi, x_psi);
  Var residual = subtract(tape, x_psi, x);
  Var total = tape.add(weighted_inner(tape, q, q, w_sq), weighted_inner(tape, q, residual, w));

  SfdResult out;
  out.loss = tape.value(total)[0];
  require_finite(out.loss, "sfd_loss");
  Gradients g = tape.backward(total);
  out.grad_theta = g.take(theta_b);
  out.grad_psi = g.take(psi_b);
  out.grad_phi = g.take(phi_b);
  return out;
}

GeneratorLossResult generator_loss(const ModelHandle& theta, const ModelHandle& psi, const ModelHandle& phi,
                                   const ClassRoles& roles, const LossCoefficients& coeffs,
                                   const WeightContext& weights, const NoiseSchedule& sched,
                                   const GeneratorDraws& retain, const GeneratorDraws& forget) {
  for (int c : retain.labels) {
    if (!roles.is_retain(c)) throw std::invalid_argument("generator_loss: retain draws carry a non-retain label");
  }
  for (int c : forget.labels) {
    if (c != roles.forget) throw std::invalid_argument("generator_loss: forget draws must carry the forget label");
  }
  const std::vector<int> cover(forget.size(), roles.cover);

  SfdResult distill = sfd_loss(theta, psi, phi, retain.labels, retain.labels, coeffs.xi, retain, weights, sched);
  SfdResult forgetting = sfd_loss(theta, psi, phi, cover, forget.labels, coeffs.xi, forget, weights, sched);

  GeneratorLossResult out;
  out.distill_loss = distill.loss;
  out.forget_loss = forgetting.loss;
  out.loss = coeffs.lambda_theta * distill.loss + coeffs.mu_theta * forgetting.loss;
  const std::size_t p = theta.params.size();
  out.grad_distill.resize(p);
  out.grad_forget.resize(p);
  out.grad_total.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    out.grad_distill[i] = coeffs.lambda_theta * distill.grad_theta[i];
    out.grad_forget[i] = coeffs.mu_theta * forgetting.grad_theta[i];
    out.grad_total[i] = out.grad_distill[i] + out.grad_forget[i];
  }
  out.grad_psi.resize(psi.params.size());
  out.grad_phi.resize(phi.params.size());
  for (std::size_t i = 0; i < out.grad_psi.size(); ++i) out.grad_psi[i] = distill.grad_psi[i] + forgetting.grad_psi[i];
  for (std::size_t i = 0; i < out.grad_phi.size(); ++i) out.grad_phi[i] = distill.grad_phi[i] + forgetting.grad_phi[i];
  return out;
}

LossResult mse_noise_loss(const ModelHandle& model, const Tensor& x, std::span<const int> labels,
                          std::span<const int> steps, const Tensor& eps, const NoiseSchedule& sched) {
  const std::size_t n = x.rows();
  if (n == 0 || x.size() == 0) throw std::invalid_argument("mse_noise_loss: empty batch");
  if (!x.same_shape(eps) || labels.size() != n || steps.size() != n) {
    throw std::invalid_argument("mse_noise_loss: inconsistent batch shapes");
  }

  Tape tape;
  const auto b = tape.bind(model.params, ParamMode::Trainable);
  const Tensor z = corrupt_rows(x, steps, eps, sched);
  Var z_in = tape.input(z);
  Var x_hat = denoise_on(tape, b, model.spec, z_in, labels, steps);

  // eps_hat = (z - alpha x_hat) / sigma
  std::vector<double> inv_sigma(n), neg_ratio(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double a = sched.alpha(steps[r]), s = sched.sigma(steps[r]);
    if (s == 0.0) throw std::domain_error("mse_noise_loss: sigma_t = 0 at step " + std::to_string(steps[r]));
    inv_sigma[r] = 1.0 / s;
    neg_ratio[r] = -a / s;
  }
  Var eps_hat = tape.add(scale_rows(tape, z_in, inv_sigma), scale_rows(tape, x_hat, neg_ratio));
  Var diff = subtract(tape, tape.input(eps), eps_hat);
  const std::vector<double> mean_w(n, 1.0 / static_cast<double>(n));
  Var loss = weighted_inner(tape, diff, diff, mean_w);

  LossResult out;
  out.loss = tape.value(loss)[0];
  require_finite(out.loss, "mse_noise_loss");
  out.grad = tape.backward(loss).take(b);
  return out;
}

LossResult mse_noise_loss(const ModelHandle& model, const Tensor& x, std::span<const int> labels,
                          const NoiseSchedule& sched, Rng& rng) {
  const std::size_t n = x.rows();
  std::vector<int> steps(n);
  for (int& t : steps) t = static_cast<int>(rng.uniform_int(1, sched.T));
  Tensor eps = Tensor::matrix(n, x.cols());
  for (double& v : eps.values()) v = rng.normal();
  return mse_noise_loss(model, x, labels, steps, eps, sched);
}

}  // namespace unlearn
