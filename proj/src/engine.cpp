// SPDX-License-Identifier: Apache-2.0
#include "unlearn/engine.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace unlearn {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  std::uint64_t z = seed ^ (tag * 0xd1b54a32d192ed03ULL) ^ (index * 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kSaliencyStream = 0x5a11;

std::size_t count_changed(std::span<const double> before, std::span<const double> after) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < before.size(); ++i) n += before[i] != after[i] ? 1 : 0;
  return n;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

std::uint64_t saliency_seed(std::uint64_t train_seed, std::uint64_t iteration) {
  return mix_seed(train_seed, iteration, kSaliencyStream);
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Pecker: return "pecker";
    case Method::Sfd: return "sfd";
    case Method::Retrain: return "retrain";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "pecker") return Method::Pecker;
  if (name == "sfd") return Method::Sfd;
  if (name == "retrain") return Method::Retrain;
  throw std::invalid_argument("unknown method '" + std::string(name) + "' (expected pecker, sfd or retrain)");
}

NoiseSchedule RunConfig::schedule() const {
  NoiseSchedule s = build_schedule(ScheduleKind::Linear, sched.T, sched.beta_lo, sched.beta_hi);
  with_window(s, sched.t_min, sched.t_max, sched.t_init, sched.sigma_init);
  return s;
}

NetworkSpec RunConfig::network() const {
  NetworkSpec spec;
  spec.data_dim = 2;
  spec.num_classes = data.K;
  spec.hidden = net.hidden;
  spec.class_embed = net.class_embed;
  spec.time_embed = net.time_embed;
  spec.horizon = sched.T;
  return spec;
}

MixtureDataset RunConfig::dataset() const {
  return make_mixture(data.K, data.layout, data.spread, data.per_class, data.seed, data.cov_scale);
}

void RunConfig::validate() const {
  (void)schedule();
  roles().validate();
  loss.validate();
  require(weights.floor > 0.0, "loss.omega_floor must be > 0");
  for (std::size_t h : net.hidden) require(h > 0, "net.hidden widths must be positive");
  require(net.class_embed > 0 && net.time_embed > 0, "net embedding widths must be positive");
  require(data.spread > 0.0 && data.cov_scale > 0.0, "data.spread and data.cov_scale must be > 0");
  require(data.per_class >= 2, "data.per_class must be >= 2");
  require(opt.lr_psi > 0.0 && opt.lr_theta > 0.0, "learning rates must be > 0");
  require(opt.beta1 >= 0.0 && opt.beta1 < 1.0 && opt.beta2 >= 0.0 && opt.beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(opt.eps > 0.0, "opt.eps must be > 0");
  if (mask.policy.kind == MaskPolicyKind::Quantile) {
    require(mask.policy.q > 0.0 && mask.policy.q <= 1.0, "mask.q must lie in (0, 1]");
  } else {
    require(mask.policy.gamma >= 0.0, "mask.gamma must be >= 0");
  }
  require(mask.refresh >= 1, "mask.refresh must be >= 1");
  require(mask.batch >= 1, "mask.batch must be >= 1");
  require(train.batch_retain >= 1 && train.batch_forget >= 1, "train batch sizes must be >= 1");
  require(train.eval_interval >= 1, "train.eval_interval must be >= 1");
  require(pretrain.batch >= 1 && pretrain.lr > 0.0, "pretrain.batch must be >= 1 and pretrain.lr > 0");
  require(eval.n >= 1, "eval.n must be >= 1");
  require(eval.k >= 1 && eval.k < eval.precision_n, "eval.k must satisfy 1 <= k < eval.precision_n");
}

PretrainResult pretrain_teacher(const MixtureDataset& dataset, const RunConfig& config) {
  const NoiseSchedule sched = config.schedule();
  Rng init_rng(config.net.init_seed);
  PretrainResult out{make_model(config.network(), ModelRole::Teacher, init_rng), {}};
  if (config.pretrain.steps == 0) return out;

  const std::size_t n = dataset.labels.size();
  if (n == 0) throw std::invalid_argument("pretrain_teacher: empty dataset");
  AdamState opt(AdamConfig{config.pretrain.lr, config.opt.beta1, config.opt.beta2, config.opt.eps},
                out.model.params.size());
  Rng rng(config.pretrain.seed);
  const std::size_t batch = config.pretrain.batch, dim = dataset.dim;
  Tensor x = Tensor::matrix(batch, dim);
  std::vector<int> labels(batch);
  out.losses.reserve(config.pretrain.steps);
  for (std::uint64_t step = 0; step < config.pretrain.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
      auto src = dataset.samples.row_span(idx);
      std::copy(src.begin(), src.end(), x.row_span(b).begin());
      labels[b] = dataset.labels[idx];
    }
    LossResult r = mse_noise_loss(out.model, x, labels, sched, rng);
    adam_step(out.model.params, r.grad, opt);
    out.losses.push_back(r.loss);
  }
  return out;
}

TrainState init_state(const ModelHandle& teacher, const RunConfig& config) {
  if (!(teacher.spec == config.network())) throw std::invalid_argument("init_state: teacher does not match net config");
  TrainState s;
  s.phi = init_from(teacher, ModelRole::Teacher);
  s.theta = init_from(teacher, ModelRole::Generator);
  s.psi = init_from(teacher, ModelRole::FakeScore);
  const std::size_t p = teacher.params.size();
  const AdamConfig psi_cfg{config.opt.lr_psi, config.opt.beta1, config.opt.beta2, config.opt.eps};
  const AdamConfig theta_cfg{config.opt.lr_theta, config.opt.beta1, config.opt.beta2, config.opt.eps};
  s.opt_psi = AdamState(psi_cfg, p);
  s.opt_theta_retain = AdamState(theta_cfg, p);
  s.opt_theta_forget = AdamState(theta_cfg, p);
  s.rng = Rng(config.train.seed);
  if (config.train.method == Method::Sfd) s.mask = SaliencyMask::all_ones(p);
  return s;
}

StepReport unlearn_step(TrainState& state, const RunConfig& config) {
  const NoiseSchedule sched = config.schedule();
  const ClassRoles roles = config.roles();
  const std::vector<int> retain_classes = roles.retain();
  const std::size_t dim = state.theta.spec.data_dim;
  StepReport report;

  // Sample pseudo-data draws: c_r ~ D_r, n, eps, and s, t ~ U[t_min, t_max].
  std::vector<int> c_r(config.train.batch_retain);
  for (int& c : c_r) {
    c = retain_classes[static_cast<std::size_t>(
        state.rng.uniform_int(0, static_cast<std::int64_t>(retain_classes.size()) - 1))];
  }
  const std::vector<int> c_f(config.train.batch_forget, roles.forget);
  const GeneratorDraws retain = sample_generator_draws(c_r.size(), dim, c_r, sched, state.rng);
  const GeneratorDraws forget = sample_generator_draws(c_f.size(), dim, c_f, sched, state.rng);

  // Score update.
  FakeScoreResult fs = fake_score_loss(state.psi, state.theta, state.phi, retain, forget, config.loss,
                                       config.weights, sched);
  adam_step(state.psi.params, fs.grad_psi, state.opt_psi);
  report.loss_psi = fs.loss;

  // Generator update, against the freshly updated psi.
  GeneratorLossResult gl = generator_loss(state.theta, state.psi, state.phi, roles, config.loss, config.weights,
                                          sched, retain, forget);
  report.loss_theta = gl.loss;
  report.loss_distill = gl.distill_loss;
  report.loss_forget = gl.forget_loss;

  // Saliency mask from the iteration-start generator.
  const std::size_t p = state.theta.params.size();
  if (config.train.method == Method::Sfd) {
    if (state.mask.bits.size() != p) {
      state.mask = SaliencyMask::all_ones(p);
      report.mask_refreshed = true;
    }
  } else if (state.mask.bits.size() != p || state.iteration % config.mask.refresh == 0) {
    Rng srng(saliency_seed(config.train.seed, state.iteration));
    const ForgetBatch fb = make_forget_batch(state.theta, roles.forget, config.mask.batch, sched, srng);
    const SaliencyScore score = compute_saliency(state.theta, fb, sched, state.iteration);
    SaliencyMask fresh = build_mask(score, config.mask.policy);
    report.mask_overlap = state.mask.bits.size() == p ? mask_overlap(state.mask, fresh) : 1.0;
    state.mask = std::move(fresh);
    report.mask_refreshed = true;
  }
  report.mask_density = state.mask.density;
  report.mask_threshold = state.mask.threshold;

  auto retain_step = [&] {
    const std::vector<double> before(state.theta.params.values().begin(), state.theta.params.values().end());
    adam_step(state.theta.params, gl.grad_distill, state.opt_theta_retain);
    report.retain_modified = count_changed(before, state.theta.params.values());
  };
  auto forget_step = [&] {
    const std::vector<double> before(state.theta.params.values().begin(), state.theta.params.values().end());
    const std::vector<double> masked = masked_apply(gl.grad_forget, state.mask);
    adam_step_masked(state.theta.params, masked, state.mask.bits, state.opt_theta_forget);
    report.forget_modified = count_changed(before, state.theta.params.values());
  };
  if (config.train.order == UpdateOrder::RetainFirst) {
    retain_step();
    forget_step();
  } else {
    forget_step();
    retain_step();
  }

  ++state.iteration;
  state.images_seen += config.images_per_step();
  return report;
}

bool budget_reached(const TrainState& state, const RunConfig& config) {
  if (state.iteration >= config.train.steps) return true;
  return config.train.images > 0 && state.images_seen >= config.train.images;
}

void run_unlearning(TrainState& state, const RunConfig& config, const RunHooks& hooks) {
  using Clock = std::chrono::steady_clock;
  StepReport last;
  last.mask_density = state.mask.bits.empty() ? 0.0 : state.mask.density;
  last.mask_threshold = state.mask.threshold;
  double interval_ms = 0.0;
  std::uint64_t interval_steps = 0;

  auto emit = [&] {
    MetricsRecord rec;
    rec.step = state.iteration;
    rec.images_seen = state.images_seen;
    rec.loss_psi = last.loss_psi;
    rec.loss_theta = last.loss_theta;
    rec.loss_distill = last.loss_distill;
    rec.loss_forget = last.loss_forget;
    rec.mask_density = last.mask_density;
    rec.mask_threshold = last.mask_threshold;
    rec.mask_overlap = last.mask_overlap;
    if (hooks.evaluate) {
      const EvalSummary e = hooks.evaluate(state.theta);
      rec.ua = e.ua.ua;
      rec.cover_alignment = e.ua.cover_alignment;
      rec.frechet = e.frechet;
      rec.is = e.is;
      rec.precision = e.precision;
    }
    rec.wall_ms = interval_steps ? interval_ms / static_cast<double>(interval_steps) : 0.0;
    interval_ms = 0.0;
    interval_steps = 0;
    if (hooks.on_metrics) hooks.on_metrics(rec);
  };

  if (state.iteration == 0) emit();
  while (!budget_reached(state, config)) {
    const auto t0 = Clock::now();
    last = unlearn_step(state, config);
    interval_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    ++interval_steps;
    if (hooks.on_step) hooks.on_step(state, last);
    const bool done = budget_reached(state, config);
    if (state.iteration % config.train.eval_interval == 0 || done) emit();
    if (hooks.on_checkpoint && config.train.checkpoint_interval > 0 &&
        state.iteration % config.train.checkpoint_interval == 0 && !done) {
      hooks.on_checkpoint(state);
    }
  }
}

PretrainResult run_retrain(const MixtureDataset& dataset, const RunConfig& config) {
  return pretrain_teacher(dataset.without_class(config.classes.forget), config);
}

}  // namespace unlearn
