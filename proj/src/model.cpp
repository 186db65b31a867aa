// SPDX-License-Identifier: Apache-2.0
#include "unlearn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace unlearn {

std::vector<int> ClassRoles::retain() const {
  std::vector<int> out;
  for (int c = 0; c < num_classes; ++c) {
    if (c != forget) out.push_back(c);
  }
  return out;
}

void ClassRoles::validate() const {
  if (num_classes < 2) throw std::invalid_argument("classes: need at least 2 classes");
  if (forget < 0 || forget >= num_classes) throw std::invalid_argument("classes: forget class out of range");
  if (cover < 0 || cover >= num_classes) throw std::invalid_argument("classes: cover class out of range");
  if (forget == cover) throw std::invalid_argument("classes: cover class must differ from forget class");
}

const char* role_name(ModelRole role) {
  switch (role) {
    case ModelRole::Teacher: return "teacher";
    case ModelRole::FakeScore: return "fake-score";
    case ModelRole::Generator: return "generator";
  }
  return "unknown";
}

ModelRole parse_role(std::string_view name) {
  if (name == "teacher") return ModelRole::Teacher;
  if (name == "fake-score") return ModelRole::FakeScore;
  if (name == "generator") return ModelRole::Generator;
  throw std::invalid_argument("unknown model role '" + std::string(name) + "'");
}

ParamVector make_layout(const NetworkSpec& spec) {
  if (spec.data_dim == 0 || spec.num_classes < 1 || spec.horizon < 1) {
    throw std::invalid_argument("network spec: data_dim, num_classes and horizon must be positive");
  }
  ParamVector p;
  p.add_segment("class_embed", spec.class_embed, static_cast<std::size_t>(spec.num_classes));
  p.add_segment("time.w", spec.time_embed, 1);
  p.add_segment("time.b", 1, spec.time_embed);
  std::size_t width = spec.input_width();
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    p.add_segment("layer" + std::to_string(i) + ".w", spec.hidden[i], width);
    p.add_segment("layer" + std::to_string(i) + ".b", 1, spec.hidden[i]);
    width = spec.hidden[i];
  }
  p.add_segment("out.w", spec.data_dim, width);
  p.add_segment("out.b", 1, spec.data_dim);
  return p;
}

ModelHandle make_model(const NetworkSpec& spec, ModelRole role, Rng& rng) {
  ModelHandle m{spec, make_layout(spec), role};
  for (const Segment& seg : m.params.segments()) {
    auto vals = m.params.values(seg);
    const bool is_bias = seg.name.ends_with(".b");
    if (is_bias) continue;
    const double scale = seg.name == "class_embed" ? 1.0 : 1.0 / std::sqrt(static_cast<double>(seg.cols));
    for (double& v : vals) v = scale * rng.normal();
  }
  return m;
}

ModelHandle init_from(const ModelHandle& source, ModelRole role) {
  ModelHandle m = source;
  m.role = role;
  return m;
}

void assign_from(ModelHandle& target, const ModelHandle& source) {
  if (!(target.spec == source.spec) || !target.params.aligned_with(source.params)) {
    throw std::invalid_argument("init_from: network specs differ");
  }
  target.params = source.params;
}

namespace {

void check_batch(const NetworkSpec& spec, std::size_t rows, std::span<const int> labels, std::span<const int> steps) {
  if (labels.size() != rows || steps.size() != rows) {
    throw std::invalid_argument("model: need one label and one step per row (" + std::to_string(rows) + " rows)");
  }
  for (int c : labels) {
    if (c < 0 || c >= spec.num_classes) {
      throw std::out_of_range("model: unknown class index " + std::to_string(c));
    }
  }
}

}  // namespace

Var denoise_on(Tape& tape, Tape::BindingId binding, const NetworkSpec& spec, Var z, std::span<const int> labels,
               std::span<const int> steps) {
  const Tensor& zv = tape.value(z);
  if (zv.cols() != spec.data_dim) {
    throw std::invalid_argument("model: input width " + std::to_string(zv.cols()) + " != data dim " +
                                std::to_string(spec.data_dim));
  }
  const std::size_t rows = zv.rows();
  check_batch(spec, rows, labels, steps);

  Tensor onehot = Tensor::matrix(rows, static_cast<std::size_t>(spec.num_classes));
  Tensor tfrac = Tensor::matrix(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    onehot.at(r, static_cast<std::size_t>(labels[r])) = 1.0;
    tfrac[r] = static_cast<double>(steps[r]) / spec.horizon;
  }
  Var c_emb = tape.affine(tape.input(std::move(onehot)), tape.param(binding, "class_embed"));
  Var t_emb = tape.affine(tape.input(std::move(tfrac)), tape.param(binding, "time.w"), tape.param(binding, "time.b"));
  Var h = tape.concat({z, c_emb, t_emb});
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i);
    h = tape.tanh(tape.affine(h, tape.param(binding, prefix + ".w"), tape.param(binding, prefix + ".b")));
  }
  return tape.affine(h, tape.param(binding, "out.w"), tape.param(binding, "out.b"));
}

Var generate_on(Tape& tape, Tape::BindingId binding, const NetworkSpec& spec, const Tensor& noise,
                std::span<const int> labels, const NoiseSchedule& sched) {
  Tensor scaled = noise;
  for (double& v : scaled.values()) v *= sched.sigma_init;
  std::vector<int> steps(noise.rows(), sched.t_init);
  return denoise_on(tape, binding, spec, tape.input(std::move(scaled)), labels, steps);
}

Tensor evaluate_network(const ModelHandle& model, const Tensor& z, std::span<const int> labels,
                        std::span<const int> steps) {
  Tape tape;
  auto b = tape.bind(model.params, ParamMode::Frozen);
  return tape.value(denoise_on(tape, b, model.spec, tape.input(z), labels, steps));
}

Tensor predict_mean(const ModelHandle& model, const Tensor& z, std::span<const int> labels,
                    std::span<const int> steps) {
  if (model.role == ModelRole::Generator) throw std::invalid_argument("predict_mean: model is a generator");
  return evaluate_network(model, z, labels, steps);
}

Tensor predict_mean(const ModelHandle& model, const Tensor& z, int label, int t) {
  std::vector<int> labels(z.rows(), label), steps(z.rows(), t);
  return predict_mean(model, z, labels, steps);
}

Tensor generate(const ModelHandle& model, const Tensor& noise, std::span<const int> labels,
                const NoiseSchedule& sched) {
  if (model.role != ModelRole::Generator) throw std::invalid_argument("generate: model is not a generator");
  Tape tape;
  auto b = tape.bind(model.params, ParamMode::Frozen);
  return tape.value(generate_on(tape, b, model.spec, noise, labels, sched));
}

Tensor generate(const ModelHandle& model, const Tensor& noise, int label, const NoiseSchedule& sched) {
  std::vector<int> labels(noise.rows(), label);
  return generate(model, noise, labels, sched);
}

}  // namespace unlearn
