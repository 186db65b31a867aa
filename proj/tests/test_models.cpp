// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles/oracle.hpp"
#include "unlearn/model.hpp"
#include "unlearn/tape.hpp"

using namespace unlearn;
using fixtures::random_model;
using fixtures::small_spec;

TEST_SUITE("models") {
  TEST_CASE("layout: segment names and sizes") {
    const NetworkSpec spec = small_spec();
    const ParamVector p = make_layout(spec);
    CHECK(p.segment("class_embed").length() == 3 * 3);
    CHECK(p.segment("time.w").length() == 2);
    CHECK(p.segment("layer0.w").length() == 5 * spec.input_width());
    CHECK(p.segment("layer1.w").length() == 4 * 5);
    CHECK(p.segment("out.w").length() == 2 * 4);
    CHECK(p.segment("out.b").length() == 2);
    CHECK(p.segments().back().offset + p.segments().back().length() == p.size());
    NetworkSpec bad = spec;
    bad.num_classes = 0;
    CHECK_THROWS_AS(make_layout(bad), std::invalid_argument);
  }

  TEST_CASE("forward matches the plain-loop oracle") {
    const NetworkSpec spec = small_spec();
    const ModelHandle m = random_model(spec, ModelRole::Teacher, 12);
    Rng rng(1);
    const Tensor z = fixtures::random_tensor(rng, 16, 2);
    const auto labels = fixtures::random_labels(rng, 16, spec.num_classes);
    std::vector<int> steps(16);
    for (int& t : steps) t = static_cast<int>(rng.uniform_int(1, spec.horizon));
    const Tensor out = predict_mean(m, z, labels, steps);
    for (std::size_t r = 0; r < 16; ++r) {
      const auto ref = oracle::mlp(m, z.row_span(r), labels[r], steps[r]);
      for (std::size_t c = 0; c < 2; ++c) CHECK(out.at(r, c) == doctest::Approx(ref[c]).epsilon(1e-13));
    }
  }

  TEST_CASE("determinism: same seed, same input, bit-identical output") {
    Rng a(5), b(5);
    const ModelHandle ma = make_model(small_spec(), ModelRole::Teacher, a);
    const ModelHandle mb = make_model(small_spec(), ModelRole::Teacher, b);
    CHECK(ma.params == mb.params);
    const Tensor z = Tensor::matrix(2, 2, {0.1, -0.2, 0.3, 0.4});
    CHECK(predict_mean(ma, z, 1, 7) == predict_mean(mb, z, 1, 7));
  }

  TEST_CASE("initialization: zero biases, scaled weights") {
    Rng rng(3);
    const ModelHandle m = make_model(small_spec(), ModelRole::Teacher, rng);
    for (const Segment& seg : m.params.segments()) {
      if (seg.name.ends_with(".b")) {
        for (double v : m.params.values(seg)) CHECK(v == 0.0);
      }
    }
  }

  TEST_CASE("zero final layer: output equals the final-layer bias") {
    ModelHandle m = random_model(small_spec(), ModelRole::Teacher, 8);
    for (double& v : m.params.values(m.params.segment("out.w"))) v = 0.0;
    auto bias = m.params.values(m.params.segment("out.b"));
    bias[0] = 0.75;
    bias[1] = -2.5;
    Rng rng(2);
    const Tensor out = predict_mean(m, fixtures::random_tensor(rng, 5, 2), 2, 3);
    for (std::size_t r = 0; r < 5; ++r) {
      CHECK(out.at(r, 0) == 0.75);
      CHECK(out.at(r, 1) == -2.5);
    }
  }

  TEST_CASE("unknown class and role errors") {
    const ModelHandle teacher = random_model(small_spec(), ModelRole::Teacher, 1);
    const ModelHandle gen = init_from(teacher, ModelRole::Generator);
    const Tensor z = Tensor::row({0.0, 0.0});
    const NoiseSchedule s = fixtures::small_schedule();
    CHECK_THROWS_AS(predict_mean(teacher, z, 3, 1), std::out_of_range);
    CHECK_THROWS_AS(predict_mean(teacher, z, -1, 1), std::out_of_range);
    CHECK_THROWS_AS(generate(gen, z, 3, s), std::out_of_range);
    CHECK_THROWS_AS(generate(teacher, z, 0, s), std::invalid_argument);
    CHECK_THROWS_AS(predict_mean(gen, z, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(predict_mean(teacher, Tensor::row({0.0, 0.0, 0.0}), 0, 1), std::invalid_argument);
    CHECK(parse_role(role_name(ModelRole::FakeScore)) == ModelRole::FakeScore);
    CHECK_THROWS_AS(parse_role("student"), std::invalid_argument);
  }

  TEST_CASE("generate: determinism and initialization identity") {
    const NoiseSchedule s = fixtures::small_schedule();
    const ModelHandle teacher = random_model(small_spec(), ModelRole::Teacher, 4);
    const ModelHandle gen = init_from(teacher, ModelRole::Generator);
    Rng rng(9);
    const Tensor noise = fixtures::random_tensor(rng, 8, 2);
    CHECK(generate(gen, noise, 1, s) == generate(gen, noise, 1, s));
    Tensor scaled = noise;
    for (double& v : scaled.values()) v *= s.sigma_init;
    CHECK(generate(gen, noise, 1, s) == predict_mean(teacher, scaled, 1, s.t_init));
    for (std::size_t r = 0; r < 8; ++r) {
      const auto ref = oracle::generate_row(gen, noise, r, 1, s);
      CHECK(generate(gen, noise, 1, s).at(r, 0) == doctest::Approx(ref[0]).epsilon(1e-13));
    }
  }

  TEST_CASE("init_from isolates the copy; spec mismatch rejected") {
    const ModelHandle source = random_model(small_spec(), ModelRole::Teacher, 6);
    const ParamVector keep = source.params;
    ModelHandle copy = init_from(source, ModelRole::FakeScore);
    CHECK(copy.role == ModelRole::FakeScore);
    CHECK(copy.params == source.params);
    for (double& v : copy.params.values()) v += 1.0;
    CHECK(source.params == keep);
    ModelHandle other = random_model(small_spec(4), ModelRole::Teacher, 6);
    CHECK_THROWS_AS(assign_from(other, source), std::invalid_argument);
    assign_from(copy, source);
    CHECK(copy.params == source.params);
  }

  TEST_CASE("denoiser gradient matches central differences on 20 indices") {
    const NetworkSpec spec = small_spec();
    ModelHandle m = random_model(spec, ModelRole::Teacher, 30);
    Rng rng(31);
    const Tensor z = fixtures::random_tensor(rng, 6, 2);
    const auto labels = fixtures::random_labels(rng, 6, spec.num_classes);
    std::vector<int> steps(6);
    for (int& t : steps) t = static_cast<int>(rng.uniform_int(1, spec.horizon));
    const Tensor dir = fixtures::random_tensor(rng, 6, 2);

    Tape tape;
    auto b = tape.bind(m.params, ParamMode::Trainable);
    const auto grad = tape.backward(denoise_on(tape, b, spec, tape.input(z), labels, steps), dir).take(b);
    auto f = [&] {
      double acc = 0.0;
      for (std::size_t r = 0; r < 6; ++r) {
        const auto y = oracle::mlp(m, z.row_span(r), labels[r], steps[r]);
        acc += dir.at(r, 0) * y[0] + dir.at(r, 1) * y[1];
      }
      return acc;
    };
    std::vector<double> analytic, fd;
    for (int k = 0; k < 20; ++k) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m.params.size()) - 1));
      auto one = m.params.values().subspan(i, 1);
      fd.push_back(oracle::central_diff(one, f)[0]);
      analytic.push_back(grad[i]);
    }
    CHECK(oracle::rel_error(analytic, fd) <= 1e-4);
  }

  TEST_CASE("1-class teacher: clean estimate near the mean at small t") {
    const ModelHandle& teacher = fixtures::one_class_teacher().model;
    const NoiseSchedule s = fixtures::one_class_config(0).schedule();
    Rng rng(40);
    const std::size_t n = 500;
    Tensor x0 = Tensor::matrix(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      x0.at(r, 0) = 1.0 + 0.1 * rng.normal();
      x0.at(r, 1) = -1.0 + 0.1 * rng.normal();
    }
    const int t = 2;
    const CorruptedSample c = corrupt(x0, t, fixtures::random_tensor(rng, n, 2), s);
    const Tensor xh = predict_mean(teacher, c.z, 0, t);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      m0 += xh.at(r, 0) / n;
      m1 += xh.at(r, 1) / n;
    }
    CHECK(std::hypot(m0 - 1.0, m1 + 1.0) < 0.1);
  }
}
