// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles/metrics.hpp"
#include "unlearn/synthlab.hpp"

using namespace unlearn;

namespace {

Tensor constant_rows(std::size_t n, const std::vector<double>& v) {
  Tensor t = Tensor::matrix(n, v.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < v.size(); ++c) t.at(r, c) = v[c];
  }
  return t;
}

}  // namespace

TEST_SUITE("synthlab") {
  TEST_CASE("ring and grid geometry") {
    const MixtureDataset two = make_mixture(2, MixtureLayout::Ring, 1.0, 10, 1);
    CHECK(two.means[0][0] == doctest::Approx(1.0));
    CHECK(std::abs(two.means[0][1]) < 1e-15);
    CHECK(two.means[1][0] == doctest::Approx(-1.0));
    CHECK(std::abs(two.means[1][1]) < 1e-15);
    const MixtureDataset grid = make_mixture(4, MixtureLayout::Grid, 2.0, 10, 1);
    CHECK(grid.means[0] == std::vector<double>{-1.0, -1.0});
    CHECK(grid.means[3] == std::vector<double>{1.0, 1.0});
    CHECK(grid.covariances[0] == std::vector<double>{0.04, 0.0, 0.0, 0.04});
    CHECK(parse_layout(layout_name(MixtureLayout::Grid)) == MixtureLayout::Grid);
    CHECK_THROWS_AS(make_mixture(1, MixtureLayout::Ring, 1.0, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_mixture(3, MixtureLayout::Ring, 0.0, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(parse_layout("spiral"), std::invalid_argument);
  }

  TEST_CASE("sample store: determinism, labels, class moments") {
    const MixtureDataset a = make_mixture(3, MixtureLayout::Ring, 2.0, 20000, 5);
    const MixtureDataset b = make_mixture(3, MixtureLayout::Ring, 2.0, 20000, 5);
    CHECK(a.samples == b.samples);
    CHECK(a.labels == b.labels);
    CHECK(a.samples.rows() == 60000);
    for (int c = 0; c < 3; ++c) {
      const Tensor x = a.class_samples(c);
      CHECK(x.rows() == 20000);
      double m0 = 0.0, m1 = 0.0, v0 = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        m0 += x.at(r, 0) / 20000.0;
        m1 += x.at(r, 1) / 20000.0;
      }
      for (std::size_t r = 0; r < x.rows(); ++r) v0 += (x.at(r, 0) - m0) * (x.at(r, 0) - m0) / 19999.0;
      // sd 0.2 per coordinate: mean error sd 0.2 / sqrt(20000) = 0.0014
      CHECK(std::abs(m0 - a.means[c][0]) < 0.006);
      CHECK(std::abs(m1 - a.means[c][1]) < 0.006);
      CHECK(v0 == doctest::Approx(0.04).epsilon(0.05));
    }
    const MixtureDataset r = a.without_class(1);
    CHECK(r.samples.rows() == 40000);
    CHECK(std::none_of(r.labels.begin(), r.labels.end(), [](int c) { return c == 1; }));
    CHECK(r.class_samples(2) == a.class_samples(2));
  }

  TEST_CASE("bayes_classify: modes, symmetry and the brute-force oracle") {
    const MixtureDataset d = make_mixture(4, MixtureLayout::Ring, 2.0, 10, 2);
    Tensor modes = Tensor::matrix(4, 2);
    for (std::size_t c = 0; c < 4; ++c) {
      modes.at(c, 0) = d.means[c][0];
      modes.at(c, 1) = d.means[c][1];
    }
    const Posterior p = bayes_classify(modes, d);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(p.argmax[c] == static_cast<int>(c));
      CHECK(p.probs.at(c, c) > 0.99);
    }
    const MixtureDataset two = make_mixture(2, MixtureLayout::Ring, 1.0, 10, 2);
    const Posterior mid = bayes_classify(Tensor::matrix(2, 2, {0.0, 0.3, 0.0, -0.05}), two);
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(std::abs(mid.probs.at(r, 0) - 0.5) < 1e-10);
      CHECK(std::abs(mid.probs.at(r, 1) - 0.5) < 1e-10);
    }
    Rng rng(3);
    const Tensor x = fixtures::random_tensor(rng, 300, 2, 1.5);
    const Posterior px = bayes_classify(x, d);
    for (std::size_t r = 0; r < 300; ++r) {
      const auto ref = oracle::brute_posterior(x.row_span(r), d);
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(px.probs.at(r, c) - static_cast<double>(ref[c])) < 1e-10);
    }
    CHECK_THROWS_AS(bayes_classify(Tensor::matrix(1, 3), d), std::invalid_argument);
  }

  TEST_CASE("unlearning accuracy: constant samplers") {
    const MixtureDataset d = make_mixture(4, MixtureLayout::Ring, 2.0, 10, 2);
    auto at = [&](int c) -> Sampler {
      return [&d, c](int, std::size_t n, Rng&) { return constant_rows(n, d.means[static_cast<std::size_t>(c)]); };
    };
    const UnlearningAccuracy cover = unlearning_accuracy(at(1), d, 0, 1, 100, 1);
    CHECK(cover.ua == 1.0);
    CHECK(cover.cover_alignment == 1.0);
    const UnlearningAccuracy none = unlearning_accuracy(at(0), d, 0, 1, 100, 1);
    CHECK(none.ua == 0.0);
    CHECK(none.forget_rate == 1.0);
    const UnlearningAccuracy other = unlearning_accuracy(at(2), d, 0, 1, 100, 1);
    CHECK(other.ua == 1.0);
    CHECK(other.cover_alignment == 0.0);
    CHECK_THROWS_AS(unlearning_accuracy(at(1), d, 0, 1, 0, 1), std::invalid_argument);
  }

  TEST_CASE("frechet: identity, unit shift and the long-double oracle") {
    Rng rng(4);
    const Tensor a = fixtures::random_tensor(rng, 500, 2);
    CHECK(frechet_proxy(a, a) <= 1e-8);
    Tensor shifted = a;
    for (std::size_t r = 0; r < shifted.rows(); ++r) shifted.at(r, 0) += 1.0;
    CHECK(frechet_proxy(a, shifted) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(frechet_gaussian({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, {1.0, 0.0}, {1.0, 0.0, 0.0, 1.0}) ==
          doctest::Approx(1.0).epsilon(1e-12));
    for (int trial = 0; trial < 200; ++trial) {
      const std::vector<double> ma{rng.normal(), rng.normal()}, mb{rng.normal(), rng.normal()};
      const auto A = oracle::random_spd(rng), B = oracle::random_spd(rng);
      const double got = frechet_gaussian(ma, A, mb, B);
      CHECK(std::abs(got - static_cast<double>(oracle::frechet_2d(ma, A, mb, B))) <= 1e-6);
      CHECK(got >= 0.0);
    }
    CHECK_THROWS_AS(frechet_proxy(Tensor::matrix(1, 2), a), std::invalid_argument);
    CHECK_THROWS_AS(frechet_proxy(Tensor::matrix(5, 3), a), std::invalid_argument);
  }

  TEST_CASE("frechet: degenerate covariance is regularized") {
    Tensor line = Tensor::matrix(50, 2);
    for (std::size_t r = 0; r < 50; ++r) line.at(r, 0) = static_cast<double>(r) / 50.0;
    const double d = frechet_proxy(line, line);
    CHECK(std::isfinite(d));
    CHECK(d <= 1e-8);
  }

  TEST_CASE("is_proxy: collapse, K modes and direct summation") {
    const MixtureDataset d = make_mixture(4, MixtureLayout::Ring, 2.0, 10, 2);
    CHECK(is_proxy(constant_rows(200, d.means[2]), d) == doctest::Approx(1.0).epsilon(1e-6));
    Tensor even = Tensor::matrix(400, 2);
    for (std::size_t r = 0; r < 400; ++r) {
      even.at(r, 0) = d.means[r % 4][0];
      even.at(r, 1) = d.means[r % 4][1];
    }
    CHECK(is_proxy(even, d) == doctest::Approx(4.0).epsilon(1e-6));

    Rng rng(5);
    const Tensor x = fixtures::random_tensor(rng, 200, 2, 1.5);
    const double ref = oracle::is_direct(x, d);
    CHECK(std::abs(is_proxy(x, d) - ref) <= 1e-10);
    CHECK(is_proxy(x, d) >= 1.0);
    CHECK_THROWS_AS(is_proxy(Tensor::matrix(0, 2), d), std::invalid_argument);
  }

  TEST_CASE("precision_proxy: self, far and half split") {
    Rng rng(6);
    const Tensor real = fixtures::random_tensor(rng, 1000, 2);
    CHECK(precision_proxy(real, real, 3) == 1.0);
    Tensor far = real;
    for (double& v : far.values()) v += 100.0 * 2.0;
    CHECK(precision_proxy(far, real, 3) == 0.0);
    Tensor half = fixtures::random_tensor(rng, 1000, 2);
    for (std::size_t r = 500; r < 1000; ++r) half.at(r, 0) += 200.0;
    const double p = precision_proxy(half, real, 3);
    CHECK(std::abs(p - 0.5) <= 0.02);
    CHECK_THROWS_AS(precision_proxy(real, real, 0), std::invalid_argument);
    CHECK_THROWS_AS(precision_proxy(real, Tensor::matrix(3, 2), 3), std::invalid_argument);
  }

  TEST_CASE("ancestral sampler: T = 1 and determinism") {
    NetworkSpec spec = fixtures::small_spec(3, 1);
    const ModelHandle m = fixtures::random_model(spec, ModelRole::Teacher, 7);
    const NoiseSchedule one = build_schedule(ScheduleKind::Linear, 1, 0.0, 0.0);
    Rng a(8), b(8);
    const Tensor x = ancestral_sample(m, 2, 10, one, a);
    Tensor z = Tensor::matrix(10, 2);
    for (double& v : z.values()) v = b.normal();
    CHECK(x == predict_mean(m, z, 2, 1));

    const NoiseSchedule s = fixtures::small_schedule();
    const ModelHandle m20 = fixtures::random_model(fixtures::small_spec(), ModelRole::Teacher, 9);
    Rng c(10), e(10);
    CHECK(ancestral_sample(m20, 1, 50, s, c) == ancestral_sample(m20, 1, 50, s, e));
  }

  TEST_CASE("ancestral sampling from a 1-class teacher matches the data") {
    const ModelHandle& teacher = fixtures::one_class_teacher().model;
    const NoiseSchedule s = fixtures::one_class_config(0).schedule();
    const MixtureDataset data = fixtures::one_class({1.0, -1.0}, 2000, 21);
    Rng rng(11);
    const Tensor x = ancestral_sample(teacher, 0, 1000, s, rng);
    CHECK(frechet_proxy(x, data.samples) < 0.1);
  }

  TEST_CASE("evaluate: per-class entries and determinism") {
    const MixtureDataset d = make_mixture(3, MixtureLayout::Ring, 2.0, 300, 2);
    const ModelHandle g = fixtures::random_model(fixtures::small_spec(), ModelRole::Generator, 12);
    const NoiseSchedule s = fixtures::small_schedule();
    const Sampler sampler = generator_sampler(g, s);
    EvalOptions opt;
    opt.n = 200;
    opt.precision_n = 100;
    const EvalSummary a = evaluate(sampler, d, 0, 1, opt);
    const EvalSummary b = evaluate(sampler, d, 0, 1, opt);
    CHECK(a.frechet.size() == 3);
    CHECK(a.frechet == b.frechet);
    CHECK(a.ua.ua == b.ua.ua);
    CHECK(a.is == b.is);
    CHECK(a.precision == b.precision);
    opt.seed = 8;
    const EvalSummary c = evaluate(sampler, d, 0, 1, opt);
    CHECK(c.frechet != a.frechet);
    opt.n = 0;
    CHECK_THROWS_AS(evaluate(sampler, d, 0, 1, opt), std::invalid_argument);
  }
}
