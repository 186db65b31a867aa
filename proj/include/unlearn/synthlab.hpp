// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unlearn/model.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/schedule.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

enum class MixtureLayout { Ring, Grid };

MixtureLayout parse_layout(std::string_view name);
const char* layout_name(MixtureLayout layout);

/// Class-conditional Gaussian mixture with a labelled sample store.
struct MixtureDataset {
  int num_classes = 0;
  std::size_t dim = 2;
  std::vector<std::vector<double>> means;        // K x D
  std::vector<std::vector<double>> covariances;  // K x (D*D), row-major
  Tensor samples;                                // N x D
  std::vector<int> labels;                       // N
  std::uint64_t seed = 0;

  /// Rows of `samples` with label c.
  Tensor class_samples(int c) const;
  /// Copy keeping only samples whose label differs from `c`.
  MixtureDataset without_class(int c) const;
};

/// K >= 2 Gaussians in 2D. Ring: means evenly on a circle of radius `spread`
/// starting at angle 0. Grid: a centered square lattice with pitch `spread`.
/// Covariance is cov_scale * spread^2 * I.
MixtureDataset make_mixture(int num_classes, MixtureLayout layout, double spread, std::size_t per_class,
                            std::uint64_t seed, double cov_scale = 0.01);

struct Posterior {
  Tensor probs;             // N x K
  std::vector<int> argmax;  // N
};

/// Exact class posterior under a uniform prior.
Posterior bayes_classify(const Tensor& x, const MixtureDataset& dataset);

/// Draws n samples conditioned on a label.
using Sampler = std::function<Tensor(int label, std::size_t n, Rng& rng)>;

Sampler generator_sampler(const ModelHandle& generator, const NoiseSchedule& sched);
Sampler ancestral_sampler(const ModelHandle& model, const NoiseSchedule& sched);

struct UnlearningAccuracy {
  double ua = 0.0;               // fraction classified as anything but c_f
  double cover_alignment = 0.0;  // fraction classified as c_0
  double forget_rate = 0.0;      // fraction classified as c_f
};

UnlearningAccuracy unlearning_accuracy(const Sampler& sampler, const MixtureDataset& dataset, int forget_class,
                                       int cover_class, std::size_t n, std::uint64_t seed);
/// UA of a fixed sample set (classified as-is).
UnlearningAccuracy unlearning_accuracy(const Tensor& samples, const MixtureDataset& dataset, int forget_class,
                                       int cover_class);

/// Squared Frechet distance between Gaussians fitted to two sample sets.
double frechet_proxy(const Tensor& a, const Tensor& b);
/// Closed-form Frechet distance between two Gaussians (D x D row-major covariances).
double frechet_gaussian(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                        const std::vector<double>& mu_b, const std::vector<double>& cov_b);

/// exp(mean_x KL(p(y|x) || p_bar(y))) with Bayes posteriors as p(y|x).
double is_proxy(const Tensor& samples, const MixtureDataset& dataset);

/// Fraction of generated points inside the k-NN ball of at least one real point.
double precision_proxy(const Tensor& generated, const Tensor& real, std::size_t k);

/// Reverse diffusion from z_T ~ N(0, I) with the x0-parameterized DDPM
/// posterior; the last step returns the model's clean estimate.
Tensor ancestral_sample(const ModelHandle& model, int label, std::size_t n, const NoiseSchedule& sched, Rng& rng);

struct EvalSummary {
  UnlearningAccuracy ua;
  std::vector<double> frechet;  // per class, generator samples vs data samples
  double is = 0.0;
  double precision = 0.0;
};

struct EvalOptions {
  std::size_t n = 2000;            // samples per class
  std::size_t precision_n = 500;   // per-class subsample used for precision
  std::size_t k = 3;
  std::uint64_t seed = 7;
};

/// Full metric sweep: per-class sampling with per-class sub-seeds.
EvalSummary evaluate(const Sampler& sampler, const MixtureDataset& dataset, int forget_class, int cover_class,
                     const EvalOptions& options);

/// One row of the metrics stream.
struct MetricsRecord {
  std::uint64_t step = 0;
  std::uint64_t images_seen = 0;
  double loss_psi = 0.0;
  double loss_theta = 0.0;
  double loss_distill = 0.0;
  double loss_forget = 0.0;
  double mask_density = 0.0;
  double mask_threshold = 0.0;
  double mask_overlap = 0.0;
  double ua = 0.0;
  double cover_alignment = 0.0;
  std::vector<double> frechet;
  double is = 0.0;
  double precision = 0.0;
  double wall_ms = 0.0;
};

}  // namespace unlearn
