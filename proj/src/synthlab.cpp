// SPDX-License-Identifier: Apache-2.0
#include "unlearn/synthlab.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

namespace unlearn {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_matrix(const std::vector<double>& cov, std::size_t d) {
  Mat m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = cov[i * d + j];
  }
  return m;
}

struct GaussianFit {
  Vec mean;
  Mat cov;
};

GaussianFit fit_gaussian(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) throw std::invalid_argument("frechet_proxy: need at least 2 samples per set");
  GaussianFit f{Vec::Zero(static_cast<Eigen::Index>(d)), Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) f.mean(c) += x.at(r, c);
  }
  f.mean /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    Vec dv(d);
    for (std::size_t c = 0; c < d; ++c) dv(c) = x.at(r, c) - f.mean(c);
    f.cov += dv * dv.transpose();
  }
  f.cov /= static_cast<double>(n - 1);
  return f;
}

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Regularizes a covariance whose smallest eigenvalue is not positive.
Mat regularized(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  if (es.eigenvalues().minCoeff() > 0.0) return cov;
  std::cerr << "warning: degenerate covariance in frechet_proxy; adding 1e-10 I\n";
  return cov + 1e-10 * Mat::Identity(cov.rows(), cov.cols());
}

double frechet_fitted(const Vec& mu_a, const Mat& cov_a, const Vec& mu_b, const Mat& cov_b) {
  const Mat ra = psd_sqrt(cov_a);
  Eigen::SelfAdjointEigenSolver<Mat> es(ra * cov_b * ra);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

double log_density(std::span<const double> x, const std::vector<double>& mu, const Mat& cov_inv, double log_det) {
  const std::size_t d = mu.size();
  Vec dv(d);
  for (std::size_t i = 0; i < d; ++i) dv(i) = x[i] - mu[i];
  return -0.5 * dv.dot(cov_inv * dv) - 0.5 * log_det - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

MixtureLayout parse_layout(std::string_view name) {
  if (name == "ring") return MixtureLayout::Ring;
  if (name == "grid") return MixtureLayout::Grid;
  throw std::invalid_argument("unknown mixture layout '" + std::string(name) + "'");
}

const char* layout_name(MixtureLayout layout) { return layout == MixtureLayout::Ring ? "ring" : "grid"; }

Tensor MixtureDataset::class_samples(int c) const {
  std::vector<double> out;
  std::size_t rows = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] != c) continue;
    auto row = samples.row_span(r);
    out.insert(out.end(), row.begin(), row.end());
    ++rows;
  }
  return Tensor::matrix(rows, dim, std::move(out));
}

MixtureDataset MixtureDataset::without_class(int c) const {
  MixtureDataset d = *this;
  std::vector<double> out;
  d.labels.clear();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == c) continue;
    auto row = samples.row_span(r);
    out.insert(out.end(), row.begin(), row.end());
    d.labels.push_back(labels[r]);
  }
  d.samples = Tensor::matrix(d.labels.size(), dim, std::move(out));
  return d;
}

MixtureDataset make_mixture(int num_classes, MixtureLayout layout, double spread, std::size_t per_class,
                            std::uint64_t seed, double cov_scale) {
  if (num_classes < 2) throw std::invalid_argument("make_mixture: need K >= 2 classes");
  if (!(spread > 0.0) || !(cov_scale > 0.0)) throw std::invalid_argument("make_mixture: spread and scale must be > 0");

  MixtureDataset ds;
  ds.num_classes = num_classes;
  ds.dim = 2;
  ds.seed = seed;
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_classes))));
  for (int c = 0; c < num_classes; ++c) {
    if (layout == MixtureLayout::Ring) {
      const double angle = 2.0 * std::numbers::pi * c / num_classes;
      ds.means.push_back({spread * std::cos(angle), spread * std::sin(angle)});
    } else {
      const double off = 0.5 * (side - 1);
      ds.means.push_back({spread * (c % side - off), spread * (c / side - off)});
    }
    const double var = cov_scale * spread * spread;
    ds.covariances.push_back({var, 0.0, 0.0, var});
  }

  Rng rng(seed);
  std::vector<double> data;
  data.reserve(per_class * num_classes * 2);
  for (int c = 0; c < num_classes; ++c) {
    const Eigen::LLT<Mat> llt(to_matrix(ds.covariances[c], 2));
    const Mat L = llt.matrixL();
    for (std::size_t i = 0; i < per_class; ++i) {
      Vec e(2);
      e << rng.normal(), rng.normal();
      const Vec x = L * e;
      data.push_back(ds.means[c][0] + x(0));
      data.push_back(ds.means[c][1] + x(1));
      ds.labels.push_back(c);
    }
  }
  ds.samples = Tensor::matrix(ds.labels.size(), 2, std::move(data));
  return ds;
}

Posterior bayes_classify(const Tensor& x, const MixtureDataset& dataset) {
  const std::size_t n = x.rows(), k = static_cast<std::size_t>(dataset.num_classes), d = dataset.dim;
  if (x.cols() != d) throw std::invalid_argument("bayes_classify: sample width does not match data dimension");
  std::vector<Mat> inv(k);
  std::vector<double> log_det(k);
  for (std::size_t c = 0; c < k; ++c) {
    const Mat cov = to_matrix(dataset.covariances[c], d);
    const Eigen::LLT<Mat> llt(cov);
    inv[c] = llt.solve(Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
    log_det[c] = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  Posterior p{Tensor::matrix(n, k), std::vector<int>(n, 0)};
  std::vector<double> logp(k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) logp[c] = log_density(x.row_span(r), dataset.means[c], inv[c], log_det[c]);
    const double mx = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logp[c] - mx);
    for (std::size_t c = 0; c < k; ++c) p.probs.at(r, c) = std::exp(logp[c] - mx) / z;
    p.argmax[r] = static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
  }
  return p;
}

Sampler generator_sampler(const ModelHandle& generator, const NoiseSchedule& sched) {
  return [&generator, &sched](int label, std::size_t n, Rng& rng) {
    Tensor noise = Tensor::matrix(n, generator.spec.data_dim);
    for (double& v : noise.values()) v = rng.normal();
    return generate(generator, noise, label, sched);
  };
}

Sampler ancestral_sampler(const ModelHandle& model, const NoiseSchedule& sched) {
  return [&model, &sched](int label, std::size_t n, Rng& rng) { return ancestral_sample(model, label, n, sched, rng); };
}

UnlearningAccuracy unlearning_accuracy(const Tensor& samples, const MixtureDataset& dataset, int forget_class,
                                       int cover_class) {
  const Posterior p = bayes_classify(samples, dataset);
  std::size_t forget = 0, cover = 0;
  for (int c : p.argmax) {
    forget += c == forget_class ? 1 : 0;
    cover += c == cover_class ? 1 : 0;
  }
  const auto n = static_cast<double>(p.argmax.size());
  UnlearningAccuracy out;
  out.forget_rate = static_cast<double>(forget) / n;
  out.ua = static_cast<double>(p.argmax.size() - forget) / n;
  out.cover_alignment = static_cast<double>(cover) / n;
  return out;
}

UnlearningAccuracy unlearning_accuracy(const Sampler& sampler, const MixtureDataset& dataset, int forget_class,
                                       int cover_class, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("unlearning_accuracy: need at least one sample");
  Rng rng(seed);
  return unlearning_accuracy(sampler(forget_class, n, rng), dataset, forget_class, cover_class);
}

double frechet_proxy(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("frechet_proxy: dimension mismatch");
  const GaussianFit fa = fit_gaussian(a), fb = fit_gaussian(b);
  return frechet_fitted(fa.mean, regularized(fa.cov), fb.mean, regularized(fb.cov));
}

double frechet_gaussian(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                        const std::vector<double>& mu_b, const std::vector<double>& cov_b) {
  const std::size_t d = mu_a.size();
  Vec ma = Eigen::Map<const Vec>(mu_a.data(), static_cast<Eigen::Index>(d));
  Vec mb = Eigen::Map<const Vec>(mu_b.data(), static_cast<Eigen::Index>(d));
  return frechet_fitted(ma, to_matrix(cov_a, d), mb, to_matrix(cov_b, d));
}

double is_proxy(const Tensor& samples, const MixtureDataset& dataset) {
  if (samples.rows() == 0) throw std::invalid_argument("is_proxy: need at least one sample");
  const Posterior p = bayes_classify(samples, dataset);
  const std::size_t n = samples.rows(), k = static_cast<std::size_t>(dataset.num_classes);
  std::vector<double> marginal(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) marginal[c] += p.probs.at(r, c);
  }
  for (double& m : marginal) m /= static_cast<double>(n);
  double kl_sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const double pc = p.probs.at(r, c);
      if (pc > 0.0) kl_sum += pc * (std::log(pc) - std::log(marginal[c]));
    }
  }
  return std::exp(kl_sum / static_cast<double>(n));
}

double precision_proxy(const Tensor& generated, const Tensor& real, std::size_t k) {
  const std::size_t nr = real.rows(), ng = generated.rows(), d = real.cols();
  if (k == 0 || k >= nr) throw std::invalid_argument("precision_proxy: need 1 <= k < number of real points");
  if (generated.cols() != d) throw std::invalid_argument("precision_proxy: dimension mismatch");
  if (ng == 0) return 0.0;

  auto dist2 = [d](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
  };
  std::vector<double> radius2(nr);
  std::vector<double> buf(nr - 1);
  for (std::size_t i = 0; i < nr; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < nr; ++j) {
      if (j != i) buf[w++] = dist2(real.row_span(i), real.row_span(j));
    }
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k - 1), buf.end());
    radius2[i] = buf[k - 1];
  }
  std::size_t inside = 0;
  for (std::size_t g = 0; g < ng; ++g) {
    for (std::size_t i = 0; i < nr; ++i) {
      if (dist2(generated.row_span(g), real.row_span(i)) <= radius2[i]) {
        ++inside;
        break;
      }
    }
  }
  return static_cast<double>(inside) / static_cast<double>(ng);
}

Tensor ancestral_sample(const ModelHandle& model, int label, std::size_t n, const NoiseSchedule& sched, Rng& rng) {
  const std::size_t d = model.spec.data_dim;
  Tensor z = Tensor::matrix(n, d);
  for (double& v : z.values()) v = rng.normal();
  const std::vector<int> labels(n, label);
  for (int t = sched.T; t >= 1; --t) {
    const std::vector<int> steps(n, t);
    const Tensor x0 = evaluate_network(model, z, labels, steps);
    if (t == 1) return x0;
    const double abar_t = sched.alpha(t) * sched.alpha(t);
    const double abar_prev = sched.alpha(t - 1) * sched.alpha(t - 1);
    const double beta = sched.beta(t);
    const double c0 = std::sqrt(abar_prev) * beta / (1.0 - abar_t);
    const double ct = sched.a(t) * (1.0 - abar_prev) / (1.0 - abar_t);
    const double sd = std::sqrt(beta * (1.0 - abar_prev) / (1.0 - abar_t));
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = c0 * x0[i] + ct * z[i] + sd * rng.normal();
  }
  return z;
}

EvalSummary evaluate(const Sampler& sampler, const MixtureDataset& dataset, int forget_class, int cover_class,
                     const EvalOptions& options) {
  if (options.n == 0) throw std::invalid_argument("evaluate: sample count must be positive");
  const int k = dataset.num_classes;
  EvalSummary out;
  std::vector<double> all, all_sub, real_sub;
  std::size_t rows = 0, sub_rows = 0, real_rows = 0;
  for (int c = 0; c < k; ++c) {
    Rng rng(sub_seed(options.seed, static_cast<std::uint64_t>(c)));
    const Tensor s = sampler(c, options.n, rng);
    if (c == forget_class) out.ua = unlearning_accuracy(s, dataset, forget_class, cover_class);
    const Tensor data_c = dataset.class_samples(c);
    out.frechet.push_back(frechet_proxy(s, data_c));
    all.insert(all.end(), s.values().begin(), s.values().end());
    rows += s.rows();
    const std::size_t ns = std::min(options.precision_n, s.rows());
    all_sub.insert(all_sub.end(), s.values().begin(), s.values().begin() + static_cast<std::ptrdiff_t>(ns * s.cols()));
    sub_rows += ns;
    const std::size_t nr = std::min(options.precision_n, data_c.rows());
    real_sub.insert(real_sub.end(), data_c.values().begin(),
                    data_c.values().begin() + static_cast<std::ptrdiff_t>(nr * data_c.cols()));
    real_rows += nr;
  }
  out.is = is_proxy(Tensor::matrix(rows, dataset.dim, std::move(all)), dataset);
  out.precision = precision_proxy(Tensor::matrix(sub_rows, dataset.dim, std::move(all_sub)),
                                  Tensor::matrix(real_rows, dataset.dim, std::move(real_sub)), options.k);
  return out;
}

}  // namespace unlearn
