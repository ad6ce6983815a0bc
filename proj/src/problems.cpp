#include "dsgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dsgd/rng.hpp"

namespace dsgd {

namespace {

double log1p_exp(double t) {
  // log(1 + exp(t)) without overflow
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// QuadraticProblem

QuadraticProblem::QuadraticProblem(int dim, int nodes, double spread, double noise_sigma,
                                   DataStrategy strategy, double center)
    : dim_(dim), nodes_(nodes), noise_sigma_(noise_sigma), strategy_(strategy) {
  if (dim < 1) throw std::invalid_argument("quadratic: dim must be >= 1");
  if (nodes < 1) throw std::invalid_argument("quadratic: nodes must be >= 1");
  if (!(spread >= 0.0)) throw std::invalid_argument("quadratic: spread must be >= 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("quadratic: noise_sigma must be >= 0");
  if (strategy == DataStrategy::shared && spread != 0.0)
    throw std::invalid_argument("quadratic: shared strategy requires spread == 0");
  if (nodes == 1) spread = 0.0;  // one node has no cross-node spread

  mean_center_.assign(dim, center);
  centers_.assign(static_cast<std::size_t>(dim) * nodes, center);

  // Pairs of nodes are displaced by +-a along distinct coordinates (cycled);
  // an odd leftover node stays at the mean. a is scaled so that
  // avg_i ||b_i - mean||^2 == spread^2 exactly.
  const int pairs = nodes / 2;
  if (pairs > 0 && spread > 0.0) {
    const double a = (nodes % 2 == 0)
                         ? spread
                         : spread * std::sqrt(static_cast<double>(nodes) / (nodes - 1));
    for (int p = 0; p < pairs; ++p) {
      const int coord = p % dim;
      centers_[static_cast<std::size_t>(2 * p) * dim + coord] += a;
      centers_[static_cast<std::size_t>(2 * p + 1) * dim + coord] -= a;
    }
  }

  double avg_dev = 0.0;
  for (int i = 0; i < nodes; ++i) {
    for (int c = 0; c < dim; ++c) {
      const double d = centers_[static_cast<std::size_t>(i) * dim + c] - mean_center_[c];
      avg_dev += d * d;
    }
  }
  avg_dev /= nodes;
  zeta_sq_ = avg_dev;
  sigma_sq_ = dim * noise_sigma * noise_sigma;
  f_star_ = 0.5 * avg_dev;  // f attains its minimum at the mean center
}

std::span<const double> QuadraticProblem::node_center(int node) const {
  return {centers_.data() + static_cast<std::size_t>(node) * dim_,
          static_cast<std::size_t>(dim_)};
}

double QuadraticProblem::loss(std::span<const double> x) const {
  double s = 0.0;
  for (int c = 0; c < dim_; ++c) {
    const double d = x[c] - mean_center_[c];
    s += d * d;
  }
  return 0.5 * s + f_star_;
}

double QuadraticProblem::node_loss(int node, std::span<const double> x) const {
  const auto b = node_center(node);
  double s = 0.0;
  for (int c = 0; c < dim_; ++c) {
    const double d = x[c] - b[c];
    s += d * d;
  }
  return 0.5 * s;
}

void QuadraticProblem::node_gradient(int node, std::span<const double> x,
                                     std::span<double> out) const {
  const auto b = node_center(node);
  for (int c = 0; c < dim_; ++c) out[c] = x[c] - b[c];
}

void QuadraticProblem::global_gradient(std::span<const double> x, std::span<double> out) const {
  for (int c = 0; c < dim_; ++c) out[c] = x[c] - mean_center_[c];
}

void QuadraticProblem::stochastic_gradient(int node, std::span<const double> x,
                                           std::uint64_t seed, std::uint64_t iteration,
                                           std::uint64_t draw, std::span<double> out) const {
  const auto b = node_center(node);
  for (int c = 0; c < dim_; ++c) {
    const double noise =
        noise_sigma_ == 0.0
            ? 0.0
            : noise_sigma_ * gaussian(seed, StreamDomain::gradient_noise, node, iteration, draw, c);
    out[c] = x[c] - b[c] + noise;
  }
}

// ---------------------------------------------------------------------------
// LogisticProblem

LogisticProblem::LogisticProblem(int samples_per_node, int dim, int nodes, std::uint64_t seed,
                                 DataStrategy strategy)
    : samples_per_node_(samples_per_node),
      dim_(dim),
      nodes_(nodes),
      seed_(seed),
      strategy_(strategy),
      f_star_cache_(std::make_shared<FStarCache>()) {
  if (samples_per_node < 1)
    throw std::invalid_argument("logistic: samples_per_node must be >= 1");
  if (dim < 1) throw std::invalid_argument("logistic: dim must be >= 1");
  if (nodes < 1) throw std::invalid_argument("logistic: nodes must be >= 1");

  total_samples_ = samples_per_node * nodes;
  features_.resize(static_cast<std::size_t>(total_samples_) * dim);
  labels_.resize(total_samples_);

  // Ground-truth direction, then standard normal features; labels follow the
  // sign of the margin plus noise, so the data is separable up to that noise.
  std::vector<double> w_true(dim);
  double norm = 0.0;
  for (int c = 0; c < dim; ++c) {
    w_true[c] = gaussian(seed, StreamDomain::dataset, 0, 0, 0, c);
    norm += w_true[c] * w_true[c];
  }
  norm = std::sqrt(norm);
  for (double& v : w_true) v /= norm;

  for (int s = 0; s < total_samples_; ++s) {
    double m = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double v = gaussian(seed, StreamDomain::dataset, 1, s, 1, c);
      features_[static_cast<std::size_t>(s) * dim + c] = v;
      m += w_true[c] * v;
    }
    const double label_noise = 0.5 * gaussian(seed, StreamDomain::dataset, 2, s, 2, 0);
    labels_[s] = (m + label_noise) >= 0.0 ? 1.0 : -1.0;
  }

  double max_row = 0.0;
  for (int s = 0; s < total_samples_; ++s) max_row = std::max(max_row, sq_norm(features(s)));
  lipschitz_ = 0.25 * max_row + kRegularizer;
}

std::span<const double> LogisticProblem::features(int sample) const {
  return {features_.data() + static_cast<std::size_t>(sample) * dim_,
          static_cast<std::size_t>(dim_)};
}

void LogisticProblem::sample_range(int node, int& begin, int& end) const {
  if (strategy_ == DataStrategy::shared) {
    begin = 0;
    end = total_samples_;
  } else {
    begin = node * samples_per_node_;
    end = begin + samples_per_node_;
  }
}

double LogisticProblem::margin(int sample, std::span<const double> x) const {
  const auto f = features(sample);
  double m = 0.0;
  for (int c = 0; c < dim_; ++c) m += f[c] * x[c];
  return m;
}

double LogisticProblem::loss(std::span<const double> x) const {
  double s = 0.0;
  for (int i = 0; i < total_samples_; ++i) s += log1p_exp(-labels_[i] * margin(i, x));
  return s / total_samples_ + 0.5 * kRegularizer * sq_norm(x);
}

double LogisticProblem::node_loss(int node, std::span<const double> x) const {
  int begin, end;
  sample_range(node, begin, end);
  double s = 0.0;
  for (int i = begin; i < end; ++i) s += log1p_exp(-labels_[i] * margin(i, x));
  return s / (end - begin) + 0.5 * kRegularizer * sq_norm(x);
}

void LogisticProblem::data_gradient(int begin, int end, std::span<const double> x,
                                    std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (int s = begin; s < end; ++s) {
    const double y = labels_[s];
    const double coeff = -y * sigmoid(-y * margin(s, x));
    const auto f = features(s);
    for (int c = 0; c < dim_; ++c) out[c] += coeff * f[c];
  }
  const double inv = 1.0 / (end - begin);
  for (int c = 0; c < dim_; ++c) out[c] = out[c] * inv + kRegularizer * x[c];
}

void LogisticProblem::node_gradient(int node, std::span<const double> x,
                                    std::span<double> out) const {
  int begin, end;
  sample_range(node, begin, end);
  data_gradient(begin, end, x, out);
}

void LogisticProblem::global_gradient(std::span<const double> x, std::span<double> out) const {
  data_gradient(0, total_samples_, x, out);
}

void LogisticProblem::stochastic_gradient(int node, std::span<const double> x, std::uint64_t seed,
                                          std::uint64_t iteration, std::uint64_t draw,
                                          std::span<double> out) const {
  int begin, end;
  sample_range(node, begin, end);
  const int s = begin + static_cast<int>(uniform_below(seed, StreamDomain::sample_pick, node,
                                                       iteration, draw, 0, end - begin));
  const double y = labels_[s];
  const double coeff = -y * sigmoid(-y * margin(s, x));
  const auto f = features(s);
  for (int c = 0; c < dim_; ++c) out[c] = coeff * f[c] + kRegularizer * x[c];
}

std::optional<double> LogisticProblem::f_star() const {
  std::call_once(f_star_cache_->once, [this] {
    // Full-gradient descent with backtracking from 0; the regularizer makes
    // the objective strongly convex, so this converges long before the cap.
    std::vector<double> x(dim_, 0.0), g(dim_), trial(dim_);
    double fx = loss(x);
    double step = 1.0 / lipschitz_;
    const int max_iters = 100000;
    for (int it = 0; it < max_iters; ++it) {
      global_gradient(x, g);
      const double gn = sq_norm(g);
      if (gn <= 1e-20) break;
      double t = step;
      for (int ls = 0; ls < 60; ++ls) {
        for (int c = 0; c < dim_; ++c) trial[c] = x[c] - t * g[c];
        const double ft = loss(trial);
        if (ft <= fx - 0.5 * t * gn) {
          x.swap(trial);
          fx = ft;
          step = t * 1.5;
          break;
        }
        t *= 0.5;
      }
    }
    f_star_cache_->value = fx;
  });
  return f_star_cache_->value;
}

void LogisticProblem::export_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("logistic: cannot write " + path);
  char buf[32];
  for (int s = 0; s < total_samples_; ++s) {
    std::snprintf(buf, sizeof buf, "%g", labels_[s]);
    out << buf;
    const auto f = features(s);
    for (int c = 0; c < dim_; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", f[c]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

GradientSample draw_gradient_sample(const Problem& problem, int node, std::span<const double> x,
                                    std::uint64_t seed, std::uint64_t iteration,
                                    std::uint64_t draw) {
  GradientSample s;
  s.node = node;
  s.sample_id = counter_hash(seed, StreamDomain::sample_pick, node, iteration, draw, 0);
  s.gradient.resize(problem.dim());
  problem.stochastic_gradient(node, x, seed, iteration, draw, s.gradient);
  return s;
}

VarianceEstimate estimate_sigma_zeta(const Problem& problem, std::span<const double> x, int draws,
                                     std::uint64_t seed) {
  if (draws < 2) throw std::invalid_argument("estimate_sigma_zeta: draws must be >= 2");
  const int n = problem.nodes();
  const int d = problem.dim();
  const std::uint64_t est_seed = mix64(seed ^ static_cast<std::uint64_t>(StreamDomain::estimator));

  std::vector<double> gi(d), g(d), sample(d);
  problem.global_gradient(x, g);

  double sum_s = 0.0, sum_s2 = 0.0;
  double sum_z = 0.0, sum_z2 = 0.0;
  for (int i = 0; i < n; ++i) {
    problem.node_gradient(i, x, gi);
    double z = 0.0;
    for (int c = 0; c < d; ++c) {
      const double diff = gi[c] - g[c];
      z += diff * diff;
    }
    sum_z += z;
    sum_z2 += z * z;
    for (int t = 0; t < draws; ++t) {
      problem.stochastic_gradient(i, x, est_seed, t, 0, sample);
      double s = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = sample[c] - gi[c];
        s += diff * diff;
      }
      sum_s += s;
      sum_s2 += s * s;
    }
  }

  const double total = static_cast<double>(n) * draws;
  VarianceEstimate est;
  est.sigma_sq_hat = sum_s / total;
  const double var_s = std::max(0.0, sum_s2 / total - est.sigma_sq_hat * est.sigma_sq_hat);
  est.sigma_sq_se = std::sqrt(var_s / total);
  est.zeta_sq_hat = sum_z / n;
  const double var_z = std::max(0.0, sum_z2 / n - est.zeta_sq_hat * est.zeta_sq_hat);
  est.zeta_sq_se = n > 1 ? std::sqrt(var_z / n) : 0.0;
  return est;
}

}  // namespace dsgd
