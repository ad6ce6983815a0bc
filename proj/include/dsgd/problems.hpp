#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dsgd {

/// How node-local data relates to the global distribution: every node sees
/// the full pool (shared, zero heterogeneity) or its own shard (partitioned).
enum class DataStrategy { shared, partitioned };

/// One stochastic gradient draw.
struct GradientSample {
  int node = 0;
  std::vector<double> gradient;
  std::uint64_t sample_id = 0;
};

/// A stochastic objective f = (1/n) sum_i f_i with per-node sampling oracles.
/// Immutable after construction; per-node sampling is counter-keyed by
/// (seed, node, iteration, draw), so concurrent evaluation across nodes
/// reproduces sequential results exactly.
class Problem {
public:
  virtual ~Problem() = default;

  virtual int dim() const = 0;
  virtual int nodes() const = 0;
  virtual DataStrategy strategy() const = 0;

  /// Smoothness constant of the node objectives (exact or a stored upper
  /// bound, see the concrete class).
  virtual double lipschitz() const = 0;
  /// Per-node gradient noise variance, when known in closed form.
  virtual std::optional<double> sigma_sq() const = 0;
  /// Cross-node gradient heterogeneity, when known in closed form.
  virtual std::optional<double> zeta_sq() const = 0;
  /// Optimal value; may be computed on demand and cached.
  virtual std::optional<double> f_star() const = 0;

  virtual double loss(std::span<const double> x) const = 0;
  virtual double node_loss(int node, std::span<const double> x) const = 0;
  virtual void node_gradient(int node, std::span<const double> x, std::span<double> out) const = 0;
  virtual void global_gradient(std::span<const double> x, std::span<double> out) const = 0;

  /// One stochastic gradient for the given node at x; (iteration, draw) index
  /// independent variates within the seed's stream.
  virtual void stochastic_gradient(int node, std::span<const double> x, std::uint64_t seed,
                                   std::uint64_t iteration, std::uint64_t draw,
                                   std::span<double> out) const = 0;
};

/// f_i(x) = 1/2 ||x - b_i||^2 with centers placed on an orthogonal +-frame
/// around center*1 so that avg_i ||b_i - mean||^2 equals spread^2 exactly.
/// Stochastic gradients add isotropic Gaussian noise with per-coordinate
/// standard deviation noise_sigma. All bound inputs are exact:
/// L = 1, sigma^2 = dim * noise_sigma^2, zeta^2 = spread^2, f* analytic.
///
/// A single node has no cross-node spread, so nodes == 1 forces spread to 0.
/// The shared strategy requires spread == 0.
class QuadraticProblem final : public Problem {
public:
  QuadraticProblem(int dim, int nodes, double spread, double noise_sigma, DataStrategy strategy,
                   double center = 0.0);

  int dim() const override { return dim_; }
  int nodes() const override { return nodes_; }
  DataStrategy strategy() const override { return strategy_; }
  double lipschitz() const override { return 1.0; }
  std::optional<double> sigma_sq() const override { return sigma_sq_; }
  std::optional<double> zeta_sq() const override { return zeta_sq_; }
  std::optional<double> f_star() const override { return f_star_; }

  double loss(std::span<const double> x) const override;
  double node_loss(int node, std::span<const double> x) const override;
  void node_gradient(int node, std::span<const double> x, std::span<double> out) const override;
  void global_gradient(std::span<const double> x, std::span<double> out) const override;
  void stochastic_gradient(int node, std::span<const double> x, std::uint64_t seed,
                           std::uint64_t iteration, std::uint64_t draw,
                           std::span<double> out) const override;

  std::span<const double> node_center(int node) const;
  std::span<const double> mean_center() const { return mean_center_; }
  double noise_sigma() const { return noise_sigma_; }

private:
  int dim_;
  int nodes_;
  double noise_sigma_;
  DataStrategy strategy_;
  double sigma_sq_;
  double zeta_sq_;
  double f_star_;
  std::vector<double> centers_;  // dim * nodes, column per node
  std::vector<double> mean_center_;
};

/// l2-regularized logistic regression on a synthetic linearly-separable-with-
/// noise dataset (labels +-1). The dataset is a pure function of the seed.
/// lipschitz() stores the standard upper bound 1/4 * max_s ||x_s||^2 + reg;
/// sigma^2 and zeta^2 have no closed form here (estimate them empirically);
/// f_star() runs a cached full-gradient descent with backtracking.
class LogisticProblem final : public Problem {
public:
  LogisticProblem(int samples_per_node, int dim, int nodes, std::uint64_t seed,
                  DataStrategy strategy);

  static constexpr double kRegularizer = 1e-3;

  int dim() const override { return dim_; }
  int nodes() const override { return nodes_; }
  DataStrategy strategy() const override { return strategy_; }
  double lipschitz() const override { return lipschitz_; }
  std::optional<double> sigma_sq() const override { return std::nullopt; }
  std::optional<double> zeta_sq() const override { return std::nullopt; }
  std::optional<double> f_star() const override;

  double loss(std::span<const double> x) const override;
  double node_loss(int node, std::span<const double> x) const override;
  void node_gradient(int node, std::span<const double> x, std::span<double> out) const override;
  void global_gradient(std::span<const double> x, std::span<double> out) const override;
  void stochastic_gradient(int node, std::span<const double> x, std::uint64_t seed,
                           std::uint64_t iteration, std::uint64_t draw,
                           std::span<double> out) const override;

  int total_samples() const { return total_samples_; }
  std::span<const double> features(int sample) const;
  double label(int sample) const { return labels_[sample]; }

  /// CSV rows "label,feature_0,...,feature_{d-1}".
  void export_csv(const std::string& path) const;

private:
  void sample_range(int node, int& begin, int& end) const;
  double margin(int sample, std::span<const double> x) const;
  void data_gradient(int begin, int end, std::span<const double> x, std::span<double> out) const;

  int samples_per_node_;
  int dim_;
  int nodes_;
  std::uint64_t seed_;
  DataStrategy strategy_;
  int total_samples_;
  double lipschitz_;
  std::vector<double> features_;  // total_samples * dim, row per sample
  std::vector<double> labels_;
  struct FStarCache {
    std::once_flag once;
    double value = 0.0;
  };
  std::shared_ptr<FStarCache> f_star_cache_;
};

/// Convenience wrapper producing a GradientSample with its draw id.
GradientSample draw_gradient_sample(const Problem& problem, int node, std::span<const double> x,
                                    std::uint64_t seed, std::uint64_t iteration,
                                    std::uint64_t draw);

/// Empirical estimates of the gradient noise variance and the cross-node
/// heterogeneity at a fixed point x:
///   sigma_sq_hat: mean over nodes and draws of ||grad_sample - grad_i(x)||^2
///   zeta_sq_hat:  mean over nodes of ||grad_i(x) - grad(x)||^2
/// Standard errors accompany both (zeta is deterministic at fixed x; its SE
/// is the cross-node spread of the per-node values).
struct VarianceEstimate {
  double sigma_sq_hat;
  double sigma_sq_se;
  double zeta_sq_hat;
  double zeta_sq_se;
};
VarianceEstimate estimate_sigma_zeta(const Problem& problem, std::span<const double> x, int draws,
                                     std::uint64_t seed = 0);

}  // namespace dsgd
