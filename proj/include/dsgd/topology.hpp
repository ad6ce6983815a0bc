#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dsgd {

/// Symmetric doubly stochastic mixing matrix over n nodes, with a lazily
/// computed spectrum. Immutable after construction; copies share the cached
/// spectrum.
///
/// Invariants (validated on every construction path):
///   - entries in [0, 1], matrix symmetric, every row sums to 1;
///   - largest eigenvalue is 1;
///   - rho() == (max{|lambda_2|, |lambda_n|})^2, and rho() == 0 for n == 1.
class WeightMatrix {
public:
  /// Ring lattice: 1/3 on the diagonal and on both neighbors (indices mod n).
  /// For n <= 3 coincident neighbor slots merge additively so rows still sum
  /// to 1 (n=1 -> [1], n=2 -> [[1/3,2/3],[2/3,1/3]]).
  static WeightMatrix ring(int n);

  /// Complete mixing: every entry 1/n. rho == 0.
  static WeightMatrix complete(int n);

  /// Identity: valid but non-mixing (rho == 1); see spectral_warning().
  static WeightMatrix identity(int n);

  /// Validates a user matrix. Row sums tolerate 1e-9 deviation, symmetry
  /// 1e-12; violations throw std::invalid_argument naming the offending
  /// entries.
  static WeightMatrix from_entries(const std::vector<std::vector<double>>& entries);

  /// Plain-text matrix file: one row per line, whitespace-separated decimals.
  static WeightMatrix load_text(const std::string& path);
  void save_text(const std::string& path) const;

  int size() const { return n_; }
  double at(int i, int j) const { return w_[static_cast<std::size_t>(i) * n_ + j]; }
  std::span<const double> row(int i) const {
    return {w_.data() + static_cast<std::size_t>(i) * n_, static_cast<std::size_t>(n_)};
  }
  const std::vector<double>& entries() const { return w_; }

  /// Eigenvalues sorted descending. Computed once on first use (n is capped
  /// at 4096 for the dense solver).
  const std::vector<double>& eigenvalues() const;

  /// Spectral-gap quantity (max{|lambda_2|, |lambda_n|})^2; 0 for n == 1.
  double rho() const;

  /// Largest neighbor count, self excluded (entries > 0 are edges).
  int max_degree() const;

  /// Non-empty when rho is not < 1, i.e. the matrix cannot mix.
  std::optional<std::string> spectral_warning() const;

private:
  WeightMatrix(int n, std::vector<double> w);

  struct Spectrum {
    std::vector<double> eigenvalues;
    double rho = 0.0;
  };
  struct SpectrumCache {
    std::once_flag once;
    Spectrum value;
  };

  int n_;
  std::vector<double> w_;
  std::shared_ptr<SpectrumCache> cache_;
};

struct MixingDecay {
  double lhs;    // || 1/n - W^k e_i ||^2
  double bound;  // rho^k
};

/// Decay of the i-th unit vector toward the uniform vector under k
/// applications of W, next to its geometric bound rho^k.
MixingDecay mixing_decay(const WeightMatrix& w, int k, int node);

/// All decay values for k = 0..k_max in one pass (repeated multiplication).
std::vector<MixingDecay> mixing_decay_curve(const WeightMatrix& w, int k_max, int node);

/// Least-squares constant c in 1 - rho(ring(n)) ~ c / n^2, fitted over the
/// given n values (all must be >= 5, at least two of them). Reported next to
/// the closed-form Taylor constant 8*pi^2/3 from the ring eigenvalues and its
/// doubled variant 16*pi^2/3; neither is asserted.
struct RingRhoFit {
  double fitted_c;
  double taylor_c;          // 8*pi^2/3
  double doubled_taylor_c;  // 16*pi^2/3
  std::vector<std::pair<int, double>> samples;  // (n, (1 - rho(n)) * n^2)
};
RingRhoFit ring_rho_asymptotic_fit(const std::vector<int>& n_values);

}  // namespace dsgd
