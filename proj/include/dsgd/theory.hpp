#pragma once

#include "dsgd/errors.hpp"

namespace dsgd {

/// Inputs to the closed-form rate and consensus bounds. All evaluators are
/// pure: identical inputs give bit-identical outputs.
struct TheoryInputs {
  double lipschitz = 1.0;       // L > 0
  double sigma_sq = 0.0;        // per-node gradient noise variance
  double zeta_sq = 0.0;         // cross-node gradient heterogeneity
  double rho = 0.0;             // spectral-gap quantity, in [0, 1)
  int nodes = 1;                // n
  long long iterations = 1;     // K
  double gamma = 0.1;           // step size
  double f0_minus_fstar = 0.0;  // objective gap at the zero start
};

/// Throws std::invalid_argument when a field is outside its domain.
void validate_inputs(const TheoryInputs& in);

/// Damping constants of the rate analysis:
///   d2 = 1 - 18 gamma^2 n L^2 / (1 - sqrt(rho))^2
///   d1 = 1/2 - 9 gamma^2 L^2 n / ((1 - sqrt(rho))^2 d2)
/// Throws StepSizeTooLarge (with gamma_max) when d2 <= 0.
struct BoundConstants {
  double d1;
  double d2;
};
BoundConstants bound_constants(const TheoryInputs& in);

/// Largest gamma with d2 > 0: (1 - sqrt(rho)) / (sqrt(18 n) * L).
double gamma_max_for_d2(double lipschitz, double rho, int nodes);

/// Upper bound on the weighted running average of squared gradient norms:
///   (f0 - f*) / (gamma K) + gamma L sigma^2 / (2 n)
///   + gamma^2 L^2 n sigma^2 / ((1 - rho) d2)
///   + 9 gamma^2 L^2 n zeta^2 / ((1 - sqrt(rho))^2 d2)
double convergence_bound(const TheoryInputs& in);

/// Weights of the two gradient terms on the left-hand side of the bound:
/// (1 - gamma L) / 2 for the mean of local full gradients, d1 for the
/// gradient at the averaged iterate.
struct ConvergenceLhsWeights {
  double local_grad_weight;
  double avg_grad_weight;
};
ConvergenceLhsWeights convergence_lhs_weights(const TheoryInputs& in);

/// Rate bound under the tuned step size gamma = 1/(2L + sigma sqrt(K/n)):
///   8 (f0 - f*) L / K + (8 (f0 - f*) + 4 L) sigma / sqrt(K n).
double tuned_convergence_bound(double lipschitz, double sigma, long long iterations, int nodes,
                               double f0_minus_fstar);

/// Minimum iteration counts under which the tuned rate bound is valid.
/// noise_dominance keeps the network term below the sqrt(Kn) term;
/// step_validity keeps d1 >= 1/4 and d2 >= 1/2. Throws NotApplicable when
/// sigma == 0 (deterministic-gradient regime).
struct IterationThresholds {
  double noise_dominance;  // 4 L^4 n^5 / (sigma^6 (f0-f*+L)^2) * (sigma^2/(1-rho) + 9 zeta^2/(1-sqrt(rho))^2)^2
  double step_validity;    // 72 L^2 n^2 / (sigma^2 (1 - sqrt(rho))^2)
};
IterationThresholds min_iterations_for_tuned_rate(double lipschitz, double sigma, double zeta,
                                                  double rho, int nodes, double f0_minus_fstar);

/// Constant-free node-count guidance for a ring under the tuned step size:
/// K^(1/9) with zero heterogeneity, K^(1/13) otherwise. Scale factors are
/// deliberately absent.
double max_nodes_guidance(long long iterations, bool zero_heterogeneity);

/// Upper bound on the running average of the consensus distance M_k:
/// n gamma^2 A / d2 with
///   A = 2 sigma^2/(1-rho) + 18 zeta^2/(1-sqrt(rho))^2
///     + (L^2/d1) (sigma^2/(1-rho) + 9 zeta^2/(1-sqrt(rho))^2)
///     + 18/(1-sqrt(rho))^2 ((f0-f*)/(gamma K) + gamma L sigma^2/(2 n d1)).
/// Throws StepSizeTooLarge when d1 <= 0 or d2 <= 0.
double consensus_bound(const TheoryInputs& in);

}  // namespace dsgd
