#include "dsgd/theory.hpp"

#include <cmath>
#include <stdexcept>

namespace dsgd {

namespace {

double finite_or_throw(long double v, const char* what) {
  if (!std::isfinite(static_cast<double>(v)))
    throw std::overflow_error(std::string("bound evaluation overflowed in ") + what);
  return static_cast<double>(v);
}

}  // namespace

void validate_inputs(const TheoryInputs& in) {
  if (!(in.lipschitz > 0.0)) throw std::invalid_argument("theory: lipschitz must be > 0");
  if (!(in.sigma_sq >= 0.0)) throw std::invalid_argument("theory: sigma_sq must be >= 0");
  if (!(in.zeta_sq >= 0.0)) throw std::invalid_argument("theory: zeta_sq must be >= 0");
  if (!(in.rho >= 0.0 && in.rho < 1.0))
    throw std::invalid_argument("theory: rho must be in [0, 1)");
  if (in.nodes < 1) throw std::invalid_argument("theory: nodes must be >= 1");
  if (in.iterations < 1) throw std::invalid_argument("theory: iterations must be >= 1");
  if (!(in.gamma > 0.0)) throw std::invalid_argument("theory: gamma must be > 0");
  if (!(in.f0_minus_fstar >= 0.0))
    throw std::invalid_argument("theory: f0_minus_fstar must be >= 0");
}

double gamma_max_for_d2(double lipschitz, double rho, int nodes) {
  return (1.0 - std::sqrt(rho)) / (std::sqrt(18.0 * nodes) * lipschitz);
}

BoundConstants bound_constants(const TheoryInputs& in) {
  validate_inputs(in);
  const double L = in.lipschitz;
  const double n = static_cast<double>(in.nodes);
  const double one_minus_sr = 1.0 - std::sqrt(in.rho);
  const double g2 = in.gamma * in.gamma;
  const double d2 = 1.0 - 18.0 * g2 * n * L * L / (one_minus_sr * one_minus_sr);
  if (!(d2 > 0.0)) throw StepSizeTooLarge(in.gamma, gamma_max_for_d2(L, in.rho, in.nodes));
  const double d1 = 0.5 - 9.0 * g2 * L * L * n / (one_minus_sr * one_minus_sr * d2);
  return {d1, d2};
}

double convergence_bound(const TheoryInputs& in) {
  const BoundConstants c = bound_constants(in);
  const long double L = in.lipschitz;
  const long double n = in.nodes;
  const long double K = in.iterations;
  const long double g = in.gamma;
  const long double one_minus_sr = 1.0L - std::sqrt(static_cast<long double>(in.rho));
  long double rhs = in.f0_minus_fstar / (g * K);
  rhs += g * L * in.sigma_sq / (2.0L * n);
  rhs += g * g * L * L * n * in.sigma_sq / ((1.0L - in.rho) * c.d2);
  rhs += 9.0L * g * g * L * L * n * in.zeta_sq / (one_minus_sr * one_minus_sr * c.d2);
  return finite_or_throw(rhs, "convergence_bound");
}

ConvergenceLhsWeights convergence_lhs_weights(const TheoryInputs& in) {
  const BoundConstants c = bound_constants(in);
  return {(1.0 - in.gamma * in.lipschitz) / 2.0, c.d1};
}

double tuned_convergence_bound(double lipschitz, double sigma, long long iterations, int nodes,
                               double f0_minus_fstar) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("theory: lipschitz must be > 0");
  if (iterations < 1 || nodes < 1)
    throw std::invalid_argument("theory: iterations and nodes must be >= 1");
  const long double K = iterations;
  const long double n = nodes;
  const long double rhs = 8.0L * f0_minus_fstar * lipschitz / K +
                          (8.0L * f0_minus_fstar + 4.0L * lipschitz) * sigma / std::sqrt(K * n);
  return finite_or_throw(rhs, "tuned_convergence_bound");
}

IterationThresholds min_iterations_for_tuned_rate(double lipschitz, double sigma, double zeta,
                                                  double rho, int nodes,
                                                  double f0_minus_fstar) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("theory: lipschitz must be > 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("theory: rho must be in [0, 1)");
  if (nodes < 1) throw std::invalid_argument("theory: nodes must be >= 1");
  if (sigma == 0.0)
    throw NotApplicable(
        "iteration thresholds are undefined with zero gradient noise "
        "(the tuned step size degenerates to a constant)");
  const long double L = lipschitz;
  const long double n = nodes;
  const long double s2 = static_cast<long double>(sigma) * sigma;
  const long double one_minus_sr = 1.0L - std::sqrt(static_cast<long double>(rho));
  const long double mix = s2 / (1.0L - rho) +
                          9.0L * static_cast<long double>(zeta) * zeta / (one_minus_sr * one_minus_sr);
  const long double noise_dom = 4.0L * L * L * L * L * n * n * n * n * n /
                                (s2 * s2 * s2 * (f0_minus_fstar + L) * (f0_minus_fstar + L)) *
                                mix * mix;
  const long double step_valid = 72.0L * L * L * n * n / (s2 * one_minus_sr * one_minus_sr);
  IterationThresholds t;
  t.noise_dominance = finite_or_throw(noise_dom, "min_iterations noise_dominance");
  t.step_validity = finite_or_throw(step_valid, "min_iterations step_validity");
  return t;
}

double max_nodes_guidance(long long iterations, bool zero_heterogeneity) {
  if (iterations < 1) throw std::invalid_argument("theory: iterations must be >= 1");
  const double exponent = zero_heterogeneity ? 1.0 / 9.0 : 1.0 / 13.0;
  return std::pow(static_cast<double>(iterations), exponent);
}

double consensus_bound(const TheoryInputs& in) {
  const BoundConstants c = bound_constants(in);
  if (!(c.d1 > 0.0))
    throw StepSizeTooLarge(in.gamma, gamma_max_for_d2(in.lipschitz, in.rho, in.nodes));
  const long double L = in.lipschitz;
  const long double n = in.nodes;
  const long double K = in.iterations;
  const long double g = in.gamma;
  const long double one_minus_sr = 1.0L - std::sqrt(static_cast<long double>(in.rho));
  const long double mix = in.sigma_sq / (1.0L - in.rho) +
                          9.0L * in.zeta_sq / (one_minus_sr * one_minus_sr);
  long double a = 2.0L * in.sigma_sq / (1.0L - in.rho);
  a += 18.0L * in.zeta_sq / (one_minus_sr * one_minus_sr);
  a += L * L / c.d1 * mix;
  a += 18.0L / (one_minus_sr * one_minus_sr) *
       (in.f0_minus_fstar / (g * K) + g * L * in.sigma_sq / (2.0L * n * c.d1));
  return finite_or_throw(n * g * g * a / c.d2, "consensus_bound");
}

}  // namespace dsgd
