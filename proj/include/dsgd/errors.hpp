#pragma once

#include <stdexcept>
#include <string>

namespace dsgd {

/// Requested step size falls outside the region where the closed-form bounds
/// are defined. Carries the largest admissible value.
class StepSizeTooLarge : public std::runtime_error {
public:
  StepSizeTooLarge(double gamma, double gamma_max)
      : std::runtime_error("step size too large: gamma=" + std::to_string(gamma) +
                           " exceeds gamma_max=" + std::to_string(gamma_max)),
        gamma(gamma),
        gamma_max(gamma_max) {}

  double gamma;
  double gamma_max;
};

/// The requested quantity is undefined in the given regime (for example the
/// tuned step-size machinery with zero gradient noise).
class NotApplicable : public std::runtime_error {
public:
  explicit NotApplicable(const std::string& what) : std::runtime_error(what) {}
};

/// A training run hit a non-finite value. Carries the iteration and node
/// where the failure was detected.
class TrainingNumericError : public std::runtime_error {
public:
  TrainingNumericError(long long iteration, int node, const std::string& what)
      : std::runtime_error("numeric failure at iteration " + std::to_string(iteration) +
                           ", node " + std::to_string(node) + ": " + what),
        iteration(iteration),
        node(node) {}

  long long iteration;
  int node;
};

}  // namespace dsgd
