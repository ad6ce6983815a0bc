#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsgd/commcost.hpp"
#include "dsgd/problems.hpp"
#include "dsgd/topology.hpp"

namespace dsgd {

enum class Algorithm { dpsgd, cpsgd, allreduce, eamsgd };
enum class MixOrder { average_then_update, update_then_average };

std::string to_string(Algorithm a);
std::string to_string(MixOrder o);

/// Per-node local variables (column i is node i's iterate) plus the
/// per-algorithm auxiliary state. Starts at zero unless overridden.
struct TrainState {
  int dim = 0;
  int nodes = 0;
  long long iteration = 0;
  std::uint64_t seed = 0;
  std::vector<double> x;         // dim * nodes, column-major
  std::vector<double> velocity;  // momentum buffers (eamsgd), same shape
  std::vector<double> center;    // elastic center variable (eamsgd)

  std::span<double> column(int i) {
    return {x.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> column(int i) const {
    return {x.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  std::vector<double> average_column() const;
  bool finite() const;
};

TrainState make_initial_state(int dim, int nodes, std::uint64_t seed,
                              const std::optional<std::vector<double>>& start_override = {});

/// Column average of the final iterates, or a single node's column when
/// `node` is set (the chosen mode is the caller's to record).
std::vector<double> output_model(const TrainState& state, std::optional<int> node = {});

/// Mini-batch stochastic gradients for every node at its current iterate,
/// written into g (dim * nodes, column-major). With parallel == true the
/// columns are evaluated on several threads; results are bit-identical to the
/// sequential pass because all randomness is counter-keyed. Throws
/// TrainingNumericError on a non-finite gradient.
void evaluate_gradients(const Problem& problem, const TrainState& state, int batch, bool parallel,
                        std::vector<double>& g);

/// One decentralized step. Gradients are taken at the pre-communication
/// iterates; order only changes whether mixing happens before or after the
/// gradient is applied:
///   average_then_update: X' = X W - gamma G
///   update_then_average: X' = (X - gamma G) W
void apply_dpsgd_update(TrainState& state, const WeightMatrix& w, double gamma,
                        const std::vector<double>& g, MixOrder order);

/// One centralized step: every column moves to x - gamma * (column mean of G).
void apply_cpsgd_update(TrainState& state, double gamma, const std::vector<double>& g);

/// Heavy-ball local update: v <- momentum v - gamma g; x <- x + v.
void apply_eamsgd_local(TrainState& state, double gamma, double momentum,
                        const std::vector<double>& g);

/// Elastic exchange with the center variable:
///   d_i = x_i - center;  x_i <- x_i - alpha d_i;
///   center <- center + min(n * alpha, 1) * (mean(x) - center)
/// (the center's move is capped at the pre-exchange column mean).
void apply_eamsgd_exchange(TrainState& state, double alpha);

/// Elastic rate per node for a requested center-side moving rate beta.
inline double eamsgd_alpha_from_beta(double beta, int nodes) { return beta / nodes; }

/// Noise-adapted step size 1 / (2 L + sigma sqrt(K / n)).
double tuned_stepsize(double lipschitz, double sigma, long long iterations, int nodes);

struct StepsizeSchedule {
  enum class Kind { constant, tuned, drop };
  Kind kind = Kind::constant;
  double gamma = 0.1;         // constant and drop
  long long drop_at = -1;     // drop: iteration where gamma divides by factor
  double drop_factor = 10.0;

  /// Resolves the initial gamma; tuned needs the problem's exact sigma.
  double initial(const Problem& problem, long long iterations, int nodes) const;
  double at(long long k, double gamma0) const;
};

struct EamsgdParams {
  double beta = 0.9;     // center-side moving rate; alpha = beta / n
  int tau = 1;           // iterations between exchanges
  double momentum = 0.9;
};

struct MetricsRecord {
  long long k;
  double loss_avg;           // f at the column average
  double grad_norm_sq_avg;   // || grad f at the column average ||^2
  double consensus_m;        // (1/n) sum_i || avg - x_i ||^2
  double running_eps;        // running mean of grad_norm_sq_avg over records
  double wallclock_model_s;  // modeled cumulative seconds
};

struct MetricsTrace {
  std::vector<MetricsRecord> records;
  std::vector<double> final_model;  // column average at the final iterate
  TrainState final_state;
  double gamma_initial = 0.0;
  double iteration_time_s = 0.0;
};

struct RunSpec {
  Algorithm algorithm = Algorithm::dpsgd;
  std::optional<WeightMatrix> topology;  // required for dpsgd
  const Problem* problem = nullptr;
  long long iterations = 0;
  StepsizeSchedule stepsize;
  std::uint64_t seed = 1;
  int batch = 1;
  MixOrder order = MixOrder::average_then_update;
  bool overlap = false;            // cost-model flag only; never touches numerics
  int metric_every = 1;
  bool parallel_gradients = false;
  std::optional<std::vector<double>> start_override;
  std::optional<NetworkModel> network;  // wall-clock model; pattern is derived
  EamsgdParams eamsgd;
};

/// Synchronous barrier-stepped loop: record metrics at X_k, evaluate
/// gradients, apply the algorithm's update, repeat K times. Deterministic for
/// a fixed seed, including under parallel gradient evaluation. Throws
/// TrainingNumericError on non-finite values.
MetricsTrace run_training(const RunSpec& spec);

/// As run_training, but on numeric failure returns the partial trace together
/// with the failure site instead of throwing.
struct RunOutcome {
  MetricsTrace trace;
  bool failed = false;
  long long error_iteration = -1;
  int error_node = -1;
  std::string error;
};
RunOutcome run_training_checked(const RunSpec& spec);

/// Trace CSV with header k,loss_avg,grad_norm_sq_avg,consensus_M,running_eps,
/// wallclock_model_s. Formatting is deterministic (%.17g).
std::string trace_csv(const MetricsTrace& trace);
void write_trace_csv(const MetricsTrace& trace, const std::string& path);

}  // namespace dsgd
