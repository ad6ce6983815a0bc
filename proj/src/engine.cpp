#include "dsgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "dsgd/errors.hpp"

namespace dsgd {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dpsgd: return "dpsgd";
    case Algorithm::cpsgd: return "cpsgd";
    case Algorithm::allreduce: return "allreduce";
    case Algorithm::eamsgd: return "eamsgd";
  }
  return "?";
}

std::string to_string(MixOrder o) {
  return o == MixOrder::average_then_update ? "average_then_update" : "update_then_average";
}

std::vector<double> TrainState::average_column() const {
  // bit-identical columns average to themselves exactly (keeps the consensus
  // metric at literal zero for centralized runs)
  const auto first = column(0);
  bool all_equal = true;
  for (int i = 1; i < nodes && all_equal; ++i) {
    const auto col = column(i);
    for (int c = 0; c < dim; ++c)
      if (col[c] != first[c]) {
        all_equal = false;
        break;
      }
  }
  if (all_equal) return {first.begin(), first.end()};

  std::vector<double> avg(dim, 0.0);
  for (int i = 0; i < nodes; ++i) {
    const auto col = column(i);
    for (int c = 0; c < dim; ++c) avg[c] += col[c];
  }
  for (double& v : avg) v /= nodes;
  return avg;
}

bool TrainState::finite() const {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

TrainState make_initial_state(int dim, int nodes, std::uint64_t seed,
                              const std::optional<std::vector<double>>& start_override) {
  if (dim < 1 || nodes < 1)
    throw std::invalid_argument("train state: dim and nodes must be >= 1");
  TrainState s;
  s.dim = dim;
  s.nodes = nodes;
  s.seed = seed;
  s.x.assign(static_cast<std::size_t>(dim) * nodes, 0.0);
  if (start_override) {
    if (static_cast<int>(start_override->size()) != dim)
      throw std::invalid_argument("train state: start override has wrong dimension");
    for (int i = 0; i < nodes; ++i) {
      auto col = s.column(i);
      std::copy(start_override->begin(), start_override->end(), col.begin());
    }
  }
  return s;
}

std::vector<double> output_model(const TrainState& state, std::optional<int> node) {
  if (!node) return state.average_column();
  if (*node < 0 || *node >= state.nodes)
    throw std::invalid_argument("output_model: node out of range");
  const auto col = state.column(*node);
  return {col.begin(), col.end()};
}

namespace {

void fill_columns(const Problem& problem, const TrainState& state, int batch, int begin, int end,
                  std::vector<double>& g) {
  const int dim = state.dim;
  std::vector<double> tmp(batch > 1 ? dim : 0);
  for (int i = begin; i < end; ++i) {
    double* col = g.data() + static_cast<std::size_t>(i) * dim;
    const auto x = state.column(i);
    if (batch == 1) {
      problem.stochastic_gradient(i, x, state.seed, state.iteration, 0, {col, (std::size_t)dim});
    } else {
      std::fill(col, col + dim, 0.0);
      for (int j = 0; j < batch; ++j) {
        problem.stochastic_gradient(i, x, state.seed, state.iteration, j, tmp);
        for (int c = 0; c < dim; ++c) col[c] += tmp[c];
      }
      const double inv = 1.0 / batch;
      for (int c = 0; c < dim; ++c) col[c] *= inv;
    }
  }
}

}  // namespace

void evaluate_gradients(const Problem& problem, const TrainState& state, int batch, bool parallel,
                        std::vector<double>& g) {
  if (batch < 1) throw std::invalid_argument("evaluate_gradients: batch must be >= 1");
  const int n = state.nodes;
  const int dim = state.dim;
  g.resize(static_cast<std::size_t>(dim) * n);

  int threads = parallel ? static_cast<int>(std::thread::hardware_concurrency()) : 1;
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fill_columns(problem, state, batch, 0, n, g);
  } else {
    // Disjoint column ranges per thread; counter-keyed sampling makes the
    // result independent of the split.
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int begin = t * chunk;
      const int end = std::min(n, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, begin, end] { fill_columns(problem, state, batch, begin, end, g); });
    }
    for (auto& th : pool) th.join();
  }

  for (int i = 0; i < n; ++i) {
    const double* col = g.data() + static_cast<std::size_t>(i) * dim;
    for (int c = 0; c < dim; ++c)
      if (!std::isfinite(col[c]))
        throw TrainingNumericError(state.iteration, i, "non-finite stochastic gradient");
  }
}

void apply_dpsgd_update(TrainState& state, const WeightMatrix& w, double gamma,
                        const std::vector<double>& g, MixOrder order) {
  const int n = state.nodes;
  const int dim = state.dim;
  if (w.size() != n) throw std::invalid_argument("dpsgd: weight matrix size mismatch");
  if (!(gamma > 0.0)) throw std::invalid_argument("dpsgd: gamma must be > 0");
  if (g.size() != state.x.size()) throw std::invalid_argument("dpsgd: gradient size mismatch");

  std::vector<double> mixed(state.x.size(), 0.0);
  if (order == MixOrder::update_then_average) {
    // X' = (X - gamma G) W
    std::vector<double> stepped(state.x.size());
    for (std::size_t t = 0; t < stepped.size(); ++t) stepped[t] = state.x[t] - gamma * g[t];
    for (int i = 0; i < n; ++i) {
      double* out = mixed.data() + static_cast<std::size_t>(i) * dim;
      for (int j = 0; j < n; ++j) {
        const double wij = w.at(i, j);
        if (wij == 0.0) continue;
        const double* col = stepped.data() + static_cast<std::size_t>(j) * dim;
        for (int c = 0; c < dim; ++c) out[c] += wij * col[c];
      }
    }
    state.x.swap(mixed);
  } else {
    // X' = X W - gamma G
    for (int i = 0; i < n; ++i) {
      double* out = mixed.data() + static_cast<std::size_t>(i) * dim;
      for (int j = 0; j < n; ++j) {
        const double wij = w.at(i, j);
        if (wij == 0.0) continue;
        const double* col = state.x.data() + static_cast<std::size_t>(j) * dim;
        for (int c = 0; c < dim; ++c) out[c] += wij * col[c];
      }
      const double* gi = g.data() + static_cast<std::size_t>(i) * dim;
      for (int c = 0; c < dim; ++c) out[c] -= gamma * gi[c];
    }
    state.x.swap(mixed);
  }
  state.iteration += 1;
}

void apply_cpsgd_update(TrainState& state, double gamma, const std::vector<double>& g) {
  if (!(gamma > 0.0)) throw std::invalid_argument("cpsgd: gamma must be > 0");
  if (g.size() != state.x.size()) throw std::invalid_argument("cpsgd: gradient size mismatch");
  const int n = state.nodes;
  const int dim = state.dim;
  std::vector<double> mean_g(dim, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* gi = g.data() + static_cast<std::size_t>(i) * dim;
    for (int c = 0; c < dim; ++c) mean_g[c] += gi[c];
  }
  for (double& v : mean_g) v /= n;
  // single logical model, replicated in every column
  auto first = state.column(0);
  for (int c = 0; c < dim; ++c) first[c] -= gamma * mean_g[c];
  for (int i = 1; i < n; ++i) {
    auto col = state.column(i);
    std::copy(first.begin(), first.end(), col.begin());
  }
  state.iteration += 1;
}

void apply_eamsgd_local(TrainState& state, double gamma, double momentum,
                        const std::vector<double>& g) {
  if (!(gamma > 0.0)) throw std::invalid_argument("eamsgd: gamma must be > 0");
  if (g.size() != state.x.size()) throw std::invalid_argument("eamsgd: gradient size mismatch");
  if (state.velocity.size() != state.x.size()) state.velocity.assign(state.x.size(), 0.0);
  for (std::size_t t = 0; t < state.x.size(); ++t) {
    state.velocity[t] = momentum * state.velocity[t] - gamma * g[t];
    state.x[t] += state.velocity[t];
  }
  state.iteration += 1;
}

void apply_eamsgd_exchange(TrainState& state, double alpha) {
  const int n = state.nodes;
  const int dim = state.dim;
  if (state.center.size() != static_cast<std::size_t>(dim)) state.center.assign(dim, 0.0);
  const std::vector<double> mean = state.average_column();
  for (int i = 0; i < n; ++i) {
    auto col = state.column(i);
    for (int c = 0; c < dim; ++c) col[c] -= alpha * (col[c] - state.center[c]);
  }
  const double rate = std::min(alpha * n, 1.0);
  for (int c = 0; c < dim; ++c) state.center[c] += rate * (mean[c] - state.center[c]);
}

double tuned_stepsize(double lipschitz, double sigma, long long iterations, int nodes) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("tuned_stepsize: lipschitz must be > 0");
  if (!(sigma >= 0.0)) throw std::invalid_argument("tuned_stepsize: sigma must be >= 0");
  if (iterations < 1 || nodes < 1)
    throw std::invalid_argument("tuned_stepsize: iterations and nodes must be >= 1");
  return 1.0 / (2.0 * lipschitz +
                sigma * std::sqrt(static_cast<double>(iterations) / nodes));
}

double StepsizeSchedule::initial(const Problem& problem, long long iterations, int nodes) const {
  switch (kind) {
    case Kind::constant:
    case Kind::drop:
      if (!(gamma > 0.0)) throw std::invalid_argument("stepsize: gamma must be > 0");
      return gamma;
    case Kind::tuned: {
      const auto s2 = problem.sigma_sq();
      if (!s2)
        throw std::invalid_argument(
            "stepsize: tuned schedule needs a problem with exact sigma; use a constant gamma");
      return tuned_stepsize(problem.lipschitz(), std::sqrt(*s2), std::max<long long>(1, iterations),
                            nodes);
    }
  }
  throw std::invalid_argument("stepsize: unknown kind");
}

double StepsizeSchedule::at(long long k, double gamma0) const {
  if (kind == Kind::drop && drop_at >= 0 && k >= drop_at) return gamma0 / drop_factor;
  return gamma0;
}

namespace {

NetworkModel resolve_network(const RunSpec& spec, int dim, int nodes) {
  NetworkModel m = spec.network.value_or(NetworkModel{});
  if (!spec.network) m.msg_size = 8.0 * dim;  // double-precision model by default
  switch (spec.algorithm) {
    case Algorithm::dpsgd:
      m.pattern = CommPattern::decentralized;
      m.degree = spec.topology ? spec.topology->max_degree() : 0;
      m.overlap = spec.overlap;
      if (m.degree >= nodes) m.degree = std::max(0, nodes - 1);
      break;
    case Algorithm::cpsgd:
      m.pattern = CommPattern::parameter_server;
      break;
    case Algorithm::allreduce:
      m.pattern = CommPattern::allreduce;
      break;
    case Algorithm::eamsgd:
      m.pattern = CommPattern::easgd;
      m.tau = spec.eamsgd.tau;
      break;
  }
  return m;
}

struct MetricsAccumulator {
  double running_grad_sum = 0.0;
  long long recorded = 0;

  MetricsRecord record(const RunSpec& spec, const TrainState& state, double t_iter,
                       std::vector<double>& scratch) {
    const Problem& p = *spec.problem;
    const std::vector<double> avg = state.average_column();
    scratch.resize(state.dim);
    p.global_gradient(avg, scratch);
    double grad_sq = 0.0;
    for (double v : scratch) grad_sq += v * v;
    double consensus = 0.0;
    for (int i = 0; i < state.nodes; ++i) {
      const auto col = state.column(i);
      for (int c = 0; c < state.dim; ++c) {
        const double d = avg[c] - col[c];
        consensus += d * d;
      }
    }
    consensus /= state.nodes;
    running_grad_sum += grad_sq;
    recorded += 1;
    MetricsRecord r;
    r.k = state.iteration;
    r.loss_avg = p.loss(avg);
    r.grad_norm_sq_avg = grad_sq;
    r.consensus_m = consensus;
    r.running_eps = running_grad_sum / recorded;
    r.wallclock_model_s = static_cast<double>(state.iteration) * t_iter;
    return r;
  }
};

void check_state_finite(const TrainState& state) {
  for (int i = 0; i < state.nodes; ++i) {
    const auto col = state.column(i);
    for (int c = 0; c < state.dim; ++c)
      if (!std::isfinite(col[c]))
        throw TrainingNumericError(state.iteration, i, "non-finite iterate");
  }
}

}  // namespace

RunOutcome run_training_checked(const RunSpec& spec) {
  if (spec.problem == nullptr) throw std::invalid_argument("run: problem is required");
  if (spec.iterations < 0) throw std::invalid_argument("run: iterations must be >= 0");
  if (spec.metric_every < 1) throw std::invalid_argument("run: metric_every must be >= 1");
  const Problem& problem = *spec.problem;
  const int nodes = problem.nodes();
  const int dim = problem.dim();
  if (spec.algorithm == Algorithm::dpsgd) {
    if (!spec.topology) throw std::invalid_argument("run: dpsgd needs a topology");
    if (spec.topology->size() != nodes)
      throw std::invalid_argument("run: topology size does not match problem nodes");
  }
  if (spec.algorithm == Algorithm::eamsgd && spec.eamsgd.tau < 1)
    throw std::invalid_argument("run: eamsgd tau must be >= 1");

  RunOutcome outcome;
  MetricsTrace& trace = outcome.trace;
  trace.final_state = make_initial_state(dim, nodes, spec.seed, spec.start_override);
  TrainState& state = trace.final_state;

  const double gamma0 =
      spec.iterations > 0 ? spec.stepsize.initial(problem, spec.iterations, nodes) : 0.0;
  trace.gamma_initial = gamma0;
  const NetworkModel net = resolve_network(spec, dim, nodes);
  trace.iteration_time_s = per_iteration_time(net, nodes);

  const double alpha = eamsgd_alpha_from_beta(spec.eamsgd.beta, nodes);
  MetricsAccumulator acc;
  std::vector<double> g, scratch;

  try {
    for (long long k = 0; k < spec.iterations; ++k) {
      if (k % spec.metric_every == 0)
        trace.records.push_back(acc.record(spec, state, trace.iteration_time_s, scratch));

      evaluate_gradients(problem, state, spec.batch, spec.parallel_gradients, g);
      const double gamma = spec.stepsize.at(k, gamma0);
      switch (spec.algorithm) {
        case Algorithm::dpsgd:
          apply_dpsgd_update(state, *spec.topology, gamma, g, spec.order);
          break;
        case Algorithm::cpsgd:
        case Algorithm::allreduce:
          apply_cpsgd_update(state, gamma, g);
          break;
        case Algorithm::eamsgd:
          apply_eamsgd_local(state, gamma, spec.eamsgd.momentum, g);
          if ((k + 1) % spec.eamsgd.tau == 0) apply_eamsgd_exchange(state, alpha);
          break;
      }
      check_state_finite(state);
    }
  } catch (const TrainingNumericError& e) {
    outcome.failed = true;
    outcome.error_iteration = e.iteration;
    outcome.error_node = e.node;
    outcome.error = e.what();
    return outcome;
  }

  trace.final_model = state.average_column();
  return outcome;
}

MetricsTrace run_training(const RunSpec& spec) {
  RunOutcome outcome = run_training_checked(spec);
  if (outcome.failed)
    throw TrainingNumericError(outcome.error_iteration, outcome.error_node, outcome.error);
  return std::move(outcome.trace);
}

std::string trace_csv(const MetricsTrace& trace) {
  std::string out = "k,loss_avg,grad_norm_sq_avg,consensus_M,running_eps,wallclock_model_s\n";
  char buf[192];
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.k, r.loss_avg,
                  r.grad_norm_sq_avg, r.consensus_m, r.running_eps, r.wallclock_model_s);
    out += buf;
  }
  return out;
}

void write_trace_csv(const MetricsTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("trace: cannot write " + path);
  out << trace_csv(trace);
}

}  // namespace dsgd
