#pragma once

#include <span>
#include <string>
#include <vector>

namespace dsgd {

enum class CommPattern { parameter_server, allreduce, decentralized, easgd };

std::string to_string(CommPattern p);

/// Per-iteration wall-clock model. Conventions: full-duplex NICs, the server
/// NIC is the sole centralized bottleneck, AllReduce follows a ring schedule,
/// a node's neighbor sends share one NIC sequentially, receives are free.
struct NetworkModel {
  double bandwidth = 1e9;      // bytes per second, > 0
  double latency = 1e-4;       // seconds per message, >= 0
  double msg_size = 8.0;       // bytes (model size * bytes per scalar), > 0
  double compute_time = 1e-3;  // seconds per local mini-batch gradient, >= 0
  CommPattern pattern = CommPattern::decentralized;
  int degree = 2;              // decentralized only
  int tau = 1;                 // easgd only: iterations between exchanges
  bool overlap = false;        // decentralized only: hide comm under compute
};

void validate(const NetworkModel& model);

/// Messages per iteration on the busiest node:
///   parameter_server: 2n       allreduce: 2(n-1) critical-path events
///   decentralized: 2*degree    easgd: 2n/tau (amortized, may be fractional)
double busiest_node_messages(CommPattern pattern, int n, int degree = 0, int tau = 1);

/// Modeled seconds per iteration:
///   parameter_server: compute + 2 lat + 2n msg/bw
///   allreduce:        compute + 2(n-1) lat + 2((n-1)/n) msg/bw
///   decentralized:    compute + lat + deg msg/bw     (no overlap)
///                     max(compute, lat + deg msg/bw) (overlap)
///   easgd:            compute + (2 lat + 2n msg/bw)/tau
double per_iteration_time(const NetworkModel& model, int n);

/// Grid evaluation of all four patterns over bandwidth x latency, with two
/// regime flags per grid point: decentralized at least 5x faster than the
/// best centralized pattern, and all patterns within 20% of compute_time.
struct CrossoverCell {
  CommPattern pattern;
  double bandwidth;
  double latency;
  double seconds;
};
struct RegimeFlag {
  double bandwidth;
  double latency;
  bool decentralized_5x;
  bool all_within_20pct;
};
struct CrossoverReport {
  std::vector<CrossoverCell> cells;
  std::vector<RegimeFlag> flags;
};
CrossoverReport crossover_report(const NetworkModel& base, std::span<const double> bandwidths,
                                 std::span<const double> latencies, int n);

/// CSV rows "pattern,bandwidth,latency,seconds".
std::string crossover_csv(const CrossoverReport& report);

}  // namespace dsgd
