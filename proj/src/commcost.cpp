#include "dsgd/commcost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dsgd {

std::string to_string(CommPattern p) {
  switch (p) {
    case CommPattern::parameter_server: return "parameter_server";
    case CommPattern::allreduce: return "allreduce";
    case CommPattern::decentralized: return "decentralized";
    case CommPattern::easgd: return "easgd";
  }
  return "?";
}

void validate(const NetworkModel& m) {
  if (!(m.bandwidth > 0.0)) throw std::invalid_argument("network: bandwidth must be > 0");
  if (!(m.latency >= 0.0)) throw std::invalid_argument("network: latency must be >= 0");
  if (!(m.msg_size > 0.0)) throw std::invalid_argument("network: msg_size must be > 0");
  if (!(m.compute_time >= 0.0)) throw std::invalid_argument("network: compute_time must be >= 0");
  if (m.tau < 1) throw std::invalid_argument("network: tau must be >= 1");
  if (m.degree < 0) throw std::invalid_argument("network: degree must be >= 0");
}

double busiest_node_messages(CommPattern pattern, int n, int degree, int tau) {
  if (n < 1) throw std::invalid_argument("busiest_node_messages: n must be >= 1");
  switch (pattern) {
    case CommPattern::parameter_server:
      return 2.0 * n;  // the server receives and sends once per worker
    case CommPattern::allreduce:
      return 2.0 * (n - 1);  // ring schedule critical-path events
    case CommPattern::decentralized:
      if (degree >= n) throw std::invalid_argument("busiest_node_messages: degree must be < n");
      return 2.0 * degree;
    case CommPattern::easgd:
      if (tau < 1) throw std::invalid_argument("busiest_node_messages: tau must be >= 1");
      return 2.0 * n / tau;  // amortized over the exchange period
  }
  throw std::invalid_argument("busiest_node_messages: unknown pattern");
}

double per_iteration_time(const NetworkModel& m, int n) {
  validate(m);
  if (n < 1) throw std::invalid_argument("per_iteration_time: n must be >= 1");
  const double per_msg = m.msg_size / m.bandwidth;
  switch (m.pattern) {
    case CommPattern::parameter_server:
      return m.compute_time + 2.0 * m.latency + 2.0 * n * per_msg;
    case CommPattern::allreduce:
      return m.compute_time + 2.0 * (n - 1) * m.latency +
             2.0 * (static_cast<double>(n - 1) / n) * per_msg;
    case CommPattern::decentralized: {
      if (m.degree >= n) throw std::invalid_argument("per_iteration_time: degree must be < n");
      const double comm = m.latency + m.degree * per_msg;
      return m.overlap ? std::max(m.compute_time, comm) : m.compute_time + comm;
    }
    case CommPattern::easgd:
      return m.compute_time + (2.0 * m.latency + 2.0 * n * per_msg) / m.tau;
  }
  throw std::invalid_argument("per_iteration_time: unknown pattern");
}

CrossoverReport crossover_report(const NetworkModel& base, std::span<const double> bandwidths,
                                 std::span<const double> latencies, int n) {
  if (bandwidths.empty() || latencies.empty())
    throw std::invalid_argument("crossover_report: ranges must be nonempty");
  const CommPattern patterns[] = {CommPattern::parameter_server, CommPattern::allreduce,
                                  CommPattern::decentralized, CommPattern::easgd};
  CrossoverReport report;
  for (double bw : bandwidths) {
    for (double lat : latencies) {
      double times[4];
      for (int p = 0; p < 4; ++p) {
        NetworkModel m = base;
        m.pattern = patterns[p];
        m.bandwidth = bw;
        m.latency = lat;
        times[p] = per_iteration_time(m, n);
        report.cells.push_back({patterns[p], bw, lat, times[p]});
      }
      const double best_centralized = std::min({times[0], times[1], times[3]});
      const double worst = std::max({times[0], times[1], times[2], times[3]});
      RegimeFlag flag;
      flag.bandwidth = bw;
      flag.latency = lat;
      flag.decentralized_5x = times[2] <= best_centralized / 5.0;
      flag.all_within_20pct = worst <= 1.2 * base.compute_time;
      report.flags.push_back(flag);
    }
  }
  return report;
}

std::string crossover_csv(const CrossoverReport& report) {
  std::string out = "pattern,bandwidth,latency,seconds\n";
  char buf[128];
  for (const auto& c : report.cells) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", to_string(c.pattern).c_str(),
                  c.bandwidth, c.latency, c.seconds);
    out += buf;
  }
  return out;
}

}  // namespace dsgd
