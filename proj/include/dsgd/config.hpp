#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsgd/engine.hpp"

namespace dsgd {

/// Config parse/validation failure; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct TopologySpec {
  std::string kind = "ring";  // ring | complete | identity | file | custom
  int n = 1;
  std::string path;                          // kind == file
  std::vector<std::vector<double>> entries;  // kind == custom
};

struct ProblemSpec {
  std::string family = "quadratic";  // quadratic | logistic
  int dim = 1;
  // quadratic
  double spread = 0.0;
  double noise_sigma = 0.0;
  double center = 0.0;
  // logistic
  int samples_per_node = 100;
  std::uint64_t data_seed = 1;
  std::string strategy = "partitioned";  // shared | partitioned
};

struct SweepAxes {
  std::vector<int> nodes;
  std::vector<std::string> algorithms;
  std::vector<double> gammas;
  std::vector<std::string> topologies;
  std::vector<double> bandwidths;
  std::vector<double> latencies;
  bool empty() const {
    return nodes.empty() && algorithms.empty() && gammas.empty() && topologies.empty() &&
           bandwidths.empty() && latencies.empty();
  }
};

struct RunConfig {
  int schema_version = 1;
  std::string algorithm = "dpsgd";
  TopologySpec topology;
  ProblemSpec problem;
  long long iterations = 0;
  std::string stepsize_kind = "constant";  // constant | tuned | drop
  double gamma = 0.1;
  long long drop_at = -1;
  double drop_factor = 10.0;
  std::vector<std::uint64_t> seeds = {1};
  int batch = 1;
  std::string order = "average_then_update";
  bool overlap = false;
  bool parallel_gradients = false;
  int metric_every = 1;
  std::optional<double> loss_threshold;
  std::optional<std::vector<double>> start_override;  // every node starts here instead of 0
  EamsgdParams eamsgd;
  std::optional<NetworkModel> network;  // pattern/degree/tau resolved per run
  std::string out_dir = "out";
  std::optional<std::string> export_dataset;  // logistic CSV dump
  std::optional<SweepAxes> sweep;
};

/// Parses and validates; throws ConfigError with a line-level diagnostic.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical JSON echo; parse_config_text(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

/// Materialized single-run pieces built from a config.
struct MaterializedRun {
  std::unique_ptr<Problem> problem;
  std::optional<WeightMatrix> topology;
  RunSpec spec;  // spec.problem points into `problem`
};
WeightMatrix build_topology(const TopologySpec& t);
std::unique_ptr<Problem> build_problem(const ProblemSpec& p, int nodes);
MaterializedRun materialize(const RunConfig& config, std::uint64_t seed);

}  // namespace dsgd
